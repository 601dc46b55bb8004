"""Comparison methods: class weights, up/down-sampling, SMOTE, plain classifier."""

from __future__ import annotations

import logging
import math
from dataclasses import replace

import numpy as np

from . import ndcore as nd
from .dataio import Dataset, compute_priors, unflatten
from .nets import ClassifierNet, build_classifier
from .trainer import P_CLAMP, TrainConfig

__all__ = [
    "BASELINE_KINDS",
    "class_weighted_loss",
    "cross_entropy",
    "upsample",
    "downsample",
    "smote",
    "smote_interpolate",
    "fit_classifier",
    "run_baseline",
]

log = logging.getLogger(__name__)

BASELINE_KINDS = ("plain", "class_weights", "upsample", "downsample", "smote")


def _nll(c, y) -> nd.Value:
    return -nd.log(nd.clip(nd.pick(c, y), P_CLAMP, 1.0))


def cross_entropy(c, y) -> nd.Value:
    tape = c.tape if isinstance(c, nd.Value) else nd.Tape()
    return nd.mean(_nll(tape.lift(c), y))


def class_weighted_loss(c, y, priors) -> nd.Value:
    """Cross-entropy with per-sample weight ``1/w_Y``, normalized to mean one.

    The normalization divides by ``sum_y (1/w_y) w_y = |Y|``, which rescales the
    objective without moving its optimum.
    """
    w = np.asarray(priors, dtype=np.float64)
    if np.any(w <= 0):
        raise ValueError("priors must be positive")
    weights = (1.0 / w) / w.size
    tape = c.tape if isinstance(c, nd.Value) else nd.Tape()
    return nd.mean(weights[np.asarray(y)] * _nll(tape.lift(c), y))


def upsample(ds: Dataset, rng: np.random.Generator) -> Dataset:
    """Keep every sample and add duplicates (with replacement) up to the largest class."""
    counts = ds.counts()
    target = counts.max()
    extra = [
        rng.choice(np.flatnonzero(ds.y == c), size=target - n, replace=True)
        for c, n in enumerate(counts)
        if n < target
    ]
    idx = np.concatenate([np.arange(len(ds)), *extra]) if extra else np.arange(len(ds))
    return ds.take(idx)


def downsample(ds: Dataset, rng: np.random.Generator) -> Dataset:
    """Subsample every class without replacement to the smallest class count."""
    counts = ds.counts()
    target = counts[counts > 0].min()
    idx = [
        rng.choice(np.flatnonzero(ds.y == c), size=target, replace=False) if n > target
        else np.flatnonzero(ds.y == c)
        for c, n in enumerate(counts)
    ]
    return ds.take(np.sort(np.concatenate(idx)))


def smote_interpolate(x: np.ndarray, x_n: np.ndarray, u) -> np.ndarray:
    """``x + u (x_n - x)``; a vector ``u`` applies one coefficient per row."""
    u = np.asarray(u, dtype=np.float64)
    if u.ndim:
        u = u[:, None]
    return x + u * (x_n - x)


def smote(ds: Dataset, rng: np.random.Generator, k_neighbors: int = 5,
          target=None, return_parents: bool = False):
    """Add synthetic samples by interpolating towards same-class nearest neighbours.

    ``target`` gives the desired count per class (default: the largest class
    count). Neighbours use Euclidean distance on flattened standardized vectors.
    A class with a single sample is topped up by duplication instead, with a
    warning. With ``return_parents`` the (i, neighbour, u) triples behind each
    synthetic are returned too.
    """
    if k_neighbors < 1:
        raise ValueError("k_neighbors must be >= 1")
    counts = ds.counts()
    target = np.full(ds.n_classes, counts.max()) if target is None else np.asarray(target)
    flat = ds.flat()
    new_x, new_y, parents = [], [], []
    notes = list(ds.warnings)
    for c in range(ds.n_classes):
        need = int(target[c] - counts[c])
        if need <= 0:
            continue
        members = np.flatnonzero(ds.y == c)
        if members.size == 1:
            msg = f"class {c} has one sample; SMOTE falls back to duplication"
            log.warning(msg)
            notes.append(msg)
            new_x.append(np.repeat(flat[members], need, axis=0))
            new_y.append(np.full(need, c))
            continue
        pts = flat[members]
        d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        np.fill_diagonal(d2, np.inf)
        kk = min(k_neighbors, members.size - 1)
        neigh = np.argsort(d2, axis=1, kind="stable")[:, :kk]
        base = rng.integers(0, members.size, size=need)
        pick = neigh[base, rng.integers(0, kk, size=need)]
        u = rng.random(need)
        new_x.append(smote_interpolate(pts[base], pts[pick], u))
        new_y.append(np.full(need, c))
        parents.append(np.column_stack([members[base], members[pick], u]))
    if not new_x:
        out = replace(ds, warnings=tuple(notes))
        return (out, np.zeros((0, 3))) if return_parents else out
    X_new, B_new = unflatten(np.concatenate(new_x), ds.k, ds.m)
    out = replace(
        ds,
        X=np.concatenate([ds.X, X_new]),
        B=np.concatenate([ds.B, B_new]),
        y=np.concatenate([ds.y, np.concatenate(new_y)]),
        ids=None,
        warnings=tuple(notes),
    )
    if return_parents:
        return out, (np.concatenate(parents) if parents else np.zeros((0, 3)))
    return out


def fit_classifier(ds: Dataset, cfg: TrainConfig, loss: str = "ce",
                   priors=None) -> tuple[ClassifierNet, list[dict]]:
    """Train the classifier alone on shuffled mini-batches of ``ds``.

    Initialization draws from ``cfg.seed`` exactly as the triplet trainer does,
    so both start from the same classifier weights.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    C = build_classifier(cfg.classifier, ds.k, ds.m, ds.d_B, ds.n_classes, rng)
    adam = cfg.adam()
    if loss == "class_weights":
        priors = compute_priors(ds) if priors is None else priors
    elif loss != "ce":
        raise ValueError(f"unknown loss {loss!r}")
    flat = ds.flat()
    history = []
    steps = math.ceil(len(ds) / cfg.n_mb)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(ds))
        total = 0.0
        for s in range(steps):
            idx = order[s * cfg.n_mb : (s + 1) * cfg.n_mb]
            tape = nd.Tape()
            c = C.forward(tape, flat[idx])
            L = class_weighted_loss(c, ds.y[idx], priors) if priors is not None \
                else cross_entropy(c, ds.y[idx])
            try:
                nd.adam_update(C.params, nd.backward(tape, L), adam)
            except nd.DivergenceError as e:
                raise nd.DivergenceError(f"epoch {epoch}, step {s}: {e}") from None
            total += float(L.data)
        if not math.isfinite(total):
            raise nd.DivergenceError(f"classifier loss is {total} at epoch {epoch}")
        history.append({"epoch": epoch, "loss_C": total / steps})
    return C, history


def run_baseline(kind: str, ds: Dataset, cfg: TrainConfig,
                 k_neighbors: int = 5) -> tuple[ClassifierNet, list[dict]]:
    """Resample ``ds`` per ``kind`` (resampling seeded from ``cfg.seed``) and fit."""
    if kind not in BASELINE_KINDS:
        raise ValueError(f"unknown baseline {kind!r}; expected one of {BASELINE_KINDS}")
    rng = np.random.default_rng([cfg.seed, 1])
    if kind == "upsample":
        ds = upsample(ds, rng)
    elif kind == "downsample":
        ds = downsample(ds, rng)
    elif kind == "smote":
        ds = smote(ds, rng, k_neighbors=k_neighbors)
    return fit_classifier(ds, cfg, loss="class_weights" if kind == "class_weights" else "ce")
