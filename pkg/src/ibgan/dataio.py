"""Datasets of labelled multivariate series: ingestion, priors, imbalance, scaling.

A :class:`Dataset` stores all samples as stacked arrays: ``X`` is (N, k, m),
``B`` is (N, d_B) metadata (possibly zero columns) and ``y`` holds integer
labels in ``[0, n_classes)``. The flattened vector of a sample is the series
in row-major order followed by its metadata.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "Sample",
    "ChannelStats",
    "Dataset",
    "DatasetFormatError",
    "load_dataset",
    "save_dataset",
    "compute_priors",
    "inject_imbalance",
    "standardize",
    "SyntheticSpec",
    "generate_synthetic",
    "split",
    "subsample",
]

log = logging.getLogger(__name__)


class DatasetFormatError(ValueError):
    """Raised when a long_csv file is malformed."""


class Sample(NamedTuple):
    series: np.ndarray
    metadata: np.ndarray
    label: int


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel (and per-metadata-column) mean and population sd."""

    mean: np.ndarray
    sd: np.ndarray
    meta_mean: np.ndarray
    meta_sd: np.ndarray


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    n_classes: int
    B: np.ndarray | None = None
    label_names: tuple[str, ...] | None = None
    channel_stats: ChannelStats | None = None
    ids: tuple[str, ...] | None = None
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 3:
            raise ValueError(f"X must be (N, k, m), got shape {X.shape}")
        y = np.asarray(self.y, dtype=np.int64)
        if y.shape != (X.shape[0],):
            raise ValueError(f"{X.shape[0]} series but {y.shape} labels")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        B = np.zeros((X.shape[0], 0)) if self.B is None else np.asarray(self.B, dtype=np.float64)
        if B.ndim != 2 or B.shape[0] != X.shape[0]:
            raise ValueError(f"metadata must be (N, d_B), got {B.shape}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "B", B)

    def __len__(self) -> int:
        return self.X.shape[0]

    def __getitem__(self, i) -> Sample:
        return Sample(self.X[i], self.B[i], int(self.y[i]))

    @property
    def samples(self) -> list[Sample]:
        return [self[i] for i in range(len(self))]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    @property
    def m(self) -> int:
        return self.X.shape[2]

    @property
    def d_B(self) -> int:
        return self.B.shape[1]

    @property
    def flat_dim(self) -> int:
        return self.k * self.m + self.d_B

    def flat(self, idx=None) -> np.ndarray:
        """Flattened samples, shape (n, k*m + d_B)."""
        X = self.X if idx is None else self.X[idx]
        B = self.B if idx is None else self.B[idx]
        return np.concatenate([X.reshape(X.shape[0], -1), B], axis=1)

    def counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.n_classes)

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        ids = None if self.ids is None else tuple(self.ids[i] for i in idx)
        return replace(self, X=self.X[idx], y=self.y[idx], B=self.B[idx], ids=ids)


def unflatten(flat: np.ndarray, k: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :meth:`Dataset.flat`: split into (n, k, m) series and metadata."""
    n = flat.shape[0]
    return flat[:, : k * m].reshape(n, k, m), flat[:, k * m :]


# ---------------------------------------------------------------------------
# long_csv


def _parse_float(text: str, where: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DatasetFormatError(f"{where}: non-numeric value {text!r}") from None
    if not math.isfinite(v):
        raise DatasetFormatError(f"{where}: non-finite value {text!r}")
    return v


def _parse_index(text: str, where: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise DatasetFormatError(f"{where}: expected an integer index, got {text!r}") from None
    if v < 0:
        raise DatasetFormatError(f"{where}: negative index {v}")
    return v


def load_dataset(path, format: str = "long_csv") -> Dataset:
    """Read a long_csv file.

    Header ``sample_id,channel,t,value,label[,meta_0,...]``, one row per
    (sample, channel, t). Labels are renumbered by first appearance; label and
    metadata must repeat identically on every row of a sample.
    """
    if format != "long_csv":
        raise ValueError(f"unsupported format {format!r}")
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty file") from None
        base = ["sample_id", "channel", "t", "value", "label"]
        if header[:5] != base:
            raise DatasetFormatError(f"{path}: header must start with {','.join(base)}")
        meta_cols = header[5:]
        expected_meta = [f"meta_{i}" for i in range(len(meta_cols))]
        if meta_cols != expected_meta:
            raise DatasetFormatError(f"{path}: metadata columns must be {expected_meta}")
        d_B = len(meta_cols)

        order: list[str] = []
        cells: dict[str, dict[tuple[int, int], float]] = {}
        labels: dict[str, str] = {}
        metas: dict[str, tuple[float, ...]] = {}
        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            if len(row) != 5 + d_B:
                raise DatasetFormatError(f"{where}: expected {5 + d_B} fields, got {len(row)}")
            sid = row[0]
            ch = _parse_index(row[1], where)
            t = _parse_index(row[2], where)
            val = _parse_float(row[3], where)
            meta = tuple(_parse_float(v, where) for v in row[5:])
            if sid not in cells:
                order.append(sid)
                cells[sid] = {}
                labels[sid] = row[4]
                metas[sid] = meta
            else:
                if labels[sid] != row[4]:
                    raise DatasetFormatError(f"{where}: sample {sid!r} changes label")
                if metas[sid] != meta:
                    raise DatasetFormatError(f"{where}: sample {sid!r} changes metadata")
            if (ch, t) in cells[sid]:
                raise DatasetFormatError(f"{where}: duplicate cell ({sid}, ch{ch}, t={t})")
            cells[sid][(ch, t)] = val
    if not order:
        raise DatasetFormatError(f"{path}: no data rows")

    k = m = None
    for sid in order:
        keys = cells[sid]
        sk = 1 + max(c for c, _ in keys)
        sm = 1 + max(t for _, t in keys)
        if k is None:
            k, m = sk, sm
        for c in range(max(k, sk)):
            for t in range(max(m, sm)):
                if (c, t) not in keys:
                    raise DatasetFormatError(f"{path}: missing cell ({sid}, ch{c}, t={t})")
        if (sk, sm) != (k, m):
            raise DatasetFormatError(
                f"{path}: sample {sid!r} has k={sk}, m={sm}; expected k={k}, m={m}"
            )

    names: list[str] = []
    for sid in order:
        if labels[sid] not in names:
            names.append(labels[sid])
    X = np.empty((len(order), k, m))
    for i, sid in enumerate(order):
        for (c, t), v in cells[sid].items():
            X[i, c, t] = v
    y = np.array([names.index(labels[sid]) for sid in order])
    B = np.array([metas[sid] for sid in order], dtype=np.float64).reshape(len(order), d_B)
    return Dataset(X, y, len(names), B=B, label_names=tuple(names), ids=tuple(order))


def save_dataset(ds: Dataset, path) -> None:
    """Write ``ds`` as long_csv; floats use ``repr`` so a reload is bit-exact."""
    names = ds.label_names or tuple(str(i) for i in range(ds.n_classes))
    ids = ds.ids or tuple(str(i) for i in range(len(ds)))
    header = ["sample_id", "channel", "t", "value", "label"] + [f"meta_{i}" for i in range(ds.d_B)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(ds)):
            meta = [repr(float(v)) for v in ds.B[i]]
            label = names[ds.y[i]]
            for c in range(ds.k):
                for t in range(ds.m):
                    w.writerow([ids[i], c, t, repr(float(ds.X[i, c, t])), label, *meta])


# ---------------------------------------------------------------------------
# priors, imbalance, scaling


def compute_priors(ds: Dataset) -> np.ndarray:
    """Empirical class frequencies ``count(y) / N``."""
    if len(ds) == 0:
        raise ValueError("cannot compute priors of an empty dataset")
    counts = ds.counts()
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise ValueError(f"classes {empty.tolist()} have no samples")
    return counts / counts.sum()


def inject_imbalance(ds: Dataset, rng: np.random.Generator,
                     drop_fraction: float = 0.75) -> Dataset:
    """Thin out floor(|Y|/2) randomly chosen classes.

    Each chosen class loses ``round(drop_fraction * n_y)`` samples picked at
    random; at least one sample per class survives (a warning is attached to
    the result when that floor binds). Kept samples keep their order.
    """
    if not 0 < drop_fraction < 1:
        raise ValueError(f"drop_fraction must lie in (0, 1), got {drop_fraction}")
    chosen = np.sort(rng.choice(ds.n_classes, size=ds.n_classes // 2, replace=False))
    keep = np.ones(len(ds), dtype=bool)
    notes = list(ds.warnings)
    for c in chosen:
        members = np.flatnonzero(ds.y == c)
        n_drop = int(round(drop_fraction * members.size))
        if n_drop >= members.size:
            n_drop = members.size - 1
            msg = f"class {c}: drop would empty it; kept 1 of {members.size}"
            log.warning(msg)
            notes.append(msg)
        if n_drop > 0:
            keep[rng.choice(members, size=n_drop, replace=False)] = False
    out = ds.take(np.flatnonzero(keep))
    return replace(out, warnings=tuple(notes))


def _stats(values: np.ndarray, axes) -> tuple[np.ndarray, np.ndarray]:
    mu = values.mean(axis=axes)
    sd = values.std(axis=axes)
    sd = np.where(sd > 0, sd, 1.0)
    return mu, sd


def standardize(ds: Dataset, stats: ChannelStats | None = None) -> Dataset:
    """Zero-mean, unit-sd channels (population sd; constant channels keep sd=1).

    Pass the training set's ``channel_stats`` to scale a test set identically.
    """
    if stats is None:
        mu, sd = _stats(ds.X, (0, 2))
        bmu, bsd = _stats(ds.B, 0) if len(ds) else (np.zeros(ds.d_B), np.ones(ds.d_B))
        stats = ChannelStats(mu, sd, bmu, bsd)
    if stats.mean.shape != (ds.k,) or stats.meta_mean.shape != (ds.d_B,):
        raise ValueError("channel stats do not match dataset dimensions")
    X = (ds.X - stats.mean[None, :, None]) / stats.sd[None, :, None]
    B = (ds.B - stats.meta_mean) / stats.meta_sd
    return replace(ds, X=X, B=B, channel_stats=stats)


# ---------------------------------------------------------------------------
# synthetic data and splitting


@dataclass(frozen=True)
class SyntheticSpec:
    """Per-class AR(1) channels around class- and channel-specific means.

    ``phi`` has one coefficient per class, ``mu`` is (classes, k) and
    ``sizes`` gives the sample count per class.
    """

    sizes: Sequence[int]
    k: int
    m: int
    phi: Sequence[float]
    mu: Sequence[Sequence[float]]
    sigma: float = 1.0

    @property
    def n_classes(self) -> int:
        return len(self.sizes)


def generate_synthetic(spec: SyntheticSpec, rng: np.random.Generator) -> Dataset:
    """Sample ``x_t = mu + phi (x_{t-1} - mu) + sigma * eps_t`` per channel.

    The first value is drawn from the stationary distribution, so with
    ``phi = 0`` and ``sigma = 0`` every series is its constant mean.
    """
    mu = np.asarray(spec.mu, dtype=np.float64)
    phi = np.asarray(spec.phi, dtype=np.float64)
    if mu.shape != (spec.n_classes, spec.k) or phi.shape != (spec.n_classes,):
        raise ValueError("mu must be (classes, k) and phi must have one entry per class")
    if np.any(np.abs(phi) >= 1):
        raise ValueError("AR coefficients must satisfy |phi| < 1")
    if any(s < 1 for s in spec.sizes):
        raise ValueError("every class needs at least one sample")
    blocks, labels = [], []
    for c, n in enumerate(spec.sizes):
        eps = rng.standard_normal((n, spec.k, spec.m)) * spec.sigma
        dev = np.empty_like(eps)
        dev[:, :, 0] = eps[:, :, 0] / math.sqrt(1 - phi[c] ** 2)
        for t in range(1, spec.m):
            dev[:, :, t] = phi[c] * dev[:, :, t - 1] + eps[:, :, t]
        blocks.append(mu[c][None, :, None] + dev)
        labels.append(np.full(n, c))
    return Dataset(np.concatenate(blocks), np.concatenate(labels), spec.n_classes)


def split(ds: Dataset, test_fraction: float, rng: np.random.Generator) -> tuple[Dataset, Dataset]:
    """Stratified split; each class sends ``round(test_fraction * n_y)`` to test."""
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    train_idx, test_idx = [], []
    for c in range(ds.n_classes):
        members = rng.permutation(np.flatnonzero(ds.y == c))
        n_test = int(round(test_fraction * members.size))
        if n_test < 1 or n_test >= members.size:
            raise ValueError(f"class {c} with {members.size} samples cannot appear in both splits")
        test_idx.append(members[:n_test])
        train_idx.append(members[n_test:])
    return ds.take(np.sort(np.concatenate(train_idx))), ds.take(np.sort(np.concatenate(test_idx)))


def subsample(ds: Dataset, size: int, rng: np.random.Generator) -> Dataset:
    """Random subset of ``size`` samples keeping class proportions, >= 2 per class."""
    if size >= len(ds):
        return ds
    counts = ds.counts()
    quota = np.maximum(np.floor(counts * size / len(ds)).astype(int), np.minimum(counts, 2))
    idx = [rng.choice(np.flatnonzero(ds.y == c), size=q, replace=False) for c, q in enumerate(quota)]
    return ds.take(np.sort(np.concatenate(idx)))
