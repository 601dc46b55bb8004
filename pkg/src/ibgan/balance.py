"""Weighted resampling into real/mask pools and MCAR masking."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .dataio import Dataset

__all__ = [
    "BatchPair",
    "mask_pool_probabilities",
    "weighted_resample",
    "draw_mask",
    "apply_mask",
    "noise",
]


class BatchPair(NamedTuple):
    """Indices into the training set for one mini-batch.

    ``real_idx`` is drawn uniformly; ``mask_idx`` is drawn class-first with
    inverse-prior weights. Labels are the true labels of the drawn samples.
    """

    real_idx: np.ndarray
    real_y: np.ndarray
    mask_idx: np.ndarray
    mask_y: np.ndarray


def mask_pool_probabilities(priors, rule: str = "inverse") -> np.ndarray:
    """Class-selection probabilities for the mask pool.

    ``"inverse"``: ``(1/w_y) / sum(1/w)``. ``"exact"``: ``2/|Y| - w_y`` so the
    union of both pools is uniform; only valid when every ``w_y <= 2/|Y|``.
    """
    w = np.asarray(priors, dtype=np.float64)
    if rule == "inverse":
        inv = 1.0 / w
        return inv / inv.sum()
    if rule == "exact":
        q = 2.0 / w.size - w
        if np.any(q < 0):
            raise ValueError(f"exact balancing needs every prior <= {2.0 / w.size:.4g}; got {w}")
        return q / q.sum()
    raise ValueError(f"unknown mask-pool rule {rule!r}")


def weighted_resample(ds: Dataset, priors, n_mb: int, rng: np.random.Generator,
                      rule: str = "inverse") -> BatchPair:
    """Draw ``n_mb`` real and ``n_mb`` to-be-masked samples, both with replacement."""
    if n_mb < 1:
        raise ValueError(f"n_mb must be >= 1, got {n_mb}")
    real_idx = rng.integers(0, len(ds), size=n_mb)
    q = mask_pool_probabilities(priors, rule)
    mask_y = rng.choice(ds.n_classes, size=n_mb, p=q)
    by_class = [np.flatnonzero(ds.y == c) for c in range(ds.n_classes)]
    mask_idx = np.empty(n_mb, dtype=np.intp)
    for c in range(ds.n_classes):
        sel = mask_y == c
        if sel.any():
            mask_idx[sel] = rng.choice(by_class[c], size=int(sel.sum()))
    return BatchPair(real_idx, ds.y[real_idx], mask_idx, ds.y[mask_idx])


def draw_mask(shape, p_miss: float, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. Bernoulli(p_miss) indicators, independent of any data (MCAR)."""
    if not 0 <= p_miss <= 1:
        raise ValueError(f"p_miss must lie in [0, 1], got {p_miss}")
    return (rng.random(shape) < p_miss).astype(np.float64)


def apply_mask(x: np.ndarray, mask: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``x * (1 - I) + z * I``, evaluated as a selection so I=0 slots are exact copies."""
    if not (x.shape == mask.shape == z.shape):
        raise ValueError(f"shape mismatch: x{x.shape}, mask{mask.shape}, z{z.shape}")
    return np.where(mask > 0, z, x)


def noise(shape, rng: np.random.Generator) -> np.ndarray:
    """Standard normal white noise (data are standardized, so this is on data scale)."""
    return rng.standard_normal(shape)
