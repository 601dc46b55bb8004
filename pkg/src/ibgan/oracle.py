"""Exact classifiers on finite joints of (X, Y).

A :class:`DiscreteJoint` is a prior ``w`` over labels and a row-stochastic
table ``p[y, x]``. Classifier tables returned here are indexed the same way,
``c[y, x]``, so each column is a distribution over labels. Columns with zero
total mass are flagged through a boolean ``defined`` mask and filled with NaN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DiscreteJoint",
    "ClassifierTable",
    "Infeasible",
    "random_joint",
    "bayes_classifier",
    "balanced_classifier",
    "augmentation_prior",
    "feasibility_bound",
    "augmented_optimal_classifier",
    "optimal_discriminator_identity",
    "empirical_bayes_check",
]

ATOL = 1e-12


@dataclass(frozen=True)
class DiscreteJoint:
    w: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        p = np.atleast_2d(np.asarray(self.p, dtype=np.float64))
        if p.shape[0] != w.shape[0]:
            raise ValueError(f"{w.shape[0]} priors but {p.shape[0]} conditional rows")
        if np.any(w <= 0) or abs(w.sum() - 1) > ATOL:
            raise ValueError(f"priors must be positive and sum to 1, got {w}")
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1) > ATOL):
            raise ValueError("each conditional row must be a distribution")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "p", p)

    @property
    def n_classes(self) -> int:
        return self.w.shape[0]

    @property
    def n_points(self) -> int:
        return self.p.shape[1]

    @property
    def mass(self) -> np.ndarray:
        """Joint table ``P(Y=y, X=x)``."""
        return self.w[:, None] * self.p


@dataclass(frozen=True)
class ClassifierTable:
    c: np.ndarray
    defined: np.ndarray

    def argmax(self) -> np.ndarray:
        out = np.full(self.c.shape[1], -1)
        out[self.defined] = self.c[:, self.defined].argmax(axis=0)
        return out


@dataclass(frozen=True)
class Infeasible:
    """``augmentation_prior`` outcome when the requested alpha is too large."""

    alpha: float
    bound: float
    violating_class: int
    value: float


def _normalize_columns(scores: np.ndarray) -> ClassifierTable:
    total = scores.sum(axis=0)
    defined = total > 0
    c = np.full_like(scores, np.nan)
    c[:, defined] = scores[:, defined] / total[defined]
    return ClassifierTable(c, defined)


def random_joint(n_classes: int, n_points: int, rng: np.random.Generator,
                 prior_concentration: float = 1.0) -> DiscreteJoint:
    w = rng.dirichlet(np.full(n_classes, prior_concentration))
    w = np.maximum(w, 1e-3)
    w = w / w.sum()
    p = rng.dirichlet(np.ones(n_points), size=n_classes)
    return DiscreteJoint(w, p)


def bayes_classifier(j: DiscreteJoint) -> ClassifierTable:
    """Posterior ``w_y p_y(x) / sum_y' w_y' p_y'(x)``."""
    return _normalize_columns(j.mass)


def balanced_classifier(j: DiscreteJoint) -> ClassifierTable:
    """Posterior under a uniform label prior: ``p_y(x) / sum_y' p_y'(x)``."""
    return _normalize_columns(j.p.copy())


def feasibility_bound(w) -> float:
    w = np.asarray(w, dtype=np.float64)
    return (1.0 / w.size) / w.max()


def augmentation_prior(w, alpha: float, n_classes: int | None = None):
    """Label prior the augmenting data must carry so the mixture is uniform.

    Returns ``w'_y = (1/|Y| - alpha*w_y) / (1 - alpha)`` when
    ``alpha < (1/|Y|)/max_y w_y``, otherwise an :class:`Infeasible` naming the
    class whose ``w'_y`` is not positive.
    """
    w = np.asarray(w, dtype=np.float64)
    n = w.size if n_classes is None else n_classes
    if n != w.size:
        raise ValueError(f"n_classes={n} but prior has {w.size} entries")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    bound = feasibility_bound(w)
    wp = (1.0 / n - alpha * w) / (1.0 - alpha)
    if alpha >= bound:
        y = int(np.argmax(w))
        return Infeasible(alpha=alpha, bound=bound, violating_class=y, value=float(wp[y]))
    return wp


def augmented_optimal_classifier(j: DiscreteJoint, j_aug: DiscreteJoint,
                                 alpha: float) -> ClassifierTable:
    """Maximizer of the alpha-mixed cross-entropy over real and augmenting data."""
    if j.p.shape != j_aug.p.shape:
        raise ValueError(f"joints disagree on shape: {j.p.shape} vs {j_aug.p.shape}")
    return _normalize_columns(alpha * j.mass + (1 - alpha) * j_aug.mass)


def optimal_discriminator_identity(p, p_aug):
    """Residual ``p' d/(1-d) - p`` with ``d = p/(p+p')``.

    Returns ``(residual, valid)``; entries where ``p' == 0`` (so ``d == 1``) or
    ``p + p' == 0`` are excluded and flagged ``valid == False`` with NaN
    residual.
    """
    p = np.asarray(p, dtype=np.float64)
    pa = np.asarray(p_aug, dtype=np.float64)
    valid = (pa > 0) & (p + pa > 0)
    residual = np.full(np.broadcast(p, pa).shape, np.nan)
    d = p[valid] / (p[valid] + pa[valid])
    residual[valid] = pa[valid] * d / (1 - d) - p[valid]
    return residual, valid


def _perturb(table: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    lam = rng.uniform(0.05, 0.5)
    noise = rng.dirichlet(np.ones(table.shape[0]), size=table.shape[1]).T
    return (1 - lam) * table + lam * noise


def empirical_bayes_check(j: DiscreteJoint, table: ClassifierTable | np.ndarray,
                          n_draws: int, rng: np.random.Generator, weighting: str = "prior",
                          n_rivals: int = 100) -> float:
    """Fraction of random rival tables that ``table`` beats on simulated data.

    Draws ``n_draws`` pairs (X, Y) from ``j`` and scores each table by mean
    ``log c_Y(X)``. With ``weighting="balanced"`` each draw is weighted by
    ``1/w_Y`` so every class counts equally. Rivals are ``table`` mixed with a
    random column-stochastic table. A return of 1.0 means ``table`` won every
    comparison.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    c = table.c if isinstance(table, ClassifierTable) else np.asarray(table, dtype=np.float64)
    flat = rng.choice(j.mass.size, size=n_draws, p=j.mass.ravel())
    ys, xs = np.unravel_index(flat, j.mass.shape)
    if weighting == "prior":
        wt = np.ones(n_draws)
    elif weighting == "balanced":
        wt = 1.0 / j.w[ys]
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    wt = wt / wt.sum()

    def score(t):
        return float(np.sum(wt * np.log(np.maximum(t[ys, xs], 1e-300))))

    base = score(np.nan_to_num(c, nan=1.0 / c.shape[0]))
    wins = 0
    for _ in range(n_rivals):
        rival = _perturb(np.nan_to_num(c, nan=1.0 / c.shape[0]), rng)
        wins += base > score(rival)
    return wins / n_rivals
