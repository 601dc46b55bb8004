"""Self-checks run by the ``oracle-check`` and ``gradcheck`` commands."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ndcore as nd
from . import oracle
from .dataio import SyntheticSpec, compute_priors, generate_synthetic, standardize
from .nets import LayerSpec, NetSpec
from .trainer import TrainConfig, _draw_batch, init_state, triplet_losses

__all__ = [
    "CheckResult",
    "recovery_sweep",
    "feasibility_sweep",
    "discriminator_identity_sweep",
    "oracle_checks",
    "layer_grad_checks",
    "triplet_grad_check",
    "gradient_checks",
]


@dataclass
class CheckResult:
    name: str
    value: float
    threshold: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: {self.value:.3e} (threshold {self.threshold:.0e})"


def recovery_sweep(n_joints: int = 200, seed: int = 0) -> float:
    """Max ``|c~* - c-bar*|`` over random joints with p' = p and the balancing prior."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_joints):
        n_classes = int(rng.integers(2, 5))
        j = oracle.random_joint(n_classes, int(rng.integers(1, 21)), rng)
        alpha = rng.uniform(0, oracle.feasibility_bound(j.w))
        wp = oracle.augmentation_prior(j.w, alpha)
        aug = oracle.DiscreteJoint(wp, j.p)
        got = oracle.augmented_optimal_classifier(j, aug, alpha)
        want = oracle.balanced_classifier(j)
        ok = got.defined & want.defined
        worst = max(worst, float(np.max(np.abs(got.c[:, ok] - want.c[:, ok]), initial=0.0)))
    return worst


def feasibility_sweep(n_priors: int = 100, grid: int = 50, seed: int = 1) -> int:
    """Number of (prior, alpha) grid points where the infeasible verdict disagrees
    with ``alpha >= (1/|Y|)/max w``."""
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(n_priors):
        w = rng.dirichlet(np.ones(int(rng.integers(2, 6))))
        bound = (1.0 / w.size) / w.max()
        for alpha in np.linspace(0.01, 0.99, grid):
            got = oracle.augmentation_prior(w, alpha)
            mismatches += isinstance(got, oracle.Infeasible) != (alpha >= bound)
    return mismatches


def discriminator_identity_sweep(n_tables: int = 100, seed: int = 2) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_tables):
        shape = (int(rng.integers(2, 5)), int(rng.integers(2, 21)))
        p = rng.dirichlet(np.ones(shape[1]), size=shape[0])
        pa = rng.dirichlet(np.ones(shape[1]), size=shape[0])
        res, valid = oracle.optimal_discriminator_identity(p, pa)
        worst = max(worst, float(np.max(np.abs(res[valid]), initial=0.0)))
    return worst


def oracle_checks(seed: int = 0) -> list[CheckResult]:
    rec = recovery_sweep(seed=seed)
    feas = feasibility_sweep(seed=seed + 1)
    ident = discriminator_identity_sweep(seed=seed + 2)
    return [
        CheckResult("balanced-prior recovery (200 joints)", rec, 1e-12, rec < 1e-12),
        CheckResult("feasibility boundary mismatches (50-point grid)", feas, 0, feas == 0),
        CheckResult("optimal discriminator identity (100 tables)", ident, 1e-12, ident < 1e-12),
    ]


def _layer_cases(rng):
    x = rng.standard_normal((4, 5))
    xs = rng.standard_normal((3, 2, 9))
    y = rng.integers(0, 3, size=4)

    def dense_relu(tape):
        W1 = tape.param("W1", rng_arr((5, 6)))
        h = nd.relu(nd.affine_forward(x, W1, tape.param("b1", rng_arr((6,)))))
        W2 = tape.param("W2", rng_arr((6, 3)))
        p = nd.softmax_rows(nd.affine_forward(h, W2, tape.param("b2", rng_arr((3,)))))
        return -nd.mean(nd.log(nd.pick(p, y)))

    def dense_leaky_tanh(tape):
        W = tape.param("W", rng_arr((5, 4)))
        h = nd.leaky_relu(nd.affine_forward(x, W, tape.param("b", rng_arr((4,)))))
        return nd.sum_all(nd.tanh(h) * h)

    def conv_sigmoid(tape):
        K = tape.param("K", rng_arr((4, 2, 3)))
        h = nd.sigmoid(nd.conv1d_forward(xs, K, tape.param("kb", rng_arr((4,))), 2, 1))
        K2 = tape.param("K2", rng_arr((2, 4, 2)))
        h = nd.conv1d_forward(h, K2, tape.param("kb2", rng_arr((2,))))
        return nd.sum_all(nd.mean(h, axis=2) * nd.mean(h, axis=2))

    def rng_arr(shape):
        return rng.standard_normal(shape)

    return {"dense+relu+softmax": dense_relu, "dense+leaky_relu+tanh": dense_leaky_tanh,
            "conv1d+sigmoid": conv_sigmoid}


def layer_grad_checks(n_points: int = 10, seed: int = 0) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    worst: dict[str, float] = {}
    for _ in range(n_points):
        for name, build in _layer_cases(rng).items():
            tape = nd.Tape()
            loss = build(tape)
            worst[name] = max(worst.get(name, 0.0), nd.grad_check(tape, loss, 1e-5))
    return worst


TINY_CLASSIFIER = NetSpec((LayerSpec("conv1d", 4, None), LayerSpec("conv1d", 4, 3),
                           LayerSpec("dense", 6)))
TINY_GAN = NetSpec((LayerSpec("dense", 8), LayerSpec("dense", 8)))


def triplet_grad_check(draws: int = 20, seed: int = 0, k: int = 2, m: int = 8,
                       n_mb: int = 4, p_miss: float = 0.5) -> float:
    """Max relative error of the composed D + C + G objective over random draws.

    Each draw re-initializes all three networks with a new seed and samples a
    fresh batch, then compares the tape gradient with central differences for
    every parameter coordinate.
    """
    rng = np.random.default_rng(seed)
    spec = SyntheticSpec((6, 3), k, m, (0.5, -0.3), [[0.0] * k, [1.0] * k], 1.0)
    ds = standardize(generate_synthetic(spec, rng))
    priors = compute_priors(ds)
    worst = 0.0
    for i in range(draws):
        cfg = TrainConfig(p_miss=p_miss, n_mb=n_mb, seed=seed * 1000 + i,
                          classifier=TINY_CLASSIFIER, generator=TINY_GAN,
                          discriminator=TINY_GAN)
        state = init_state(ds, cfg)
        batch = _draw_batch(ds, priors, cfg, state.rng)
        tape, losses = triplet_losses(state, batch, cfg)
        worst = max(worst, nd.grad_check(tape, losses["total"], 1e-5))
    return worst


def gradient_checks(seed: int = 0) -> list[CheckResult]:
    out = [CheckResult(f"layer {name}", err, 1e-5, err < 1e-5)
           for name, err in layer_grad_checks(seed=seed).items()]
    err = triplet_grad_check(seed=seed)
    out.append(CheckResult("composed triplet losses (k=2, m=8, n_mb=4)", err, 1e-4, err < 1e-4))
    return out
