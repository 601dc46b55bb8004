"""Joint training of the generator / discriminator / classifier triplet.

One mini-batch step draws a real batch and an inverse-prior mask batch, masks
the latter at rate ``p_miss``, imputes it with the generator and then takes one
Adam step each for D, C and G, in that order. ``p_miss=1`` gives the naive GAN
(generation from pure noise); ``p_miss=0`` feeds resampled real data straight
to the classifier.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import ndcore as nd
from .balance import apply_mask, draw_mask, noise, weighted_resample
from .dataio import Dataset, compute_priors
from .metrics import MetricsReport, report
from .nets import (
    ClassifierNet,
    DiscriminatorNet,
    GeneratorNet,
    NetSpec,
    build_classifier,
    build_discriminator,
    build_generator,
    one_hot,
)

__all__ = [
    "TrainConfig",
    "TripletState",
    "gan_loss",
    "discriminator_weights",
    "classifier_loss_alpha",
    "generator_loss",
    "triplet_losses",
    "init_state",
    "train_epoch",
    "train",
    "evaluate",
]

log = logging.getLogger(__name__)

D_CLAMP = 1e-7
P_CLAMP = 1e-12
HISTORY_KEYS = ("loss_D", "loss_G_adv", "loss_C_real", "loss_C_fake")


@dataclass
class TrainConfig:
    p_miss: float = 0.1
    alpha: float = 0.5
    n_mb: int = 64
    epochs: int = 20
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    w_cap: float = 20.0
    mask_rule: str = "inverse"
    classifier: NetSpec | None = None
    generator: NetSpec | None = None
    discriminator: NetSpec | None = None

    def validate(self) -> None:
        if not 0 <= self.p_miss <= 1:
            raise ValueError(f"p_miss must lie in [0, 1], got {self.p_miss}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.n_mb < 1:
            raise ValueError(f"n_mb must be positive, got {self.n_mb}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.w_cap <= 0:
            raise ValueError(f"w_cap must be positive, got {self.w_cap}")

    def adam(self) -> nd.AdamState:
        return nd.AdamState(lr=self.lr, beta1=self.beta1, beta2=self.beta2, epsilon=self.epsilon)


@dataclass
class TripletState:
    G: GeneratorNet
    D: DiscriminatorNet
    C: ClassifierNet
    adam_G: nd.AdamState
    adam_D: nd.AdamState
    adam_C: nd.AdamState
    rng: np.random.Generator
    epoch: int = 0
    history: list[dict] = field(default_factory=list)


# ---------------------------------------------------------------------------
# losses


def _on_tape(*xs) -> nd.Tape:
    for x in xs:
        if isinstance(x, nd.Value):
            return x.tape
    return nd.Tape()


def gan_loss(d_real, d_fake, mask) -> tuple[nd.Value, nd.Value]:
    """Element-wise discriminator loss and non-saturating generator loss.

    The discriminator is pushed towards 1 on every real component and towards
    ``1 - I`` on the imputed batch; ``loss_D`` averages the binary
    cross-entropy over all components of both batches. ``loss_G_adv`` is
    ``-mean log d_fake`` over masked components (0 when nothing is masked).
    """
    tape = _on_tape(d_real, d_fake)
    mask = np.asarray(mask, dtype=np.float64)
    d_real = nd.clip(tape.lift(d_real), D_CLAMP, 1 - D_CLAMP)
    d_fake = nd.clip(tape.lift(d_fake), D_CLAMP, 1 - D_CLAMP)
    if d_fake.shape != mask.shape:
        raise nd.ShapeError(f"d_fake {d_fake.shape} vs mask {mask.shape}")
    log_fake = nd.log(d_fake)
    log_fake_c = nd.log(1.0 - d_fake)
    real_term = nd.sum_all(nd.log(d_real))
    fake_term = nd.sum_all((1.0 - mask) * log_fake + mask * log_fake_c)
    n = d_real.data.size + d_fake.data.size
    loss_D = (-1.0 / n) * (real_term + fake_term)
    n_masked = mask.sum()
    loss_G = (-1.0 / max(n_masked, 1.0)) * nd.sum_all(mask * log_fake)
    return loss_D, loss_G


def discriminator_weights(d_sample, cap: float = 20.0) -> np.ndarray:
    """Odds ``d / (1 - d)`` capped at ``cap``; a plain array, never differentiated."""
    d = np.clip(np.asarray(d_sample, dtype=np.float64), D_CLAMP, 1 - D_CLAMP)
    return np.minimum(d / (1.0 - d), cap)


def _log_prob(c, y) -> nd.Value:
    return nd.log(nd.clip(nd.pick(c, y), P_CLAMP, 1.0))


def _classifier_terms(c_real, y, c_fake, y_fake, w_D, alpha):
    tape = _on_tape(c_real, c_fake)
    c_real, c_fake = tape.lift(c_real), tape.lift(c_fake)
    w_D = np.asarray(w_D, dtype=np.float64)
    if np.any(w_D < 0):
        raise ValueError("sample weights must be nonnegative")
    real = (-alpha) * nd.mean(_log_prob(c_real, y))
    fake = (-(1.0 - alpha)) * nd.mean(w_D * _log_prob(c_fake, y_fake))
    return real, fake


def classifier_loss_alpha(c_real, y, c_fake, y_fake, w_D, alpha: float) -> nd.Value:
    """``-[alpha * mean log c_Y(x) + (1 - alpha) * mean w_D log c_Y'(x')]``."""
    real, fake = _classifier_terms(c_real, y, c_fake, y_fake, w_D, alpha)
    return real + fake


def generator_loss(d_fake, mask, c_fake, y_fake, w_D, alpha: float) -> nd.Value:
    """Adversarial term plus the weighted classifier cross-entropy on true labels Y'."""
    _, adv = gan_loss(np.full((1, 1), 0.5), d_fake, mask)
    coop = (-(1.0 - alpha)) * nd.mean(np.asarray(w_D) * _log_prob(c_fake, y_fake))
    return adv + coop


@dataclass
class _Batch:
    x_real: np.ndarray
    y_real: np.ndarray
    x_mask: np.ndarray
    mask: np.ndarray
    y_fake: np.ndarray
    oh_real: np.ndarray
    oh_fake: np.ndarray
    x_src: np.ndarray


def _draw_batch(ds: Dataset, priors, cfg: TrainConfig, rng) -> _Batch:
    bp = weighted_resample(ds, priors, cfg.n_mb, rng, cfg.mask_rule)
    x_src = ds.flat(bp.mask_idx)
    mask = draw_mask(x_src.shape, cfg.p_miss, rng)
    z = noise(x_src.shape, rng)
    return _Batch(
        x_real=ds.flat(bp.real_idx),
        y_real=bp.real_y,
        x_mask=apply_mask(x_src, mask, z),
        mask=mask,
        y_fake=bp.mask_y,
        oh_real=one_hot(bp.real_y, ds.n_classes),
        oh_fake=one_hot(bp.mask_y, ds.n_classes),
        x_src=x_src,
    )


def triplet_losses(state: TripletState, b: _Batch, cfg: TrainConfig,
                   w_D: np.ndarray | None = None) -> tuple[nd.Tape, dict[str, nd.Value]]:
    """All three losses on one tape, with gradients reaching every network.

    Used for gradient checking the composed objective. ``w_D`` defaults to the
    current discriminator's weights on the imputed batch and is a constant on
    the tape, as it is during training.
    """
    tape = nd.Tape()
    x_fake = state.G.impute(tape, b.x_mask, b.mask, b.oh_fake)
    if w_D is None:
        w_D = discriminator_weights(state.D.sample_scores(x_fake.data, b.oh_fake), cfg.w_cap)
    d_real = state.D.forward(tape, b.x_real, b.oh_real)
    d_fake = state.D.forward(tape, x_fake, b.oh_fake)
    loss_D, loss_G_adv = gan_loss(d_real, d_fake, b.mask)
    c_real = state.C.forward(tape, b.x_real)
    c_fake = state.C.forward(tape, x_fake)
    loss_C = classifier_loss_alpha(c_real, b.y_real, c_fake, b.y_fake, w_D, cfg.alpha)
    loss_G = generator_loss(d_fake, b.mask, c_fake, b.y_fake, w_D, cfg.alpha)
    total = loss_D + loss_C + loss_G
    return tape, {"loss_D": loss_D, "loss_G_adv": loss_G_adv, "loss_C": loss_C,
                  "loss_G": loss_G, "total": total}


# ---------------------------------------------------------------------------
# training


def init_state(ds: Dataset, cfg: TrainConfig) -> TripletState:
    """Build the three networks from ``cfg.seed``; classifier first so its
    initialization matches :func:`ibgan.baselines.fit_classifier` for the same seed."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    C = build_classifier(cfg.classifier, ds.k, ds.m, ds.d_B, ds.n_classes, rng)
    G = build_generator(cfg.generator, ds.flat_dim, ds.n_classes, rng)
    D = build_discriminator(cfg.discriminator, ds.flat_dim, ds.n_classes, rng)
    return TripletState(G, D, C, cfg.adam(), cfg.adam(), cfg.adam(), rng)


def _finite(name: str, value: float, epoch: int, step: int) -> float:
    if not math.isfinite(value):
        raise nd.DivergenceError(f"{name} is {value} at epoch {epoch}, step {step}")
    return value


def train_epoch(state: TripletState, ds: Dataset, priors, cfg: TrainConfig) -> TripletState:
    """``ceil(N / n_mb)`` steps of D, then C, then G updates. Mutates and returns ``state``."""
    steps = math.ceil(len(ds) / cfg.n_mb)
    sums = dict.fromkeys(HISTORY_KEYS, 0.0)
    epoch = state.epoch + 1
    for step in range(steps):
        b = _draw_batch(ds, priors, cfg, state.rng)
        x_fake = state.G.impute(nd.Tape(), b.x_mask, b.mask, b.oh_fake).data

        # discriminator
        tape = nd.Tape()
        d_real = state.D.forward(tape, b.x_real, b.oh_real)
        d_fake = state.D.forward(tape, x_fake, b.oh_fake)
        loss_D, _ = gan_loss(d_real, d_fake, b.mask)
        try:
            nd.adam_update(state.D.params, nd.backward(tape, loss_D), state.adam_D)
        except nd.DivergenceError as e:
            raise nd.DivergenceError(f"epoch {epoch}, step {step}: {e}") from None

        # classifier, weighted by the freshly updated discriminator
        w_D = discriminator_weights(state.D.sample_scores(x_fake, b.oh_fake), cfg.w_cap)
        tape = nd.Tape()
        c_real = state.C.forward(tape, b.x_real)
        c_fake = state.C.forward(tape, x_fake)
        real_term, fake_term = _classifier_terms(c_real, b.y_real, c_fake, b.y_fake, w_D,
                                                 cfg.alpha)
        loss_C = real_term + fake_term
        try:
            nd.adam_update(state.C.params, nd.backward(tape, loss_C), state.adam_C)
        except nd.DivergenceError as e:
            raise nd.DivergenceError(f"epoch {epoch}, step {step}: {e}") from None

        # generator, cooperating with the classifier on the true labels Y'
        tape = nd.Tape()
        x_gen = state.G.impute(tape, b.x_mask, b.mask, b.oh_fake)
        d_gen = state.D.forward(tape, x_gen, b.oh_fake, trainable=False)
        c_gen = state.C.forward(tape, x_gen, trainable=False)
        loss_G = generator_loss(d_gen, b.mask, c_gen, b.y_fake, w_D, cfg.alpha)
        _, loss_G_adv = gan_loss(np.full((1, 1), 0.5), d_gen.data, b.mask)
        try:
            nd.adam_update(state.G.params, nd.backward(tape, loss_G), state.adam_G)
        except nd.DivergenceError as e:
            raise nd.DivergenceError(f"epoch {epoch}, step {step}: {e}") from None

        for key, v in zip(HISTORY_KEYS, (loss_D, loss_G_adv, real_term, fake_term)):
            sums[key] += _finite(key, float(v.data), epoch, step)

    state.epoch = epoch
    state.history.append({"epoch": epoch, **{k: v / steps for k, v in sums.items()}})
    log.debug("epoch %d: %s", epoch, state.history[-1])
    return state


def train(ds_train: Dataset, cfg: TrainConfig) -> TripletState:
    """Run ``cfg.epochs`` epochs from a fresh, seeded triplet."""
    state = init_state(ds_train, cfg)
    priors = compute_priors(ds_train)
    for _ in range(cfg.epochs):
        train_epoch(state, ds_train, priors, cfg)
    return state


def evaluate(classifier: ClassifierNet, ds_test: Dataset) -> MetricsReport:
    """Argmax predictions on ``ds_test`` scored with the macro metrics."""
    if len(ds_test) == 0:
        raise ValueError("empty test set")
    return report(classifier.predict_proba(ds_test.flat()), ds_test.y)
