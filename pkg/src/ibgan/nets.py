"""Generator, discriminator and classifier networks on the ndcore tape.

Each network owns a flat ``params`` dict of float64 arrays (names are prefixed
with the role, e.g. ``"C.conv0.W"``) and exposes ``forward(tape, ...)`` which
registers those arrays on the tape and returns the output node. Inference
helpers run a throwaway tape and return plain arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ndcore as nd

__all__ = [
    "LayerSpec",
    "NetSpec",
    "default_classifier_spec",
    "default_gan_spec",
    "ClassifierNet",
    "GeneratorNet",
    "DiscriminatorNet",
    "build_classifier",
    "build_generator",
    "build_discriminator",
    "one_hot",
    "compose_imputation",
]

GEN_SCALE = 3.0
_HIDDEN_ACTS = ("relu", "leaky_relu", "tanh", "sigmoid")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    width: int
    kernel: int | None = None  # conv1d only; None means min(k, m)
    stride: int = 1
    padding: int = 0


@dataclass(frozen=True)
class NetSpec:
    """Hidden layers of one network; output heads are fixed by role."""

    layers: tuple[LayerSpec, ...] = field(default_factory=tuple)
    activation: str = "leaky_relu"
    init_scale: float | None = None

    def validate(self) -> None:
        if self.activation not in _HIDDEN_ACTS:
            raise ValueError(f"unknown hidden activation {self.activation!r}")
        if self.init_scale is not None and self.init_scale <= 0:
            raise ValueError("init_scale must be positive")
        for layer in self.layers:
            if layer.kind not in ("conv1d", "dense"):
                raise ValueError(f"unknown layer kind {layer.kind!r}")
            if layer.width < 1:
                raise ValueError(f"layer width must be positive, got {layer.width}")


def default_classifier_spec() -> NetSpec:
    return NetSpec(
        layers=(
            LayerSpec("conv1d", 32, None),
            LayerSpec("conv1d", 32, 3),
            LayerSpec("dense", 64),
        )
    )


def default_gan_spec() -> NetSpec:
    return NetSpec(layers=(LayerSpec("dense", 256), LayerSpec("dense", 256)))


def one_hot(y, n_classes: int) -> np.ndarray:
    out = np.zeros((len(y), n_classes))
    out[np.arange(len(y)), np.asarray(y)] = 1.0
    return out


class _Init:
    def __init__(self, rng: np.random.Generator, scale: float | None):
        self.rng = rng
        self.scale = scale

    def weight(self, shape, fan_in: int, fan_out: int) -> np.ndarray:
        if self.scale is not None:
            return self.rng.normal(0.0, self.scale, size=shape)
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return self.rng.uniform(-lim, lim, size=shape)


class _Net:
    prefix = ""

    def __init__(self, spec: NetSpec):
        self.spec = spec
        self.params: dict[str, np.ndarray] = {}

    def _bind(self, tape: nd.Tape, trainable: bool = True) -> dict[str, nd.Value]:
        """Put parameters on ``tape``; reuses nodes already bound there.

        With ``trainable=False`` they enter as constants and receive no gradient.
        """
        bound = {}
        for name, arr in self.params.items():
            if name in tape.params and tape.params[name].data is arr:
                bound[name] = tape.params[name]
            elif trainable:
                bound[name] = tape.param(name, arr)
            else:
                bound[name] = tape.constant(arr)
        return bound

    def _dense(self, init: _Init, name: str, d_in: int, d_out: int) -> None:
        self.params[f"{name}.W"] = init.weight((d_in, d_out), d_in, d_out)
        self.params[f"{name}.b"] = np.zeros(d_out)

    def _act(self, h):
        return nd.activations(h, self.spec.activation)

    def n_params(self) -> int:
        return sum(a.size for a in self.params.values())


class ClassifierNet(_Net):
    """Conv1d stack, global average over time, metadata concat, dense head, softmax."""

    prefix = "C"

    def __init__(self, spec: NetSpec, k: int, m: int, d_B: int, n_classes: int,
                 rng: np.random.Generator):
        super().__init__(spec)
        spec.validate()
        kinds = [layer.kind for layer in spec.layers]
        if "dense" in kinds and "conv1d" in kinds[kinds.index("dense"):]:
            raise ValueError("classifier conv1d layers must all precede dense layers")
        self.k, self.m, self.d_B, self.n_classes = k, m, d_B, n_classes
        init = _Init(rng, spec.init_scale)
        self.convs: list[LayerSpec] = []
        channels, length = k, m
        dense_in = None
        i_conv = i_dense = 0
        for layer in spec.layers:
            if layer.kind == "conv1d":
                f = layer.kernel if layer.kernel is not None else min(k, m)
                length = nd.conv1d_output_length(length, f, layer.stride, layer.padding)
                name = f"C.conv{i_conv}"
                self.params[f"{name}.W"] = init.weight(
                    (layer.width, channels, f), channels * f, layer.width * f
                )
                self.params[f"{name}.b"] = np.zeros(layer.width)
                self.convs.append(LayerSpec("conv1d", layer.width, f, layer.stride, layer.padding))
                channels = layer.width
                i_conv += 1
            else:
                if dense_in is None:
                    dense_in = (channels if i_conv else channels * length) + d_B
                self._dense(init, f"C.dense{i_dense}", dense_in, layer.width)
                dense_in = layer.width
                i_dense += 1
        if dense_in is None:
            dense_in = (channels if i_conv else channels * length) + d_B
        self._dense(init, "C.out", dense_in, n_classes)
        self.n_dense = i_dense

    def forward(self, tape: nd.Tape, x, trainable: bool = True) -> nd.Value:
        """Class probabilities (n, |Y|) for flattened inputs (n, k*m + d_B)."""
        P = self._bind(tape, trainable)
        x = tape.lift(x)
        n = x.shape[0]
        km = self.k * self.m
        h = nd.reshape(nd.columns(x, 0, km), (n, self.k, self.m))
        for i, layer in enumerate(self.convs):
            h = nd.conv1d_forward(h, P[f"C.conv{i}.W"], P[f"C.conv{i}.b"],
                                  layer.stride, layer.padding)
            h = self._act(h)
        h = nd.mean(h, axis=2) if self.convs else nd.reshape(h, (n, -1))
        if self.d_B:
            h = nd.concat([h, nd.columns(x, km, km + self.d_B)], axis=1)
        for i in range(self.n_dense):
            h = self._act(nd.affine_forward(h, P[f"C.dense{i}.W"], P[f"C.dense{i}.b"]))
        return nd.softmax_rows(nd.affine_forward(h, P["C.out.W"], P["C.out.b"]))

    def predict_proba(self, x: np.ndarray, batch: int = 512) -> np.ndarray:
        out = []
        for s in range(0, x.shape[0], batch):
            out.append(self.forward(nd.Tape(), x[s : s + batch]).data)
        return np.concatenate(out) if out else np.zeros((0, self.n_classes))


class _DenseNet(_Net):
    def __init__(self, spec: NetSpec, d_in: int, d_out: int, rng: np.random.Generator):
        super().__init__(spec)
        spec.validate()
        if any(layer.kind != "dense" for layer in spec.layers):
            raise ValueError(f"{type(self).__name__} accepts dense layers only")
        init = _Init(rng, spec.init_scale)
        d = d_in
        for i, layer in enumerate(spec.layers):
            self._dense(init, f"{self.prefix}.dense{i}", d, layer.width)
            d = layer.width
        self._dense(init, f"{self.prefix}.out", d, d_out)
        self.d_in, self.d_out = d_in, d_out

    def _trunk(self, tape: nd.Tape, h, trainable: bool = True) -> nd.Value:
        P = self._bind(tape, trainable)
        p = self.prefix
        for i in range(len(self.spec.layers)):
            h = self._act(nd.affine_forward(h, P[f"{p}.dense{i}.W"], P[f"{p}.dense{i}.b"]))
        return nd.affine_forward(h, P[f"{p}.out.W"], P[f"{p}.out.b"])


class GeneratorNet(_DenseNet):
    """Conditional imputer: (x_mask, I, one-hot label) -> bounded imputation."""

    prefix = "G"

    def __init__(self, spec: NetSpec, flat_dim: int, n_classes: int, rng: np.random.Generator):
        super().__init__(spec, 2 * flat_dim + n_classes, flat_dim, rng)
        self.flat_dim, self.n_classes = flat_dim, n_classes

    def forward(self, tape: nd.Tape, x_mask, mask, y_onehot) -> nd.Value:
        """Raw imputation ``3 * tanh(.)`` for every component (before pass-through)."""
        h = nd.concat([tape.lift(x_mask), tape.lift(mask), tape.lift(y_onehot)], axis=1)
        return GEN_SCALE * nd.tanh(self._trunk(tape, h))

    def impute(self, tape: nd.Tape, x_mask, mask, y_onehot) -> nd.Value:
        """Synthetic sample ``x'``: observed slots copied, masked slots generated."""
        return compose_imputation(x_mask, mask, self.forward(tape, x_mask, mask, y_onehot))


class DiscriminatorNet(_DenseNet):
    """Per-component probability that a value is real rather than imputed."""

    prefix = "D"

    def __init__(self, spec: NetSpec, flat_dim: int, n_classes: int, rng: np.random.Generator):
        super().__init__(spec, flat_dim + n_classes, flat_dim, rng)
        self.flat_dim, self.n_classes = flat_dim, n_classes

    def forward(self, tape: nd.Tape, x, y_onehot, trainable: bool = True) -> nd.Value:
        h = nd.concat([tape.lift(x), tape.lift(y_onehot)], axis=1)
        return nd.sigmoid(self._trunk(tape, h, trainable))

    def sample_scores(self, x: np.ndarray, y_onehot: np.ndarray) -> np.ndarray:
        """Sample-level score: mean component score per row."""
        return self.forward(nd.Tape(), x, y_onehot).data.mean(axis=1)


def compose_imputation(x_mask, mask, x_hat) -> nd.Value:
    """``x_mask * (1 - I) + x_hat * I`` as a selection, so I=0 slots are bit-exact."""
    return nd.where(np.asarray(mask.data if isinstance(mask, nd.Value) else mask) > 0,
                    x_hat, x_mask)


def build_classifier(spec: NetSpec | None, k: int, m: int, d_B: int, n_classes: int,
                     rng: np.random.Generator) -> ClassifierNet:
    return ClassifierNet(spec or default_classifier_spec(), k, m, d_B, n_classes, rng)


def build_generator(spec: NetSpec | None, flat_dim: int, n_classes: int,
                    rng: np.random.Generator) -> GeneratorNet:
    return GeneratorNet(spec or default_gan_spec(), flat_dim, n_classes, rng)


def build_discriminator(spec: NetSpec | None, flat_dim: int, n_classes: int,
                        rng: np.random.Generator) -> DiscriminatorNet:
    return DiscriminatorNet(spec or default_gan_spec(), flat_dim, n_classes, rng)
