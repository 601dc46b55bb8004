"""Dense float64 arrays with a replayable reverse-mode tape, plus Adam.

Every operation appends a node to a :class:`Tape`. A node keeps its op, its
parents and the context saved by the forward pass, so the tape can be swept
backwards for gradients or replayed forwards after a leaf is perturbed (which
is how :func:`grad_check` obtains finite differences without rebuilding the
graph). Values computed outside the tape enter as constants and therefore stay
fixed under replay, which is the detach semantics the trainer relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Tape",
    "Value",
    "ShapeError",
    "DivergenceError",
    "add",
    "sub",
    "mul",
    "neg",
    "matmul",
    "affine_forward",
    "conv1d_forward",
    "conv1d_output_length",
    "activations",
    "relu",
    "leaky_relu",
    "sigmoid",
    "tanh",
    "softmax_rows",
    "log",
    "clip",
    "where",
    "pick",
    "concat",
    "columns",
    "reshape",
    "sum_all",
    "mean",
    "backward",
    "grad_check",
    "AdamState",
    "adam_update",
    "Adam",
]

LEAKY_SLOPE = 0.2


class ShapeError(ValueError):
    """Operand shapes do not compose."""


class DivergenceError(FloatingPointError):
    """A gradient or loss left the finite range during training."""


class Value:
    """Node on a :class:`Tape`: an array plus how it was produced."""

    __slots__ = ("tape", "index", "op", "parents", "data", "ctx", "requires_grad", "name")
    # make ndarray (op) Value defer to Value's reflected operators
    __array_ufunc__ = None

    def __init__(self, tape, op, parents, data, ctx=None, requires_grad=False, name=None):
        self.tape = tape
        self.op = op
        self.parents = parents
        self.data = data
        self.ctx = ctx
        self.requires_grad = requires_grad
        self.name = name
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        tag = self.name or (type(self.op).__name__ if self.op else "const")
        return f"Value({tag}, shape={self.data.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Ordered record of primitive operations.

    Nodes are appended in execution order, so the list is already topological.
    ``params`` maps names to the leaf nodes that gradients are requested for.
    """

    def __init__(self):
        self.nodes: list[Value] = []
        self.params: dict[str, Value] = {}

    def param(self, name: str, array: np.ndarray) -> Value:
        """Register ``array`` (not copied) as a differentiable leaf."""
        if name in self.params:
            raise KeyError(f"parameter {name!r} already on tape")
        if array.dtype != np.float64:
            raise TypeError(f"parameter {name!r} must be float64, got {array.dtype}")
        v = Value(self, None, (), array, requires_grad=True, name=name)
        self.params[name] = v
        return v

    def constant(self, array) -> Value:
        return Value(self, None, (), np.asarray(array, dtype=np.float64))

    def lift(self, x) -> Value:
        if isinstance(x, Value):
            if x.tape is not self:
                raise ValueError("operand belongs to a different tape")
            return x
        return self.constant(x)

    def replay(self, start: int = 0) -> None:
        """Recompute every non-leaf node from ``start`` onwards."""
        for node in self.nodes[start:]:
            if node.op is None:
                continue
            node.data, node.ctx = node.op.forward(*(p.data for p in node.parents))


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Value):
            return x.tape
    raise TypeError("at least one operand must be a Value")


def _apply(op, *xs) -> Value:
    tape = _tape_of(*xs)
    parents = tuple(tape.lift(x) for x in xs)
    data, ctx = op.forward(*(p.data for p in parents))
    rg = any(p.requires_grad for p in parents)
    return Value(tape, op, parents, data, ctx, requires_grad=rg)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic


class _Add:
    def forward(self, a, b):
        return a + b, (a.shape, b.shape)

    def backward(self, g, ctx, a, b):
        return _unbroadcast(g, ctx[0]), _unbroadcast(g, ctx[1])


class _Sub:
    def forward(self, a, b):
        return a - b, (a.shape, b.shape)

    def backward(self, g, ctx, a, b):
        return _unbroadcast(g, ctx[0]), -_unbroadcast(g, ctx[1])


class _Mul:
    def forward(self, a, b):
        return a * b, None

    def backward(self, g, ctx, a, b):
        return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


class _Neg:
    def forward(self, a):
        return -a, None

    def backward(self, g, ctx, a):
        return (-g,)


def add(a, b) -> Value:
    return _apply(_Add(), a, b)


def sub(a, b) -> Value:
    return _apply(_Sub(), a, b)


def mul(a, b) -> Value:
    return _apply(_Mul(), a, b)


def neg(a) -> Value:
    return _apply(_Neg(), a)


# ---------------------------------------------------------------------------
# linear layers


class _MatMul:
    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
        return a @ b, None

    def backward(self, g, ctx, a, b):
        return g @ b.T, a.T @ g


class _Affine:
    def forward(self, x, W, b):
        if x.ndim != 2 or W.ndim != 2 or b.ndim != 1:
            raise ShapeError(f"affine: x{x.shape}, W{W.shape}, b{b.shape} need ranks 2, 2, 1")
        if x.shape[1] != W.shape[0] or W.shape[1] != b.shape[0]:
            raise ShapeError(
                f"affine: x has {x.shape[1]} features, W is {W.shape[0]}x{W.shape[1]}, "
                f"b has {b.shape[0]} entries"
            )
        return x @ W + b, None

    def backward(self, g, ctx, x, W, b):
        return g @ W.T, x.T @ g, g.sum(axis=0)


def matmul(a, b) -> Value:
    return _apply(_MatMul(), a, b)


def affine_forward(x, W, b) -> Value:
    """``x @ W + b`` for ``x`` of shape (n, d_in)."""
    return _apply(_Affine(), x, W, b)


def conv1d_output_length(m: int, f: int, stride: int = 1, padding: int = 0) -> int:
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv1d: stride {stride} must be >= 1 and padding {padding} >= 0")
    if f > m + 2 * padding:
        raise ShapeError(f"conv1d: kernel length {f} exceeds padded length {m + 2 * padding}")
    return (m + 2 * padding - f) // stride + 1


class _Conv1d:
    def __init__(self, stride, padding):
        self.stride = stride
        self.padding = padding

    def forward(self, x, K, b):
        if x.ndim != 3 or K.ndim != 3 or b.ndim != 1:
            raise ShapeError(f"conv1d: x{x.shape}, kernels{K.shape}, bias{b.shape}")
        n, k, m = x.shape
        c, kk, f = K.shape
        if kk != k or b.shape[0] != c:
            raise ShapeError(f"conv1d: x has {k} channels, kernels {K.shape}, bias {b.shape}")
        mo = conv1d_output_length(m, f, self.stride, self.padding)
        p = self.padding
        xp = np.pad(x, ((0, 0), (0, 0), (p, p))) if p else x
        s0, s1, s2 = xp.strides
        # windows[n, o, k, j] = xp[n, k, o*stride + j]
        windows = np.lib.stride_tricks.as_strided(
            xp, shape=(n, mo, k, f), strides=(s0, s2 * self.stride, s1, s2), writeable=False
        )
        cols = windows.reshape(n * mo, k * f)
        out = cols @ K.reshape(c, k * f).T + b
        return out.reshape(n, mo, c).transpose(0, 2, 1).copy(), cols

    def backward(self, g, cols, x, K, b):
        n, k, m = x.shape
        c, _, f = K.shape
        mo = g.shape[2]
        g2 = g.transpose(0, 2, 1).reshape(n * mo, c)
        dK = (g2.T @ cols).reshape(c, k, f)
        db = g2.sum(axis=0)
        dcols = (g2 @ K.reshape(c, k * f)).reshape(n, mo, k, f)
        p = self.padding
        dxp = np.zeros((n, k, m + 2 * p))
        hi = self.stride * (mo - 1) + 1
        for j in range(f):
            dxp[:, :, j : j + hi : self.stride] += dcols[:, :, :, j].transpose(0, 2, 1)
        dx = dxp[:, :, p : p + m] if p else dxp
        return dx, dK, db


def conv1d_forward(x, kernels, bias, stride: int = 1, padding: int = 0) -> Value:
    """Cross-correlation over the last axis.

    ``x`` is (n, k, m), ``kernels`` is (c_out, k, f); output is (n, c_out, m')
    with ``m' = (m + 2*padding - f) // stride + 1``. No kernel flip.
    """
    return _apply(_Conv1d(stride, padding), x, kernels, bias)


# ---------------------------------------------------------------------------
# nonlinearities


class _Relu:
    def forward(self, x):
        return np.maximum(x, 0.0), None

    def backward(self, g, ctx, x):
        return (g * (x > 0),)


class _LeakyRelu:
    def __init__(self, slope):
        self.slope = slope

    def forward(self, x):
        return np.where(x > 0, x, self.slope * x), None

    def backward(self, g, ctx, x):
        return (np.where(x > 0, g, self.slope * g),)


class _Sigmoid:
    def forward(self, x):
        e = np.exp(-np.abs(x))
        y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        return y, y

    def backward(self, g, y, x):
        return (g * y * (1.0 - y),)


class _Tanh:
    def forward(self, x):
        y = np.tanh(x)
        return y, y

    def backward(self, g, y, x):
        return (g * (1.0 - y * y),)


class _Softmax:
    def forward(self, x):
        if x.ndim != 2:
            raise ShapeError(f"softmax_rows needs a 2-D array, got shape {x.shape}")
        z = np.exp(x - x.max(axis=1, keepdims=True))
        y = z / z.sum(axis=1, keepdims=True)
        return y, y

    def backward(self, g, y, x):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)


class _Log:
    def forward(self, x):
        return np.log(x), None

    def backward(self, g, ctx, x):
        return (g / x,)


class _Clip:
    def __init__(self, lo, hi):
        self.lo = lo
        self.hi = hi

    def forward(self, x):
        return np.clip(x, self.lo, self.hi), None

    def backward(self, g, ctx, x):
        return (g * ((x >= self.lo) & (x <= self.hi)),)


def relu(x) -> Value:
    return _apply(_Relu(), x)


def leaky_relu(x, slope: float = LEAKY_SLOPE) -> Value:
    return _apply(_LeakyRelu(slope), x)


def sigmoid(x) -> Value:
    return _apply(_Sigmoid(), x)


def tanh(x) -> Value:
    return _apply(_Tanh(), x)


def softmax_rows(x) -> Value:
    return _apply(_Softmax(), x)


def log(x) -> Value:
    return _apply(_Log(), x)


def clip(x, lo: float, hi: float) -> Value:
    """Clamp into [lo, hi]; gradient is zero where the clamp is active."""
    return _apply(_Clip(lo, hi), x)


_ACTIVATIONS = {
    "relu": relu,
    "leaky_relu": leaky_relu,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "softmax_rows": softmax_rows,
}


def activations(x, kind: str) -> Value:
    """Dispatch by name: relu, leaky_relu (slope 0.2), sigmoid, tanh, softmax_rows."""
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}; expected one of {sorted(_ACTIVATIONS)}")
    return fn(x)


# ---------------------------------------------------------------------------
# structural ops


class _Where:
    def __init__(self, cond):
        self.cond = cond

    def forward(self, a, b):
        return np.where(self.cond, a, b), None

    def backward(self, g, ctx, a, b):
        return (
            _unbroadcast(np.where(self.cond, g, 0.0), a.shape),
            _unbroadcast(np.where(self.cond, 0.0, g), b.shape),
        )


class _Pick:
    def __init__(self, idx):
        self.idx = idx

    def forward(self, x):
        if x.ndim != 2 or x.shape[0] != self.idx.shape[0]:
            raise ShapeError(f"pick: {x.shape} rows vs {self.idx.shape[0]} indices")
        return x[np.arange(x.shape[0]), self.idx], None

    def backward(self, g, ctx, x):
        out = np.zeros_like(x)
        out[np.arange(x.shape[0]), self.idx] = g
        return (out,)


class _Concat:
    def __init__(self, axis):
        self.axis = axis

    def forward(self, *xs):
        return np.concatenate(xs, axis=self.axis), np.cumsum([x.shape[self.axis] for x in xs])[:-1]

    def backward(self, g, splits, *xs):
        return tuple(np.split(g, splits, axis=self.axis))


class _Reshape:
    def __init__(self, shape):
        self.shape = shape

    def forward(self, x):
        return x.reshape(self.shape), None

    def backward(self, g, ctx, x):
        return (g.reshape(x.shape),)


class _Sum:
    def forward(self, x):
        return np.asarray(x.sum()), None

    def backward(self, g, ctx, x):
        return (np.broadcast_to(g, x.shape).copy(),)


class _Mean:
    def __init__(self, axis):
        self.axis = axis

    def forward(self, x):
        if self.axis is None:
            return np.asarray(x.mean()), None
        return x.mean(axis=self.axis), None

    def backward(self, g, ctx, x):
        if self.axis is None:
            return (np.full(x.shape, g / x.size),)
        n = x.shape[self.axis]
        return (np.broadcast_to(np.expand_dims(g, self.axis) / n, x.shape).copy(),)


class _Columns:
    def __init__(self, start, stop):
        self.start = start
        self.stop = stop

    def forward(self, x):
        return x[:, self.start : self.stop], None

    def backward(self, g, ctx, x):
        out = np.zeros_like(x)
        out[:, self.start : self.stop] = g
        return (out,)


def columns(x, start: int, stop: int) -> Value:
    """Differentiable ``x[:, start:stop]`` for 2-D ``x``."""
    return _apply(_Columns(start, stop), x)


def where(cond: np.ndarray, a, b) -> Value:
    """Select ``a`` where ``cond`` is true, else ``b``; ``cond`` is a fixed array."""
    return _apply(_Where(np.asarray(cond, dtype=bool)), a, b)


def pick(x, idx) -> Value:
    """Row-wise gather ``x[i, idx[i]]``."""
    return _apply(_Pick(np.asarray(idx, dtype=np.intp)), x)


def concat(xs, axis: int = -1) -> Value:
    return _apply(_Concat(axis), *xs)


def reshape(x, shape) -> Value:
    return _apply(_Reshape(tuple(shape)), x)


def sum_all(x) -> Value:
    return _apply(_Sum(), x)


def mean(x, axis: int | None = None) -> Value:
    return _apply(_Mean(axis), x)


# ---------------------------------------------------------------------------
# gradients


def backward(tape: Tape, loss: Value) -> dict[str, np.ndarray]:
    """Reverse sweep from scalar ``loss``; returns one gradient per tape parameter."""
    if not isinstance(loss, Value) or loss.tape is not tape or tape.nodes[loss.index] is not loss:
        raise ValueError("loss is not a node of this tape")
    if loss.data.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.data.shape}")
    grads: dict[int, np.ndarray] = {loss.index: np.ones_like(loss.data)}
    for node in reversed(tape.nodes[: loss.index + 1]):
        if node.op is None:
            continue
        g = grads.pop(node.index, None)
        if g is None:
            continue
        parent_grads = node.op.backward(g, node.ctx, *(p.data for p in node.parents))
        for p, pg in zip(node.parents, parent_grads):
            if not p.requires_grad:
                continue
            if p.index in grads:
                grads[p.index] = grads[p.index] + pg
            else:
                grads[p.index] = pg
    return {
        name: grads.get(v.index, np.zeros_like(v.data)).reshape(v.data.shape)
        for name, v in tape.params.items()
    }


def grad_check(tape: Tape, loss: Value, eps: float = 1e-5, max_coords: int | None = None,
               rng: np.random.Generator | None = None) -> float:
    """Max over parameters of ``|analytic - central difference| / max(1, |analytic|)``.

    The tape is replayed for every perturbed coordinate. ``max_coords`` caps the
    number of coordinates probed per parameter (chosen with ``rng``); ``None``
    probes all of them. Parameter arrays are restored exactly afterwards.
    """
    if not 0 < eps <= 1e-2:
        raise ValueError(f"eps must lie in (0, 1e-2], got {eps}")
    analytic = backward(tape, loss)
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for name, leaf in tape.params.items():
        flat = leaf.data.reshape(-1)
        if not np.shares_memory(flat, leaf.data):
            raise ValueError(f"parameter {name!r} must be C-contiguous for perturbation")
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        a = analytic[name].reshape(-1)
        start = leaf.index + 1
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            tape.replay(start)
            up = float(loss.data)
            flat[i] = orig - eps
            tape.replay(start)
            down = float(loss.data)
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            worst = max(worst, abs(a[i] - numeric) / max(1.0, abs(a[i])))
        # later leaves replay from their own index, so nodes before them must be current
        tape.replay(start)
    return worst


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_update(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
                state: AdamState) -> None:
    """One bias-corrected Adam step, in place on ``params`` and ``state``.

    Raises :class:`DivergenceError` on any non-finite gradient before touching
    anything.
    """
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ShapeError(f"{name}: gradient {g.shape} vs parameter {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for {name!r} at Adam step {state.t + 1}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, g in grads.items():
        p = params[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)


class Adam:
    """Convenience wrapper binding an :class:`AdamState` to a parameter dict."""

    def __init__(self, params: dict[str, np.ndarray], lr=1e-3, beta1=0.9, beta2=0.999,
                 epsilon=1e-8):
        self.params = params
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)

    def step(self, grads: dict[str, np.ndarray]) -> None:
        adam_update(self.params, {k: g for k, g in grads.items() if k in self.params}, self.state)
