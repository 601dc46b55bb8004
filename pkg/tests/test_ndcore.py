import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ibgan import ndcore as nd

finite = st.floats(-50, 50, allow_nan=False)


def run(fn, *arrays):
    tape = nd.Tape()
    return fn(*[tape.lift(np.asarray(a, dtype=float)) for a in arrays]).data


# -- forward examples --------------------------------------------------------

def test_affine_identity_and_bias():
    assert np.array_equal(run(nd.affine_forward, [[1, 2]], np.eye(2), [0, 0]), [[1, 2]])
    W = np.random.default_rng(0).standard_normal((3, 2))
    assert np.array_equal(run(nd.affine_forward, np.zeros((1, 3)), W, [5, 6]), [[5, 6]])


def test_affine_hand_matrix():
    assert np.array_equal(run(nd.affine_forward, [[1, 1]], [[1, 2], [3, 4]], [0, 0]), [[4, 6]])


def test_affine_shape_mismatch_reports_dims():
    with pytest.raises(nd.ShapeError, match="3"):
        run(nd.affine_forward, np.zeros((1, 3)), np.zeros((2, 2)), np.zeros(2))


def conv(x, K, stride=1, padding=0):
    tape = nd.Tape()
    K = np.asarray(K, dtype=float)
    return nd.conv1d_forward(tape.lift(np.asarray(x, dtype=float)), tape.lift(K),
                             tape.lift(np.zeros(K.shape[0])), stride, padding).data


def test_conv1d_examples():
    assert np.array_equal(conv([[[1, 2, 3]]], [[[1]]]), [[[1, 2, 3]]])
    assert np.array_equal(conv([[[1, 1, 1, 1]]], [[[1, 1]]]), [[[2, 2, 2]]])
    assert np.array_equal(conv([[[1, 2, 3, 4]]], [[[1, 0]]], stride=2), [[[1, 3]]])


def test_conv1d_sums_channels_and_pads():
    x = np.array([[[1.0, 2, 3], [10, 20, 30]]])
    out = conv(x, [[[1, 1], [1, 0]]], padding=1)
    # padded channels: [0,1,2,3,0] and [0,10,20,30,0]
    assert np.array_equal(out, [[[1, 13, 25, 33]]])


def test_conv1d_kernel_too_long_rejected():
    with pytest.raises(nd.ShapeError):
        conv([[[1, 2]]], [[[1, 1, 1]]])
    assert nd.conv1d_output_length(2, 3, 1, 1) == 2


@given(arrays(np.float64, (2, 3, 7), elements=finite))
def test_conv1d_identity_kernel_per_channel(x):
    K = np.zeros((3, 3, 1))
    K[np.arange(3), np.arange(3), 0] = 1.0
    assert np.array_equal(conv(x, K), x)


def test_activation_examples():
    assert np.array_equal(run(nd.relu, [-1, 0, 2]), [0, 0, 2])
    assert run(nd.sigmoid, [0.0])[0] == 0.5
    np.testing.assert_allclose(run(nd.softmax_rows, [[math.log(1), math.log(3)]]),
                               [[0.25, 0.75]], atol=1e-15)
    np.testing.assert_array_equal(run(nd.leaky_relu, [-1.0, 2.0]), [-0.2, 2.0])


def test_softmax_requires_2d():
    with pytest.raises(nd.ShapeError):
        run(nd.softmax_rows, [1.0, 2.0])


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(-700, 700)))
def test_softmax_rows_sum_to_one(x):
    p = run(nd.softmax_rows, x)
    assert np.all(np.abs(p.sum(axis=1) - 1) <= 1e-12)
    assert np.all((p >= 0) & (p <= 1))


@given(arrays(np.float64, 20, elements=st.floats(-30, 30)))
def test_sigmoid_open_interval(x):
    s = run(nd.sigmoid, x)
    assert np.all((s > 0) & (s < 1))
    assert np.all(np.isfinite(s))


def test_activations_dispatch():
    x = np.array([[-1.0, 0.5]])
    for kind in ("relu", "leaky_relu", "sigmoid", "tanh", "softmax_rows"):
        tape = nd.Tape()
        assert nd.activations(tape.lift(x), kind).shape == (1, 2)
    with pytest.raises(ValueError):
        nd.activations(nd.Tape().lift(x), "swish")


# -- backward ----------------------------------------------------------------

def test_backward_linear_map():
    x = np.array([1.0, -2.0, 3.0])
    tape = nd.Tape()
    W = tape.param("W", np.ones((2, 3)))
    loss = nd.sum_all(nd.matmul(W, x[:, None]))
    g = nd.backward(tape, loss)["W"]
    assert np.array_equal(g, np.tile(x, (2, 1)))


def test_backward_half_square():
    x = np.array([0.5, -1.5, 2.0])
    tape = nd.Tape()
    v = tape.param("x", x.copy())
    assert np.array_equal(nd.backward(tape, 0.5 * nd.sum_all(v * v))["x"], x)


def test_backward_rejects_foreign_or_nonscalar_loss():
    t1, t2 = nd.Tape(), nd.Tape()
    t1.param("a", np.ones(2))
    b = t2.param("b", np.ones(2))
    with pytest.raises(ValueError):
        nd.backward(t1, nd.sum_all(b))
    with pytest.raises(ValueError):
        nd.backward(t2, b * 2.0)


def test_backward_is_deterministic():
    def grads():
        rng = np.random.default_rng(3)
        tape = nd.Tape()
        W = tape.param("W", rng.standard_normal((4, 3)))
        h = nd.tanh(nd.affine_forward(rng.standard_normal((5, 4)), W,
                                      tape.param("b", np.zeros(3))))
        return nd.backward(tape, nd.mean(h * h))

    a, b = grads(), grads()
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_grad_check_quadratic():
    tape = nd.Tape()
    x = tape.param("x", np.random.default_rng(0).standard_normal(6))
    assert nd.grad_check(tape, nd.sum_all(x * x) * 0.5, 1e-5) < 1e-8


def test_grad_check_random_three_layer_net():
    rng = np.random.default_rng(11)
    for _ in range(5):
        tape = nd.Tape()
        h = rng.standard_normal((6, 4))
        for i, (a, b) in enumerate([(4, 5), (5, 5), (5, 3)]):
            h = nd.affine_forward(h, tape.param(f"W{i}", rng.standard_normal((a, b))),
                                  tape.param(f"b{i}", rng.standard_normal(b)))
            h = nd.tanh(h) if i < 2 else nd.softmax_rows(h)
        loss = -nd.mean(nd.log(nd.pick(h, rng.integers(0, 3, 6))))
        assert nd.grad_check(tape, loss, 1e-5) < 1e-5


def test_each_op_gradient():
    """Every differentiable primitive against central differences."""
    rng = np.random.default_rng(5)
    cases = {
        "sub/neg": lambda a, b: nd.sum_all(-(a - b) * a),
        "sigmoid": lambda a, b: nd.sum_all(nd.sigmoid(a) * b),
        "log/clip": lambda a, b: nd.sum_all(nd.log(nd.clip(nd.sigmoid(a), 0.1, 0.9))),
        "where": lambda a, b: nd.sum_all(nd.where(np.eye(3, 4) > 0, a, b * b)),
        "concat/columns": lambda a, b: nd.sum_all(
            nd.columns(nd.concat([a, b], axis=1), 2, 7) * nd.columns(nd.concat([b, a], axis=1), 1, 6)),
        "reshape/mean": lambda a, b: nd.sum_all(nd.mean(nd.reshape(a * b, (3, 2, 2)), axis=2)
                                                * nd.mean(nd.reshape(a, (3, 2, 2)), axis=2)),
    }
    for name, f in cases.items():
        tape = nd.Tape()
        a = tape.param("a", rng.standard_normal((3, 4)))
        b = tape.param("b", rng.standard_normal((3, 4)))
        assert nd.grad_check(tape, f(a, b), 1e-6) < 1e-6, name


def test_grad_check_rejects_bad_eps():
    tape = nd.Tape()
    x = tape.param("x", np.ones(2))
    with pytest.raises(ValueError):
        nd.grad_check(tape, nd.sum_all(x), eps=0.1)


# -- Adam --------------------------------------------------------------------

def test_adam_zero_gradient():
    p = {"w": np.array([1.0, -2.0])}
    state = nd.AdamState()
    nd.adam_update(p, {"w": np.zeros(2)}, state)
    assert np.array_equal(p["w"], [1.0, -2.0])
    assert state.t == 1


@given(arrays(np.float64, 5, elements=st.floats(1e-3, 1e3) | st.floats(-1e3, -1e-3)))
def test_adam_first_step_is_lr_sign(g):
    p = {"w": np.zeros(5)}
    nd.adam_update(p, {"w": g}, nd.AdamState())
    np.testing.assert_allclose(p["w"], -1e-3 * np.sign(g), rtol=1e-4)


def test_adam_decreases_quadratic():
    p = {"x": np.array([3.0])}
    state = nd.AdamState(lr=0.1)
    losses = [0.5 * p["x"][0] ** 2]
    for _ in range(2):
        nd.adam_update(p, {"x": p["x"].copy()}, state)
        losses.append(0.5 * p["x"][0] ** 2)
    assert losses[0] > losses[1] > losses[2]
    assert state.t == 2
    assert state.m["x"].shape == state.v["x"].shape == (1,)


def test_adam_rejects_nonfinite_gradient():
    p = {"w": np.ones(2)}
    with pytest.raises(nd.DivergenceError, match="w"):
        nd.adam_update(p, {"w": np.array([1.0, np.nan])}, nd.AdamState())
    assert np.array_equal(p["w"], [1.0, 1.0])


def test_adam_shape_mismatch():
    with pytest.raises(nd.ShapeError):
        nd.adam_update({"w": np.ones(2)}, {"w": np.ones(3)}, nd.AdamState())


def test_every_layer_kind_at_100_points():
    from ibgan.checks import layer_grad_checks

    worst = layer_grad_checks(n_points=100, seed=7)
    assert set(worst) == {"dense+relu+softmax", "dense+leaky_relu+tanh", "conv1d+sigmoid"}
    assert max(worst.values()) < 1e-5, worst
