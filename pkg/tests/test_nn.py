import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ltlmodrl.nn import (
    MAGIC,
    AdamState,
    ArchitectureError,
    Mlp,
    WeightFileError,
    adam_step,
    backward,
    dumps_weights,
    forward,
    gradient_check,
    load_weights,
    loads_weights,
    save_weights,
    soft_update,
)


def test_forward_examples():
    zero = Mlp([3, 4, 2], weights=[np.zeros((3, 4)), np.zeros(4), np.zeros((4, 2)), np.zeros(2)])
    assert np.array_equal(zero(np.ones(3)), np.zeros(2))
    bounded = Mlp([2, 1], bounds=([-10.0], [10.0]), weights=[np.zeros((2, 1)), np.zeros(1)])
    assert bounded(np.array([0.3, -0.2]))[0] == 0.0
    lin = Mlp([1, 1], weights=[np.array([[2.0]]), np.array([1.0])])
    assert lin(np.array([3.0]))[0] == 7.0


def test_bounded_head_respects_bounds():
    net = Mlp([3, 8, 3], bounds=([0.0, -1.0, -np.inf], [1.0, 1.0, np.inf]), seed=1)
    y = net(np.random.default_rng(0).normal(size=(50, 3)) * 20)
    assert np.all((y[:, 0] >= 0) & (y[:, 0] <= 1))
    assert np.all(np.abs(y[:, 1]) <= 1)


def test_backward_linear_closed_form():
    w, b = np.array([[0.5], [-1.0]]), np.array([0.2])
    net = Mlp([2, 1], weights=[w, b])
    x, target = np.array([1.5, 2.0]), 0.7
    pred, cache = forward(net, x)
    grads, _ = backward(net, cache, 2 * (pred - target))
    assert np.allclose(grads[0][:, 0], 2 * (pred[0] - target) * x)
    assert np.allclose(grads[1], 2 * (pred - target))


def test_zero_output_gradient():
    net = Mlp([3, 5, 2], seed=2)
    _, cache = forward(net, np.ones(3))
    grads, gx = backward(net, cache, np.zeros(2))
    assert all(not g.any() for g in grads) and not gx.any()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 5), st.integers(1, 8), st.integers(1, 3), st.booleans())
def test_gradient_check(seed, n_in, hidden, n_out, head):
    rng = np.random.default_rng(seed)
    bounds = (np.full(n_out, -2.0), np.full(n_out, 2.0)) if head else None
    net = Mlp([n_in, hidden, hidden, n_out], bounds=bounds, seed=seed)
    assert gradient_check(net, rng.normal(size=(2, n_in)), seed=seed) < 1e-4


def test_adam_zero_gradient():
    p = [np.array([1.0, -2.0])]
    st_ = AdamState.for_params(p, lr=0.1)
    st_.m[0][:] = [0.5, 0.5]
    adam_step(p, [np.zeros(2)], st_)
    assert np.allclose(st_.m[0], 0.45)
    # only the stale momentum moves the parameters; with fresh state nothing moves
    q = [np.array([1.0, -2.0])]
    adam_step(q, [np.zeros(2)], AdamState.for_params(q, lr=0.1))
    assert np.array_equal(q[0], [1.0, -2.0])


def test_adam_constant_gradient_step_tends_to_lr():
    p = [np.array([0.0])]
    st_ = AdamState.for_params(p, lr=1e-3)
    prev = 0.0
    for _ in range(2000):
        adam_step(p, [np.array([3.0])], st_)
        step, prev = prev - p[0][0], p[0][0]
    assert step == pytest.approx(1e-3, rel=1e-4)


def test_adam_shape_mismatch():
    p = [np.zeros(2)]
    with pytest.raises(ArchitectureError):
        adam_step(p, [np.zeros(3)], AdamState.for_params(p))


def test_soft_update():
    t = Mlp([1, 1], weights=[np.array([[1.0]]), np.array([1.0])])
    s = Mlp([1, 1], weights=[np.array([[0.0]]), np.array([0.0])])
    soft_update(t, s, 0.005)
    assert t.params[0][0, 0] == pytest.approx(0.995)
    soft_update(t, s, 0.0)
    assert t.params[0][0, 0] == pytest.approx(0.995)
    soft_update(t, s, 1.0)
    assert t.params[0][0, 0] == 0.0
    with pytest.raises(ValueError):
        soft_update(t, s, 1.5)
    with pytest.raises(ArchitectureError):
        soft_update(t, Mlp([1, 2]), 0.5)


def test_weights_round_trip(tmp_path):
    net = Mlp([4, 16, 3], bounds=([-1, 0, -np.inf], [1, 2, np.inf]), seed=7)
    save_weights(net, tmp_path / "w.bin")
    back = load_weights(tmp_path / "w.bin")
    x = np.random.default_rng(0).normal(size=(100, 4))
    assert np.array_equal(net(x), back(x))
    into = Mlp([4, 16, 3], bounds=([-1, 0, -np.inf], [1, 2, np.inf]), seed=99)
    load_weights(tmp_path / "w.bin", into=into)
    assert np.array_equal(into(x), net(x))


def test_weights_errors(tmp_path):
    data = dumps_weights(Mlp([2, 3, 1], seed=0))
    with pytest.raises(WeightFileError, match="truncated"):
        loads_weights(data[:-20])
    with pytest.raises(WeightFileError, match="truncated"):
        loads_weights(data[:5])
    bumped = bytearray(data)
    bumped[8] = 2  # version field follows the magic
    with pytest.raises(WeightFileError, match="version"):
        loads_weights(bytes(bumped))
    with pytest.raises(WeightFileError, match="magic"):
        loads_weights(b"XXXXXXXX" + data[len(MAGIC):])
    flipped = bytearray(data)
    flipped[-10] ^= 0xFF
    with pytest.raises(WeightFileError, match="checksum"):
        loads_weights(bytes(flipped))
    save_weights(Mlp([2, 3, 1]), tmp_path / "a.bin")
    with pytest.raises(ArchitectureError):
        load_weights(tmp_path / "a.bin", into=Mlp([2, 4, 1]))
    with pytest.raises(WeightFileError):
        load_weights(tmp_path / "missing.bin")
