from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import central_diff, rel_error
from ksddpg.errors import DimensionError, NumericError, UsageError, VersionError
from ksddpg.tensor import (Adam, AdamState, DenseParams, Mlp, adam_step, dense_backward, dense_forward,
                           load_matrices, save_matrices, sigmoid, soft_update)


@pytest.mark.parametrize("act", ["relu", "sigmoid", "tanh", "identity"])
def test_dense_gradients_match_finite_differences(act):
    rng = np.random.default_rng(1)
    for _ in range(20):
        p = DenseParams.glorot(4, 3, rng)
        p.bias[:] = rng.normal(size=p.bias.shape)
        x = rng.normal(size=(5, 4))
        up = rng.normal(size=(5, 3))

        def loss():
            return float((dense_forward(x, p, act)[0] * up).sum())

        _, cache = dense_forward(x, p, act)
        gx, gw, gb = dense_backward(up, cache)
        assert rel_error(gw, central_diff(loss, p.weight)) < 1e-6
        assert rel_error(gb, central_diff(loss, p.bias)) < 1e-6
        assert rel_error(gx, central_diff(loss, x)) < 1e-6


def test_mlp_gradients_and_input_gradient():
    rng = np.random.default_rng(2)
    net = Mlp([6, 8, 5, 2], ["relu", "tanh", "identity"], rng)
    x = rng.normal(size=(4, 6))
    up = rng.normal(size=(4, 2))

    def loss():
        return float((net.forward(x)[0] * up).sum())

    out, caches = net.forward(x)
    gx, grads = net.backward(up, caches)
    for name, arr in net.named().items():
        assert rel_error(grads[name], central_diff(loss, arr)) < 1e-6
    assert rel_error(gx, central_diff(loss, x)) < 1e-6
    _, caches = net.forward(x)
    assert np.allclose(net.backward_input(up, caches), gx, atol=1e-14)


def test_cache_is_single_use():
    rng = np.random.default_rng(0)
    p = DenseParams.glorot(2, 2, rng)
    _, cache = dense_forward(np.ones((1, 2)), p)
    dense_backward(np.ones((1, 2)), cache)
    with pytest.raises(UsageError):
        dense_backward(np.ones((1, 2)), cache)


def test_shape_mismatch_is_reported():
    p = DenseParams.zeros(3, 2)
    with pytest.raises(DimensionError):
        dense_forward(np.ones((1, 4)), p)


def test_identity_layer_is_linear_without_bias(rng):
    p = DenseParams(rng.normal(size=(3, 4)), np.zeros((1, 4)))
    x, y = rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
    a, b = 0.7, -1.3
    lhs = dense_forward(a * x + b * y, p)[0]
    rhs = a * dense_forward(x, p)[0] + b * dense_forward(y, p)[0]
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_sigmoid_is_stable_at_extremes():
    s = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert np.all(np.isfinite(s))
    assert s[0] == 0.0 and s[1] == 0.5 and s[2] == 1.0


@settings(max_examples=30, deadline=None)
@given(tau=st.floats(0.001, 0.5), n=st.integers(1, 40))
def test_soft_update_contracts_geometrically(tau, n):
    rng = np.random.default_rng(n)
    target = rng.normal(size=(3, 4))
    source = rng.normal(size=(3, 4))
    d0 = np.abs(target - source).max()
    for _ in range(n):
        soft_update(target, source, tau)
    assert abs(np.abs(target - source).max() - (1 - tau) ** n * d0) < 1e-10


def test_adam_first_step_moves_by_lr():
    p = np.array([[1.0, -2.0]])
    st_ = AdamState.like(p, lr=0.1)
    adam_step(p, np.array([[3.0, -0.5]]), st_)
    # bias-corrected first step is lr * sign(g) up to epsilon
    assert np.allclose(p, [[0.9, -1.9]], atol=1e-7)


def test_adam_rejects_non_finite_without_touching_anything():
    a = np.ones((1, 2))
    b = np.ones((1, 2))
    opt = Adam({"a": a, "b": b}, lr=0.1)
    with pytest.raises(NumericError):
        opt.step({"a": np.ones((1, 2)), "b": np.array([[np.nan, 0.0]])})
    assert np.all(a == 1.0) and np.all(b == 1.0)


def test_checkpoint_roundtrip(tmp_path, rng):
    tensors = {"w": rng.normal(size=(3, 5)), "b": rng.normal(size=(1, 5))}
    save_matrices(tmp_path / "x.ckpt", tensors, {"agent": "A"})
    back, meta = load_matrices(tmp_path / "x.ckpt")
    assert meta == {"agent": "A"}
    for k in tensors:
        assert np.array_equal(back[k], tensors[k])


def test_checkpoint_bad_magic(tmp_path):
    (tmp_path / "bad.ckpt").write_bytes(b"nope")
    with pytest.raises(VersionError):
        load_matrices(tmp_path / "bad.ckpt")
