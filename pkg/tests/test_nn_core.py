import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from keqi.nn_core import (
    AdamW,
    DenseLayer,
    activation,
    adamw_step,
    dense_backward,
    dense_forward,
    dropout,
    grad_check,
    load_params,
    save_params,
    softmax,
)


class TestActivations:
    def test_relu(self):
        np.testing.assert_array_equal(activation([-1.0, 0.0, 2.0], "relu"), [0.0, 0.0, 2.0])

    def test_sigmoid_zero(self):
        assert activation(0.0, "sigmoid") == 0.5

    def test_softmax_uniform(self):
        np.testing.assert_allclose(softmax([0.0, 0.0]), [0.5, 0.5])

    def test_softmax_large_inputs_stable(self):
        out = softmax([1000.0, 1000.0, -1000.0])
        np.testing.assert_allclose(out, [0.5, 0.5, 0.0])

    @settings(max_examples=100)
    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=8), st.integers(1, 4))
    def test_ranges(self, values, rows):
        x = np.tile(np.array(values), (rows, 1))
        s = softmax(x)
        assert np.all(s > 0)
        np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(activation(x, "relu") >= 0)
        sig = activation(x, "sigmoid")
        assert np.all((sig > 0) & (sig < 1)) or np.any(np.abs(x) > 36)

    def test_unknown(self):
        with pytest.raises(ValueError):
            activation([1.0], "gelu")


def numeric_layer_grads(layer, x, dy, h=1e-5):
    def f():
        return float(np.sum(dense_forward(layer, x) * dy))

    grads = []
    for arr in (x, layer.weight, layer.bias):
        g = np.zeros_like(arr)
        for idx in np.ndindex(*arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            up = f()
            arr[idx] = orig - h
            down = f()
            arr[idx] = orig
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), 1e-7))


class TestDense:
    def test_identity(self):
        layer = DenseLayer(np.eye(3), np.zeros(3))
        x = np.array([1.0, -2.0, 3.0])
        np.testing.assert_array_equal(dense_forward(layer, x), x)

    def test_zero_upstream(self):
        rng = np.random.default_rng(0)
        layer = DenseLayer.init(3, 4, rng, "sigmoid")
        dx, dw, db = dense_backward(layer, rng.normal(size=3), np.zeros(4))
        assert not dx.any() and not dw.any() and not db.any()

    def test_sigmoid_layer_gradient(self):
        rng = np.random.default_rng(1)
        layer = DenseLayer(rng.normal(size=(4, 3)), rng.normal(size=4), "sigmoid")
        x, dy = rng.normal(size=3), rng.normal(size=4)
        analytic = dense_backward(layer, x, dy)
        numeric = numeric_layer_grads(layer, x, dy)
        for a, n in zip(analytic, numeric):
            assert rel_err(a, n) < 1e-4

    @settings(max_examples=40, deadline=None)
    @given(
        st.integers(1, 8), st.integers(1, 8), st.integers(1, 4),
        st.sampled_from(["none", "relu", "sigmoid", "tanh"]), st.integers(0, 10_000),
    )
    def test_backward_matches_finite_differences(self, n_in, n_out, batch, act, seed):
        rng = np.random.default_rng(seed)
        layer = DenseLayer(rng.normal(size=(n_out, n_in)), rng.normal(size=n_out), act)
        x, dy = rng.normal(size=(batch, n_in)), rng.normal(size=(batch, n_out))
        z = x @ layer.weight.T + layer.bias
        if act == "relu" and np.min(np.abs(z)) < 1e-3:
            return  # too close to the kink for finite differences
        analytic = dense_backward(layer, x, dy)
        numeric = numeric_layer_grads(layer, x, dy)
        for a, n in zip(analytic, numeric):
            assert rel_err(a, n) < 1e-4

    def test_shape_mismatch(self):
        layer = DenseLayer(np.eye(2), np.zeros(2))
        with pytest.raises(ValueError):
            dense_forward(layer, np.ones(3))


class TestAdamW:
    def test_zero_gradient_no_decay(self):
        p = {"w": np.array([1.0, -2.0])}
        AdamW(learning_rate=0.1, weight_decay=0.0).step(p, {"w": np.zeros(2)})
        np.testing.assert_array_equal(p["w"], [1.0, -2.0])

    def test_decoupled_decay(self):
        p = {"w": np.array([1.0, -2.0])}
        adamw_step(AdamW(learning_rate=0.1, weight_decay=0.5), p, {"w": np.zeros(2)})
        np.testing.assert_allclose(p["w"], np.array([1.0, -2.0]) * (1 - 0.1 * 0.5))

    def test_first_step(self):
        # m_hat = 1, v_hat = 1 after bias correction, so the step is lr / (1 + eps)
        p = {"w": np.array([0.0])}
        adamw_step(AdamW(learning_rate=0.01, weight_decay=0.0, eps=1e-8), p, {"w": np.array([1.0])})
        assert p["w"][0] == pytest.approx(-0.01 / (1 + 1e-8), rel=1e-12)

    def test_zero_lr(self):
        rng = np.random.default_rng(0)
        p = {"w": rng.normal(size=(3, 3))}
        before = p["w"].copy()
        opt = AdamW(learning_rate=0.0)
        for _ in range(3):
            opt.step(p, {"w": rng.normal(size=(3, 3))})
        np.testing.assert_array_equal(p["w"], before)


class TestDropout:
    def test_inference_identity(self):
        x = np.arange(5.0)
        np.testing.assert_array_equal(dropout(x, 0.5, np.random.default_rng(0), False), x)

    def test_rate_zero(self):
        x = np.arange(5.0)
        np.testing.assert_array_equal(dropout(x, 0.0, np.random.default_rng(0), True), x)

    def test_statistics(self):
        x = np.full(100_000, 3.0)
        y = dropout(x, 0.5, np.random.default_rng(0), True)
        assert np.mean(y != 0) == pytest.approx(0.5, abs=0.01)
        assert y.mean() == pytest.approx(3.0, abs=0.05)
        assert set(np.unique(y)) == {0.0, 6.0}

    def test_rate_one_rejected(self):
        with pytest.raises(ValueError):
            dropout(np.ones(3), 1.0, np.random.default_rng(0), True)


class TestGradCheck:
    def test_linear_loss(self):
        c = np.array([[1.0, -2.0], [0.5, 3.0]])

        def loss(p):
            return float(np.sum(c * p["w"])), {"w": c.copy()}

        assert grad_check(loss, {"w": np.ones((2, 2))}) < 1e-9

    def test_single_sigmoid_layer(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(5, 3))
        target = rng.normal(size=(5, 4))
        params = {"W": rng.normal(size=(4, 3)), "b": rng.normal(size=4)}

        def loss(p):
            layer = DenseLayer(p["W"], p["b"], "sigmoid")
            y = dense_forward(layer, x)
            _, dw, db = dense_backward(layer, x, y - target)
            return 0.5 * float(np.sum((y - target) ** 2)), {"W": dw, "b": db}

        assert grad_check(loss, params) < 1e-4

    def test_detects_wrong_gradient(self):
        def loss(p):
            return float(np.sum(p["w"] ** 2)), {"w": p["w"].copy()}  # should be 2w

        assert grad_check(loss, {"w": np.ones(3)}) > 0.1


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    params = {"a": rng.normal(size=(3, 2)), "b.W": rng.normal(size=4)}
    save_params(tmp_path / "c.npz", params, {"hidden_dim": 4})
    back, cfg = load_params(tmp_path / "c.npz")
    assert cfg == {"hidden_dim": 4}
    assert back.keys() == params.keys()
    for k in params:
        np.testing.assert_array_equal(back[k], params[k])
