import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from orlab.approx import (AdamState, DivergenceError, LayerSpec, ParamSet, adam_init, adam_step,
                          backward, forward, forward_cached, grad_check, load_params, logsumexp,
                          mlp_init, save_params, soft_update)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def naive_forward(params, x):
    """Straight-line reference: explicit loops over units."""
    h = list(map(float, x))
    n_layers = len(params.weights)
    for i in range(n_layers):
        w, b = params.weights[i], params.biases[i]
        out = []
        for j in range(w.shape[0]):
            z = b[j] + sum(w[j, k] * h[k] for k in range(w.shape[1]))
            out.append(max(z, 0.0) if i < n_layers - 1 else z)
        h = out
    return np.array(h)


class TestLayerSpec:
    def test_rejects_zero_dims(self):
        with pytest.raises(ValueError):
            LayerSpec(0, 1, (4,))
        with pytest.raises(ValueError):
            LayerSpec(2, 1, (4, 0))
        with pytest.raises(ValueError):
            LayerSpec(2, 1, ())

    def test_default_hidden(self):
        assert LayerSpec(3, 2).hidden == (256, 256)

    def test_header_round_trip(self):
        spec = LayerSpec(7, 3, (5, 4))
        assert LayerSpec.from_header(spec.header()) == spec


class TestInit:
    def test_deterministic(self):
        spec = LayerSpec(5, 3, (8, 8))
        assert mlp_init(spec, 4) == mlp_init(spec, 4)

    def test_shapes(self):
        p = mlp_init(LayerSpec(2, 1, (4,)), 0)
        assert [w.shape for w in p.weights] == [(4, 2), (1, 4)]
        assert [b.shape for b in p.biases] == [(4,), (1,)]

    def test_seed_sensitivity(self):
        spec = LayerSpec(5, 3, (8,))
        assert mlp_init(spec, 0) != mlp_init(spec, 1)

    def test_fan_in_bounds_and_zero_bias(self):
        p = mlp_init(LayerSpec(16, 2, (32,)), 0)
        assert np.all(np.abs(p.weights[0]) <= 1 / 4)
        assert np.all(np.abs(p.weights[1]) <= 0.1 / math.sqrt(32))
        assert all(np.all(b == 0) for b in p.biases)

    def test_views_share_flat_storage(self):
        p = mlp_init(LayerSpec(3, 2, (4,)), 0)
        p.weights[0][0, 0] = 123.0
        assert p.flat[0] == 123.0


class TestForward:
    def test_zero_net(self):
        p = ParamSet(LayerSpec(3, 2, (4, 4)))
        assert np.array_equal(forward(p, np.array([1.0, -2.0, 3.0])), np.zeros(2))

    def test_relu_identity_layer(self):
        p = ParamSet(LayerSpec(2, 2, (2,)))
        p.weights[0][...] = np.eye(2)
        p.weights[1][...] = np.eye(2)
        assert np.array_equal(forward(p, np.array([-1.0, 2.0])), np.array([0.0, 2.0]))

    def test_matches_naive_oracle(self, rng):
        p = mlp_init(LayerSpec(6, 3, (10, 7)), 2)
        p.biases[0][...] = rng.normal(size=10)
        for _ in range(5):
            x = rng.normal(size=6)
            np.testing.assert_allclose(forward(p, x), naive_forward(p, x), rtol=0, atol=1e-12)

    def test_dimension_mismatch(self):
        p = mlp_init(LayerSpec(3, 1, (4,)), 0)
        with pytest.raises(ValueError):
            forward(p, np.zeros(4))

    def test_batch_equals_rows(self, rng):
        p = mlp_init(LayerSpec(4, 2, (8, 8)), 0)
        x = rng.normal(size=(6, 4))
        batch = forward(p, x)
        for i in range(6):
            np.testing.assert_allclose(batch[i], forward(p, x[i]), rtol=0, atol=1e-12)

    def test_pure(self, rng):
        p = mlp_init(LayerSpec(4, 2, (8,)), 0)
        before = p.flat.copy()
        x = rng.normal(size=(3, 4))
        assert forward(p, x).tobytes() == forward(p, x).tobytes()
        assert np.array_equal(p.flat, before)

    def test_cached_agrees(self, rng):
        p = mlp_init(LayerSpec(4, 2, (8, 8)), 0)
        x = rng.normal(size=(3, 4))
        out, acts = forward_cached(p, x)
        assert np.array_equal(out, forward(p, x))
        assert len(acts) == 3


class TestBackward:
    def test_input_gradient_matches_finite_difference(self, rng):
        p = mlp_init(LayerSpec(4, 2, (8, 8)), 0)
        p.flat[:] += rng.normal(0, 0.3, p.flat.shape)
        x = rng.normal(size=(1, 4))
        c = rng.normal(size=(1, 2))
        _, acts = forward_cached(p, x)
        _, g_in = backward(p, acts, c, need_input_grad=True)
        eps = 1e-6
        for k in range(4):
            xp, xm = x.copy(), x.copy()
            xp[0, k] += eps
            xm[0, k] -= eps
            num = (np.sum(c * forward(p, xp)) - np.sum(c * forward(p, xm))) / (2 * eps)
            assert abs(num - g_in[0, k]) < 1e-7


class TestLogSumExp:
    def test_single(self):
        assert logsumexp([3.7]) == 3.7

    def test_equal_values(self):
        assert logsumexp([0.0, 0.0, 0.0]) == pytest.approx(math.log(3), abs=1e-15)

    def test_naive_oracle(self, rng):
        for _ in range(20):
            v = rng.normal(size=10)
            naive = math.log(sum(math.exp(x) for x in v))
            assert abs(logsumexp(v) - naive) < 1e-10

    def test_large_magnitude(self):
        assert logsumexp([1000.0, 1000.0]) == pytest.approx(1000 + math.log(2))
        assert logsumexp([-1000.0, -1000.0]) == pytest.approx(-1000 + math.log(2))

    def test_empty(self):
        with pytest.raises(ValueError):
            logsumexp([])

    def test_axis(self, rng):
        v = rng.normal(size=(4, 5))
        rows = logsumexp(v, axis=1)
        for i in range(4):
            assert rows[i] == pytest.approx(logsumexp(v[i]), abs=1e-12)

    @given(arrays(np.float64, st.integers(1, 20), elements=finite), finite)
    def test_bounds_and_shift(self, v, c):
        lse = logsumexp(v)
        assert lse >= v.max()
        assert lse <= v.max() + math.log(len(v)) + 1e-12
        assert abs(logsumexp(v + c) - (lse + c)) < 1e-10


class TestAdam:
    def _scalar(self, w):
        p = ParamSet(LayerSpec(1, 1, (1,)))
        p.flat[:] = w
        return p

    def test_zero_gradient_fixed_point(self):
        p = mlp_init(LayerSpec(3, 2, (4,)), 0)
        state = adam_init(p)
        q, s = adam_step(p, p.zeros_like(), state)
        assert q == p
        assert s.step == 1

    def test_first_step_moves_by_lr(self):
        p = self._scalar(0.5)
        g = p.zeros_like()
        g.flat[:] = 3.0
        q, _ = adam_step(p, g, adam_init(p, lr=0.01))
        np.testing.assert_allclose(q.flat - p.flat, -0.01, rtol=1e-6)

    def test_five_step_quadratic_oracle(self):
        # hand-rolled scalar Adam on f(w) = w^2 from w = 1
        lr, b1, b2, eps = 3e-4, 0.9, 0.999, 1e-8
        w, m, v = 1.0, 0.0, 0.0
        trace = []
        for t in range(1, 6):
            g = 2 * w
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            w = w - lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
            trace.append(w)

        spec = LayerSpec(1, 1, (1,))
        p = ParamSet(spec)
        p.flat[0] = 1.0
        state = adam_init(p, lr)
        for t in range(5):
            g = p.zeros_like()
            g.flat[0] = 2 * p.flat[0]
            p, state = adam_step(p, g, state)
            assert abs(p.flat[0] - trace[t]) < 1e-12
        assert state.step == 5

    def test_inputs_untouched_and_pure(self, rng):
        p = mlp_init(LayerSpec(3, 2, (4,)), 0)
        g = ParamSet(p.spec, rng.normal(size=p.spec.n_params))
        s = adam_init(p)
        s.m[:] = rng.normal(size=s.m.shape)
        p0, m0 = p.flat.copy(), s.m.copy()
        a = adam_step(p, g, s)
        b = adam_step(p, g, s)
        assert np.array_equal(p.flat, p0) and np.array_equal(s.m, m0) and s.step == 0
        assert a[0].flat.tobytes() == b[0].flat.tobytes()

    def test_non_finite_gradient(self):
        p = mlp_init(LayerSpec(2, 1, (2,)), 0)
        g = p.zeros_like()
        g.flat[0] = np.nan
        with pytest.raises(DivergenceError):
            adam_step(p, g, adam_init(p))

    def test_state_copy_independent(self):
        s = AdamState(np.zeros(3), np.zeros(3))
        c = s.copy()
        c.m[0] = 1.0
        assert s.m[0] == 0.0


def test_soft_update():
    spec = LayerSpec(1, 1, (1,))
    t, s = ParamSet(spec, np.zeros(spec.n_params)), ParamSet(spec, np.ones(spec.n_params))
    np.testing.assert_allclose(soft_update(t, s, 0.05).flat, 0.05)
    assert soft_update(t, s, 1.0) == s


class TestGradCheck:
    def _linear_quadratic(self, rng):
        # a net whose hidden layer stays in the linear relu regime
        p = mlp_init(LayerSpec(3, 2, (4,)), 0)
        p.biases[0][...] = 10.0
        x = rng.normal(size=(5, 3))
        y = rng.normal(size=(5, 2))

        def lg(q):
            out, acts = forward_cached(q, x)
            grads, _ = backward(q, acts, (out - y) / len(x))
            return 0.5 * np.sum((out - y) ** 2) / len(x), grads

        return p, lg

    def test_exact_gradient_passes(self, rng):
        p, lg = self._linear_quadratic(rng)
        assert grad_check(p, lg, eps=1e-5) < 1e-7

    def test_corrupted_gradient_detected(self, rng):
        p, lg = self._linear_quadratic(rng)
        _, g = lg(p)
        bad = g.copy()
        i = int(np.argmax(np.abs(g.flat)))
        bad.flat[i] *= 2.0
        assert grad_check(p, lg, analytic=bad) > 1e-1

    def test_probes_at_least_100_coordinates(self, rng):
        p = mlp_init(LayerSpec(20, 2, (16,)), 0)
        calls = []

        def lg(q):
            calls.append(1)
            return float(np.sum(q.flat ** 2)), ParamSet(q.spec, 2 * q.flat)

        grad_check(p, lg, n_checks=100)
        assert len(calls) == 1 + 2 * 100

    def test_non_finite_loss(self):
        p = mlp_init(LayerSpec(2, 1, (2,)), 0)
        with pytest.raises(DivergenceError):
            grad_check(p, lambda q: (float("nan"), q.zeros_like()))


class TestSerialisation:
    def test_round_trip(self, tmp_path, rng):
        p = mlp_init(LayerSpec(5, 3, (6, 4)), 1)
        p.flat[:] += rng.normal(size=p.flat.shape)
        path = tmp_path / "p.params"
        save_params(p, path)
        assert load_params(path) == p

    def test_layout(self, tmp_path):
        p = mlp_init(LayerSpec(2, 1, (3,)), 1)
        path = tmp_path / "p.params"
        save_params(p, path)
        raw = path.read_bytes()
        header, payload = raw.split(b"\n", 1)
        assert header.decode() == "LayerSpec input=2 hidden=3 output=1"
        assert np.array_equal(np.frombuffer(payload, "<f8"), p.flat)

    def test_truncated(self, tmp_path):
        p = mlp_init(LayerSpec(2, 1, (3,)), 1)
        path = tmp_path / "p.params"
        save_params(p, path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValueError):
            load_params(path)
