import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from diffch import numcore as nc
from diffch.errors import ContractError, DimensionError, TrainingError
from diffch.numcore import OptimizerState, Tape, Tensor, optimizer_step

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def naive_matmul(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for q in range(k):
                s += a[i, q] * b[q, j]
            out[i, j] = s
    return out


def numeric_grad(f, arr, h=1e-5):
    g = np.zeros_like(arr)
    flat = arr.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        g.reshape(-1)[i] = (fp - fm) / (2 * h)
    return g


class TestMatmul:
    def test_identity(self):
        A = np.array([[1.5, -2.0], [0.25, 4.0]])
        assert np.array_equal(nc.matmul(np.eye(2), A).data, A)

    def test_hand_case(self):
        out = nc.matmul([[1, 2], [3, 4]], [[0], [1]]).data
        assert np.array_equal(out, [[2], [4]])

    def test_against_triple_loop(self):
        rng = np.random.default_rng(3)
        a, b = rng.integers(-9, 9, (5, 7)).astype(float), rng.integers(-9, 9, (7, 3)).astype(float)
        assert np.array_equal(nc.matmul(a, b).data, naive_matmul(a, b))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            nc.matmul(np.ones((2, 3)), np.ones((2, 3)))


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(nc.softmax([0.0, 0.0, 0.0]).data, [1 / 3] * 3, atol=1e-15)

    def test_log2(self):
        np.testing.assert_allclose(nc.softmax([0.0, -math.log(2)]).data, [2 / 3, 1 / 3], atol=1e-15)

    def test_large_inputs_match_high_precision(self):
        out = nc.softmax([1000.0, 1000.5]).data
        mpmath.mp.dps = 50
        e0, e1 = mpmath.exp(mpmath.mpf(-0.5)), mpmath.mpf(1)
        ref = [float(e0 / (e0 + e1)), float(e1 / (e0 + e1))]
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out, ref, rtol=1e-14)

    def test_empty(self):
        with pytest.raises(DimensionError):
            nc.softmax(np.array([]))

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, st.integers(1, 12), elements=finite), finite)
    def test_sum_and_shift_invariance(self, v, shift):
        p = nc.softmax(v).data
        assert np.all(p > 0)
        assert abs(p.sum() - 1.0) < 1e-12
        np.testing.assert_allclose(nc.softmax(v + shift).data, p, atol=1e-12, rtol=0)


class TestBackward:
    def test_sum_gives_ones(self):
        p = Tensor(np.random.default_rng(0).standard_normal((3, 4)), requires_grad=True)
        with Tape() as tape:
            loss = p.sum()
        (g,) = tape.backward(loss, [p])
        assert np.array_equal(g, np.ones((3, 4)))

    def test_quadratic(self):
        p = Tensor(np.random.default_rng(1).standard_normal(6), requires_grad=True)
        with Tape() as tape:
            loss = (p * p).sum() * 0.5
        np.testing.assert_allclose(tape.backward(loss, [p])[0], p.data, rtol=1e-15)

    def test_non_scalar_loss(self):
        p = Tensor(np.ones(3), requires_grad=True)
        with Tape() as tape:
            y = p * 2.0
        with pytest.raises(ContractError):
            tape.backward(y, [p])

    def test_detached_parameter_gets_zero(self):
        p = Tensor(np.ones(3), requires_grad=True)
        q = Tensor(np.ones(2), requires_grad=True)
        with Tape() as tape:
            loss = p.sum()
        assert np.array_equal(tape.backward(loss, [p, q])[1], np.zeros(2))

    def test_no_recording_outside_tape(self):
        p = Tensor(np.ones(3), requires_grad=True)
        assert not (p * 2.0).requires_grad

    def test_mlp_against_finite_differences(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((5, 4))
        w1 = Tensor(rng.standard_normal((4, 6)), requires_grad=True)
        b1 = Tensor(rng.standard_normal(6), requires_grad=True)
        w2 = Tensor(rng.standard_normal((6, 3)), requires_grad=True)
        gain = Tensor(rng.uniform(0.5, 1.5, 6), requires_grad=True)
        params = [w1, b1, w2, gain]

        def f():
            h = nc.layer_norm(nc.silu(x @ w1 + b1), gain)
            z = nc.softmax(nc.tanh(h) @ w2, axis=-1)
            return nc.log(z + 1.0).sum() + nc.sq_norm_rows(nc.gelu(h)).mean()

        with Tape() as tape:
            loss = f()
        grads = tape.backward(loss, params)
        for p, g in zip(params, grads):
            num = numeric_grad(lambda: f().item(), p.data)
            rel = np.abs(g - num) / np.maximum(np.abs(num), 1e-6)
            assert rel.max() < 1e-4

    @pytest.mark.parametrize("op", ["concat", "take", "getitem", "pad", "swap", "div", "pow", "sqrt", "exp"])
    def test_shape_ops(self, op):
        rng = np.random.default_rng(11)
        a = Tensor(rng.uniform(0.5, 2.0, (3, 4)), requires_grad=True)
        b = Tensor(rng.uniform(0.5, 2.0, (3, 2)), requires_grad=True)
        w = rng.standard_normal((3, 6))
        fns = {
            "concat": lambda: (nc.concat([a, b], axis=1) * w).sum(),
            "take": lambda: (nc.take(a, [2, 0, 2]) * w[:, :4]).sum(),
            "getitem": lambda: (a[:, 1:3] * w[:, :2]).sum(),
            "pad": lambda: (nc.pad_last(a, 2) * w).sum(),
            "swap": lambda: (a.T @ w[:, :2]).sum(),
            "div": lambda: (a / (b.sum(axis=1, keepdims=True) + 1.0)).sum(),
            "pow": lambda: (a ** 3).sum() + (b ** 2).mean(),
            "sqrt": lambda: nc.sqrt(a).sum(),
            "exp": lambda: nc.exp(a * 0.3).mean(axis=0).sum(),
        }
        with Tape() as tape:
            loss = fns[op]()
        ga, gb = tape.backward(loss, [a, b])
        np.testing.assert_allclose(ga, numeric_grad(lambda: fns[op]().item(), a.data), rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(gb, numeric_grad(lambda: fns[op]().item(), b.data), rtol=1e-6, atol=1e-8)

    def test_replay_is_bit_identical(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((4, 3))
        w = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
        runs = []
        for _ in range(2):
            with Tape() as tape:
                loss = nc.sq_norm_rows(nc.silu(x @ w)).sum()
            runs.append((loss.item(), tape.backward(loss, [w])[0]))
        assert runs[0][0] == runs[1][0]
        assert np.array_equal(runs[0][1], runs[1][1])


class TestOptimizer:
    def test_zero_gradient_leaves_params(self):
        p = {"w": Tensor(np.array([1.0, -2.0]), requires_grad=True)}
        state = OptimizerState()
        optimizer_step(state, p, {"w": np.zeros(2)})
        assert np.array_equal(p["w"].data, [1.0, -2.0])
        assert state.step == 1

    def test_first_step_moves_by_lr(self):
        p = {"w": Tensor(np.array([0.0]), requires_grad=True)}
        state = OptimizerState(lr=1e-3)
        optimizer_step(state, p, {"w": np.array([1.0])})
        np.testing.assert_allclose(p["w"].data, [-1e-3], rtol=1e-6)

    def test_converges_on_parabola(self):
        w = Tensor(np.array([0.0]), requires_grad=True)
        state = OptimizerState(lr=0.1)
        for _ in range(100):
            with Tape() as tape:
                loss = ((w - 3.0) * (w - 3.0)).sum()
            optimizer_step(state, {"w": w}, {"w": tape.backward(loss, [w])[0]})
        assert abs(w.data[0] - 3.0) < 0.1
        assert state.step == 100

    def test_sgd(self):
        p = {"w": Tensor(np.array([1.0]), requires_grad=True)}
        optimizer_step(OptimizerState(lr=0.5, method="sgd"), p, {"w": np.array([2.0])})
        assert p["w"].data[0] == 0.0

    def test_non_finite_gradient_names_parameter(self):
        p = {"a": Tensor(np.ones(2), requires_grad=True), "b": Tensor(np.ones(2), requires_grad=True)}
        with pytest.raises(TrainingError) as info:
            optimizer_step(OptimizerState(), p, {"a": np.ones(2), "b": np.array([1.0, np.nan])})
        assert info.value.param == "b"
        assert np.array_equal(p["a"].data, np.ones(2))

    def test_deterministic(self):
        out = []
        for _ in range(2):
            p = {"w": Tensor(np.array([0.3, -0.1]), requires_grad=True)}
            st_ = OptimizerState()
            for g in ([0.1, 0.2], [-0.3, 0.05], [1.0, 1.0]):
                optimizer_step(st_, p, {"w": np.array(g)})
            out.append(p["w"].data.copy())
        assert np.array_equal(out[0], out[1])
