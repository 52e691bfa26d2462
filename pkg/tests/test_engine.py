"""Tests for the taped tensor engine, including finite-difference oracles."""

import math

import numpy as np
import pytest

from urlgraphnet.engine import Tape, Tensor, grad_check
from urlgraphnet.errors import NotScalarLossError, ShapeMismatchError


def weighted_sum(tape, x, weights):
    """Scalarize a tensor with fixed weights so no gradient is trivially zero."""
    return tape.sum(tape.mul(x, tape.input(weights)))


class TestForwardExamples:
    def test_matmul_identity(self):
        t = Tape()
        out = t.matmul(t.input(np.eye(2)), t.input([[1.0, 2.0], [3.0, 4.0]]))
        np.testing.assert_array_equal(out.data, [[1.0, 2.0], [3.0, 4.0]])

    def test_matmul_hand_product(self):
        t = Tape()
        out = t.matmul(t.input([[1.0, 2.0]]), t.input([[3.0], [4.0]]))
        np.testing.assert_array_equal(out.data, [[11.0]])

    def test_matmul_shape_mismatch(self):
        t = Tape()
        with pytest.raises(ShapeMismatchError):
            t.matmul(t.input(np.ones((2, 3))), t.input(np.ones((2, 3))))

    def test_relu(self):
        t = Tape()
        out = t.relu(t.input([-1.0, 0.0, 2.0]))
        np.testing.assert_array_equal(out.data, [[0.0, 0.0, 2.0]])

    def test_sigmoid_at_zero(self):
        t = Tape()
        assert t.sigmoid(t.input([0.0])).data[0, 0] == 0.5

    def test_leaky_relu_negative(self):
        t = Tape()
        assert t.leaky_relu(t.input([-10.0]), slope=0.2).data[0, 0] == pytest.approx(-2.0)

    def test_activation_dispatch(self):
        t = Tape()
        x = t.input([[-1.0, 1.0]])
        np.testing.assert_array_equal(t.activation(x, "relu").data, [[0.0, 1.0]])
        np.testing.assert_allclose(t.activation(x, "tanh").data, np.tanh([[-1.0, 1.0]]))
        with pytest.raises(ValueError):
            t.activation(x, "gelu")

    def test_softmax_symmetry(self):
        t = Tape()
        np.testing.assert_allclose(t.softmax_rows(t.input([0.0, 0.0])).data, [[0.5, 0.5]])

    def test_softmax_overflow_stable(self):
        t = Tape()
        out = t.softmax_rows(t.input([1000.0, 1000.0])).data
        np.testing.assert_allclose(out, [[0.5, 0.5]])
        assert np.isfinite(out).all()

    def test_softmax_closed_form(self):
        t = Tape()
        out = t.softmax_rows(t.input([math.log(1.0), math.log(3.0)])).data
        np.testing.assert_allclose(out, [[0.25, 0.75]], atol=1e-15)

    def test_log_softmax_uniform(self):
        t = Tape()
        out = t.log_softmax_rows(t.input([0.0, 0.0])).data
        np.testing.assert_allclose(out, [[-math.log(2.0)] * 2])

    def test_log_softmax_normalizes(self):
        rng = np.random.default_rng(0)
        t = Tape()
        out = t.log_softmax_rows(t.input(rng.normal(size=(1, 4)))).data
        assert abs(np.exp(out).sum() - 1.0) < 1e-9

    def test_log_softmax_closed_form(self):
        t = Tape()
        out = t.log_softmax_rows(t.input([0.0, math.log(3.0)])).data
        np.testing.assert_allclose(out, [[-math.log(4.0), math.log(3.0) - math.log(4.0)]], atol=1e-15)


class TestBackwardExamples:
    def test_square_gradient(self):
        t = Tape()
        x = t.leaf([[3.0]])
        loss = t.mul(x, x)
        grads = t.backward(loss)
        assert grads[x.node][0, 0] == pytest.approx(6.0)

    def test_fan_out_accumulates(self):
        t = Tape()
        x = t.leaf([[5.0]])
        loss = t.add(x, x)
        grads = t.backward(loss)
        assert grads[x.node][0, 0] == 2.0

    def test_sum_matmul_gradient(self):
        t = Tape()
        a = t.leaf([[1.0, 2.0]])
        loss = t.sum(t.matmul(a, t.input([[3.0], [4.0]])))
        grads = t.backward(loss)
        np.testing.assert_allclose(grads[a.node], [[3.0, 4.0]])

    def test_sigmoid_sum_matches_central_differences(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(-2, 2, size=(3, 4))
        err = grad_check(lambda t, p: t.sum(t.sigmoid(p["x"])), {"x": x}, eps=1e-6)
        assert err < 1e-6

    def test_untouched_parameter_gets_zero(self):
        t = Tape()
        x = t.leaf([[1.0, 2.0]])
        unused = t.leaf([[9.0]])
        grads = t.backward(t.sum(x))
        np.testing.assert_array_equal(grads[unused.node], [[0.0]])

    def test_non_scalar_loss_rejected(self):
        t = Tape()
        x = t.leaf(np.ones((2, 2)))
        with pytest.raises(NotScalarLossError):
            t.backward(x)

    def test_backward_linearity(self):
        rng = np.random.default_rng(2)
        xv = rng.uniform(-2, 2, size=(3, 3))
        wa = rng.normal(size=(3, 3))
        wb = rng.normal(size=(3, 3))

        def run(selector):
            t = Tape()
            x = t.leaf(xv)
            la = weighted_sum(t, t.tanh(x), wa)
            lb = weighted_sum(t, t.sigmoid(x), wb)
            loss = {"a": la, "b": lb, "a+b": t.add(la, lb)}[selector]
            return t.backward(loss)[x.node]

        np.testing.assert_allclose(run("a") + run("b"), run("a+b"), atol=1e-12)


class TestGradCheck:
    def test_quadratic_is_nearly_exact(self):
        err = grad_check(
            lambda t, p: t.sum(t.mul(p["x"], p["x"])),
            {"x": np.array([[1.0, -2.0, 0.5]])},
            eps=1e-4,
        )
        assert err < 1e-9

    def test_constant_function_is_exact_zero(self):
        err = grad_check(
            lambda t, p: t.smul(t.sum(p["x"]), 0.0),
            {"x": np.array([[1.0, 2.0]])},
            eps=1e-5,
        )
        assert err == 0.0

    def test_eps_domain(self):
        with pytest.raises(ValueError):
            grad_check(lambda t, p: t.sum(p["x"]), {"x": np.ones((1, 1))}, eps=0.5)

    def test_coordinate_sampling_runs(self):
        rng = np.random.default_rng(3)
        err = grad_check(
            lambda t, p: t.sum(t.tanh(p["x"])),
            {"x": rng.normal(size=(4, 4))},
            eps=1e-6,
            coords_per_tensor=5,
        )
        assert err < 1e-6


def _random_case(rng, rows, cols):
    x = rng.uniform(-2.0, 2.0, size=(rows, cols))
    # keep relu/leaky probes away from the kink at 0
    x[np.abs(x) < 1e-3] = 1e-3
    return x


class TestPerOpGradients:
    """Every differentiable op vs central differences on small random tensors."""

    @pytest.mark.parametrize("seed", range(5))
    def test_unary_ops(self, seed):
        rng = np.random.default_rng(seed)
        rows, cols = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        x = _random_case(rng, rows, cols)
        w = rng.normal(size=(rows, cols))
        cases = {
            "relu": lambda t, p: weighted_sum(t, t.relu(p["x"]), w),
            "leaky": lambda t, p: weighted_sum(t, t.leaky_relu(p["x"], 0.2), w),
            "sigmoid": lambda t, p: weighted_sum(t, t.sigmoid(p["x"]), w),
            "tanh": lambda t, p: weighted_sum(t, t.tanh(p["x"]), w),
            "softmax": lambda t, p: weighted_sum(t, t.softmax_rows(p["x"]), w),
            "log_softmax": lambda t, p: weighted_sum(t, t.log_softmax_rows(p["x"]), w),
            "smul": lambda t, p: weighted_sum(t, t.smul(p["x"], -1.7), w),
            "mean_rows": lambda t, p: weighted_sum(t, t.mean_rows(p["x"]), w[:1]),
            "sum": lambda t, p: t.sum(p["x"]),
        }
        for name, fn in cases.items():
            err = grad_check(fn, {"x": x}, eps=1e-6)
            assert err < 1e-6, f"{name}: {err}"

    @pytest.mark.parametrize("seed", range(5))
    def test_binary_ops(self, seed):
        rng = np.random.default_rng(100 + seed)
        m, k, n = (int(rng.integers(1, 6)) for _ in range(3))
        a = rng.uniform(-2, 2, size=(m, k))
        b = rng.uniform(-2, 2, size=(k, n))
        w = rng.normal(size=(m, n))
        err = grad_check(
            lambda t, p: weighted_sum(t, t.matmul(p["a"], p["b"]), w),
            {"a": a, "b": b},
            eps=1e-6,
        )
        assert err < 1e-6

        c = rng.uniform(-2, 2, size=(m, n))
        d = rng.uniform(-2, 2, size=(m, n))
        d_safe = np.where(np.abs(d) < 0.5, np.sign(d) * 0.5 + (d == 0) * 0.5, d)
        wc = rng.normal(size=(m, n))
        for name, fn in {
            "add": lambda t, p: weighted_sum(t, t.add(p["c"], p["d"]), wc),
            "sub": lambda t, p: weighted_sum(t, t.sub(p["c"], p["d"]), wc),
            "mul": lambda t, p: weighted_sum(t, t.mul(p["c"], p["d"]), wc),
            "div": lambda t, p: weighted_sum(t, t.div(p["c"], p["d"]), wc),
        }.items():
            err = grad_check(fn, {"c": c, "d": d_safe}, eps=1e-6)
            assert err < 1e-6, f"{name}: {err}"

    def test_bias_row_add(self):
        rng = np.random.default_rng(42)
        x = rng.uniform(-2, 2, size=(4, 3))
        b = rng.uniform(-2, 2, size=(1, 3))
        w = rng.normal(size=(4, 3))
        err = grad_check(
            lambda t, p: weighted_sum(t, t.add(p["x"], p["b"]), w),
            {"x": x, "b": b},
            eps=1e-6,
        )
        assert err < 1e-6

    def test_scale_rows(self):
        rng = np.random.default_rng(43)
        x = rng.uniform(-2, 2, size=(5, 3))
        s = rng.uniform(-2, 2, size=(5, 1))
        w = rng.normal(size=(5, 3))
        err = grad_check(
            lambda t, p: weighted_sum(t, t.scale_rows(p["x"], p["s"]), w),
            {"x": x, "s": s},
            eps=1e-6,
        )
        assert err < 1e-6

    def test_structural_ops(self):
        rng = np.random.default_rng(44)
        x = rng.uniform(-2, 2, size=(5, 3))
        idx = np.array([0, 2, 2, 4, 1, 0])
        seg = np.array([0, 0, 1, 2, 2, 2])
        w6 = rng.normal(size=(6, 3))
        w3 = rng.normal(size=(3, 3))
        w56 = rng.normal(size=(5, 6))
        cases = {
            "gather": lambda t, p: weighted_sum(t, t.gather_rows(p["x"], idx), w6),
            "segment_sum": lambda t, p: weighted_sum(
                t, t.segment_sum(t.gather_rows(p["x"], idx), seg, 3), w3
            ),
            "rows": lambda t, p: weighted_sum(t, t.rows(p["x"], 1, 4), w6[:3]),
            "pick": lambda t, p: t.smul(t.pick(p["x"], 2, 1), 3.0),
            "concat": lambda t, p: weighted_sum(
                t, t.concat_cols([p["x"], t.tanh(p["x"])]), w56
            ),
        }
        for name, fn in cases.items():
            err = grad_check(fn, {"x": x}, eps=1e-6)
            assert err < 1e-6, f"{name}: {err}"

    def test_segment_softmax_forward_and_gradient(self):
        rng = np.random.default_rng(45)
        logits = rng.uniform(-2, 2, size=(7, 1))
        seg = np.array([0, 0, 0, 1, 1, 2, 2])

        t = Tape()
        alpha = t.segment_softmax(t.input(logits), seg, 3).data[:, 0]
        # per-segment sums are exactly softmax normalizations
        for s in range(3):
            assert alpha[seg == s].sum() == pytest.approx(1.0, abs=1e-12)
        # against a plain per-segment softmax oracle
        for s in range(3):
            block = logits[seg == s, 0]
            expect = np.exp(block) / np.exp(block).sum()
            np.testing.assert_allclose(alpha[seg == s], expect, atol=1e-12)

        w = rng.normal(size=(7, 1))
        err = grad_check(
            lambda t, p: weighted_sum(t, t.segment_softmax(p["l"], seg, 3), w),
            {"l": logits},
            eps=1e-6,
        )
        assert err < 1e-6


class TestInvariants:
    def test_softmax_shift_invariance(self):
        rng = np.random.default_rng(46)
        x = rng.normal(size=(3, 5))
        shift = x + 13.25
        t = Tape(record=False)
        np.testing.assert_allclose(
            t.softmax_rows(Tensor(x)).data, t.softmax_rows(Tensor(shift)).data, atol=1e-12
        )
        np.testing.assert_allclose(
            t.log_softmax_rows(Tensor(x)).data,
            t.log_softmax_rows(Tensor(shift)).data,
            atol=1e-12,
        )

    def test_all_ops_produce_finite_values(self):
        t = Tape(record=False)
        big = Tensor([[745.0, -745.0, 0.0]])
        for out in (t.sigmoid(big), t.tanh(big), t.softmax_rows(big), t.log_softmax_rows(big)):
            assert np.isfinite(out.data).all()

    def test_non_recording_tape_skips_records(self):
        t = Tape(record=False)
        out = t.matmul(t.input(np.ones((2, 2))), t.input(np.ones((2, 2))))
        assert out.node is None
        assert not t._records
