import math

import numpy as np
import pytest
import scipy.sparse as sp

from dsnc.errors import NumericError
from dsnc.linalg import (AdamState, adam_step, affine, finite_diff_grad,
                         sigmoid, softmax_nll)

from conftest import rel_err


class TestAffine:
    def test_zero_weights_give_bias(self):
        w = np.zeros((3, 4))
        b = np.array([1.0, -2.0, 0.5])
        assert np.array_equal(affine(w, b, np.ones(4)), b)

    def test_identity(self):
        out = affine(np.eye(2), np.zeros(2), np.array([3.0, -1.0]))
        assert np.array_equal(out, [3.0, -1.0])

    def test_hand_arithmetic(self):
        w = np.array([[1.0, 2.0], [0.0, 1.0]])
        out = affine(w, np.array([1.0, 1.0]), np.array([1.0, 1.0]))
        assert np.array_equal(out, [4.0, 2.0])

    def test_sparse_row_and_pairs_match_dense(self, rng):
        w = rng.normal(size=(3, 6))
        b = rng.normal(size=3)
        dense = np.array([0.0, 2.0, 0.0, -1.0, 0.0, 0.5])
        row = sp.csr_array(dense.reshape(1, -1))
        pairs = (np.array([1, 3, 5]), np.array([2.0, -1.0, 0.5]))
        expect = affine(w, b, dense)
        assert np.allclose(affine(w, b, row), expect)
        assert np.allclose(affine(w, b, pairs), expect)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            affine(np.eye(2), np.zeros(2), np.ones(3))
        with pytest.raises(ValueError):
            affine(np.eye(2), np.zeros(3), np.ones(2))


class TestSigmoid:
    def test_symmetry_point(self):
        assert np.array_equal(sigmoid(np.zeros(2)), [0.5, 0.5])

    def test_saturation_no_overflow(self):
        v = sigmoid(np.array([1000.0]))
        assert 1 - 1e-12 < v[0] <= 1.0
        assert sigmoid(np.array([-1000.0]))[0] >= 0.0

    def test_closed_form(self):
        assert sigmoid(np.array([math.log(3)]))[0] == pytest.approx(0.75, abs=1e-15)

    def test_complement_identity(self, rng):
        v = rng.uniform(-60, 60, size=500)
        assert np.all(np.abs(sigmoid(v) + sigmoid(-v) - 1.0) < 1e-12)


class TestSoftmaxNll:
    def test_uniform(self):
        loss, probs = softmax_nll(np.full(4, 1.7), 2)
        assert loss == pytest.approx(math.log(4), abs=1e-12)
        assert np.allclose(probs, 0.25)

    def test_dominant_logit_no_overflow(self):
        loss, probs = softmax_nll(np.array([1000.0, 0.0]), 0)
        assert loss == pytest.approx(0.0, abs=1e-12)
        assert probs[0] == pytest.approx(1.0)

    def test_closed_form(self):
        loss, probs = softmax_nll(np.array([math.log(1), math.log(3)]), 1)
        assert np.allclose(probs, [0.25, 0.75], atol=1e-15)
        assert loss == pytest.approx(math.log(4 / 3), abs=1e-14)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            softmax_nll(np.zeros(3), 3)
        with pytest.raises(ValueError):
            softmax_nll(np.zeros(3), -1)

    def test_probs_sum_to_one(self, rng):
        for _ in range(50):
            _, probs = softmax_nll(rng.uniform(-100, 100, size=7), 0)
            assert abs(probs.sum() - 1.0) < 1e-12

    def test_gradient_matches_finite_differences(self, rng):
        worst = 0.0
        for _ in range(100):
            k = int(rng.integers(2, 8))
            logits = rng.normal(size=k) * 3
            y = int(rng.integers(k))
            _, probs = softmax_nll(logits, y)
            analytic = probs.copy()
            analytic[y] -= 1.0
            fd = finite_diff_grad(lambda v: softmax_nll(v, y)[0], logits)
            worst = max(worst, rel_err(analytic, fd))
        assert worst <= 1e-5


class TestAdam:
    def test_zero_gradient_is_noop(self):
        params = np.array([1.0, -2.0, 3.5])
        state = AdamState.for_params(params)
        out = adam_step(state, params, np.zeros(3))
        assert np.array_equal(out, params)
        assert state.t == 1

    def test_first_step_closed_form(self):
        for g in (0.7, -3.0, 1e-4):
            params = np.array([0.0])
            state = AdamState.for_params(params, lr=1e-3)
            out = adam_step(state, params, np.array([g]))
            expect = -1e-3 * g / (abs(g) + 1e-8)
            assert out[0] == pytest.approx(expect, rel=1e-12)

    def test_two_steps_do_not_grow(self):
        params = np.array([0.0])
        state = AdamState.for_params(params, lr=1e-3)
        g = np.array([0.37])
        p1 = adam_step(state, params, g)
        d1 = abs(p1[0] - params[0])
        p2 = adam_step(state, p1, g)
        d2 = abs(p2[0] - p1[0])
        assert d2 <= d1 + 1e-9

    def test_nonfinite_gradient_names_block(self):
        params = np.zeros(2)
        state = AdamState.for_params(params, name="enc.w")
        with pytest.raises(NumericError, match="enc.w"):
            adam_step(state, params, np.array([1.0, np.nan]))


class TestFiniteDiff:
    def test_quadratic(self):
        grad = finite_diff_grad(lambda v: float(v[0] ** 2), np.array([3.0]))
        assert grad[0] == pytest.approx(6.0, rel=1e-8)

    def test_constant(self):
        grad = finite_diff_grad(lambda v: 4.2, np.array([1.0, 2.0]))
        assert np.array_equal(grad, np.zeros(2))
