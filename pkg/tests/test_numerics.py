import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from protostream.numerics import finite_difference_check, kl_divergence, sgd_step, softmax


class TestSoftmax:
    def test_symmetry(self):
        np.testing.assert_allclose(softmax(np.array([0.0, 0.0])), [0.5, 0.5])

    def test_exact_two_thirds(self):
        out = softmax(np.array([math.log(2.0), 0.0]))
        np.testing.assert_allclose(out, [2.0 / 3.0, 1.0 / 3.0], atol=1e-15)

    def test_large_scores_no_overflow(self):
        out = softmax(np.array([1000.0, 0.0]))
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            softmax(np.array([]))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            softmax(np.array([1.0, np.nan]))

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=20), st.floats(-100, 100))
    @settings(max_examples=200, deadline=None)
    def test_sums_to_one_and_shift_invariant(self, scores, shift):
        scores = np.array(scores)
        out = softmax(scores)
        assert abs(out.sum() - 1.0) < 1e-9
        shifted = softmax(scores + shift)
        np.testing.assert_allclose(out, shifted, atol=1e-9)

    def test_rowwise_axis(self):
        rows = np.array([[1.0, 2.0], [0.0, 0.0]])
        out = softmax(rows, axis=1)
        np.testing.assert_allclose(out.sum(axis=1), [1.0, 1.0])


class TestKLDivergence:
    def test_identity_is_zero(self):
        p = np.array([0.3, 0.7])
        assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-15)

    def test_point_mass_vs_uniform(self):
        assert kl_divergence(np.array([1.0, 0.0]), np.array([0.5, 0.5])) == pytest.approx(math.log(2.0))

    def test_hand_evaluated_value(self):
        # 0.5*ln(0.5/0.9) + 0.5*ln(0.5/0.1) = 0.5*ln(25/9)
        got = kl_divergence(np.array([0.5, 0.5]), np.array([0.9, 0.1]))
        assert got == pytest.approx(0.5 * math.log(25.0 / 9.0), abs=1e-12)
        assert got == pytest.approx(0.51083, abs=1e-5)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            kl_divergence(np.array([1.0]), np.array([0.5, 0.5]))

    def test_zero_q_is_clamped_finite(self):
        val = kl_divergence(np.array([0.5, 0.5]), np.array([1.0, 0.0]))
        assert np.isfinite(val)

    @given(st.integers(2, 8), st.integers(0, 2**32 - 1))
    @settings(max_examples=200, deadline=None)
    def test_nonnegative(self, k, seed):
        rng = np.random.default_rng(seed)
        p = rng.dirichlet(np.ones(k))
        q = rng.dirichlet(np.ones(k))
        assert kl_divergence(p, q) >= 0.0

    def test_zero_iff_equal(self):
        rng = np.random.default_rng(7)
        p = rng.dirichlet(np.ones(5))
        q = rng.dirichlet(np.ones(5))
        assert kl_divergence(p, p) < 1e-12
        assert kl_divergence(p, q) > 1e-12  # distinct draws differ


class TestSgdStep:
    def test_zero_gradient(self):
        out = sgd_step([np.array([1.0, 2.0])], [np.zeros(2)], lr=0.1)
        np.testing.assert_array_equal(out[0], [1.0, 2.0])

    def test_exact_arithmetic(self):
        out = sgd_step([np.array([1.0])], [np.array([2.0])], lr=0.5)
        np.testing.assert_array_equal(out[0], [0.0])

    def test_lr_zero_identity(self):
        params = [np.array([[1.0, -3.0], [2.0, 5.0]])]
        out = sgd_step(params, [np.ones((2, 2))], lr=0.0)
        np.testing.assert_array_equal(out[0], params[0])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            sgd_step([np.zeros(2)], [np.zeros(3)], lr=0.1)

    def test_inputs_not_mutated(self):
        p = np.array([1.0])
        sgd_step([p], [np.array([1.0])], lr=0.5)
        assert p[0] == 1.0


class TestFiniteDifferenceCheck:
    def test_quadratic_gradient(self):
        def loss(params):
            theta = params[0]
            return 0.5 * float(theta @ theta), [theta]

        err = finite_difference_check(loss, [np.array([3.0, 4.0])], h=1e-5)
        assert err < 1e-6

    def test_detects_wrong_gradient(self):
        def bad(params):
            theta = params[0]
            return 0.5 * float(theta @ theta), [2.0 * theta]

        err = finite_difference_check(bad, [np.array([3.0, 4.0])], h=1e-5)
        assert err > 0.1

    def test_invalid_h(self):
        with pytest.raises(ValueError):
            finite_difference_check(lambda p: (0.0, [np.zeros(1)]), [np.zeros(1)], h=0.0)
