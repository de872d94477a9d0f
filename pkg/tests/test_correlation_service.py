# tests/test_correlation_service.py
import math

import numpy as np
import pytest

from exceptions import BadDim, DimMismatch, NotPositiveDefinite
from models.linalg import CorrelationMatrix
from services.correlation_service import (
    condition_number,
    eig_hermitian,
    exp_correlation,
    generalized_condition_number,
    generalized_eig,
    generalized_max_eigvec,
    generalized_min_eigvec,
    hermitian_sqrt,
    phase_normalize,
    quadratic_form,
    random_correlation,
)


class TestExpCorrelation:
    def test_two_antenna_entries(self):
        R = exp_correlation(0.9, 0.3, 2)
        t = 0.9 * np.exp(0.3j)
        np.testing.assert_allclose(R.entries, [[1.0, t], [np.conj(t), 1.0]], atol=1e-15)

    def test_zero_correlation_is_identity(self):
        np.testing.assert_array_equal(exp_correlation(0.0, 1.0, 4).entries, np.eye(4))

    def test_powers_along_first_row(self):
        R = exp_correlation(0.5, 0.0, 4)
        np.testing.assert_allclose(R.entries[0].real, [1.0, 0.5, 0.25, 0.125])

    def test_exactly_hermitian_with_trace_m(self):
        R = exp_correlation(0.95, 2.2, 8)
        np.testing.assert_array_equal(R.entries, R.entries.conj().T)
        assert np.trace(R.entries).real == pytest.approx(8.0, abs=1e-12)

    def test_entries_are_read_only(self):
        R = exp_correlation(0.5, 0.0, 2)
        with pytest.raises(ValueError):
            R.entries[0, 0] = 2.0

    def test_single_antenna_is_rejected(self):
        with pytest.raises(BadDim):
            exp_correlation(0.5, 0.0, 1)

    def test_unit_magnitude_is_rejected(self):
        with pytest.raises(NotPositiveDefinite):
            exp_correlation(1.0, 0.0, 2)

    def test_near_unit_magnitude_is_accepted(self):
        R = exp_correlation(0.999, 0.0, 2)
        assert eig_hermitian(R).lambda_min == pytest.approx(0.001, rel=1e-9)


class TestCorrelationMatrix:
    def test_rescales_to_trace_m(self):
        R = CorrelationMatrix.from_array(np.diag([2.0, 4.0, 6.0]))
        np.testing.assert_allclose(R.entries.diagonal().real, [0.5, 1.0, 1.5])

    def test_rejects_non_hermitian(self):
        with pytest.raises(NotPositiveDefinite):
            CorrelationMatrix.from_array(np.array([[1.0, 0.5], [0.1, 1.0]]))

    def test_rejects_singular(self):
        with pytest.raises(NotPositiveDefinite):
            CorrelationMatrix.from_array(np.ones((2, 2)))

    def test_rejects_wrong_trace(self):
        with pytest.raises(BadDim):
            CorrelationMatrix(2.0 * np.eye(2))
        with pytest.raises(BadDim):
            CorrelationMatrix.from_array(2.0 * np.eye(3), renormalize=False)

    def test_random_correlation_is_seeded(self):
        np.testing.assert_array_equal(random_correlation(4, 7).entries, random_correlation(4, 7).entries)
        assert not np.array_equal(random_correlation(4, 7).entries, random_correlation(4, 8).entries)


class TestEigHermitian:
    def test_descending_with_unit_vectors(self, random_pairs):
        for R, _ in random_pairs:
            pair = eig_hermitian(R)
            assert np.all(np.diff(pair.values) <= 0)
            np.testing.assert_allclose(np.linalg.norm(pair.vectors, axis=0), 1.0, atol=1e-12)
            np.testing.assert_allclose(R.entries @ pair.vectors, pair.vectors * pair.values, atol=1e-10)

    def test_two_antenna_exponential_eigenvalues(self):
        pair = eig_hermitian(exp_correlation(0.9, 1.1, 2))
        np.testing.assert_allclose(pair.values, [1.9, 0.1], atol=1e-12)

    def test_phase_normalized_pivot_is_real_positive(self, random_pairs):
        for R, _ in random_pairs[:4]:
            vectors = eig_hermitian(R).vectors
            pivots = vectors[np.argmax(np.abs(vectors), axis=0), np.arange(vectors.shape[1])]
            np.testing.assert_allclose(pivots.imag, 0.0, atol=1e-15)
            assert np.all(pivots.real > 0)

    def test_phase_normalize_single_vector(self):
        v = phase_normalize(np.array([0.6j, -0.8j]))
        np.testing.assert_allclose(v, [-0.6, 0.8], atol=1e-15)

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            eig_hermitian(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_rejects_non_square(self):
        with pytest.raises(BadDim):
            eig_hermitian(np.zeros((2, 3)))


class TestSqrtAndCondition:
    def test_sqrt_squares_back(self, random_pairs):
        for R, _ in random_pairs[:8]:
            S = hermitian_sqrt(R)
            np.testing.assert_allclose(S @ S, R.entries, atol=1e-12)
            np.testing.assert_allclose(S, S.conj().T, atol=1e-15)

    def test_condition_number(self):
        assert condition_number(exp_correlation(0.9, 0.0, 2)) == pytest.approx(19.0, rel=1e-12)

    def test_condition_number_of_indefinite(self):
        with pytest.raises(NotPositiveDefinite):
            condition_number(np.diag([1.0, -1.0]))


class TestGeneralizedEig:
    def test_pencil_equation(self, random_pairs):
        for A, B in random_pairs:
            pair = generalized_eig(A, B)
            lhs = A.entries @ pair.vectors
            rhs = B.entries @ pair.vectors * pair.values
            np.testing.assert_allclose(lhs, rhs, atol=1e-9)
            np.testing.assert_allclose(np.linalg.norm(pair.vectors, axis=0), 1.0, atol=1e-12)

    def test_extreme_vectors_bound_rayleigh_quotient(self, random_pairs, rng):
        for A, B in random_pairs[:6]:
            x_max, x_min = generalized_max_eigvec(A, B), generalized_min_eigvec(A, B)
            hi = quadratic_form(A, x_max) / quadratic_form(B, x_max)
            lo = quadratic_form(A, x_min) / quadratic_form(B, x_min)
            for _ in range(50):
                x = rng.standard_normal(A.dim) + 1j * rng.standard_normal(A.dim)
                ratio = quadratic_form(A, x) / quadratic_form(B, x)
                assert lo - 1e-10 <= ratio <= hi + 1e-10

    def test_identity_pencil_reduces_to_ordinary(self):
        R = exp_correlation(0.7, 0.4, 3)
        np.testing.assert_allclose(generalized_eig(R, np.eye(3)).values, eig_hermitian(R).values, atol=1e-12)

    def test_condition_number_is_symmetric(self, random_pairs):
        for A, B in random_pairs:
            chi_ab, chi_ba = generalized_condition_number(A, B), generalized_condition_number(B, A)
            assert abs(chi_ab - chi_ba) / chi_ab < 1e-9

    def test_two_antenna_opposite_phase_condition(self, exp_pair):
        R_A, R_B = exp_pair
        # pencil eigenvalues are 1.9 / 0.1 and 0.1 / 1.9
        assert generalized_condition_number(R_A, R_B) == pytest.approx(19.0**2, rel=1e-9)

    def test_indefinite_b_is_rejected(self):
        with pytest.raises(NotPositiveDefinite):
            generalized_eig(np.eye(2), np.diag([1.0, -1.0]))

    def test_shape_mismatch(self):
        with pytest.raises(DimMismatch):
            generalized_eig(np.eye(2), np.eye(3))


def test_quadratic_form_of_uniform_vector():
    R = exp_correlation(0.9, 0.0, 2)
    assert quadratic_form(R, np.array([1.0, 1.0]) / math.sqrt(2.0)) == pytest.approx(1.9)
