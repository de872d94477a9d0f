# services/correlation_service.py
import logging

import numpy as np
from scipy import linalg

from exceptions import BadDim, ConvergenceFailure, DimMismatch, NotPositiveDefinite
from models.linalg import HERMITIAN_TOL, CorrelationMatrix, EigPair

logger = logging.getLogger(__name__)

PD_GUARD = 1e-6


def as_matrix(R) -> np.ndarray:
    if isinstance(R, CorrelationMatrix):
        return R.entries
    return np.asarray(R, dtype=complex)


def phase_normalize(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real and positive."""
    vectors = np.array(vectors, dtype=complex, copy=True)
    single = vectors.ndim == 1
    if single:
        vectors = vectors[:, None]
    idx = np.argmax(np.abs(vectors), axis=0)
    pivots = vectors[idx, np.arange(vectors.shape[1])]
    vectors = vectors * (np.abs(pivots) / pivots)[None, :]
    vectors[idx, np.arange(vectors.shape[1])] = np.abs(pivots)
    return vectors[:, 0] if single else vectors


def exp_correlation(t_mag: float, phase: float, M: int) -> CorrelationMatrix:
    """Single-parameter exponential correlation model.

    Entry (i, j) is t^(j-i) for j >= i with t = t_mag * exp(i*phase); the
    lower triangle holds the conjugates.
    """
    if M < 2:
        raise BadDim(f"M must be at least 2, got {M}")
    if t_mag < 0:
        raise ValueError("t_mag must be non-negative")
    if t_mag >= 1.0 - PD_GUARD:
        raise NotPositiveDefinite(f"|t| = {t_mag} is too close to 1")
    lag = np.subtract.outer(np.arange(M), np.arange(M))  # i - j
    power = np.maximum(-lag, 0)
    upper = (t_mag**power) * np.exp(1j * phase * power)
    entries = np.where(lag <= 0, upper, upper.T.conj())
    np.fill_diagonal(entries, 1.0)
    return CorrelationMatrix(entries)


def random_correlation(M: int, seed: int) -> CorrelationMatrix:
    """Random full-rank covariance A A^H + 0.1 M I, normalized to trace M."""
    if M < 2:
        raise BadDim(f"M must be at least 2, got {M}")
    rng = np.random.default_rng(seed)
    a = (rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))) / np.sqrt(2.0)
    return CorrelationMatrix.from_array(a @ a.conj().T + 0.1 * M * np.eye(M))


def eig_hermitian(R) -> EigPair:
    """Eigen-decomposition with values sorted descending and phase-fixed vectors."""
    R = as_matrix(R)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise BadDim(f"expected a square matrix, got shape {R.shape}")
    scale = max(1.0, float(np.max(np.abs(R))))
    if np.max(np.abs(R - R.conj().T)) > HERMITIAN_TOL * scale:
        raise ValueError("eig_hermitian needs a Hermitian input")
    try:
        values, vectors = linalg.eigh(0.5 * (R + R.conj().T))
    except linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"Hermitian eigensolver failed: {exc}") from exc
    order = np.argsort(-values, kind="stable")
    return EigPair(values=values[order], vectors=phase_normalize(vectors[:, order]))


def hermitian_sqrt(R: CorrelationMatrix) -> np.ndarray:
    pair = eig_hermitian(R)
    if pair.lambda_min <= 0:
        raise NotPositiveDefinite("square root needs a positive definite matrix")
    V = pair.vectors
    S = (V * np.sqrt(pair.values)[None, :]) @ V.conj().T
    return 0.5 * (S + S.conj().T)


def condition_number(R) -> float:
    pair = eig_hermitian(R)
    if pair.lambda_min <= 0:
        raise NotPositiveDefinite("condition number needs a positive definite matrix")
    return pair.lambda_max / pair.lambda_min


def _cholesky_reduce(A, B):
    A, B = as_matrix(A), as_matrix(B)
    if A.shape != B.shape:
        raise DimMismatch(f"pencil shapes differ: {A.shape} vs {B.shape}")
    try:
        L = linalg.cholesky(0.5 * (B + B.conj().T), lower=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"B is not positive definite: {exc}") from exc
    X = linalg.solve_triangular(L, A, lower=True)
    C = linalg.solve_triangular(L, X.conj().T, lower=True).conj().T
    return L, 0.5 * (C + C.conj().T)


def generalized_eig(A, B) -> EigPair:
    """Eigenvalues of B^{-1} A (descending) with unit-norm, phase-fixed eigenvectors.

    The vectors are B-orthogonal, not orthonormal.
    """
    L, C = _cholesky_reduce(A, B)
    reduced = eig_hermitian(C)
    X = linalg.solve_triangular(L.conj().T, reduced.vectors, lower=False)
    X = X / np.linalg.norm(X, axis=0)[None, :]
    return EigPair(values=reduced.values, vectors=phase_normalize(X))


def generalized_max_eigvec(A, B) -> np.ndarray:
    """Unit x maximizing (x^H A x) / (x^H B x)."""
    return generalized_eig(A, B).u_max


def generalized_min_eigvec(A, B) -> np.ndarray:
    """Unit x minimizing (x^H A x) / (x^H B x)."""
    return generalized_eig(A, B).u_min


def generalized_condition_number(A, B) -> float:
    """chi(B^{-1} A) as the ratio of the extreme generalized Rayleigh quotients."""
    values = generalized_eig(A, B).values
    if values[-1] <= 0:
        raise NotPositiveDefinite("pencil is not positive definite")
    return float(values[0] / values[-1])


def quadratic_form(R, x: np.ndarray) -> float:
    """Real value of x^H R x."""
    R = as_matrix(R)
    return float(np.real(np.vdot(x, R @ x)))
