# services/amat_service.py
import logging
import math
from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy import integrate

from exceptions import DimMismatch
from models.power import RateEstimate
from models.precoder import AmatPrecoders, AmatPreset, ConvergenceTrace, GradientStepOptions, UpdateMethod
from services.channel_service import hermitian_sqrt_pair, log2det_eye_plus, run_monte_carlo
from services.correlation_service import (
    as_matrix,
    phase_normalize,
    eig_hermitian,
    generalized_eig,
)

logger = logging.getLogger(__name__)

EULER_GAMMA = float(np.euler_gamma)
_USER_STREAM = {"A": 0, "B": 1}


def exp_integral_Ei_minus1() -> float:
    """Ei(-1) = -int_1^inf e^-t / t dt by adaptive quadrature."""
    value, _ = integrate.quad(lambda t: math.exp(-t) / t, 1.0, np.inf, epsabs=1e-14, epsrel=1e-13, limit=200)
    return -value


def exp_integral_series(x: float, tol: float = 1e-17) -> float:
    """Ei(x) = gamma + ln|x| + sum_k x^k / (k k!) for x != 0."""
    total, term, k = 0.0, 1.0, 0
    while True:
        k += 1
        term *= x / k
        contribution = term / k
        total += contribution
        if abs(contribution) < tol and k > abs(x):
            break
    return EULER_GAMMA + math.log(abs(x)) + total


@lru_cache(maxsize=1)
def amat_rate_constant() -> float:
    """a = e Ei(-1) - 2 gamma, about -1.750778."""
    return math.e * exp_integral_Ei_minus1() - 2.0 * EULER_GAMMA


def _check_precoder(W: np.ndarray, R: np.ndarray) -> None:
    if W.ndim != 2 or W.shape[1] != 2 or W.shape[0] != R.shape[0]:
        raise DimMismatch(f"expected an {R.shape[0]}x2 precoder, got shape {W.shape}")


def theta(W: np.ndarray, R_A, R_B) -> float:
    """Tr(W^H R_A W) Tr(W^H R_B W) - Tr(W^H R_A W W^H R_B W)."""
    R_A, R_B = as_matrix(R_A), as_matrix(R_B)
    W = np.asarray(W, dtype=complex)
    _check_precoder(W, R_A)
    if R_A.shape != R_B.shape:
        raise DimMismatch("R_A and R_B differ in shape")
    a = W.conj().T @ R_A @ W
    b = W.conj().T @ R_B @ W
    return float(np.real(np.trace(a) * np.trace(b) - np.trace(a @ b)))


def rate_approx_amat(rho: float, theta_val: float) -> float:
    """Per-user rate approximation (2/3) log2(1 + rho sqrt(e^a theta))."""
    return (2.0 / 3.0) * math.log2(1.0 + rho * math.sqrt(math.exp(amat_rate_constant()) * max(theta_val, 0.0)))


def amat_matrix(w_fixed: np.ndarray, R_A, R_B) -> np.ndarray:
    """Hermitian part of (w^H R_B w) R_A + (w^H R_A w) R_B - R_A w w^H R_B - R_B w w^H R_A."""
    R_A, R_B = as_matrix(R_A), as_matrix(R_B)
    Aw, Bw = R_A @ w_fixed, R_B @ w_fixed
    a = np.real(np.vdot(w_fixed, Aw))
    b = np.real(np.vdot(w_fixed, Bw))
    M = b * R_A + a * R_B - np.outer(Aw, Bw.conj()) - np.outer(Bw, Aw.conj())
    return 0.5 * (M + M.conj().T)


def max_eig_update(w_fixed: np.ndarray, R_A, R_B) -> np.ndarray:
    return eig_hermitian(amat_matrix(w_fixed, R_A, R_B)).u_max


def grad_ascent_update(
    w_current: np.ndarray, w_fixed: np.ndarray, R_A, R_B, step_opts: GradientStepOptions = GradientStepOptions()
) -> np.ndarray:
    """Backtracking ascent on w^H M(w_fixed) w over the unit sphere."""
    M = amat_matrix(w_fixed, R_A, R_B)
    w = w_current / np.linalg.norm(w_current)
    for _ in range(step_opts.steps):
        value = np.real(np.vdot(w, M @ w))
        grad = 2.0 * (M @ w)
        tangent = grad - np.vdot(w, grad) * w
        slope = np.real(np.vdot(tangent, tangent))
        if slope <= 1e-30:
            break
        mu = step_opts.initial_step
        for _ in range(step_opts.max_backtracks):
            candidate = w + mu * grad
            candidate = candidate / np.linalg.norm(candidate)
            if np.real(np.vdot(candidate, M @ candidate)) >= value + step_opts.armijo * mu * slope:
                w = candidate
                break
            mu *= step_opts.backtrack
        else:
            break
    return w


def _random_unit(rng: np.random.Generator, M: int) -> np.ndarray:
    v = rng.standard_normal(M) + 1j * rng.standard_normal(M)
    return v / np.linalg.norm(v)


def optimize_precoders(
    R_A,
    R_B,
    method: UpdateMethod = UpdateMethod.MAX_EIG,
    eps: float = 1e-8,
    max_iter: int = 200,
    seed: int = 0,
    restarts: int = 3,
    user: str = "A",
    step_opts: GradientStepOptions = GradientStepOptions(),
) -> Tuple[np.ndarray, ConvergenceTrace]:
    """Alternating maximization of theta over the two columns of one user's precoder.

    Returns the best M x 2 precoder over ``restarts`` random starts and its trace.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    R_A, R_B = as_matrix(R_A), as_matrix(R_B)
    M = R_A.shape[0]
    best_W, best_trace = None, None

    for restart in range(restarts):
        rng = np.random.default_rng([seed, _USER_STREAM[user], restart])
        w1, w2 = _random_unit(rng, M), _random_unit(rng, M)
        trace = ConvergenceTrace(theta_values=[theta(np.column_stack([w1, w2]), R_A, R_B)])
        for iteration in range(1, max_iter + 1):
            if method == UpdateMethod.MAX_EIG:
                w1 = max_eig_update(w2, R_A, R_B)
                w2 = max_eig_update(w1, R_A, R_B)
            else:
                w1 = grad_ascent_update(w1, w2, R_A, R_B, step_opts)
                w2 = grad_ascent_update(w2, w1, R_A, R_B, step_opts)
            trace.theta_values.append(theta(np.column_stack([w1, w2]), R_A, R_B))
            trace.iterations = iteration
            if abs(trace.theta_values[-1] - trace.theta_values[-2]) <= eps:
                trace.converged = True
                break
        if not trace.converged:
            logger.warning("theta optimizer hit max_iter=%d (user %s, restart %d)", max_iter, user, restart)
        logger.debug(
            "user %s restart %d: theta %.10g after %d iterations", user, restart, trace.theta_values[-1], trace.iterations
        )
        if best_trace is None or trace.theta_values[-1] > best_trace.theta_values[-1]:
            best_W, best_trace = phase_normalize(np.column_stack([w1, w2])), trace

    return best_W, best_trace


def optimize_amat_precoders(
    R_A, R_B, method: UpdateMethod = UpdateMethod.MAX_EIG, eps: float = 1e-8, max_iter: int = 200, seed: int = 0
) -> Tuple[AmatPrecoders, Tuple[ConvergenceTrace, ConvergenceTrace]]:
    W, trace_W = optimize_precoders(R_A, R_B, method, eps, max_iter, seed, user="A")
    Q, trace_Q = optimize_precoders(R_A, R_B, method, eps, max_iter, seed, user="B")
    return AmatPrecoders(W=W, Q=Q), (trace_W, trace_Q)


def amat_precoder_preset(kind: AmatPreset, R_A, R_B, seed: int = 0) -> AmatPrecoders:
    R_A, R_B = as_matrix(R_A), as_matrix(R_B)
    M = R_A.shape[0]
    if kind == AmatPreset.ORG:
        first_two = np.eye(M, 2, dtype=complex)
        return AmatPrecoders(W=first_two, Q=first_two.copy())
    if kind == AmatPreset.WE:
        eig_A, eig_B = eig_hermitian(R_A), eig_hermitian(R_B)
        return AmatPrecoders(
            W=np.column_stack([eig_B.u_max, eig_B.u_min]), Q=np.column_stack([eig_A.u_max, eig_A.u_min])
        )
    if kind == AmatPreset.GE:
        pencil_W, pencil_Q = generalized_eig(R_A, R_B), generalized_eig(R_B, R_A)
        return AmatPrecoders(
            W=np.column_stack([pencil_W.u_min, pencil_W.u_max]), Q=np.column_stack([pencil_Q.u_min, pencil_Q.u_max])
        )
    if kind == AmatPreset.RND:
        return AmatPrecoders(W=random_unitary_columns(M, [seed, 0]), Q=random_unitary_columns(M, [seed, 1]))
    raise ValueError(f"unknown AMAT preset {kind}")


def random_unitary_columns(M: int, seed, columns: int = 2) -> np.ndarray:
    """M x columns matrix with orthonormal columns from the QR of a seeded Gaussian."""
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((M, columns)) + 1j * rng.standard_normal((M, columns)))
    q = q * (np.diag(r) / np.abs(np.diag(r)))[None, :]
    return q / np.linalg.norm(q, axis=0)[None, :]


def equal_power(P: float, M: int) -> float:
    """rho = 3P / (4 + 2M)."""
    if P <= 0:
        raise ValueError("P must be positive")
    return 3.0 * P / (4 + 2 * M)


def _mmse_sic_rate(rows: np.ndarray, inv_noise: np.ndarray, scale: float) -> np.ndarray:
    """log2 det(I + scale * H^H K^{-1} H) for H of shape (n, r, 2)."""
    G = scale * np.einsum("nr,nri,nrj->nij", inv_noise, rows.conj(), rows)
    return log2det_eye_plus(G)


def amat_rate_samples(triple, pre: AmatPrecoders, rho: float) -> np.ndarray:
    h21, h31 = triple.h2[:, 0], triple.h3[:, 0]
    g21, g31 = triple.g2[:, 0], triple.g3[:, 0]
    hW, gW = triple.h1.conj() @ pre.W, triple.g1.conj() @ pre.W
    hQ, gQ = triple.h1.conj() @ pre.Q, triple.g1.conj() @ pre.Q

    rows_A = np.stack([h21.conj()[:, None] * hW, h31.conj()[:, None] * gW], axis=1)
    noise_A = np.column_stack([1.0 / (1.0 + np.abs(h21) ** 2), np.ones_like(h21.real)])
    rows_B = np.stack([g21.conj()[:, None] * hQ, g31.conj()[:, None] * gQ], axis=1)
    noise_B = np.column_stack([np.ones_like(g31.real), 1.0 / (1.0 + np.abs(g31) ** 2)])

    return (_mmse_sic_rate(rows_A, noise_A, rho) + _mmse_sic_rate(rows_B, noise_B, rho)) / 3.0


def mc_rate_amat(R_A, R_B, pre: AmatPrecoders, rho: float, trials: int, seed: int, workers: int = 1) -> RateEstimate:
    if rho <= 0:
        raise ValueError("rho must be positive")
    sqrtA, sqrtB = hermitian_sqrt_pair(R_A, R_B)
    if pre.dim != sqrtA.shape[0]:
        raise DimMismatch("precoder and covariance dimensions differ")
    return run_monte_carlo(lambda t: amat_rate_samples(t, pre, rho), sqrtA, sqrtB, trials, seed, workers)
