# utils/sqp_solver.py

"""Dense SQP for smooth maximization with one equality constraint and lower bounds.

Quasi-Newton (damped BFGS) model of the Lagrangian, a primal active-set QP
subproblem and a backtracking line search on the l1 merit function.
"""

import logging
from typing import Callable, Tuple

import numpy as np

from exceptions import ConvergenceFailure, GradientMismatch
from models.nlp import NlpProblem, SolveReport, SolveStatus, SqpOptions

logger = logging.getLogger(__name__)

_BOUND_TOL = 1e-12


def check_gradient(f: Callable[[np.ndarray], float], grad: Callable[[np.ndarray], np.ndarray], x) -> float:
    """Worst componentwise error of ``grad`` against central differences.

    Step is 1e-6 * (1 + |x_i|); the error is scaled by max(1, |grad_i|).
    """
    x = np.asarray(x, dtype=float)
    analytic = np.asarray(grad(x), dtype=float)
    worst = 0.0
    for i in range(x.size):
        h = 1e-6 * (1.0 + abs(x[i]))
        forward, backward = x.copy(), x.copy()
        forward[i] += h
        backward[i] -= h
        numeric = (f(forward) - f(backward)) / (2.0 * h)
        worst = max(worst, abs(numeric - analytic[i]) / max(1.0, abs(analytic[i])))
    return worst


def _feasible_point(a: np.ndarray, b: float, lower: np.ndarray) -> np.ndarray:
    """Some d >= lower with a^T d = b."""
    gap = b - a @ lower
    if gap == 0.0:
        return lower.copy()
    direction = np.maximum(np.sign(gap) * a, 0.0)
    weight = direction @ direction
    if weight == 0.0:
        raise ConvergenceFailure("QP subproblem is infeasible")
    return lower + (abs(gap) / weight) * direction


def _equality_step(B: np.ndarray, grad_q: np.ndarray, a: np.ndarray, free: np.ndarray) -> Tuple[np.ndarray, float]:
    """Minimize the model over the free variables with a^T p = 0; returns (p, multiplier)."""
    n = grad_q.size
    p = np.zeros(n)
    F = np.flatnonzero(free)
    if F.size == 0 or not np.any(a[F]):
        if F.size:
            p[F] = np.linalg.solve(B[np.ix_(F, F)], -grad_q[F])
        weight = a @ a
        return p, float(-(a @ grad_q) / weight) if weight else 0.0

    k = F.size
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = B[np.ix_(F, F)]
    kkt[:k, k] = a[F]
    kkt[k, :k] = a[F]
    rhs = np.concatenate([-grad_q[F], [0.0]])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    p[F] = sol[:k]
    return p, float(sol[k])


def solve_qp(
    B: np.ndarray, g: np.ndarray, a: np.ndarray, b: float, lower: np.ndarray, max_iter: int = 200
) -> Tuple[np.ndarray, float]:
    """Primal active-set solve of min g^T d + d^T B d / 2 s.t. a^T d = b, d >= lower."""
    d = _feasible_point(a, b, lower)
    working = d <= lower + _BOUND_TOL
    multiplier = 0.0
    for _ in range(max_iter):
        grad_q = g + B @ d
        p, multiplier = _equality_step(B, grad_q, a, ~working)
        if np.linalg.norm(p, np.inf) <= 1e-13 * (1.0 + np.linalg.norm(d, np.inf)):
            bound_mult = grad_q + multiplier * a
            if not np.any(working) or np.min(bound_mult[working]) >= -1e-12:
                return d, multiplier
            candidates = np.flatnonzero(working)
            working[candidates[np.argmin(bound_mult[candidates])]] = False
            continue
        alpha, blocking = 1.0, None
        for i in np.flatnonzero(~working & (p < 0)):
            ratio = (lower[i] - d[i]) / p[i]
            if ratio < alpha:
                alpha, blocking = ratio, i
        d = d + alpha * p
        if blocking is not None:
            d[blocking] = lower[blocking]
            working[blocking] = True
    logger.debug("QP active-set loop hit its iteration cap")
    return d, multiplier


def _damped_bfgs(B: np.ndarray, s: np.ndarray, y: np.ndarray, threshold: float) -> np.ndarray:
    Bs = B @ s
    sBs = s @ Bs
    if sBs <= 1e-300:
        return B
    sy = s @ y
    if sy < threshold * sBs:
        damping = (1.0 - threshold) * sBs / (sBs - sy)
        y = damping * y + (1.0 - damping) * Bs
        sy = s @ y
    return B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy


def _kkt_residual(x: np.ndarray, lower: np.ndarray, g: np.ndarray, a: np.ndarray) -> float:
    """First-order residual of the minimization form, multiplier fitted on free variables."""
    at_bound = x - lower <= _BOUND_TOL * (1.0 + np.abs(lower))
    free = ~at_bound
    weight = a[free] @ a[free]
    multiplier = -(a[free] @ g[free]) / weight if weight > 0 else 0.0
    r = g + multiplier * a
    return float(np.max(np.where(at_bound, np.maximum(-r, 0.0), np.abs(r))))


def solve(problem: NlpProblem, x0, opts: SqpOptions = SqpOptions()) -> Tuple[np.ndarray, SolveReport]:
    """Maximize ``problem.objective`` from ``x0``; returns the last iterate and a report."""
    lower = np.asarray(problem.lower_bounds, dtype=float)
    x = np.maximum(np.asarray(x0, dtype=float), lower)
    if x.shape != (problem.dim,):
        raise ValueError(f"x0 must have shape ({problem.dim},)")

    if opts.validate_gradients:
        for name, fn, grad in (
            ("objective", problem.objective, problem.objective_grad),
            ("constraint", problem.eq_constraint, problem.eq_constraint_grad),
        ):
            error = check_gradient(fn, grad, x)
            if error > opts.gradient_tol:
                raise GradientMismatch(f"{name} gradient error {error:.2e} exceeds {opts.gradient_tol:g}")

    f = problem.objective(x)
    g = -np.asarray(problem.objective_grad(x), dtype=float)
    c = problem.eq_constraint(x)
    a = np.asarray(problem.eq_constraint_grad(x), dtype=float)
    B = np.eye(problem.dim)
    scaled = False
    penalty = 1.0
    stall = 0
    status = SolveStatus.MAX_ITER
    iterations = opts.max_iter

    for iteration in range(opts.max_iter):
        if _kkt_residual(x, lower, g, a) <= opts.kkt_tol * (1.0 + abs(f)) and abs(c) <= opts.ctol:
            status, iterations = SolveStatus.CONVERGED, iteration
            break

        try:
            d, multiplier = solve_qp(B, g, a, -c, lower - x)
        except (ConvergenceFailure, np.linalg.LinAlgError) as exc:
            logger.debug("QP failed at iteration %d: %s", iteration, exc)
            B, stall = np.eye(problem.dim), stall + 1
            if stall >= opts.stall_limit:
                status, iterations = SolveStatus.STALLED, iteration
                break
            continue

        penalty = max(penalty, opts.penalty_margin * abs(multiplier))
        merit = -f + penalty * abs(c)
        slope = g @ d - penalty * abs(c)

        alpha, accepted = 1.0, False
        for _ in range(opts.max_backtracks):
            trial = np.maximum(x + alpha * d, lower)
            f_trial, c_trial = problem.objective(trial), problem.eq_constraint(trial)
            merit_trial = -f_trial + penalty * abs(c_trial)
            if merit_trial <= merit + opts.armijo * alpha * min(slope, 0.0):
                accepted = True
                break
            alpha *= opts.backtrack

        if not accepted:
            logger.debug("line search failed at iteration %d, resetting the Hessian model", iteration)
            B, stall = np.eye(problem.dim), stall + 1
            if stall >= opts.stall_limit:
                status, iterations = SolveStatus.STALLED, iteration + 1
                break
            continue

        g_trial = -np.asarray(problem.objective_grad(trial), dtype=float)
        a_trial = np.asarray(problem.eq_constraint_grad(trial), dtype=float)
        s = trial - x
        y = (g_trial + multiplier * a_trial) - (g + multiplier * a)
        if not scaled and s @ y > 0:
            B = np.eye(problem.dim) * ((y @ y) / (s @ y))
            scaled = True
        B = _damped_bfgs(B, s, y, opts.damping_threshold)

        stall = stall + 1 if merit - merit_trial <= 1e-15 * max(1.0, abs(merit)) else 0
        x, f, g, c, a = trial, f_trial, g_trial, c_trial, a_trial
        logger.debug("iteration %d: f=%.12g |c|=%.2e step=%.3g", iteration, f, abs(c), alpha)
        if stall >= opts.stall_limit:
            status, iterations = SolveStatus.STALLED, iteration + 1
            break

    report = SolveReport(
        iterations=iterations,
        kkt_residual=_kkt_residual(x, lower, g, a),
        constraint_residual=float(abs(c)),
        status=status,
        objective_value=float(f),
    )
    return x, report
