# services/samat_service.py
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import List, Optional, Tuple

import numpy as np
from scipy import optimize

from exceptions import DimMismatch, DivisionByZero, InfeasibleStart
from models.nlp import NlpProblem, SolveReport, SolveStatus
from models.power import (
    N_POWERS,
    DeltaTerms,
    PowerAllocation,
    PowerOptions,
    RateCoefficients,
    RateEstimate,
    SamatRateApprox,
)
from models.precoder import SamatCase, SamatPrecoders
from services.amat_service import theta
from services.channel_service import hermitian_sqrt_pair, log2det_eye_plus, run_monte_carlo
from services.correlation_service import as_matrix, eig_hermitian, generalized_eig, quadratic_form
from utils import sqp_solver

logger = logging.getLogger(__name__)

_LN2 = math.log(2.0)
# P5 and P8 scale retransmissions and stay O(1); the other eight powers scale with the budget
_UNIT_SCALED = (4, 7)


def _powers(P) -> np.ndarray:
    if isinstance(P, PowerAllocation):
        return P.p
    p = np.asarray(P, dtype=float)
    if p.shape != (N_POWERS,):
        raise ValueError(f"expected {N_POWERS} powers, got shape {p.shape}")
    return p


def coefficients(pre: SamatPrecoders, R_A, R_B) -> RateCoefficients:
    R_A, R_B = as_matrix(R_A), as_matrix(R_B)
    if R_A.shape != R_B.shape or pre.dim != R_A.shape[0]:
        raise DimMismatch(f"precoders are {pre.dim}-dimensional, covariances {R_A.shape}")
    w1, w2 = pre.W[:, 0], pre.W[:, 1]
    q1, q2 = pre.Q[:, 0], pre.Q[:, 1]
    return RateCoefficients(
        lamA1=quadratic_form(R_A, q1),
        lamA2=quadratic_form(R_A, q2),
        lamA3=quadratic_form(R_A, pre.q3),
        lamB1=quadratic_form(R_B, w1),
        lamB2=quadratic_form(R_B, w2),
        lamB3=quadratic_form(R_B, pre.w3),
        tauA1=quadratic_form(R_A, w1),
        tauA2=quadratic_form(R_A, w2),
        tauA3=quadratic_form(R_A, pre.w3),
        tauB1=quadratic_form(R_B, q1),
        tauB2=quadratic_form(R_B, q2),
        tauB3=quadratic_form(R_B, pre.q3),
        thetaA=theta(pre.W, R_A, R_B),
        thetaB=theta(pre.Q, R_A, R_B),
    )


def power_constraint(P, c: RateCoefficients) -> float:
    """Long-term three-slot transmit power."""
    p1, p2, p3, p4, p5, p6, p7, p8, p9, p10 = _powers(P)
    linear = p1 + p2 + p3 + p4 + p6 + p7 + p9 + p10
    return float(linear + p5 * (c.lamA1 * p3 + c.lamA2 * p4) + p8 * (c.lamB1 * p1 + c.lamB2 * p2))


def power_constraint_gradient(P, c: RateCoefficients) -> np.ndarray:
    p1, p2, p3, p4, p5, p6, p7, p8, p9, p10 = _powers(P)
    grad = np.ones(N_POWERS)
    grad[0] += p8 * c.lamB1
    grad[1] += p8 * c.lamB2
    grad[2] += p5 * c.lamA1
    grad[3] += p5 * c.lamA2
    grad[4] = c.lamA1 * p3 + c.lamA2 * p4
    grad[7] = c.lamB1 * p1 + c.lamB2 * p2
    return grad


def delta_terms(P, c: RateCoefficients) -> DeltaTerms:
    p1, p2, p3, p4, p5, p6, p7, p8, p9, p10 = _powers(P)
    return DeltaTerms(
        delta_A1=1.0 / (1.0 + c.lamA1 * p3 + c.lamA2 * p4) + p5 / (1.0 + p5 + c.tauA3 * p6 + c.lamA3 * p7),
        delta_A2=p8 / (1.0 + c.tauA3 * p9 + c.lamA3 * p10),
        delta_B1=1.0 / (1.0 + c.lamB1 * p1 + c.lamB2 * p2) + p8 / (1.0 + p8 + c.lamB3 * p9 + c.tauB3 * p10),
        delta_B2=p5 / (1.0 + c.lamB3 * p6 + c.tauB3 * p7),
    )


def _rate_model(p: np.ndarray, c: RateCoefficients) -> Tuple[SamatRateApprox, np.ndarray]:
    """Rate approximation and the gradient of its per-slot sum with respect to P1..P10."""
    p1, p2, p3, p4, p5, p6, p7, p8, p9, p10 = p

    dA1a = 1.0 + c.lamA1 * p3 + c.lamA2 * p4
    dA1b = 1.0 + p5 + c.tauA3 * p6 + c.lamA3 * p7
    dB1a = 1.0 + c.lamB1 * p1 + c.lamB2 * p2
    dB1b = 1.0 + p8 + c.lamB3 * p9 + c.tauB3 * p10
    dA2 = 1.0 + c.tauA3 * p9 + c.lamA3 * p10
    dB2 = 1.0 + c.lamB3 * p6 + c.tauB3 * p7
    dl_A1 = 1.0 / dA1a + p5 / dA1b
    dl_A2 = p8 / dA2
    dl_B1 = 1.0 / dB1a + p8 / dB1b
    dl_B2 = p5 / dB2

    g_A1 = np.zeros(N_POWERS)
    g_A1[2] = -c.lamA1 / dA1a**2
    g_A1[3] = -c.lamA2 / dA1a**2
    g_A1[4] = 1.0 / dA1b - p5 / dA1b**2
    g_A1[5] = -p5 * c.tauA3 / dA1b**2
    g_A1[6] = -p5 * c.lamA3 / dA1b**2
    g_A2 = np.zeros(N_POWERS)
    g_A2[7] = 1.0 / dA2
    g_A2[8] = -p8 * c.tauA3 / dA2**2
    g_A2[9] = -p8 * c.lamA3 / dA2**2
    g_B1 = np.zeros(N_POWERS)
    g_B1[0] = -c.lamB1 / dB1a**2
    g_B1[1] = -c.lamB2 / dB1a**2
    g_B1[7] = 1.0 / dB1b - p8 / dB1b**2
    g_B1[8] = -p8 * c.lamB3 / dB1b**2
    g_B1[9] = -p8 * c.tauB3 / dB1b**2
    g_B2 = np.zeros(N_POWERS)
    g_B2[4] = 1.0 / dB2
    g_B2[5] = -p5 * c.lamB3 / dB2**2
    g_B2[6] = -p5 * c.tauB3 / dB2**2

    # user A, slot-1 symbols
    sig_A = c.tauA1 * p1 + c.tauA2 * p2
    leak_A = c.lamB1 * p1 + c.lamB2 * p2
    cross_A = c.thetaA * p1 * p2
    x_A = 1.0 + dl_A1 * sig_A + dl_A2 * leak_A + dl_A1 * dl_A2 * cross_A
    g_xA = g_A1 * (sig_A + dl_A2 * cross_A) + g_A2 * (leak_A + dl_A1 * cross_A)
    g_xA[0] += dl_A1 * c.tauA1 + dl_A2 * c.lamB1 + dl_A1 * dl_A2 * c.thetaA * p2
    g_xA[1] += dl_A1 * c.tauA2 + dl_A2 * c.lamB2 + dl_A1 * dl_A2 * c.thetaA * p1

    # user B, slot-1 symbols
    sig_B = c.tauB1 * p3 + c.tauB2 * p4
    leak_B = c.lamA1 * p3 + c.lamA2 * p4
    cross_B = c.thetaB * p3 * p4
    x_B = 1.0 + dl_B1 * sig_B + dl_B2 * leak_B + dl_B1 * dl_B2 * cross_B
    g_xB = g_B1 * (sig_B + dl_B2 * cross_B) + g_B2 * (leak_B + dl_B1 * cross_B)
    g_xB[2] += dl_B1 * c.tauB1 + dl_B2 * c.lamA1 + dl_B1 * dl_B2 * c.thetaB * p4
    g_xB[3] += dl_B1 * c.tauB2 + dl_B2 * c.lamA2 + dl_B1 * dl_B2 * c.thetaB * p3

    # extra symbols: log2(1 + S / D) = log2(D + S) - log2(D), D and S linear in P
    def extra(den_terms, sig_index, sig_coef):
        g_den = np.zeros(N_POWERS)
        den = 1.0
        for index, coef in den_terms:
            den += coef * p[index]
            g_den[index] += coef
        g_num = g_den.copy()
        g_num[sig_index] += sig_coef
        num = den + sig_coef * p[sig_index]
        return math.log2(num / den), (g_num / num - g_den / den) / _LN2

    spA_2, g_spA_2 = extra(((4, 1.0), (6, c.lamA3)), 5, c.tauA3)
    spA_3, g_spA_3 = extra(((9, c.lamA3),), 8, c.tauA3)
    spB_2, g_spB_2 = extra(((5, c.lamB3),), 6, c.tauB3)
    spB_3, g_spB_3 = extra(((7, 1.0), (8, c.lamB3)), 9, c.tauB3)

    r_sA = math.log2(x_A)
    r_sB = math.log2(x_B)
    r_spA = spA_2 + spA_3
    r_spB = spB_2 + spB_3
    values = SamatRateApprox(
        r_sum=(r_sA + r_spA + r_sB + r_spB) / 3.0, r_sA=r_sA, r_spA=r_spA, r_sB=r_sB, r_spB=r_spB
    )
    grad = (g_xA / (x_A * _LN2) + g_xB / (x_B * _LN2) + g_spA_2 + g_spA_3 + g_spB_2 + g_spB_3) / 3.0
    return values, grad


def rate_approx_samat(P, c: RateCoefficients) -> SamatRateApprox:
    return _rate_model(_powers(P), c)[0]


def rate_approx_gradient(P, c: RateCoefficients) -> np.ndarray:
    """Gradient of the per-slot sum-rate approximation."""
    return _rate_model(_powers(P), c)[1]


def case_precoders(kind: SamatCase, R_A, R_B) -> SamatPrecoders:
    """Case 1 bridges weakest-eigenvector SBF and AMAT, case 2 the generalized-eigenvector SBF."""
    if kind == SamatCase.CASE1:
        eig_A, eig_B = eig_hermitian(R_A), eig_hermitian(R_B)
        return SamatPrecoders(
            W=np.column_stack([eig_B.u_max, eig_B.u_min]),
            Q=np.column_stack([eig_A.u_max, eig_A.u_min]),
            w3=eig_B.u_min,
            q3=eig_A.u_min,
        )
    if kind == SamatCase.CASE2:
        pencil_W, pencil_Q = generalized_eig(R_A, R_B), generalized_eig(R_B, R_A)
        return SamatPrecoders(
            W=np.column_stack([pencil_W.u_min, pencil_W.u_max]),
            Q=np.column_stack([pencil_Q.u_min, pencil_Q.u_max]),
            w3=pencil_W.u_max,
            q3=pencil_Q.u_max,
        )
    raise ValueError(f"unknown SAMAT case {kind}")


def kkt_ratio_residual(P, c: RateCoefficients) -> Tuple[float, float]:
    """Relative deviation of P1/P2 and P3/P4 from their stationarity ratios."""
    p1, p2, p3, p4, p5, _, _, p8, _, _ = _powers(P)
    if min(p1, p2, p3, p4) <= 0.0:
        raise DivisionByZero("P1..P4 must be positive to form the power ratios")
    ratio_12, ratio_34 = p1 / p2, p3 / p4
    target_12 = (1.0 + c.lamB2 * p8) / (1.0 + c.lamB1 * p8)
    target_34 = (1.0 + c.lamA2 * p5) / (1.0 + c.lamA1 * p5)
    return abs(ratio_12 - target_12) / ratio_12, abs(ratio_34 - target_34) / ratio_34


def amat_preset(rho: float) -> PowerAllocation:
    return PowerAllocation.from_values(P1=rho, P2=rho, P3=rho, P4=rho, P5=1.0, P8=1.0)


def sbf_preset(P_budget: float) -> PowerAllocation:
    """Standalone SBF power P/2 per user in every slot."""
    half = P_budget / 2.0
    return PowerAllocation.from_values(P2=half, P4=half, P6=half, P7=half, P9=half, P10=half)


def rescale_to_budget(P, c: RateCoefficients, budget: float) -> PowerAllocation:
    """Scale all powers by one factor, found by bisection, so the constraint equals ``budget``."""
    p = _powers(P)
    if np.any(p < 0) or power_constraint(p, c) <= 0.0:
        raise InfeasibleStart("allocation carries no constrained power and cannot be rescaled")

    def excess(s: float) -> float:
        return power_constraint(s * p, c) - budget

    upper = 1.0
    while excess(upper) < 0.0:
        upper *= 2.0
        if upper > 1e300:
            raise InfeasibleStart("could not bracket the budget")
    scale = optimize.bisect(excess, 0.0, upper, xtol=1e-15 * upper, rtol=1e-15, maxiter=400)
    return PowerAllocation(scale * p)


def uniform_preset(c: RateCoefficients, P_budget: float) -> PowerAllocation:
    return rescale_to_budget(np.ones(N_POWERS), c, 3.0 * P_budget)


def kkt_ratio_allocation(c: RateCoefficients, P_budget: float) -> PowerAllocation:
    """Closed-form allocation meeting the stationarity ratios with P5 = P8 = 1.

    Both users get the same slot-1 power P1 + P2 = P3 + P4; extra symbols are off.
    """
    ratio_12 = (1.0 + c.lamB2) / (1.0 + c.lamB1)
    ratio_34 = (1.0 + c.lamA2) / (1.0 + c.lamA1)
    share_1, share_3 = ratio_12 / (1.0 + ratio_12), ratio_34 / (1.0 + ratio_34)
    # constraint per unit of per-user slot-1 power
    per_unit = 2.0 + (c.lamA1 * share_3 + c.lamA2 * (1.0 - share_3)) + (c.lamB1 * share_1 + c.lamB2 * (1.0 - share_1))
    total = 3.0 * P_budget / per_unit
    return PowerAllocation.from_values(
        P1=total * share_1, P2=total * (1.0 - share_1), P3=total * share_3, P4=total * (1.0 - share_3), P5=1.0, P8=1.0
    )


def _power_problem(c: RateCoefficients, P_budget: float) -> Tuple[NlpProblem, np.ndarray]:
    budget = 3.0 * P_budget
    scale = np.full(N_POWERS, P_budget)
    scale[list(_UNIT_SCALED)] = 1.0

    problem = NlpProblem(
        dim=N_POWERS,
        objective=lambda z: _rate_model(scale * z, c)[0].r_sum,
        objective_grad=lambda z: scale * _rate_model(scale * z, c)[1],
        eq_constraint=lambda z: (power_constraint(scale * z, c) - budget) / budget,
        eq_constraint_grad=lambda z: scale * power_constraint_gradient(scale * z, c) / budget,
        lower_bounds=np.zeros(N_POWERS),
    )
    return problem, scale


def _start_points(c: RateCoefficients, P_budget: float, opts: PowerOptions) -> List[PowerAllocation]:
    budget = 3.0 * P_budget
    seeds = [amat_preset(3.0 * P_budget / 8.0).p, sbf_preset(P_budget).p, np.ones(N_POWERS)]
    for k in range(opts.random_starts):
        rng = np.random.default_rng([opts.seed, k])
        draw = rng.uniform(0.0, 1.0, N_POWERS)
        draw[[i for i in range(N_POWERS) if i not in _UNIT_SCALED]] *= P_budget
        seeds.append(draw)
    starts = []
    for index, p in enumerate(seeds):
        try:
            starts.append(rescale_to_budget(p, c, budget))
        except InfeasibleStart as exc:
            logger.warning("dropping start %d: %s", index, exc)
    return starts


def optimize_power(
    c: RateCoefficients, P_budget: float, opts: Optional[PowerOptions] = None
) -> Tuple[PowerAllocation, SolveReport]:
    """Multi-start SQP maximization of the rate approximation on the power constraint surface."""
    if P_budget <= 0:
        raise ValueError("P_budget must be positive")
    opts = opts or PowerOptions()
    budget = 3.0 * P_budget
    problem, scale = _power_problem(c, P_budget)
    starts = _start_points(c, P_budget, opts)
    if not starts:
        raise InfeasibleStart("no feasible start point")

    def run(start: PowerAllocation):
        z, report = sqp_solver.solve(problem, start.p / scale, opts.sqp)
        p = np.maximum(scale * z, 0.0)
        if abs(power_constraint(p, c) - budget) > opts.sqp.ctol * budget:
            logger.warning("start ended off the constraint surface (%s), rescaling", report.status.value)
            p = rescale_to_budget(p, c, budget).p
        return PowerAllocation(p), report

    if opts.workers > 1:
        with ThreadPoolExecutor(max_workers=opts.workers) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(start) for start in starts]

    best_alloc, best_report, best_value = None, None, -np.inf
    for start, (alloc, report) in zip(starts, results):
        for candidate in (alloc, start):
            value = rate_approx_samat(candidate, c).r_sum
            if value > best_value:
                best_alloc, best_report, best_value = candidate, report, value
    logger.debug("power optimizer: best objective %.10g over %d starts", best_value, len(starts))
    if best_report.status != SolveStatus.CONVERGED:
        logger.warning("power optimizer best start finished with status %s", best_report.status.value)
    report = replace(
        best_report,
        objective_value=best_value,
        constraint_residual=abs(power_constraint(best_alloc, c) - budget),
    )
    return best_alloc, report


def samat_rate_samples(triple, pre: SamatPrecoders, P: PowerAllocation) -> np.ndarray:
    """Per-trial (1/3) * (both users' MMSE-SIC rates plus both extra-symbol rates)."""
    p1, p2, p3, p4, p5, p6, p7, p8, p9, p10 = P.p
    w1, w2 = pre.W[:, 0], pre.W[:, 1]
    q1, q2 = pre.Q[:, 0], pre.Q[:, 1]

    def gain(channel, vector):
        return np.abs(channel.conj() @ vector) ** 2

    # user A
    h21, h31 = triple.h2[:, 0], triple.h3[:, 0]
    hW, gW = triple.h1.conj() @ pre.W, triple.g1.conj() @ pre.W
    rows_A = np.stack(
        [hW, -math.sqrt(p5) * h21.conj()[:, None] * hW, math.sqrt(p8) * h31.conj()[:, None] * gW], axis=1
    )
    k_A = np.column_stack(
        [
            1.0 + p3 * gain(triple.h1, q1) + p4 * gain(triple.h1, q2),
            1.0 + p5 * np.abs(h21) ** 2 + p6 * gain(triple.h2, pre.w3) + p7 * gain(triple.h2, pre.q3),
            1.0 + p9 * gain(triple.h3, pre.w3) + p10 * gain(triple.h3, pre.q3),
        ]
    )
    rows_A = rows_A * np.sqrt([p1, p2])[None, None, :]
    r_sA = log2det_eye_plus(np.einsum("nr,nri,nrj->nij", 1.0 / k_A, rows_A.conj(), rows_A))
    r_spA = np.log2(
        1.0 + p6 * gain(triple.h2, pre.w3) / (1.0 + p5 * np.abs(h21) ** 2 + p7 * gain(triple.h2, pre.q3))
    ) + np.log2(1.0 + p9 * gain(triple.h3, pre.w3) / (1.0 + p10 * gain(triple.h3, pre.q3)))

    # user B
    g21, g31 = triple.g2[:, 0], triple.g3[:, 0]
    hQ, gQ = triple.h1.conj() @ pre.Q, triple.g1.conj() @ pre.Q
    rows_B = np.stack(
        [gQ, math.sqrt(p5) * g21.conj()[:, None] * hQ, -math.sqrt(p8) * g31.conj()[:, None] * gQ], axis=1
    )
    k_B = np.column_stack(
        [
            1.0 + p1 * gain(triple.g1, w1) + p2 * gain(triple.g1, w2),
            1.0 + p6 * gain(triple.g2, pre.w3) + p7 * gain(triple.g2, pre.q3),
            1.0 + p8 * np.abs(g31) ** 2 + p9 * gain(triple.g3, pre.w3) + p10 * gain(triple.g3, pre.q3),
        ]
    )
    rows_B = rows_B * np.sqrt([p3, p4])[None, None, :]
    r_sB = log2det_eye_plus(np.einsum("nr,nri,nrj->nij", 1.0 / k_B, rows_B.conj(), rows_B))
    r_spB = np.log2(1.0 + p7 * gain(triple.g2, pre.q3) / (1.0 + p6 * gain(triple.g2, pre.w3))) + np.log2(
        1.0 + p10 * gain(triple.g3, pre.q3) / (1.0 + p8 * np.abs(g31) ** 2 + p9 * gain(triple.g3, pre.w3))
    )

    return (r_sA + r_spA + r_sB + r_spB) / 3.0


def mc_rate_samat(
    R_A, R_B, pre: SamatPrecoders, P: PowerAllocation, trials: int, seed: int, workers: int = 1
) -> RateEstimate:
    sqrtA, sqrtB = hermitian_sqrt_pair(R_A, R_B)
    if pre.dim != sqrtA.shape[0]:
        raise DimMismatch("precoder and covariance dimensions differ")
    return run_monte_carlo(lambda t: samat_rate_samples(t, pre, P), sqrtA, sqrtB, trials, seed, workers)
