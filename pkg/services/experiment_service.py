# services/experiment_service.py
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from exceptions import SamatError, ScenarioConfigError
from models.power import PowerAllocation, PowerOptions, RateEstimate
from models.precoder import AmatPreset, GradientStepOptions, SamatCase, SamatPrecoders, UpdateMethod
from models.scenario import PhasePolicy, SamatSelection, Scenario, Scheme, Sweep
from services.amat_service import (
    EULER_GAMMA,
    amat_precoder_preset,
    equal_power,
    mc_rate_amat,
    optimize_amat_precoders,
    optimize_precoders,
    random_unitary_columns,
    rate_approx_amat,
    theta,
)
from services.channel_service import sample_channels
from services.correlation_service import (
    as_matrix,
    exp_correlation,
    generalized_condition_number,
    hermitian_sqrt,
    quadratic_form,
    random_correlation,
)
from services.samat_service import (
    amat_preset,
    case_precoders,
    coefficients,
    kkt_ratio_allocation,
    kkt_ratio_residual,
    mc_rate_samat,
    optimize_power,
    power_constraint,
    power_constraint_gradient,
    rate_approx_gradient,
    rate_approx_samat,
    sbf_preset,
)
from services.sbf_service import ge_precoders, mc_rate_sbf, sum_rate_lower_bound, we_precoders
from utils.sqp_solver import check_gradient

logger = logging.getLogger(__name__)

POWER_COLUMNS = [f"P{k}" for k in range(1, 11)]
CSV_COLUMNS = [
    "scheme",
    "M",
    "t_mag_A",
    "t_mag_B",
    "phase_A",
    "phase_B",
    "snr_db",
    "mean_bits",
    "stderr",
    "trials",
    "seed",
] + POWER_COLUMNS
RESULT_COLUMNS = CSV_COLUMNS + ["approx_bits", "status"]

_PHASE_STREAM = 0x5048
_PILOT_STREAM = 0x50494C
_MAX_PHASE_DRAWS = 100_000


@dataclass(frozen=True)
class GridCell:
    index: int
    t_mag_A: float
    t_mag_B: float
    snr_db: float


@dataclass(frozen=True)
class Lemma1Result:
    mc_mean: float
    closed_form: float
    gap: float


@dataclass(frozen=True)
class Lemma2Spec:
    """Ratio x / y of affine combinations of |h^H v|^2 with h ~ CN(0, R).

    ``y_independent`` draws the denominator from a second, independent channel.
    """

    R: np.ndarray
    x_offset: float = 0.0
    x_terms: Tuple[Tuple[float, np.ndarray], ...] = ()
    y_offset: float = 1.0
    y_terms: Tuple[Tuple[float, np.ndarray], ...] = ()
    y_independent: bool = False


@dataclass(frozen=True)
class Lemma2Result:
    mc_ratio_mean: float
    first_order: float
    gap: float


def snr_to_power(snr_db: float) -> float:
    return 10.0 ** (snr_db / 10.0)


def derive_seed(master_seed: int, *keys: int) -> int:
    """Independent 64-bit seed for a (master, keys...) path."""
    return int(np.random.SeedSequence([master_seed, *keys]).generate_state(1, np.uint64)[0])


def grid_cells(s: Scenario) -> List[GridCell]:
    if s.sweep == Sweep.T:
        pairs = [(t, t, snr) for t in s.t_grid for snr in s.snr_grid_db]
    else:
        pairs = [(s.t_mag_A, s.t_mag_B, snr) for snr in s.snr_grid_db]
    return [GridCell(i, a, b, snr) for i, (a, b, snr) in enumerate(pairs)]


def draw_phases(s: Scenario, cell_index: int) -> Tuple[float, float]:
    if s.phase_policy == PhasePolicy.FIXED:
        return s.phase_A, s.phase_B
    rng = np.random.default_rng([s.master_seed, cell_index, _PHASE_STREAM])
    for _ in range(_MAX_PHASE_DRAWS):
        phase_A, phase_B = rng.uniform(0.0, 2.0 * math.pi, 2)
        if s.phase_policy == PhasePolicy.RANDOM_UNIFORM:
            return float(phase_A), float(phase_B)
        gap = abs(phase_A - phase_B)
        if min(gap, 2.0 * math.pi - gap) >= s.min_gap:
            return float(phase_A), float(phase_B)
    raise ScenarioConfigError(f"no phase pair with gap >= {s.min_gap} found")


def _pick_by_pilot(
    R_A, R_B, pre: SamatPrecoders, candidates: Sequence[PowerAllocation], trials: int, seed: int
) -> PowerAllocation:
    """Best candidate on an independent pilot Monte Carlo stream."""
    pilot_trials = max(1000, trials // 4)
    pilot_seed = derive_seed(seed, _PILOT_STREAM)
    scores = [mc_rate_samat(R_A, R_B, pre, alloc, pilot_trials, pilot_seed).mean_bits for alloc in candidates]
    return candidates[int(np.argmax(scores))]


def evaluate_scheme(
    scheme: Scheme,
    R_A,
    R_B,
    M: int,
    snr_db: float,
    trials: int,
    seed: int,
    selection: SamatSelection = SamatSelection.MC,
) -> Tuple[RateEstimate, Optional[PowerAllocation], float]:
    """Monte Carlo rate, SAMAT power allocation (if any) and closed-form estimate for one scheme."""
    P = snr_to_power(snr_db)

    if scheme in (Scheme.SBF_WE, Scheme.SBF_GE):
        pre = we_precoders(R_A, R_B) if scheme == Scheme.SBF_WE else ge_precoders(R_A, R_B)
        return mc_rate_sbf(R_A, R_B, pre, P, trials, seed), None, sum_rate_lower_bound(R_A, R_B, pre)

    if scheme.value.startswith("AMAT"):
        if scheme == Scheme.AMAT_OPT:
            pre, _ = optimize_amat_precoders(R_A, R_B, seed=seed % 2**32)
        else:
            pre = amat_precoder_preset(AmatPreset(scheme.value.split("-")[1]), R_A, R_B, seed=seed % 2**32)
        rho = equal_power(P, M)
        approx = rate_approx_amat(rho, theta(pre.W, R_A, R_B)) + rate_approx_amat(rho, theta(pre.Q, R_A, R_B))
        return mc_rate_amat(R_A, R_B, pre, rho, trials, seed), None, approx

    case = SamatCase.CASE1 if scheme == Scheme.SAMAT_CASE1 else SamatCase.CASE2
    pre = case_precoders(case, R_A, R_B)
    c = coefficients(pre, R_A, R_B)
    if scheme == Scheme.SAMAT_CASE2_KKT:
        alloc = kkt_ratio_allocation(c, P)
    else:
        alloc, report = optimize_power(c, P, PowerOptions(seed=seed % 2**32))
        logger.debug("%s power optimizer: %s", scheme.value, report.as_dict())
        if selection == SamatSelection.MC:
            candidates = [alloc, amat_preset(equal_power(P, M)), sbf_preset(P)]
            alloc = _pick_by_pilot(R_A, R_B, pre, candidates, trials, seed)
    approx = rate_approx_samat(alloc, c).r_sum
    return mc_rate_samat(R_A, R_B, pre, alloc, trials, seed), alloc, approx


def _run_cell(s: Scenario, cell: GridCell) -> List[dict]:
    phase_A, phase_B = draw_phases(s, cell.index)
    seed = derive_seed(s.master_seed, cell.index)
    base = {
        "M": s.M,
        "t_mag_A": cell.t_mag_A,
        "t_mag_B": cell.t_mag_B,
        "phase_A": phase_A,
        "phase_B": phase_B,
        "snr_db": cell.snr_db,
        "trials": s.trials,
        "seed": seed,
    }
    rows = []
    try:
        R_A = exp_correlation(cell.t_mag_A, phase_A, s.M)
        R_B = exp_correlation(cell.t_mag_B, phase_B, s.M)
    except SamatError as exc:
        logger.warning("cell %d: covariance construction failed: %s", cell.index, exc)
        return [{"scheme": scheme.value, **base, "status": f"failed: {exc}"} for scheme in s.schemes]

    for scheme in s.schemes:
        row = {"scheme": scheme.value, **base}
        try:
            estimate, alloc, approx = evaluate_scheme(
                scheme, R_A, R_B, s.M, cell.snr_db, s.trials, seed, s.samat_selection
            )
            row.update(mean_bits=estimate.mean_bits, stderr=estimate.stderr, approx_bits=approx, status="ok")
            if alloc is not None:
                row.update(alloc.as_dict())
        except (SamatError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            logger.warning("cell %d, scheme %s failed: %s", cell.index, scheme.value, exc)
            row["status"] = f"failed: {exc}"
        rows.append(row)
    logger.info("cell %d done (t=%.3g/%.3g, snr=%g dB)", cell.index, cell.t_mag_A, cell.t_mag_B, cell.snr_db)
    return rows


def run_scenario(s: Scenario, workers: int = 1) -> pd.DataFrame:
    """One row per (grid cell, scheme); deterministic for a given master seed."""
    cells = grid_cells(s)
    logger.info("scenario: %d cells x %d schemes, %d trials", len(cells), len(s.schemes), s.trials)
    if not s.schemes:
        return pd.DataFrame(columns=RESULT_COLUMNS)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_cell = list(pool.map(lambda cell: _run_cell(s, cell), cells))
    else:
        per_cell = [_run_cell(s, cell) for cell in cells]
    table = pd.DataFrame([row for rows in per_cell for row in rows])
    return table.reindex(columns=RESULT_COLUMNS)


def lemma1_oracle(R, w: np.ndarray, trials: int, seed: int) -> Lemma1Result:
    """E[ln |h^H w|^2] by Monte Carlo against ln(w^H R w) - gamma."""
    if trials < 100_000:
        raise ValueError("the log-moment oracle needs at least 1e5 trials")
    w = np.asarray(w, dtype=complex)
    sqrtR = hermitian_sqrt(R)
    h = sample_channels(sqrtR, trials, seed)
    mc_mean = float(np.mean(np.log(np.abs(h.conj() @ w) ** 2)))
    closed_form = math.log(quadratic_form(R, w)) - EULER_GAMMA
    return Lemma1Result(mc_mean=mc_mean, closed_form=closed_form, gap=abs(mc_mean - closed_form))


def lemma2_oracle(spec: Lemma2Spec, trials: int, seed: int) -> Lemma2Result:
    """E[x / y] by Monte Carlo against the first-order value E[x] / E[y]."""
    R = as_matrix(spec.R)

    def mean_of(offset, terms):
        return offset + sum(coef * np.real(np.vdot(v, R @ v)) for coef, v in terms)

    mu_x, mu_y = mean_of(spec.x_offset, spec.x_terms), mean_of(spec.y_offset, spec.y_terms)
    if mu_y <= 1e-12:
        raise ValueError("denominator mean must be bounded away from zero")

    sqrtR = hermitian_sqrt(R)
    h = sample_channels(sqrtR, trials, seed, stream=0)
    g = sample_channels(sqrtR, trials, seed, stream=1) if spec.y_independent else h

    def draw(channel, offset, terms):
        return offset + sum(coef * np.abs(channel.conj() @ v) ** 2 for coef, v in terms)

    ratio = draw(h, spec.x_offset, spec.x_terms) / draw(g, spec.y_offset, spec.y_terms)
    mc_ratio_mean = float(np.mean(ratio))
    first_order = float(mu_x / mu_y)
    return Lemma2Result(mc_ratio_mean=mc_ratio_mean, first_order=first_order, gap=abs(mc_ratio_mean - first_order))


def delta_a1_lemma2_spec(pre: SamatPrecoders, R_A, P: PowerAllocation) -> Lemma2Spec:
    """The second term of delta_A1 as an exact ratio over user A's slot-2 channel."""
    e1 = np.zeros(pre.dim, dtype=complex)
    e1[0] = 1.0
    return Lemma2Spec(
        R=as_matrix(R_A),
        x_terms=((P[5], e1),),
        y_offset=1.0,
        y_terms=((P[5], e1), (P[6], pre.w3), (P[7], pre.q3)),
    )


def _check(rows: List[dict], name: str, value: float, threshold: float, passed: bool) -> None:
    rows.append({"check": name, "value": float(value), "threshold": float(threshold), "passed": bool(passed)})
    if not passed:
        logger.warning("validation check %s failed: %.3e (threshold %.3e)", name, value, threshold)


def validate_suite(trials: Optional[int] = None, seed: int = 0) -> pd.DataFrame:
    """Closed-form identities and moment oracles as a table of named checks."""
    trials = trials or 1_000_000
    rows: List[dict] = []

    for k in range(10):
        M = 2 if k < 5 else 4
        R = random_correlation(M, derive_seed(seed, 1, k))
        w = np.random.default_rng(derive_seed(seed, 2, k)).standard_normal((M, 2)) @ np.array([1.0, 1j])
        w = w / np.linalg.norm(w)
        result = lemma1_oracle(R, w, max(trials, 100_000), derive_seed(seed, 3, k))
        _check(rows, f"log_moment_oracle[{k}]", result.gap, 0.01, result.gap < 0.01)

    bound_err, chi_err = 0.0, 0.0
    for k in range(100):
        M = (2, 3, 4, 8)[k % 4]
        R_A, R_B = random_correlation(M, derive_seed(seed, 4, k)), random_correlation(M, derive_seed(seed, 5, k))
        chi_ab, chi_ba = generalized_condition_number(R_A, R_B), generalized_condition_number(R_B, R_A)
        bound_err = max(bound_err, abs(sum_rate_lower_bound(R_A, R_B, ge_precoders(R_A, R_B)) - math.log2(chi_ab)))
        chi_err = max(chi_err, abs(chi_ab - chi_ba) / chi_ab)
    _check(rows, "ge_bound_equals_log2_condition", bound_err, 1e-9, bound_err < 1e-9)
    _check(rows, "pencil_condition_symmetry", chi_err, 1e-9, chi_err < 1e-9)

    R_A, R_B = random_correlation(2, derive_seed(seed, 6)), random_correlation(2, derive_seed(seed, 7))
    expected = (np.trace(R_A.entries) * np.trace(R_B.entries) - np.trace(R_A.entries @ R_B.entries)).real
    values = [theta(random_unitary_columns(2, derive_seed(seed, 8, k)), R_A, R_B) for k in range(100)]
    _check(rows, "two_antenna_theta_spread", max(values) - min(values), 1e-9, max(values) - min(values) < 1e-9)
    _check(rows, "two_antenna_theta_value", abs(values[0] - expected), 1e-10, abs(values[0] - expected) < 1e-10)

    worst = 0.0
    for t_mag in np.linspace(0.0, 0.95, 5):
        for gap in np.linspace(0.0, math.pi, 5):
            R_A, R_B = exp_correlation(t_mag, 0.0, 2), exp_correlation(t_mag, gap, 2)
            closed = 2.0 * (1.0 - t_mag**2 * math.cos(gap))
            worst = max(worst, abs(theta(np.eye(2, dtype=complex), R_A, R_B) - closed))
    _check(rows, "exponential_model_theta", worst, 1e-10, worst < 1e-10)

    traces = converge_traces(dims=(4, 8), instances=20, seed=seed, methods=(UpdateMethod.MAX_EIG,))
    iterations = traces.groupby(["M", "instance"])["iteration"].max().max()
    _check(rows, "theta_optimizer_iterations", iterations, 30, iterations <= 30)
    steps = traces.groupby(["M", "instance"])["theta"].diff().dropna()
    _check(rows, "theta_optimizer_monotone", -min(steps.min(), 0.0), 1e-12, steps.min() >= -1e-12)

    shortfall = 0.0
    for k in range(5):
        R_A, R_B = random_correlation(4, derive_seed(seed, 11, k)), random_correlation(4, derive_seed(seed, 12, k))
        W, _ = optimize_precoders(R_A, R_B, seed=k)
        optimized = theta(W, R_A, R_B)
        for kind in (AmatPreset.WE, AmatPreset.ORG):
            shortfall = max(shortfall, theta(amat_precoder_preset(kind, R_A, R_B).W, R_A, R_B) - optimized)
    _check(rows, "optimized_theta_dominates_presets", shortfall, 1e-9, shortfall <= 1e-9)

    mc_trials = min(trials, 10_000)
    R_A, R_B = exp_correlation(0.9, 0.0, 2), exp_correlation(0.9, math.pi, 2)
    rho = equal_power(snr_to_power(20.0), 2)
    identity = mc_rate_amat(R_A, R_B, amat_precoder_preset(AmatPreset.ORG, R_A, R_B), rho, mc_trials, seed)
    rotated = mc_rate_amat(R_A, R_B, amat_precoder_preset(AmatPreset.RND, R_A, R_B, seed), rho, mc_trials, seed)
    spread = abs(identity.mean_bits - rotated.mean_bits)
    tolerance = 2.0 * math.hypot(identity.stderr, rotated.stderr)
    _check(rows, "two_antenna_unitary_rate_invariance", spread, tolerance, spread <= tolerance)

    pre = amat_precoder_preset(AmatPreset.ORG, R_A, R_B)
    high, low = (
        mc_rate_amat(R_A, R_B, pre, equal_power(snr_to_power(snr), 2), mc_trials, seed).mean_bits for snr in (40.0, 30.0)
    )
    slope = (high - low) / math.log2(10.0)
    _check(rows, "amat_prelog_slope", slope, 4.0 / 3.0, 1.25 <= slope <= 1.42)

    worst = 0.0
    for M in (2, 4):
        R_A, R_B = exp_correlation(0.9, 0.0, M), exp_correlation(0.9, math.pi, M)
        for case in (SamatCase.CASE1, SamatCase.CASE2):
            c = coefficients(case_precoders(case, R_A, R_B), R_A, R_B)
            alloc, _ = optimize_power(c, snr_to_power(30.0), PowerOptions(seed=seed % 2**32))
            worst = max(worst, *kkt_ratio_residual(alloc, c))
    _check(rows, "power_ratio_stationarity", worst, 0.10, worst <= 0.10)

    P = 100.0
    pre = case_precoders(SamatCase.CASE1, exp_correlation(0.9, 0.0, 2), exp_correlation(0.9, math.pi, 2))
    c = coefficients(pre, exp_correlation(0.9, 0.0, 2), exp_correlation(0.9, math.pi, 2))
    err = abs(power_constraint(amat_preset(equal_power(P, 2)), c) - 3.0 * P)
    _check(rows, "equal_power_meets_budget", err, 1e-10 * P, err < 1e-10 * P)

    rng = np.random.default_rng(derive_seed(seed, 9))
    p = rng.uniform(0.0, P, 10)
    grad_err = check_gradient(lambda x: rate_approx_samat(x, c).r_sum, lambda x: rate_approx_gradient(x, c), p)
    _check(rows, "rate_gradient", grad_err, 1e-5, grad_err < 1e-5)
    grad_err = check_gradient(lambda x: power_constraint(x, c), lambda x: power_constraint_gradient(x, c), p / P)
    _check(rows, "constraint_gradient", grad_err, 1e-8, grad_err < 1e-8)

    spec = delta_a1_lemma2_spec(pre, exp_correlation(0.9, 0.0, 2), PowerAllocation.from_values(P5=1.0, P6=5.0, P7=5.0))
    result = lemma2_oracle(spec, min(trials, 1_000_000), derive_seed(seed, 10))
    _check(rows, "first_order_ratio_gap", result.gap, 0.1, result.gap < 0.1)

    return pd.DataFrame(rows, columns=["check", "value", "threshold", "passed"])


def converge_traces(
    dims: Sequence[int] = (4, 8),
    instances: int = 20,
    eps: float = 1e-8,
    max_iter: int = 200,
    seed: int = 0,
    methods: Sequence[UpdateMethod] = (UpdateMethod.MAX_EIG, UpdateMethod.GRAD_ACT),
) -> pd.DataFrame:
    """Per-iteration theta of the alternating optimizer on random covariance pairs."""
    rows = []
    for M in dims:
        for instance in range(instances):
            R_A = random_correlation(M, derive_seed(seed, M, instance, 0))
            R_B = random_correlation(M, derive_seed(seed, M, instance, 1))
            for method in methods:
                _, trace = optimize_precoders(
                    R_A, R_B, method, eps, max_iter, seed=instance, step_opts=GradientStepOptions(steps=5)
                )
                for iteration, value in enumerate(trace.theta_values):
                    rows.append(
                        {
                            "M": M,
                            "instance": instance,
                            "method": method.value,
                            "iteration": iteration,
                            "theta": value,
                            "converged": trace.converged,
                        }
                    )
    return pd.DataFrame(rows, columns=["M", "instance", "method", "iteration", "theta", "converged"])


def complex_to_json(array) -> dict:
    array = np.asarray(array, dtype=complex)
    return {"real": array.real.tolist(), "imag": array.imag.tolist()}


def describe_scheme(scheme: Scheme, R_A, R_B, snr_db: float, seed: int = 0) -> dict:
    """Precoders and closed-form figures of one scheme, without Monte Carlo."""
    P = snr_to_power(snr_db)
    M = R_A.dim
    if scheme in (Scheme.SBF_WE, Scheme.SBF_GE):
        pre = we_precoders(R_A, R_B) if scheme == Scheme.SBF_WE else ge_precoders(R_A, R_B)
        return {
            "scheme": scheme.value,
            "w": complex_to_json(pre.w),
            "q": complex_to_json(pre.q),
            "rate_lower_bound_bits": sum_rate_lower_bound(R_A, R_B, pre),
        }

    if scheme.value.startswith("AMAT"):
        if scheme == Scheme.AMAT_OPT:
            pre, (trace_W, trace_Q) = optimize_amat_precoders(R_A, R_B, seed=seed)
            iterations = {"W": trace_W.iterations, "Q": trace_Q.iterations}
        else:
            pre = amat_precoder_preset(AmatPreset(scheme.value.split("-")[1]), R_A, R_B, seed=seed)
            iterations = None
        rho = equal_power(P, M)
        theta_A, theta_B = theta(pre.W, R_A, R_B), theta(pre.Q, R_A, R_B)
        return {
            "scheme": scheme.value,
            "W": complex_to_json(pre.W),
            "Q": complex_to_json(pre.Q),
            "theta_A": theta_A,
            "theta_B": theta_B,
            "rho": rho,
            "rate_approx_bits": rate_approx_amat(rho, theta_A) + rate_approx_amat(rho, theta_B),
            "iterations": iterations,
        }

    case = SamatCase.CASE1 if scheme == Scheme.SAMAT_CASE1 else SamatCase.CASE2
    pre = case_precoders(case, R_A, R_B)
    return {
        "scheme": scheme.value,
        "W": complex_to_json(pre.W),
        "Q": complex_to_json(pre.Q),
        "w3": complex_to_json(pre.w3),
        "q3": complex_to_json(pre.q3),
        "coefficients": coefficients(pre, R_A, R_B).as_dict(),
    }


def optimize_power_summary(case: SamatCase, R_A, R_B, snr_db: float, seed: int = 0) -> dict:
    """Optimized allocation, solver report and closed-form rates for one case."""
    P = snr_to_power(snr_db)
    c = coefficients(case_precoders(case, R_A, R_B), R_A, R_B)
    alloc, report = optimize_power(c, P, PowerOptions(seed=seed))
    try:
        residuals = list(kkt_ratio_residual(alloc, c))
    except ArithmeticError:
        residuals = None
    return {
        "case": case.value,
        "P_budget": P,
        "allocation": alloc.as_dict(),
        "report": report.as_dict(),
        "rate_approx": rate_approx_samat(alloc, c)._asdict(),
        "power_used": power_constraint(alloc, c),
        "kkt_ratio_residuals": residuals,
    }
