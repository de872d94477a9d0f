# tests/test_samat_service.py
import numpy as np
import pytest

from exceptions import DivisionByZero, InfeasibleStart
from models.channel import ChannelTriple
from models.power import PowerAllocation, PowerOptions
from models.precoder import AmatPrecoders, SamatCase, SbfPrecoders
from models.nlp import SolveStatus
from services.amat_service import equal_power, mc_rate_amat
from services.channel_service import hermitian_sqrt_pair, sample_triple_block
from services.correlation_service import exp_correlation
from services.samat_service import (
    amat_preset,
    case_precoders,
    coefficients,
    delta_terms,
    kkt_ratio_allocation,
    kkt_ratio_residual,
    mc_rate_samat,
    optimize_power,
    power_constraint,
    power_constraint_gradient,
    rate_approx_gradient,
    rate_approx_samat,
    rescale_to_budget,
    samat_rate_samples,
    sbf_preset,
    uniform_preset,
)
from services.sbf_service import sbf_rate_samples
from utils.sqp_solver import check_gradient


@pytest.fixture
def case1(exp_pair):
    R_A, R_B = exp_pair
    pre = case_precoders(SamatCase.CASE1, R_A, R_B)
    return R_A, R_B, pre, coefficients(pre, R_A, R_B)


class TestCoefficients:
    def test_opposite_phase_case1(self, case1):
        _, _, _, c = case1
        assert c.lamA1 == pytest.approx(1.9) and c.lamA2 == pytest.approx(0.1)
        assert c.lamB1 == pytest.approx(1.9) and c.lamB2 == pytest.approx(0.1)
        assert c.tauA1 == pytest.approx(0.1) and c.tauA2 == pytest.approx(1.9)
        assert c.lamA3 == pytest.approx(0.1) and c.tauA3 == pytest.approx(1.9)
        assert c.thetaA == pytest.approx(3.62) and c.thetaB == pytest.approx(3.62)

    def test_case2_uses_pencil_vectors(self, exp_pair_4):
        pre = case_precoders(SamatCase.CASE2, *exp_pair_4)
        c = coefficients(pre, *exp_pair_4)
        # w3 maximizes tau / lam, the extra symbol leaks least to user B
        assert c.tauA3 / c.lamB3 >= c.tauA1 / c.lamB1 - 1e-12
        assert c.tauA3 / c.lamB3 >= c.tauA2 / c.lamB2 - 1e-12


class TestPowerConstraint:
    def test_amat_preset_meets_budget(self, case1):
        _, _, _, c = case1
        P = 100.0
        assert power_constraint(amat_preset(equal_power(P, 2)), c) == pytest.approx(3 * P, rel=1e-12)

    def test_sbf_preset_meets_budget(self, case1):
        _, _, _, c = case1
        assert power_constraint(sbf_preset(40.0), c) == pytest.approx(120.0, rel=1e-12)

    def test_gradient(self, case1, rng):
        _, _, _, c = case1
        p = rng.uniform(0.5, 2.0, 10)
        assert check_gradient(lambda x: power_constraint(x, c), lambda x: power_constraint_gradient(x, c), p) < 1e-8

    def test_rescale_to_budget(self, case1):
        _, _, _, c = case1
        alloc = rescale_to_budget(np.arange(1.0, 11.0), c, 300.0)
        assert power_constraint(alloc, c) == pytest.approx(300.0, rel=1e-10)
        ratios = alloc.p / np.arange(1.0, 11.0)
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)

    def test_rescale_needs_constrained_power(self, case1):
        _, _, _, c = case1
        with pytest.raises(InfeasibleStart):
            rescale_to_budget(np.zeros(10), c, 300.0)

    def test_uniform_preset(self, case1):
        _, _, _, c = case1
        alloc = uniform_preset(c, 10.0)
        assert power_constraint(alloc, c) == pytest.approx(30.0, rel=1e-10)
        np.testing.assert_allclose(alloc.p, alloc.p[0], rtol=1e-12)


class TestRateApproximation:
    def test_gradient_matches_finite_differences(self, case1, rng):
        _, _, _, c = case1
        for _ in range(5):
            p = rng.uniform(0.1, 50.0, 10)
            error = check_gradient(lambda x: rate_approx_samat(x, c).r_sum, lambda x: rate_approx_gradient(x, c), p)
            assert error < 1e-5

    def test_components_sum(self, case1):
        _, _, _, c = case1
        r = rate_approx_samat(amat_preset(10.0), c)
        assert r.r_sum == pytest.approx((r.r_sA + r.r_spA + r.r_sB + r.r_spB) / 3.0)
        assert r.r_spA == 0.0 and r.r_spB == 0.0

    def test_delta_terms_without_extra_symbols(self, case1):
        _, _, _, c = case1
        d = delta_terms(amat_preset(10.0), c)
        assert d.delta_A1 == pytest.approx(1.0 / (1.0 + 10.0 * (c.lamA1 + c.lamA2)) + 0.5)
        assert d.delta_A2 == pytest.approx(1.0)

    def test_sbf_preset_has_no_retransmission_term(self, case1):
        _, _, _, c = case1
        r = rate_approx_samat(sbf_preset(100.0), c)
        assert r.r_sA == pytest.approx(np.log2(1.0 + 50.0 * c.tauA2 / (1.0 + 50.0 * c.lamA2)))


class TestKktRatios:
    def test_closed_form_allocation(self, case1):
        _, _, _, c = case1
        alloc = kkt_ratio_allocation(c, 100.0)
        assert power_constraint(alloc, c) == pytest.approx(300.0, rel=1e-12)
        assert max(kkt_ratio_residual(alloc, c)) < 1e-12
        assert alloc[1] + alloc[2] == pytest.approx(alloc[3] + alloc[4])

    def test_zero_slot1_power(self, case1):
        _, _, _, c = case1
        with pytest.raises(DivisionByZero):
            kkt_ratio_residual(sbf_preset(10.0), c)

    def test_identity_covariances_share_power_equally(self):
        R = np.eye(2)
        pre = case_precoders(SamatCase.CASE1, R, R)
        c = coefficients(pre, R, R)
        alloc, _ = optimize_power(c, 1000.0)
        assert alloc[1] == pytest.approx(alloc[2], rel=0.05)
        assert alloc[3] == pytest.approx(alloc[4], rel=0.05)
        assert max(kkt_ratio_residual(alloc, c)) <= 0.01


class TestOptimizePower:
    def test_result_on_budget_and_no_worse_than_presets(self, case1):
        _, _, _, c = case1
        P = 100.0
        alloc, report = optimize_power(c, P, PowerOptions(seed=3))
        assert power_constraint(alloc, c) == pytest.approx(3 * P, rel=1e-6)
        best = rate_approx_samat(alloc, c).r_sum
        assert best == pytest.approx(report.objective_value)
        assert best >= rate_approx_samat(amat_preset(equal_power(P, 2)), c).r_sum - 1e-9
        assert best >= rate_approx_samat(sbf_preset(P), c).r_sum - 1e-9
        assert isinstance(report.status, SolveStatus)

    def test_deterministic_for_seed(self, case1):
        _, _, _, c = case1
        first, _ = optimize_power(c, 50.0, PowerOptions(seed=9))
        second, _ = optimize_power(c, 50.0, PowerOptions(seed=9))
        np.testing.assert_array_equal(first.p, second.p)

    @pytest.mark.parametrize("case", list(SamatCase))
    @pytest.mark.parametrize("M", [2, 4])
    def test_stationarity_ratios_at_high_snr(self, case, M):
        R_A, R_B = exp_correlation(0.9, 0.0, M), exp_correlation(0.9, np.pi, M)
        c = coefficients(case_precoders(case, R_A, R_B), R_A, R_B)
        alloc, _ = optimize_power(c, 1000.0)
        assert max(kkt_ratio_residual(alloc, c)) <= 0.10

    def test_rejects_non_positive_budget(self, case1):
        _, _, _, c = case1
        with pytest.raises(ValueError):
            optimize_power(c, 0.0)


class TestMonteCarloRate:
    def test_amat_preset_dominates_amat(self, case1):
        R_A, R_B, pre, _ = case1
        rho = equal_power(100.0, 2)
        samat = mc_rate_samat(R_A, R_B, pre, amat_preset(rho), 8000, 4)
        amat = mc_rate_amat(R_A, R_B, AmatPrecoders(W=pre.W, Q=pre.Q), rho, 8000, 4)
        assert samat.mean_bits >= amat.mean_bits - 1e-12

    def test_sbf_preset_is_three_slot_sbf(self, case1):
        R_A, R_B, pre, _ = case1
        sqrtA, sqrtB = hermitian_sqrt_pair(R_A, R_B)
        t = sample_triple_block(sqrtA, sqrtB, 6, 0, 500)
        sbf = SbfPrecoders(w=pre.W[:, 1], q=pre.Q[:, 1])
        slots = [
            ChannelTriple(h1=h, h2=t.h2, h3=t.h3, g1=g, g2=t.g2, g3=t.g3)
            for h, g in ((t.h1, t.g1), (t.h2, t.g2), (t.h3, t.g3))
        ]
        expected = sum(sbf_rate_samples(slot, sbf, 50.0) for slot in slots) / 3.0
        np.testing.assert_allclose(samat_rate_samples(t, pre, sbf_preset(100.0)), expected, atol=1e-12)

    def test_zero_extra_power_gives_finite_rates(self, case1):
        R_A, R_B, pre, _ = case1
        estimate = mc_rate_samat(R_A, R_B, pre, PowerAllocation.from_values(P1=1.0), 1000, 2)
        assert np.isfinite(estimate.mean_bits) and estimate.mean_bits > 0
