# tests/test_channel_service.py
import numpy as np
import pytest

from exceptions import DimMismatch
from models.channel import STREAM_H1, SeedSpec
from services.channel_service import (
    BLOCK_SIZE,
    block_layout,
    cn01_block,
    hermitian_sqrt_pair,
    log2det_eye_plus,
    run_monte_carlo,
    sample_channels,
    sample_cn01,
    sample_triple,
    sample_triple_block,
)
from services.correlation_service import exp_correlation, hermitian_sqrt


class TestWhiteSamples:
    def test_block_is_deterministic(self):
        np.testing.assert_array_equal(cn01_block(3, 42, 0, STREAM_H1, 100), cn01_block(3, 42, 0, STREAM_H1, 100))

    def test_shorter_draw_is_prefix(self):
        long = cn01_block(2, 7, 3, 1, 500)
        np.testing.assert_array_equal(cn01_block(2, 7, 3, 1, 20), long[:20])

    def test_streams_are_distinct(self):
        assert not np.allclose(cn01_block(2, 7, 0, 0, 10), cn01_block(2, 7, 0, 1, 10))

    def test_unit_variance_circular(self):
        z = cn01_block(2, 99, 0, 0, 200_000)
        np.testing.assert_allclose(np.mean(np.abs(z) ** 2, axis=0), 1.0, atol=0.01)
        np.testing.assert_allclose(np.mean(z**2, axis=0), 0.0, atol=0.01)

    def test_single_trial_matches_block_row(self):
        index = BLOCK_SIZE + 17
        single = sample_cn01(4, SeedSpec(5, index), 2)
        np.testing.assert_array_equal(single, cn01_block(4, 5, 1, 2, BLOCK_SIZE)[17])

    def test_seed_spec_validation(self):
        with pytest.raises(ValueError):
            SeedSpec(-1, 0)
        with pytest.raises(ValueError):
            SeedSpec(0, -1)


class TestCorrelatedSamples:
    def test_empirical_covariance(self):
        R = exp_correlation(0.9, 0.7, 3)
        h = sample_channels(hermitian_sqrt(R), 200_000, 11)
        empirical = h.T @ h.conj() / h.shape[0]
        np.testing.assert_allclose(empirical, R.entries, atol=0.02)

    def test_prefix_across_block_boundary(self):
        sqrtR = hermitian_sqrt(exp_correlation(0.5, 0.0, 2))
        long = sample_channels(sqrtR, 2 * BLOCK_SIZE + 5, 3)
        np.testing.assert_array_equal(sample_channels(sqrtR, BLOCK_SIZE + 1, 3), long[: BLOCK_SIZE + 1])

    def test_triple_matches_block(self, exp_pair):
        sqrtA, sqrtB = hermitian_sqrt_pair(*exp_pair)
        block = sample_triple_block(sqrtA, sqrtB, 8, 1, 64)
        single = sample_triple(sqrtA, sqrtB, SeedSpec(8, BLOCK_SIZE + 10))
        for name in ("h1", "h2", "h3", "g1", "g2", "g3"):
            np.testing.assert_allclose(getattr(single, name), getattr(block, name)[10], atol=1e-14)
        assert block.trials == 64 and single.trials == 1

    def test_mismatched_roots(self):
        with pytest.raises(DimMismatch):
            sample_triple_block(np.eye(2), np.eye(3), 0, 0, 4)


class TestMonteCarlo:
    def test_block_layout(self):
        assert block_layout(BLOCK_SIZE * 2 + 3) == [(0, BLOCK_SIZE), (1, BLOCK_SIZE), (2, 3)]
        assert block_layout(BLOCK_SIZE) == [(0, BLOCK_SIZE)]

    def test_worker_count_does_not_change_result(self, exp_pair):
        sqrtA, sqrtB = hermitian_sqrt_pair(*exp_pair)

        def gain(triple):
            return np.abs(triple.h1[:, 0]) ** 2 + np.abs(triple.g3[:, 1]) ** 2

        serial = run_monte_carlo(gain, sqrtA, sqrtB, 3 * BLOCK_SIZE + 100, 21, workers=1)
        parallel = run_monte_carlo(gain, sqrtA, sqrtB, 3 * BLOCK_SIZE + 100, 21, workers=4)
        assert serial == parallel

    def test_mean_and_stderr(self, exp_pair):
        sqrtA, sqrtB = hermitian_sqrt_pair(*exp_pair)
        estimate = run_monte_carlo(lambda t: np.abs(t.h1[:, 0]) ** 2, sqrtA, sqrtB, 100_000, 5)
        assert estimate.trials == 100_000 and estimate.seed == 5
        assert estimate.mean_bits == pytest.approx(1.0, abs=5 * estimate.stderr)
        assert estimate.stderr == pytest.approx(1.0 / np.sqrt(100_000), rel=0.05)

    def test_stderr_shrinks_with_trials(self, exp_pair):
        sqrtA, sqrtB = hermitian_sqrt_pair(*exp_pair)
        small = run_monte_carlo(lambda t: np.abs(t.g1[:, 1]) ** 2, sqrtA, sqrtB, 10_000, 9)
        large = run_monte_carlo(lambda t: np.abs(t.g1[:, 1]) ** 2, sqrtA, sqrtB, 40_000, 9)
        assert small.stderr / large.stderr == pytest.approx(2.0, rel=0.2)

    def test_zero_trials(self, exp_pair):
        sqrtA, sqrtB = hermitian_sqrt_pair(*exp_pair)
        with pytest.raises(ValueError):
            run_monte_carlo(lambda t: t.h1[:, 0].real, sqrtA, sqrtB, 0, 1)


def test_log2det_eye_plus_diagonal():
    G = np.array([np.diag([1.0, 3.0]), np.diag([0.0, 7.0])], dtype=complex)
    np.testing.assert_allclose(log2det_eye_plus(G), [np.log2(8.0), 3.0], atol=1e-14)
