# tests/conftest.py
import math

import numpy as np
import pandas as pd
import pytest

from services.correlation_service import exp_correlation, random_correlation


@pytest.fixture
def exp_pair():
    """|t| = 0.9 with opposite phases at M = 2."""
    return exp_correlation(0.9, 0.0, 2), exp_correlation(0.9, math.pi, 2)


@pytest.fixture
def exp_pair_4():
    return exp_correlation(0.9, 0.0, 4), exp_correlation(0.8, 2.0, 4)


@pytest.fixture
def random_pairs():
    """Twenty seeded random covariance pairs over M in {2, 3, 4, 8}."""
    return [
        (random_correlation(M, 100 + k), random_correlation(M, 200 + k))
        for k, M in enumerate([2, 3, 4, 8] * 5)
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _result_table(t_values=(0.9,), snrs=(10.0, 20.0)):
    from services.experiment_service import RESULT_COLUMNS

    rows = [
        {
            "scheme": "SAMAT-case1",
            "M": 2,
            "t_mag_A": t,
            "t_mag_B": t,
            "phase_A": 0.0,
            "phase_B": math.pi,
            "snr_db": snr,
            "mean_bits": 3.0 + snr / 10.0,
            "stderr": 0.01,
            "trials": 1000,
            "seed": 42,
            **{f"P{k}": float(k) for k in range(1, 11)},
            "approx_bits": 3.1,
            "status": "ok",
        }
        for t in t_values
        for snr in snrs
    ]
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


@pytest.fixture
def make_results():
    """Builder for small hand-made result tables."""
    return _result_table
