# models/power.py
from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np

from models.nlp import SqpOptions

N_POWERS = 10
CLAMP_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class PowerAllocation:
    """Powers P1..P10 of the ten SAMAT symbols, stored 0-based in ``p``."""

    p: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float).reshape(-1)
        if p.shape != (N_POWERS,):
            raise ValueError(f"expected {N_POWERS} powers, got {p.shape[0]}")
        if np.any(~np.isfinite(p)):
            raise ValueError("powers must be finite")
        if np.any(p < -CLAMP_TOL):
            raise ValueError(f"powers must be non-negative, got {p}")
        p = np.maximum(p, 0.0)
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    def __getitem__(self, k: int) -> float:
        """1-based access, ``alloc[5]`` is P5."""
        return float(self.p[k - 1])

    @classmethod
    def from_values(cls, **powers: float) -> "PowerAllocation":
        """Build from keyword powers such as ``P2=1.0, P5=0.5``; others are 0."""
        p = np.zeros(N_POWERS)
        for key, value in powers.items():
            p[int(key[1:]) - 1] = value
        return cls(p)

    def as_dict(self) -> dict:
        return {f"P{k + 1}": float(v) for k, v in enumerate(self.p)}


@dataclass(frozen=True)
class RateCoefficients:
    lamA1: float
    lamA2: float
    lamA3: float
    lamB1: float
    lamB2: float
    lamB3: float
    tauA1: float
    tauA2: float
    tauA3: float
    tauB1: float
    tauB2: float
    tauB3: float
    thetaA: float
    thetaB: float

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class SamatRateApprox(NamedTuple):
    r_sum: float
    r_sA: float
    r_spA: float
    r_sB: float
    r_spB: float


class DeltaTerms(NamedTuple):
    delta_A1: float
    delta_A2: float
    delta_B1: float
    delta_B2: float


@dataclass(frozen=True)
class RateEstimate:
    mean_bits: float
    stderr: float
    trials: int
    seed: int

    @classmethod
    def from_samples(cls, samples: np.ndarray, seed: int) -> "RateEstimate":
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        if n == 0:
            raise ValueError("no Monte Carlo samples")
        mean = float(np.mean(samples))
        if not np.isfinite(mean):
            raise ValueError("Monte Carlo mean is not finite")
        stderr = float(np.std(samples, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return cls(mean_bits=mean, stderr=stderr, trials=n, seed=seed)


@dataclass(frozen=True)
class PowerOptions:
    """Multi-start settings for the power optimizer."""

    random_starts: int = 5
    seed: int = 0
    workers: int = 1
    sqp: SqpOptions = SqpOptions()
