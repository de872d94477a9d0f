# models/scenario.py
from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, Field, model_validator


class Scheme(str, Enum):
    SBF_WE = "SBF-WE"
    SBF_GE = "SBF-GE"
    AMAT_ORG = "AMAT-ORG"
    AMAT_WE = "AMAT-WE"
    AMAT_GE = "AMAT-GE"
    AMAT_RND = "AMAT-RND"
    AMAT_OPT = "AMAT-OPT"
    SAMAT_CASE1 = "SAMAT-case1"
    SAMAT_CASE2 = "SAMAT-case2"
    SAMAT_CASE2_KKT = "SAMAT-case2-KKT"


class PhasePolicy(str, Enum):
    FIXED = "fixed"
    RANDOM_UNIFORM = "random_uniform"
    RANDOM_MIN_GAP = "random_min_gap"


class Sweep(str, Enum):
    SNR = "snr"
    T = "t"


class SamatSelection(str, Enum):
    APPROX = "approx"
    MC = "mc"


class Scenario(BaseModel):
    M: int = Field(2, ge=2, le=64)
    t_mag_A: float = Field(0.95, ge=0.0, lt=1.0)
    t_mag_B: float = Field(0.9, ge=0.0, lt=1.0)
    phase_policy: PhasePolicy = PhasePolicy.RANDOM_MIN_GAP
    phase_A: float = 0.0
    phase_B: float = 3.141592653589793
    min_gap: float = Field(1.5707963267948966, ge=0.0, le=3.141592653589793)
    sweep: Sweep = Sweep.SNR
    snr_grid_db: List[float] = Field(default_factory=lambda: [0.0, 10.0, 20.0, 30.0])
    t_grid: List[float] = Field(default_factory=lambda: [0.0, 0.5, 0.9, 0.99])
    schemes: List[Scheme] = Field(default_factory=lambda: [Scheme.SBF_WE, Scheme.AMAT_ORG, Scheme.SAMAT_CASE1])
    trials: int = Field(10000, ge=1)
    master_seed: int = Field(20160101, ge=0, lt=2**64)
    samat_selection: SamatSelection = SamatSelection.MC

    @model_validator(mode="after")
    def check_grids(self):
        if not self.snr_grid_db:
            raise ValueError("snr_grid_db must not be empty")
        if not self.t_grid:
            raise ValueError("t_grid must not be empty")
        if any(not 0.0 <= t < 1.0 for t in self.t_grid):
            raise ValueError("t_grid entries must lie in [0, 1)")
        return self


class CorrelationParams(BaseModel):
    M: int = Field(2, ge=2, le=64)
    t_mag_A: float = Field(0.95, ge=0.0, lt=1.0)
    phase_A: float = 0.0
    t_mag_B: float = Field(0.9, ge=0.0, lt=1.0)
    phase_B: float = 3.141592653589793


class PrecoderRequest(CorrelationParams):
    snr_db: float = 20.0
    seed: int = Field(0, ge=0)


class PowerOptimizeRequest(PrecoderRequest):
    case: str = Field("case1", pattern="^case[12]$")


class ConvergeRequest(BaseModel):
    dims: List[int] = Field(default_factory=lambda: [4, 8])
    instances: int = Field(20, ge=1)
    eps: float = Field(1e-8, gt=0.0)
    max_iter: int = Field(200, ge=1)
    seed: int = Field(20160101, ge=0)


class ValidateRequest(BaseModel):
    trials: Optional[int] = Field(None, ge=1)
    seed: int = Field(20160101, ge=0)
