# models/precoder.py
from dataclasses import dataclass, field
from enum import Enum
from typing import List

import numpy as np

from exceptions import DimMismatch

UNIT_NORM_TOL = 1e-12


def _check_unit_columns(name: str, matrix: np.ndarray, columns: int | None = None) -> None:
    if columns is not None and (matrix.ndim != 2 or matrix.shape[1] != columns):
        raise DimMismatch(f"{name} must have {columns} columns, got shape {matrix.shape}")
    norms = np.linalg.norm(matrix, axis=0)
    if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
        raise ValueError(f"{name} must have unit-norm columns, got norms {norms}")


@dataclass(frozen=True, eq=False)
class SbfPrecoders:
    w: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        if self.w.shape != self.q.shape or self.w.ndim != 1:
            raise DimMismatch("w and q must be vectors of equal length")
        _check_unit_columns("w", self.w[:, None])
        _check_unit_columns("q", self.q[:, None])


@dataclass(frozen=True, eq=False)
class AmatPrecoders:
    W: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        _check_unit_columns("W", self.W, 2)
        _check_unit_columns("Q", self.Q, 2)
        if self.W.shape != self.Q.shape:
            raise DimMismatch("W and Q must share the antenna count")

    @property
    def dim(self) -> int:
        return self.W.shape[0]


@dataclass(frozen=True, eq=False)
class SamatPrecoders:
    """W = [w1 w2] and Q = [q1 q2] plus the extra-symbol precoders w3, q3."""

    W: np.ndarray
    Q: np.ndarray
    w3: np.ndarray
    q3: np.ndarray

    def __post_init__(self):
        _check_unit_columns("W", self.W, 2)
        _check_unit_columns("Q", self.Q, 2)
        m = self.W.shape[0]
        for name, vec in (("w3", self.w3), ("q3", self.q3)):
            if vec.shape != (m,):
                raise DimMismatch(f"{name} must have shape ({m},), got {vec.shape}")
            _check_unit_columns(name, vec[:, None])
        if self.Q.shape != self.W.shape:
            raise DimMismatch("W and Q must share the antenna count")

    @property
    def dim(self) -> int:
        return self.W.shape[0]


@dataclass
class ConvergenceTrace:
    theta_values: List[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


class UpdateMethod(str, Enum):
    GRAD_ACT = "GradAct"
    MAX_EIG = "MaxEig"


class AmatPreset(str, Enum):
    ORG = "ORG"
    WE = "WE"
    GE = "GE"
    RND = "RND"


@dataclass(frozen=True)
class GradientStepOptions:
    initial_step: float = 1.0
    backtrack: float = 0.5
    armijo: float = 1e-4
    steps: int = 1
    max_backtracks: int = 60


class SamatCase(str, Enum):
    CASE1 = "case1"
    CASE2 = "case2"
