# models/nlp.py
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

ScalarFn = Callable[[np.ndarray], float]
GradientFn = Callable[[np.ndarray], np.ndarray]


class SolveStatus(str, Enum):
    CONVERGED = "Converged"
    STALLED = "Stalled"
    MAX_ITER = "MaxIter"


@dataclass(frozen=True)
class NlpProblem:
    """Maximize ``objective`` subject to ``eq_constraint(x) == 0`` and ``x >= lower_bounds``."""

    dim: int
    objective: ScalarFn
    objective_grad: GradientFn
    eq_constraint: ScalarFn
    eq_constraint_grad: GradientFn
    lower_bounds: np.ndarray


@dataclass(frozen=True)
class SqpOptions:
    max_iter: int = 200
    kkt_tol: float = 1e-7
    ctol: float = 1e-6
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40
    damping_threshold: float = 0.2
    penalty_margin: float = 1.5
    stall_limit: int = 10
    validate_gradients: bool = True
    gradient_tol: float = 1e-4


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    kkt_residual: float
    constraint_residual: float
    status: SolveStatus
    objective_value: float

    def as_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "kkt_residual": self.kkt_residual,
            "constraint_residual": self.constraint_residual,
            "status": self.status.value,
            "objective_value": self.objective_value,
        }
