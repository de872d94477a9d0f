# tests/test_sqp_solver.py
import numpy as np
import pytest

from exceptions import GradientMismatch
from models.nlp import NlpProblem, SolveStatus, SqpOptions
from utils.sqp_solver import check_gradient, solve, solve_qp


def simplex_projection(y: np.ndarray) -> np.ndarray:
    u = np.sort(y)[::-1]
    cumulative = np.cumsum(u) - 1.0
    k = np.flatnonzero(u - cumulative / np.arange(1, y.size + 1) > 0)[-1]
    return np.maximum(y - cumulative[k] / (k + 1), 0.0)


def projection_problem(y: np.ndarray) -> NlpProblem:
    return NlpProblem(
        dim=y.size,
        objective=lambda x: -0.5 * float(np.sum((x - y) ** 2)),
        objective_grad=lambda x: -(x - y),
        eq_constraint=lambda x: float(np.sum(x)) - 1.0,
        eq_constraint_grad=lambda x: np.ones(y.size),
        lower_bounds=np.zeros(y.size),
    )


def waterfilling_problem(noise: np.ndarray, total: float) -> NlpProblem:
    return NlpProblem(
        dim=noise.size,
        objective=lambda x: float(np.sum(np.log(noise + x))),
        objective_grad=lambda x: 1.0 / (noise + x),
        eq_constraint=lambda x: float(np.sum(x)) - total,
        eq_constraint_grad=lambda x: np.ones(noise.size),
        lower_bounds=np.zeros(noise.size),
    )


class TestCheckGradient:
    def test_linear_function_is_exact(self):
        a = np.array([1.0, -2.0, 3.0])
        assert check_gradient(lambda x: float(a @ x), lambda x: a, np.zeros(3)) < 1e-10

    def test_detects_wrong_gradient(self):
        assert check_gradient(lambda x: float(x @ x), lambda x: x, np.ones(2)) > 0.4


class TestSolveQp:
    def test_unconstrained_minimum_on_hyperplane(self):
        d, _ = solve_qp(np.eye(2), np.zeros(2), np.ones(2), 1.0, np.full(2, -10.0))
        np.testing.assert_allclose(d, [0.5, 0.5], atol=1e-12)

    def test_active_bound(self):
        # minimizer of |d - (2, -1)|^2 / 2 on d1 + d2 = 1 with d >= 0
        d, _ = solve_qp(np.eye(2), np.array([-2.0, 1.0]), np.ones(2), 1.0, np.zeros(2))
        np.testing.assert_allclose(d, [1.0, 0.0], atol=1e-12)


class TestSolve:
    @pytest.mark.parametrize(
        "y",
        [
            np.array([0.2, 0.3, 0.1]),
            np.array([2.0, -1.0, 0.5, 0.0]),
            np.array([0.9, 0.8, -0.3, 0.7, 0.1]),
        ],
    )
    def test_simplex_projection(self, y):
        x, report = solve(projection_problem(y), np.full(y.size, 1.0 / y.size))
        np.testing.assert_allclose(x, simplex_projection(y), atol=1e-6)
        assert report.constraint_residual <= 1e-6

    def test_waterfilling(self):
        noise = np.array([0.5, 1.0, 3.0])
        x, report = solve(waterfilling_problem(noise, 2.0), np.full(3, 2.0 / 3.0), SqpOptions(kkt_tol=1e-10))
        np.testing.assert_allclose(x, [1.25, 0.75, 0.0], atol=1e-6)
        assert report.constraint_residual <= 1e-6

    def test_symmetric_waterfilling(self):
        noise = np.ones(4)
        x, report = solve(waterfilling_problem(noise, 8.0), np.array([5.0, 1.0, 1.0, 1.0]))
        np.testing.assert_allclose(x, 2.0, atol=1e-6)
        assert report.status in (SolveStatus.CONVERGED, SolveStatus.STALLED)

    def test_infeasible_start_is_projected(self):
        y = np.array([0.5, 0.5])
        x, report = solve(projection_problem(y), np.array([-3.0, 4.0]))
        np.testing.assert_allclose(x, [0.5, 0.5], atol=1e-6)
        assert report.constraint_residual <= 1e-6

    def test_gradient_mismatch(self):
        problem = NlpProblem(
            dim=2,
            objective=lambda x: -float(x @ x),
            objective_grad=lambda x: x,
            eq_constraint=lambda x: float(np.sum(x)) - 1.0,
            eq_constraint_grad=lambda x: np.ones(2),
            lower_bounds=np.zeros(2),
        )
        with pytest.raises(GradientMismatch):
            solve(problem, np.array([0.5, 0.5]))

    def test_report_fields(self):
        _, report = solve(projection_problem(np.array([0.2, 0.8])), np.array([0.5, 0.5]))
        assert set(report.as_dict()) == {
            "iterations",
            "kkt_residual",
            "constraint_residual",
            "status",
            "objective_value",
        }
        assert report.objective_value == pytest.approx(0.0, abs=1e-10)
