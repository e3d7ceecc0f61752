"""Evaluation contract for equality-constrained problems and test problems.

Multipliers follow the Lagrangian L = f - lam^T c throughout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

import numpy as np

from .records import EvalCounts, HessianStrategy, SolverConfig, Status

log = logging.getLogger(__name__)

Operator = Callable[[np.ndarray], np.ndarray]


class ProblemFunctions(Protocol):
    """min f(x) s.t. c(x) = 0 with x in R^n, c(x) in R^m."""

    n: int
    m: int
    counts: EvalCounts

    def objective(self, x: np.ndarray) -> float: ...

    def constraints(self, x: np.ndarray) -> np.ndarray: ...

    def gradient(self, x: np.ndarray) -> np.ndarray: ...

    def jacobian(self, x: np.ndarray) -> np.ndarray: ...

    def hessian_apply(
        self, x: np.ndarray, lam: np.ndarray,
    ) -> Optional[Operator]: ...


@dataclass
class AnalyticProblem:
    name: str
    n: int
    m: int
    f: Callable[[np.ndarray], float]
    c: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray], np.ndarray]
    x0: np.ndarray
    # Hessian of the Lagrangian f - lam^T c
    hess: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    x_star: Optional[np.ndarray] = None
    lam_star: Optional[np.ndarray] = None
    counts: EvalCounts = field(default_factory=EvalCounts)

    def objective(self, x: np.ndarray) -> float:
        self.counts.objective += 1
        return float(self.f(np.asarray(x, dtype=float)))

    def constraints(self, x: np.ndarray) -> np.ndarray:
        self.counts.constraints += 1
        return np.asarray(self.c(np.asarray(x, dtype=float)), dtype=float)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        self.counts.gradient += 1
        return np.asarray(self.grad(np.asarray(x, dtype=float)), dtype=float)

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        self.counts.jacobian += 1
        J = np.asarray(self.jac(np.asarray(x, dtype=float)), dtype=float)
        return J.reshape(self.m, self.n)

    def hessian_apply(
        self, x: np.ndarray, lam: np.ndarray,
    ) -> Optional[Operator]:
        if self.hess is None:
            return None
        H = np.asarray(self.hess(np.asarray(x, dtype=float), lam))
        return lambda v: H @ v


def _p1() -> AnalyticProblem:
    return AnalyticProblem(
        name='P1',
        n=2,
        m=1,
        f=lambda x: 0.5 * float(x @ x),
        c=lambda x: np.array([x[0] + x[1] - 2.0]),
        grad=lambda x: np.array(x, dtype=float),
        jac=lambda x: np.array([[1.0, 1.0]]),
        hess=lambda x, lam: np.eye(2),
        x0=np.zeros(2),
        x_star=np.array([1.0, 1.0]),
        lam_star=np.array([1.0]),
    )


def _p2() -> AnalyticProblem:
    return AnalyticProblem(
        name='P2',
        n=2,
        m=1,
        f=lambda x: float(x[0] + x[1]),
        c=lambda x: np.array([x[0] ** 2 + x[1] ** 2 - 2.0]),
        grad=lambda x: np.ones(2),
        jac=lambda x: np.array([[2.0 * x[0], 2.0 * x[1]]]),
        hess=lambda x, lam: -2.0 * lam[0] * np.eye(2),
        x0=np.array([-2.0, -1.0]),
        x_star=np.array([-1.0, -1.0]),
        lam_star=np.array([-0.5]),
    )


# P3: 10 variables, 3 constraints (sphere, hyperplane, bilinear)
_P3_SHIFT = 0.1 * np.arange(1, 11) - 0.5
_P3_PAIRS = np.zeros((10, 10))
_P3_PAIRS[0, 1] = _P3_PAIRS[1, 0] = 1.0
_P3_PAIRS[2, 3] = _P3_PAIRS[3, 2] = 1.0


def _p3_f(x: np.ndarray) -> float:
    return float(0.5 * np.sum((x - _P3_SHIFT) ** 2) + 0.3 * np.sum(np.sin(x)))


def _p3_c(x: np.ndarray) -> np.ndarray:
    return np.array([
        x @ x - 4.0,
        np.sum(x) - 1.0,
        x[0] * x[1] + x[2] * x[3] - 0.5,
    ])


def _p3_jac(x: np.ndarray) -> np.ndarray:
    J = np.zeros((3, 10))
    J[0] = 2.0 * x
    J[1] = 1.0
    J[2] = _P3_PAIRS @ x
    return J


def _p3_hess(x: np.ndarray, lam: np.ndarray) -> np.ndarray:
    H = np.eye(10) - 0.3 * np.diag(np.sin(x))
    return H - 2.0 * lam[0] * np.eye(10) - lam[2] * _P3_PAIRS


def _p3() -> AnalyticProblem:
    return AnalyticProblem(
        name='P3',
        n=10,
        m=3,
        f=_p3_f,
        c=_p3_c,
        grad=lambda x: x - _P3_SHIFT + 0.3 * np.cos(x),
        jac=_p3_jac,
        hess=_p3_hess,
        x0=0.7 * np.linspace(-1.0, 1.0, 10) + 0.1,
    )


def _attach_reference(problem: AnalyticProblem) -> None:
    """Store a tight-tolerance dense-oracle solution as the optimum."""
    from .sqp_exact import solve_exact

    config = SolverConfig(
        tol_f=1e-12,
        tol_c=1e-12,
        max_iter=200,
        hessian_strategy=HessianStrategy.GAUSS_NEWTON,
        kkt_solver='dense',
    )
    result = solve_exact(problem, problem.x0, config)
    if result.status is not Status.CONVERGED:
        log.warning(
            'no reference solution for %s: %s',
            problem.name, result.status.value,
        )
    else:
        problem.x_star = result.state.x
        problem.lam_star = result.state.lam
    problem.counts = EvalCounts()


def make_analytic_suite(with_reference: bool = True) -> list[AnalyticProblem]:
    """P1 and P2 with closed-form optima, P3 with a computed reference."""
    p3 = _p3()
    if with_reference:
        _attach_reference(p3)
    return [_p1(), _p2(), p3]


def make_problem(name: str) -> AnalyticProblem:
    builders = {'P1': _p1, 'P2': _p2, 'P3': _p3}
    if name not in builders:
        raise KeyError(f'unknown analytic problem {name!r}')
    problem = builders[name]()
    if name == 'P3':
        _attach_reference(problem)
    return problem
