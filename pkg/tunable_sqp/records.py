"""Data structures shared by the SQP drivers, providers and the CLI."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .errors import (
    CannotMeetTolerance,
    InfeasibleTolerance,
    LineSearchFailure,
    RankDeficient,
    RefinementBudgetExhausted,
    SingularKKT,
    SolverError,
    StateSolveFailure,
)
from .merit import LineSearchParams, PenaltyState


class Status(Enum):
    CONVERGED = 'Converged'
    MAX_ITER = 'MaxIter'
    LINE_SEARCH_FAILURE = 'LineSearchFailure'
    RANK_DEFICIENT = 'RankDeficient'
    REFINEMENT_BUDGET_EXHAUSTED = 'RefinementBudgetExhausted'
    CANNOT_MEET_TOLERANCE = 'CannotMeetTolerance'
    INFEASIBLE_TOLERANCE = 'InfeasibleTolerance'
    STATE_SOLVE_FAILURE = 'StateSolveFailure'

    @classmethod
    def from_error(cls, exc: SolverError) -> Status:
        for exc_type, status in _ERROR_STATUS:
            if isinstance(exc, exc_type):
                return status
        return cls.LINE_SEARCH_FAILURE


_ERROR_STATUS = (
    (LineSearchFailure, Status.LINE_SEARCH_FAILURE),
    (RankDeficient, Status.RANK_DEFICIENT),
    (SingularKKT, Status.RANK_DEFICIENT),
    (RefinementBudgetExhausted, Status.REFINEMENT_BUDGET_EXHAUSTED),
    (CannotMeetTolerance, Status.CANNOT_MEET_TOLERANCE),
    (InfeasibleTolerance, Status.INFEASIBLE_TOLERANCE),
    (StateSolveFailure, Status.STATE_SOLVE_FAILURE),
)


class HessianStrategy(Enum):
    IDENTITY = 'identity'
    DAMPED_BFGS = 'damped-bfgs'
    GAUSS_NEWTON = 'gauss-newton'  # operator supplied by the problem/model


@dataclass
class EvalCounts:
    objective: int = 0
    constraints: int = 0
    gradient: int = 0
    jacobian: int = 0
    fom_state: int = 0
    fom_adjoint: int = 0
    fom_sensitivity: int = 0
    rom_state: int = 0

    @property
    def fom_solves(self) -> int:
        return self.fom_state + self.fom_adjoint + self.fom_sensitivity

    def snapshot(self) -> EvalCounts:
        return dataclasses.replace(self)


@dataclass
class SolverConfig:
    """Stopping tolerances and algorithm parameters of one driver run."""

    tol_f: float = 1e-6
    tol_c: float = 1e-6
    max_iter: int = 100
    line_search: LineSearchParams = field(default_factory=LineSearchParams)
    hessian_strategy: HessianStrategy = HessianStrategy.IDENTITY
    sigma: float = 0.1
    rho0: float = 1.0
    cg_tol: Optional[float] = None  # None: min(1e-10, 0.1*|P(g+Hs^c)|)
    cg_maxit: Optional[int] = None  # None: 2n
    kkt_solver: str = 'projected'  # or 'dense'
    max_inner: int = 50
    max_refinements: int = 10
    extra_backsteps: int = 5
    instrumented: bool = False

    def __post_init__(self) -> None:
        if not (self.tol_f > 0 and self.tol_c > 0):
            raise ValueError('tol_f and tol_c must be positive')
        if self.max_iter < 0 or self.max_inner < 1:
            raise ValueError('iteration limits must be nonnegative')
        if not (self.sigma > 0 and self.rho0 > 0):
            raise ValueError('sigma and rho0 must be positive')
        if self.kkt_solver not in ('projected', 'dense'):
            raise ValueError(f'unknown kkt_solver {self.kkt_solver!r}')
        if self.max_refinements < 0 or self.extra_backsteps < 0:
            raise ValueError('refinement budgets must be nonnegative')


@dataclass
class IterateState:
    x: np.ndarray
    lam: np.ndarray
    penalty: PenaltyState
    k: int = 0
    eval_counts: EvalCounts = field(default_factory=EvalCounts)

    @property
    def rho(self) -> float:
        return self.penalty.rho


@dataclass
class IterationRecord:
    """One history row per outer iteration."""

    k: int
    stationarity: float  # |grad f - c'^T lam| (model side for inexact)
    feasibility: float  # |c|_1 (model side for inexact)
    merit: float
    rho: float
    objective: float
    alpha: float = 0.0
    step_norm: float = 0.0
    cg_iterations: int = 0
    fom_solves: int = 0
    rom_solves: int = 0
    basis_size: int = 0
    refinements: int = 0
    true_stationarity: Optional[float] = None
    true_feasibility: Optional[float] = None
    tau: Optional[float] = None


@dataclass
class OuterCheck:
    """Post-hoc margins of the acceptance conditions of one outer step.

    Every margin is `rhs - lhs` of its inequality, so a nonnegative value
    means the condition holds.
    """

    k: int
    r_k: float
    tau_next: float
    psi_xk: float
    psi_cauchy: float
    psi_next: float
    simple_margin: float
    mod_margin: float
    cauchy_margin: float
    ideal_margin: float

    def passed(self, slack: float = 1e-12) -> bool:
        margins = (
            self.simple_margin, self.mod_margin,
            self.cauchy_margin, self.ideal_margin,
        )
        return all(m >= -slack for m in margins)
