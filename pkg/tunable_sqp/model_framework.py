"""Contracts and bookkeeping for models of tunable accuracy.

A model replaces the objective f and constraints c near a build point x_k
by m_k and h_k and reports computable error bounds e^f, e^c. The drivers
never see the unknown constants relating those bounds to the true errors;
they work with the surrogate e^omega instead.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Optional, Protocol

import numpy as np

from .errors import InfeasibleTolerance
from .linalg import Operator
from .merit import l1_norm, merit_value
from .records import EvalCounts

log = logging.getLogger(__name__)

# Ratio denominators below this count as zero
RATIO_FLOOR = 1e-14


class TunableModel(Protocol):
    build_point: np.ndarray
    refinement_level: int
    basis_size: int

    def objective(self, x: np.ndarray) -> float: ...

    def constraints(self, x: np.ndarray) -> np.ndarray: ...

    def gradient(self, x: np.ndarray) -> np.ndarray: ...

    def jacobian(self, x: np.ndarray) -> np.ndarray: ...

    def objective_error(self, x: np.ndarray) -> float: ...

    def constraint_error(self, x: np.ndarray) -> float: ...

    def hessian_apply(
        self, x: np.ndarray, lam: np.ndarray,
    ) -> Optional[Operator]: ...


class ModelProvider(Protocol):
    """Builds models at x with e(x; rho) <= tau, refines them on request."""

    counts: EvalCounts

    def build(
        self, x: np.ndarray, tau: float, rho: float, lam: np.ndarray,
    ) -> TunableModel: ...

    def refine(
        self,
        model: TunableModel,
        x: np.ndarray,
        tau: float,
        rho: float,
        lam: np.ndarray,
        enrich_at: Optional[np.ndarray] = None,
    ) -> TunableModel: ...


@dataclass
class ToleranceLedger:
    """Accuracy parameters and the running model tolerance tau_k."""

    omega: float = 0.9
    a1: float = 0.5
    a2: float = 1.0
    r0: float = 1.0
    gamma: float = 0.5
    tau: float = 1e-2
    tau_fg: float = 0.5
    tau_cg: float = 0.5
    tau_c: float = 0.5
    tau_history: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not 0 < self.omega < 1:
            raise ValueError('omega must lie in (0, 1)')
        if not 0 < self.a1 < 1:
            raise ValueError('a1 must lie in (0, 1)')
        if not 0 < self.a2 <= 1:
            raise ValueError('a2 must lie in (0, 1]')
        if not (self.r0 > 0 and 0 < self.gamma < 1):
            raise ValueError('need r0 > 0 and gamma in (0, 1)')
        if not self.tau > 0:
            raise ValueError('tau must be positive')
        for name in ('tau_fg', 'tau_cg', 'tau_c'):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f'{name} must lie in (0, 1)')
        if not self.tau_history:
            self.tau_history.append(self.tau)

    def advance(self, tau_next: float) -> None:
        self.tau = tau_next
        self.tau_history.append(tau_next)


@dataclass
class RelativeErrorCheck:
    passed: bool
    gradient_ratio: float
    jacobian_ratio: float
    constraint_ratio: float


def model_merit(model: Any, x: np.ndarray, rho: float) -> float:
    """psi_k(x; rho) = m_k(x) + rho |h_k(x)|_1."""
    return merit_value(model.objective(x), model.constraints(x), rho)


def merit_error(model: Any, x: np.ndarray, rho: float) -> float:
    """e_k(x; rho) = e^f(x) + rho e^c(x)."""
    if not rho > 0:
        raise ValueError('rho must be positive')
    return float(model.objective_error(x)) + rho * float(
        model.constraint_error(x)
    )


def omega_bound(e_val: float, omega: float) -> float:
    if e_val == 0.0:
        return 0.0
    if math.isinf(e_val):
        return math.inf
    return float(e_val) ** omega


def _ratio(numerator: float, denominator: float) -> float:
    if denominator < RATIO_FLOOR:
        return 0.0 if numerator < RATIO_FLOOR else math.inf
    return numerator / denominator


def check_relative_errors(
    model: Any,
    problem: Any,
    x: np.ndarray,
    lam: np.ndarray,
    ledger: ToleranceLedger,
) -> RelativeErrorCheck:
    """Compare model derivatives and constraints against the true ones.

    Touches the true problem once (gradient, Jacobian, constraints at x).
    The constraint ratio is measured in the l1 norm, the norm of the
    feasibility test.
    """
    gm = model.gradient(x)
    hm = model.jacobian(x)
    h = model.constraints(x)
    gf = problem.gradient(x)
    cj = problem.jacobian(x)
    c = problem.constraints(x)

    denominator = float(np.linalg.norm(gm - hm.T @ lam))
    gradient_ratio = _ratio(float(np.linalg.norm(gm - gf)), denominator)
    if hm.size:
        jacobian_error = float(np.linalg.norm(hm - cj, 2))
        jacobian_ratio = _ratio(jacobian_error, denominator)
        constraint_ratio = _ratio(l1_norm(h - c), l1_norm(h))
    else:
        jacobian_ratio = constraint_ratio = 0.0
    passed = (
        gradient_ratio <= ledger.tau_fg
        and jacobian_ratio <= ledger.tau_cg
        and constraint_ratio <= ledger.tau_c
    )
    return RelativeErrorCheck(
        passed, gradient_ratio, jacobian_ratio, constraint_ratio,
    )


def forcing_value(ledger: ToleranceLedger, k: int) -> float:
    if k < 0:
        raise ValueError('k must be nonnegative')
    return ledger.r0 * ledger.gamma ** k


def cauchy_acceptable(
    ledger: ToleranceLedger,
    e_pow: float,
    r_k: float,
    psi_decrease: float,
) -> bool:
    bound = min(r_k, ledger.a2 * (1.0 - ledger.a1) * psi_decrease)
    return e_pow <= bound


def next_tolerance(
    ledger: ToleranceLedger,
    psi_xk: float,
    psi_cauchy: float,
    psi_next: float,
    e_next_pow: float,
    k: int,
) -> float:
    """Largest tolerance for the model at x_{k+1} keeping ideal decrease.

    All merit values are of the current model at the current penalty.
    """
    r_k = forcing_value(ledger, k)
    slack = (
        -e_next_pow
        - psi_next
        + psi_cauchy
        + (1.0 - ledger.a1) * (psi_xk - psi_cauchy)
    )
    tau_next = min(r_k, slack)
    if not tau_next > 0:
        raise InfeasibleTolerance(
            f'next model tolerance {tau_next:.3e} is not positive'
        )
    return tau_next
