"""Model providers over analytic problems.

`exact_wrapper` hands the true functions to the inexact driver with zero
error bounds. `synthetic_provider` adds smooth bounded perturbations whose
size is set by a refinement level and reports the exact perturbation
magnitudes as its error bounds.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .errors import CannotMeetTolerance
from .linalg import Operator
from .records import EvalCounts

log = logging.getLogger(__name__)

MAX_LEVEL = 400


class ExactModel:
    """m_k = f and h_k = c with e^f = e^c = 0."""

    basis_size = 0

    def __init__(
        self, problem: Any, build_point: np.ndarray, level: int = 0,
    ) -> None:
        self.problem = problem
        self.build_point = np.array(build_point, dtype=float)
        self.refinement_level = level

    def objective(self, x: np.ndarray) -> float:
        return self.problem.objective(x)

    def constraints(self, x: np.ndarray) -> np.ndarray:
        return self.problem.constraints(x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.problem.gradient(x)

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        return self.problem.jacobian(x)

    def objective_error(self, x: np.ndarray) -> float:
        return 0.0

    def constraint_error(self, x: np.ndarray) -> float:
        return 0.0

    def hessian_apply(
        self, x: np.ndarray, lam: np.ndarray,
    ) -> Optional[Operator]:
        return self.problem.hessian_apply(x, lam)


class ExactWrapperProvider:
    def __init__(self, problem: Any) -> None:
        self.problem = problem

    @property
    def counts(self) -> EvalCounts:
        return self.problem.counts

    def build(
        self, x: np.ndarray, tau: float, rho: float, lam: np.ndarray,
    ) -> ExactModel:
        return ExactModel(self.problem, x)

    def refine(
        self,
        model: ExactModel,
        x: np.ndarray,
        tau: float,
        rho: float,
        lam: np.ndarray,
        enrich_at: Optional[np.ndarray] = None,
    ) -> ExactModel:
        return model


def exact_wrapper(problem: Any) -> ExactWrapperProvider:
    return ExactWrapperProvider(problem)


@dataclass(frozen=True)
class Perturbation:
    """Directions of the objective and constraint perturbations.

    The objective is offset by eps sin(theta0) cos(a^T d) and constraint i
    by eps (1 - cos(b_i^T d)), d = x - x_k. Both derivatives vanish at the
    build point and so do the constraint offsets, so the relative-error
    gates pass there at every level; only the objective value is off.
    """

    a: np.ndarray
    theta0: float
    B: np.ndarray  # m x n

    @property
    def build_point_weight(self) -> float:
        """e(x_k; rho) / eps, the same for every rho."""
        return abs(np.sin(self.theta0))


class SyntheticModel:
    basis_size = 0

    def __init__(
        self,
        problem: Any,
        build_point: np.ndarray,
        eps: float,
        level: int,
        perturbation: Perturbation,
    ) -> None:
        self.problem = problem
        self.build_point = np.array(build_point, dtype=float)
        self.eps = eps
        self.refinement_level = level
        self.p = perturbation

    def _phase_f(self, x: np.ndarray) -> float:
        return float(self.p.a @ (x - self.build_point))

    def _phase_c(self, x: np.ndarray) -> np.ndarray:
        return self.p.B @ (x - self.build_point)

    def objective(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        offset = np.sin(self.p.theta0) * np.cos(self._phase_f(x))
        return self.problem.objective(x) + self.eps * offset

    def constraints(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.problem.constraints(x) + self.eps * (
            1.0 - np.cos(self._phase_c(x))
        )

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        scale = np.sin(self.p.theta0) * np.sin(self._phase_f(x))
        return self.problem.gradient(x) - self.eps * scale * self.p.a

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        scale = self.eps * np.sin(self._phase_c(x))
        return self.problem.jacobian(x) + scale[:, None] * self.p.B

    def objective_error(self, x: np.ndarray) -> float:
        phase = self._phase_f(np.asarray(x, dtype=float))
        return self.eps * abs(np.sin(self.p.theta0) * np.cos(phase))

    def constraint_error(self, x: np.ndarray) -> float:
        phase = self._phase_c(np.asarray(x, dtype=float))
        return self.eps * float(np.sum(1.0 - np.cos(phase)))

    def hessian_apply(
        self, x: np.ndarray, lam: np.ndarray,
    ) -> Optional[Operator]:
        return self.problem.hessian_apply(x, lam)


@dataclass
class SyntheticProvider:
    problem: Any
    decay: float
    eps0: float = 0.1
    seed: int = 0
    perturbation: Perturbation = field(init=False)

    def __post_init__(self) -> None:
        if not 0 < self.decay < 1:
            raise ValueError('decay must lie in (0, 1)')
        if not self.eps0 > 0:
            raise ValueError('eps0 must be positive')
        rng = np.random.default_rng(self.seed)
        n, m = self.problem.n, self.problem.m
        self.perturbation = Perturbation(
            a=rng.standard_normal(n) / np.sqrt(n),
            theta0=float(rng.uniform(0.3, 1.2)),
            B=rng.standard_normal((m, n)) / np.sqrt(n),
        )

    @property
    def counts(self) -> EvalCounts:
        return self.problem.counts

    def eps(self, level: int) -> float:
        return self.eps0 * self.decay ** level

    def level_for(self, tau: float, start: int = 0) -> int:
        """Smallest level >= start whose build-point error is within tau."""
        if not tau > 0:
            raise CannotMeetTolerance(f'requested tolerance {tau:.3e} <= 0')
        weight = self.perturbation.build_point_weight
        level = start
        while self.eps(level) * weight > tau:
            level += 1
            if level > MAX_LEVEL:
                raise CannotMeetTolerance(
                    f'no level reaches tolerance {tau:.3e}'
                )
        return level

    def _model(self, x: np.ndarray, level: int) -> SyntheticModel:
        return SyntheticModel(
            self.problem, x, self.eps(level), level, self.perturbation,
        )

    def build(
        self, x: np.ndarray, tau: float, rho: float, lam: np.ndarray,
    ) -> SyntheticModel:
        level = self.level_for(tau)
        log.debug('synthetic model at level %d (tau=%.3e)', level, tau)
        return self._model(x, level)

    def refine(
        self,
        model: SyntheticModel,
        x: np.ndarray,
        tau: float,
        rho: float,
        lam: np.ndarray,
        enrich_at: Optional[np.ndarray] = None,
    ) -> SyntheticModel:
        level = self.level_for(tau, start=model.refinement_level + 1)
        log.debug('synthetic model refined to level %d', level)
        return self._model(model.build_point, level)


def synthetic_provider(
    problem: Any, decay: float, eps0: float = 0.1, seed: int = 0,
) -> SyntheticProvider:
    return SyntheticProvider(problem, decay, eps0=eps0, seed=seed)
