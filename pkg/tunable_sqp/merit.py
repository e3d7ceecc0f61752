"""l1-merit function, penalty update and backtracking line search.

The same backtracking routine serves the exact driver, the Cauchy step and
the inner subminimization loop: the merit along the step is passed in as a
closure, and an optional predicate lets the inner loop enforce its error
budget at every trial step size.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import LineSearchFailure

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PenaltyState:
    rho: float
    sigma: float = 0.1
    history: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        if not (self.rho > 0 and self.sigma > 0):
            raise ValueError('rho and sigma must be positive')
        if not self.history:
            object.__setattr__(self, 'history', (self.rho,))


@dataclass(frozen=True)
class LineSearchParams:
    c1: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.5
    alpha0: float = 1.0
    c3: float = 1.0  # floor on the initial step
    max_backtracks: int = 60

    def __post_init__(self) -> None:
        if not 0 < self.c1 < 1:
            raise ValueError('c1 must lie in (0, 1)')
        if not 0 < self.beta1 <= self.beta2 < 1:
            raise ValueError('need 0 < beta1 <= beta2 < 1')
        if not 0 < self.c3 <= self.alpha0 <= 1:
            raise ValueError('need 0 < c3 <= alpha0 <= 1')
        if self.max_backtracks < 1:
            raise ValueError('max_backtracks must be positive')


class LineSearchResult(NamedTuple):
    alpha: float
    merit: float
    n_evals: int


def l1_norm(v: np.ndarray) -> float:
    return float(np.sum(np.abs(v)))


def merit_value(f_val: float, c_val: np.ndarray, rho: float) -> float:
    """phi = f + rho |c|_1."""
    return float(f_val) + rho * l1_norm(np.asarray(c_val, dtype=float))


def merit_directional_derivative(
    grad_f: np.ndarray,
    s: np.ndarray,
    c_val: np.ndarray,
    rho: float,
) -> float:
    """Directional derivative of phi along s, valid when c + J s = 0."""
    return float(np.dot(grad_f, s)) - rho * l1_norm(
        np.asarray(c_val, dtype=float)
    )


def update_penalty(state: PenaltyState, lambda_inf: float) -> PenaltyState:
    if state.rho >= lambda_inf + state.sigma:
        rho = state.rho
    else:
        rho = 2.0 * lambda_inf + state.sigma
        log.debug('penalty raised %.6g -> %.6g', state.rho, rho)
    return dataclasses.replace(
        state, rho=rho, history=state.history + (rho,),
    )


def _contraction(
    params: LineSearchParams,
    alpha: float,
    phi0: float,
    D0: float,
    phi_alpha: float,
) -> float:
    """Next contraction factor in [beta1, beta2].

    Minimizer of the quadratic interpolating phi0, D0 and phi(alpha),
    clipped to the bracket.
    """
    if params.beta1 == params.beta2:
        return params.beta1
    curvature = phi_alpha - phi0 - D0 * alpha
    if not math.isfinite(curvature) or curvature <= 0.0:
        return params.beta1
    factor = -D0 * alpha / (2.0 * curvature)
    return min(max(factor, params.beta1), params.beta2)


def backtracking_search(
    phi: Callable[[float], float],
    phi0: float,
    D0: float,
    params: LineSearchParams,
    accept: Optional[Callable[[float], bool]] = None,
) -> LineSearchResult:
    """Backtrack until phi(a) <= phi0 + c1 a D0 and accept(a) holds."""
    if not D0 < 0:
        raise LineSearchFailure(
            f'not a descent direction (directional derivative {D0:.3e})'
        )
    alpha = params.alpha0
    for n_evals in range(1, params.max_backtracks + 1):
        value = phi(alpha)
        decrease = value <= phi0 + params.c1 * alpha * D0
        if decrease and (accept is None or accept(alpha)):
            log.debug(
                'line search accepted alpha=%.3e after %d trials',
                alpha, n_evals,
            )
            return LineSearchResult(alpha, value, n_evals)
        alpha *= _contraction(params, alpha, phi0, D0, value)
    raise LineSearchFailure(
        f'no acceptable step after {params.max_backtracks} trials'
    )
