"""Steady viscous Burgers control problem on (0, 1).

State equation, in h-scaled conservative finite differences on N interior
nodes with fixed boundary values y(0) = y_left, y(1) = y_right:

    R_i(y, u) = nu (2 y_i - y_{i-1} - y_{i+1}) / h
                + (y_{i+1}^2 - y_{i-1}^2) / 4 - h (B u)_i = 0

The control u enters through B, whose columns are pairs of cubic Hermite
bumps centred at equispaced nodes. The reduced problem is

    min_u  1/2 h |y(u) - y_d|^2 + omega/2 u^T G u
    s.t.   h |y(u)|^2 - T_d = 0            (dropped when unconstrained)

with G = h B^T B. Gradients come from adjoint solves, the Gauss-Newton
Hessian from the n_u state sensitivities; every solve shares one sparse LU
factorization of the state Jacobian at the point.
"""

from __future__ import annotations

import dataclasses
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import FomSolveFailure
from .linalg import Operator
from .records import EvalCounts, HessianStrategy, SolverConfig, Status

log = logging.getLogger(__name__)

CACHE_SIZE = 16


def hermite_bumps(grid: np.ndarray, n_controls: int) -> np.ndarray:
    """Columns H1((x - z_j)/d), H2((x - z_j)/d) for n_controls/2 centres."""
    n_centres = n_controls // 2
    spacing = 1.0 / (n_centres + 1)
    B = np.zeros((grid.shape[0], n_controls))
    for j in range(n_centres):
        t = (grid - (j + 1) * spacing) / spacing
        left = (t > -1.0) & (t <= 0.0)
        right = (t > 0.0) & (t < 1.0)
        h1 = np.zeros_like(t)
        h2 = np.zeros_like(t)
        h1[left] = (t[left] + 1.0) ** 2 * (1.0 - 2.0 * t[left])
        h1[right] = (1.0 - t[right]) ** 2 * (1.0 + 2.0 * t[right])
        h2[left] = t[left] * (t[left] + 1.0) ** 2
        h2[right] = t[right] * (1.0 - t[right]) ** 2
        B[:, 2 * j] = h1
        B[:, 2 * j + 1] = h2
    return B


class FomPoint:
    """Lazily computed state, adjoints and sensitivities at one control."""

    def __init__(self, fom: Fom1D, u: np.ndarray) -> None:
        self.fom = fom
        self.u = u
        self._state: Optional[np.ndarray] = None
        self._lu = None
        self._adjoints: Optional[tuple[np.ndarray, np.ndarray]] = None
        self._sensitivities: Optional[np.ndarray] = None

    @property
    def state(self) -> np.ndarray:
        if self._state is None:
            self._state = self.fom.solve_state(self.u)
        return self._state

    @property
    def lu(self):
        if self._lu is None:
            self._lu = splu(self.fom.state_jacobian(self.state).tocsc())
        return self._lu

    @property
    def adjoints(self) -> tuple[np.ndarray, np.ndarray]:
        """(p, q): R_y^T p = df/dy and R_y^T q = dc/dy."""
        if self._adjoints is None:
            fom = self.fom
            y = self.state
            p = self.lu.solve(fom.h * (y - fom.target_profile), trans='T')
            fom.counts.fom_adjoint += 1
            q = np.zeros_like(p)
            if fom.constrained:
                q = self.lu.solve(2.0 * fom.h * y, trans='T')
                fom.counts.fom_adjoint += 1
            self._adjoints = (p, q)
        return self._adjoints

    @property
    def sensitivities(self) -> np.ndarray:
        """S = dy/du = R_y^{-1} h B, one solve per control."""
        if self._sensitivities is None:
            fom = self.fom
            self._sensitivities = self.lu.solve(fom.h * fom.control_map)
            fom.counts.fom_sensitivity += fom.n_controls
        return self._sensitivities

    def lagrangian_adjoint(self, lam: np.ndarray) -> np.ndarray:
        p, q = self.adjoints
        if not self.fom.constrained:
            return p
        return p - float(lam[0]) * q


@dataclass
class Fom1D:
    grid_size: int = 200
    viscosity: float = 0.1
    n_controls: int = 8
    regularization: float = 1e-2
    y_left: float = 1.0
    y_right: float = 0.0
    state_target: Optional[float] = None
    constrained: bool = True
    newton_tol: float = 1e-12
    newton_maxit: int = 50
    counts: EvalCounts = field(default_factory=EvalCounts)

    def __post_init__(self) -> None:
        if self.grid_size < 3:
            raise ValueError('grid_size must be at least 3')
        if self.n_controls < 2 or self.n_controls % 2:
            raise ValueError('n_controls must be a positive even number')
        if not (self.viscosity > 0 and self.regularization >= 0):
            raise ValueError('need viscosity > 0 and regularization >= 0')
        N = self.grid_size
        self.h = 1.0 / (N + 1)
        self.grid = self.h * np.arange(1, N + 1)
        self.control_map = hermite_bumps(self.grid, self.n_controls)
        self.control_mass = self.h * self.control_map.T @ self.control_map
        self.target_profile = (
            1.0 - self.grid + 0.5 * np.sin(np.pi * self.grid)
        )
        if self.state_target is None:
            self.state_target = 0.5 * self.h * float(
                self.target_profile @ self.target_profile
            )
        self._stiffness = (self.viscosity / self.h) * sp.diags(
            [-np.ones(N - 1), 2.0 * np.ones(N), -np.ones(N - 1)],
            [-1, 0, 1],
            format='csc',
        )
        self._boundary = np.zeros(N)
        self._boundary[0] = self.viscosity / self.h * self.y_left
        self._boundary[-1] = self.viscosity / self.h * self.y_right
        self._cache: OrderedDict[bytes, FomPoint] = OrderedDict()
        self._last_state: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.n_controls

    @property
    def m(self) -> int:
        return 1 if self.constrained else 0

    # discrete operator

    def residual(self, y: np.ndarray, u: np.ndarray) -> np.ndarray:
        padded = np.concatenate(([self.y_left], y, [self.y_right]))
        convection = 0.25 * (padded[2:] ** 2 - padded[:-2] ** 2)
        return (
            self._stiffness @ y - self._boundary + convection
            - self.h * (self.control_map @ u)
        )

    def state_jacobian(self, y: np.ndarray) -> sp.csc_matrix:
        convection = sp.diags([-0.5 * y[:-1], 0.5 * y[1:]], [-1, 1])
        return (self._stiffness + convection).tocsc()

    def initial_state(self) -> np.ndarray:
        return self.y_left + (self.y_right - self.y_left) * self.grid

    def solve_state(
        self, u: np.ndarray, y0: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        """Damped Newton on R(y, u) = 0."""
        if y0 is None:
            y0 = (
                self._last_state if self._last_state is not None
                else self.initial_state()
            )
        y = np.array(y0, dtype=float)
        res = self.residual(y, u)
        res_norm = float(np.linalg.norm(res))
        for it in range(self.newton_maxit):
            if res_norm <= self.newton_tol:
                break
            dy = -splu(self.state_jacobian(y)).solve(res)
            t = 1.0
            while True:
                y_trial = y + t * dy
                res_trial = self.residual(y_trial, u)
                trial_norm = float(np.linalg.norm(res_trial))
                if trial_norm < (1.0 - 1e-4 * t) * res_norm:
                    break
                t *= 0.5
                if t < 1e-10:
                    raise FomSolveFailure(
                        f'Newton line search stalled at residual '
                        f'{res_norm:.3e}'
                    )
            y, res, res_norm = y_trial, res_trial, trial_norm
            log.debug(
                'FOM Newton %d: residual %.3e (t=%.3g)', it, res_norm, t,
            )
        else:
            if res_norm > self.newton_tol:
                raise FomSolveFailure(
                    f'Newton did not converge: residual {res_norm:.3e}'
                )
        if not np.all(np.isfinite(y)):
            raise FomSolveFailure('non-finite state')
        self.counts.fom_state += 1
        self._last_state = y
        return y

    def point(self, u: np.ndarray) -> FomPoint:
        u = np.array(u, dtype=float)
        key = u.tobytes()
        cached = self._cache.get(key)
        if cached is not None:
            self._cache.move_to_end(key)
            return cached
        point = FomPoint(self, u)
        self._cache[key] = point
        if len(self._cache) > CACHE_SIZE:
            self._cache.popitem(last=False)
        return point

    # reduced objective and constraint

    def tracking(self, y: np.ndarray, u: np.ndarray) -> float:
        misfit = y - self.target_profile
        return 0.5 * self.h * float(misfit @ misfit) + (
            0.5 * self.regularization * float(u @ self.control_mass @ u)
        )

    def energy_constraint(self, y: np.ndarray) -> np.ndarray:
        if not self.constrained:
            return np.zeros(0)
        return np.array([self.h * float(y @ y) - self.state_target])

    def objective(self, u: np.ndarray) -> float:
        self.counts.objective += 1
        point = self.point(u)
        return self.tracking(point.state, point.u)

    def constraints(self, u: np.ndarray) -> np.ndarray:
        self.counts.constraints += 1
        return self.energy_constraint(self.point(u).state)

    def gradient(self, u: np.ndarray) -> np.ndarray:
        self.counts.gradient += 1
        point = self.point(u)
        p, _ = point.adjoints
        return self.h * self.control_map.T @ p + (
            self.regularization * self.control_mass @ point.u
        )

    def jacobian(self, u: np.ndarray) -> np.ndarray:
        self.counts.jacobian += 1
        if not self.constrained:
            return np.zeros((0, self.n))
        _, q = self.point(u).adjoints
        return (self.h * self.control_map.T @ q)[None, :]

    def gauss_newton(
        self, S: np.ndarray, lam: Optional[np.ndarray],
    ) -> np.ndarray:
        """h S^T S + omega G, plus -2 lam h S^T S when lam < 0."""
        A = self.h * S.T @ S
        H = A + self.regularization * self.control_mass
        if self.constrained and lam is not None and lam[0] < 0:
            H = H - 2.0 * float(lam[0]) * A
        return 0.5 * (H + H.T)

    def hessian_apply(
        self, u: np.ndarray, lam: np.ndarray,
    ) -> Optional[Operator]:
        H = self.gauss_newton(self.point(u).sensitivities, lam)
        return lambda v: H @ v


def calibrate_state_target(
    fom: Fom1D,
    fraction: float = 0.5,
    config: Optional[SolverConfig] = None,
) -> float:
    """fraction * h |y|^2 at the optimum of the unconstrained problem."""
    from .sqp_exact import solve_exact

    free = dataclasses.replace(fom, constrained=False, counts=EvalCounts())
    config = config or SolverConfig(
        hessian_strategy=HessianStrategy.GAUSS_NEWTON,
    )
    result = solve_exact(free, np.zeros(free.n), config)
    if result.status is not Status.CONVERGED:
        log.warning(
            'unconstrained solve ended with %s', result.status.value,
        )
    y = free.point(result.state.x).state
    return fraction * free.h * float(y @ y)
