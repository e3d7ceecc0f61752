"""Snapshot-Galerkin reduced models of the Burgers control problem.

The basis is built from FOM snapshots in two stages: states, Lagrangian
adjoints and sensitivities are orthonormalized block by block, then the
concatenation is orthonormalized again. States and adjoints accumulate
over all visited points; sensitivities come from the current build point
only.
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .burgers import Fom1D
from .errors import CannotMeetTolerance, ParseError, RomSolveFailure
from .linalg import Operator, orthonormalize
from .model_framework import merit_error
from .records import EvalCounts

log = logging.getLogger(__name__)

SNAPSHOT_KINDS = ('point', 'state', 'adjoint', 'sensitivity')
ROM_CACHE_SIZE = 32
MIN_RESIDUAL_MAXIT = 50


@dataclass
class SnapshotRegistry:
    points: list[np.ndarray] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    adjoints: list[np.ndarray] = field(default_factory=list)
    sensitivities: list[np.ndarray] = field(default_factory=list)

    def add(
        self,
        point: np.ndarray,
        state: np.ndarray,
        adjoint: Optional[np.ndarray] = None,
    ) -> None:
        self.points.append(np.array(point, dtype=float))
        self.states.append(np.array(state, dtype=float))
        if adjoint is not None:
            self.adjoints.append(np.array(adjoint, dtype=float))

    def evict_oldest(self, keep: np.ndarray) -> bool:
        """Drop the oldest state not taken at `keep` and the oldest adjoint.

        The newest adjoint is always kept. Returns False when nothing could
        be dropped.
        """
        evicted = False
        for i, point in enumerate(self.points):
            if not np.array_equal(point, keep):
                del self.points[i], self.states[i]
                evicted = True
                break
        if len(self.adjoints) > 1:
            del self.adjoints[0]
            evicted = True
        return evicted

    def set_sensitivities(self, S: np.ndarray) -> None:
        self.sensitivities = [np.array(S[:, j]) for j in range(S.shape[1])]

    def basis(self, dim: int, drop_tol: float = 1e-10) -> np.ndarray:
        # newest snapshots first so the current point is never dropped
        blocks = [
            orthonormalize(self.states[::-1], drop_tol, dim),
            orthonormalize(self.adjoints[::-1], drop_tol, dim),
            orthonormalize(self.sensitivities, drop_tol, dim),
        ]
        return orthonormalize(np.hstack(blocks), drop_tol, dim)

    def dump(self, path: Union[str, Path]) -> None:
        """One vector per line: `<kind> v1 v2 ...` in %.16e."""
        lines = []
        for kind, vectors in zip(
            SNAPSHOT_KINDS,
            (self.points, self.states, self.adjoints, self.sensitivities),
        ):
            for v in vectors:
                values = ' '.join('%.16e' % value for value in v)
                lines.append(f'{kind} {values}')
        Path(path).write_text('\n'.join(lines) + '\n')

    @classmethod
    def load(cls, path: Union[str, Path]) -> SnapshotRegistry:
        registry = cls()
        targets = {
            'point': registry.points,
            'state': registry.states,
            'adjoint': registry.adjoints,
            'sensitivity': registry.sensitivities,
        }
        text = Path(path).read_text()
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            kind, _, rest = line.partition(' ')
            if kind not in targets:
                raise ParseError(f'{path}:{lineno}: unknown kind {kind!r}')
            try:
                targets[kind].append(np.array(rest.split(), dtype=float))
            except ValueError as e:
                raise ParseError(f'{path}:{lineno}: {e}')
        return registry


class _RomPoint:
    __slots__ = ('reduced', 'state', 'jacobian')

    def __init__(self, reduced, state, jacobian):
        self.reduced = reduced
        self.state = state
        self.jacobian = jacobian


class RomModel:
    """Galerkin model V^T R(V yr, u) = 0 with residual error indicators.

    The indicators are driven by the minimal residual over span(V),
    min_yr |R(V yr, u)|, which can only grow when basis vectors are
    removed. It is turned into a state error with the stability constant
    of the FOM state Jacobian at the build point, and into objective and
    constraint errors with the build-point state; all three constants are
    fixed when the model is built.
    """

    def __init__(
        self,
        fom: Fom1D,
        basis: np.ndarray,
        build_point: np.ndarray,
        refinement_level: int,
        stability: float,
        build_state: np.ndarray,
    ) -> None:
        self.fom = fom
        self.V = basis
        self.build_point = np.array(build_point, dtype=float)
        self.refinement_level = refinement_level
        # 1 / sigma_min of the FOM state Jacobian at the build point
        self.stability = stability
        self._guess = basis.T @ build_state
        self._control = basis.T @ (fom.h * fom.control_map)
        misfit = build_state - fom.target_profile
        self._objective_scale = fom.h * float(np.linalg.norm(misfit))
        self._constraint_scale = 2.0 * fom.h * float(
            np.linalg.norm(build_state)
        )
        self._cache: OrderedDict[bytes, _RomPoint] = OrderedDict()
        self._min_residual: OrderedDict[bytes, float] = OrderedDict()

    @property
    def basis_size(self) -> int:
        return self.V.shape[1]

    def _reduced_jacobian(self, y: np.ndarray) -> np.ndarray:
        return self.V.T @ (self.fom.state_jacobian(y) @ self.V)

    def _newton_step(self, y: np.ndarray, res: np.ndarray) -> np.ndarray:
        try:
            return -np.linalg.solve(self._reduced_jacobian(y), res)
        except np.linalg.LinAlgError as e:
            raise RomSolveFailure(f'singular reduced Jacobian: {e}')

    def _solve(self, u: np.ndarray) -> _RomPoint:
        u = np.array(u, dtype=float)
        key = u.tobytes()
        cached = self._cache.get(key)
        if cached is not None:
            return cached

        fom, V = self.fom, self.V
        yr = self._guess.copy()
        y = V @ yr
        res = V.T @ fom.residual(y, u)
        res_norm = float(np.linalg.norm(res))
        for it in range(fom.newton_maxit):
            if res_norm <= fom.newton_tol:
                break
            dyr = self._newton_step(y, res)
            t = 1.0
            while True:
                trial = yr + t * dyr
                trial_res = V.T @ fom.residual(V @ trial, u)
                trial_norm = float(np.linalg.norm(trial_res))
                if trial_norm < (1.0 - 1e-4 * t) * res_norm:
                    break
                t *= 0.5
                if t < 1e-10:
                    raise RomSolveFailure(
                        f'reduced Newton stalled at {res_norm:.3e}'
                    )
            yr, res, res_norm = trial, trial_res, trial_norm
            y = V @ yr
            log.debug('ROM Newton %d: residual %.3e', it, res_norm)
        else:
            if res_norm > fom.newton_tol:
                raise RomSolveFailure(
                    f'reduced Newton did not converge: {res_norm:.3e}'
                )
        # polish to roundoff so the full residual reflects the basis only
        trial = yr + self._newton_step(y, res)
        trial_res = V.T @ fom.residual(V @ trial, u)
        if np.linalg.norm(trial_res) < res_norm:
            yr = trial
            y = V @ yr
        if not np.all(np.isfinite(y)):
            raise RomSolveFailure('non-finite reduced state')

        fom.counts.rom_state += 1
        point = _RomPoint(
            reduced=yr,
            state=y,
            jacobian=self._reduced_jacobian(y),
        )
        self._cache[key] = point
        if len(self._cache) > ROM_CACHE_SIZE:
            self._cache.popitem(last=False)
        return point

    def _sensitivities(self, point: _RomPoint) -> np.ndarray:
        """Reduced sensitivities dyr/du."""
        return np.linalg.solve(point.jacobian, self._control)

    def _least_squares(self, u: np.ndarray, yr: np.ndarray) -> float:
        """Gauss-Newton on |R(V yr, u)| from yr; the smallest norm seen."""
        fom, V = self.fom, self.V
        res = fom.residual(V @ yr, u)
        best = float(np.linalg.norm(res))
        for _ in range(MIN_RESIDUAL_MAXIT):
            if best <= fom.newton_tol:
                break
            JV = fom.state_jacobian(V @ yr) @ V
            d = np.linalg.lstsq(JV, -res, rcond=None)[0]
            t = 1.0
            while t >= 1e-4:
                trial = yr + t * d
                trial_res = fom.residual(V @ trial, u)
                trial_norm = float(np.linalg.norm(trial_res))
                if trial_norm < best:
                    break
                t *= 0.5
            else:
                break
            gain = best - trial_norm
            yr, res, best = trial, trial_res, trial_norm
            if gain <= 1e-10 * best:
                break
        return best

    def min_residual(self, u: np.ndarray) -> float:
        """min over yr of |R(V yr, u)|, started from two reduced states."""
        u = np.array(u, dtype=float)
        key = u.tobytes()
        cached = self._min_residual.get(key)
        if cached is not None:
            return cached
        starts = [self._guess]
        try:
            starts.append(self._solve(u).reduced)
        except RomSolveFailure:
            pass
        value = min(self._least_squares(u, yr.copy()) for yr in starts)
        self._min_residual[key] = value
        if len(self._min_residual) > ROM_CACHE_SIZE:
            self._min_residual.popitem(last=False)
        return value

    def _state_error(self, u: np.ndarray) -> float:
        """State error estimate from the minimal residual, with deadband."""
        excess = max(self.min_residual(u) - self.fom.newton_tol, 0.0)
        return self.stability * excess

    def objective(self, u: np.ndarray) -> float:
        u = np.asarray(u, dtype=float)
        return self.fom.tracking(self._solve(u).state, u)

    def constraints(self, u: np.ndarray) -> np.ndarray:
        return self.fom.energy_constraint(self._solve(u).state)

    def gradient(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        fom = self.fom
        point = self._solve(u)
        S = self._sensitivities(point)
        misfit = self.V.T @ (fom.h * (point.state - fom.target_profile))
        return S.T @ misfit + fom.regularization * fom.control_mass @ u

    def jacobian(self, u: np.ndarray) -> np.ndarray:
        fom = self.fom
        if not fom.constrained:
            return np.zeros((0, fom.n))
        point = self._solve(u)
        S = self._sensitivities(point)
        return (S.T @ (self.V.T @ (2.0 * fom.h * point.state)))[None, :]

    def objective_error(self, u: np.ndarray) -> float:
        delta = self._state_error(u)
        if delta == 0.0:
            return 0.0
        return delta * (self._objective_scale + 0.5 * self.fom.h * delta)

    def constraint_error(self, u: np.ndarray) -> float:
        if not self.fom.constrained:
            return 0.0
        delta = self._state_error(u)
        if delta == 0.0:
            return 0.0
        return delta * (self._constraint_scale + self.fom.h * delta)

    def hessian_apply(
        self, u: np.ndarray, lam: np.ndarray,
    ) -> Optional[Operator]:
        S = self._sensitivities(self._solve(u))
        H = self.fom.gauss_newton(S, lam)
        return lambda v: H @ v


class RomProvider:
    def __init__(
        self,
        fom: Fom1D,
        drop_tol: float = 1e-10,
        max_basis: Optional[int] = None,
    ) -> None:
        self.fom = fom
        self.drop_tol = drop_tol
        self.max_basis = max_basis or fom.grid_size // 4
        self.registry = SnapshotRegistry()
        self._stability: dict[bytes, float] = {}

    @property
    def counts(self) -> EvalCounts:
        return self.fom.counts

    def _stability_at(self, x: np.ndarray) -> float:
        key = np.asarray(x, dtype=float).tobytes()
        if key not in self._stability:
            J = self.fom.state_jacobian(self.fom.point(x).state).toarray()
            sigma_min = np.linalg.svd(J, compute_uv=False)[-1]
            self._stability[key] = 1.0 / sigma_min
        return self._stability[key]

    def _model(
        self, x: np.ndarray, level: int, tau: float, rho: float,
    ) -> RomModel:
        V = self.registry.basis(self.fom.grid_size, self.drop_tol)
        while V.shape[1] > self.max_basis:
            if not self.registry.evict_oldest(x):
                raise CannotMeetTolerance(
                    f'basis size {V.shape[1]} exceeds cap {self.max_basis}'
                )
            V = self.registry.basis(self.fom.grid_size, self.drop_tol)
            log.info(
                'basis cap %d: evicted oldest snapshots, basis now %d',
                self.max_basis, V.shape[1],
            )
        state = self.fom.point(x).state
        model = RomModel(
            self.fom, V, x, level, self._stability_at(x), state,
        )
        e = merit_error(model, x, rho)
        if e > tau:
            raise CannotMeetTolerance(
                f'ROM error {e:.3e} at the build point exceeds {tau:.3e}'
            )
        return model

    def build(
        self, x: np.ndarray, tau: float, rho: float, lam: np.ndarray,
    ) -> RomModel:
        point = self.fom.point(x)
        self.registry.add(x, point.state, point.lagrangian_adjoint(lam))
        self.registry.set_sensitivities(point.sensitivities)
        model = self._model(x, 0, tau, rho)
        log.info('ROM built at basis size %d', model.basis_size)
        return model

    def refine(
        self,
        model: RomModel,
        x: np.ndarray,
        tau: float,
        rho: float,
        lam: np.ndarray,
        enrich_at: Optional[np.ndarray] = None,
    ) -> RomModel:
        target = x if enrich_at is None else enrich_at
        point = self.fom.point(target)
        if enrich_at is None:
            self.registry.add(
                target, point.state, point.lagrangian_adjoint(lam),
            )
        else:
            self.registry.add(target, point.state)
        refined = self._model(
            model.build_point, model.refinement_level + 1, tau, rho,
        )
        log.info(
            'ROM refined: basis %d -> %d',
            model.basis_size, refined.basis_size,
        )
        return refined


def rom_provider(
    fom: Fom1D, drop_tol: float = 1e-10, max_basis: Optional[int] = None,
) -> RomProvider:
    return RomProvider(fom, drop_tol=drop_tol, max_basis=max_basis)
