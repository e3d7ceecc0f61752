"""JSON run configuration for the command-line runner."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from .burgers import Fom1D
from .errors import ConfigError
from .merit import LineSearchParams
from .model_framework import ToleranceLedger
from .problems import make_problem
from .providers import exact_wrapper, synthetic_provider
from .records import HessianStrategy, SolverConfig
from .rom import rom_provider

PROBLEMS = ('P1', 'P2', 'P3', 'burgers')
SOLVERS = ('exact', 'inexact')
PROVIDERS = ('exact-wrapper', 'synthetic', 'rom')

PROBLEM_OPTIONS = {
    'grid_size': int,
    'viscosity': float,
    'n_controls': int,
    'regularization': float,
    'state_target': float,
    'constrained': bool,
}
PROVIDER_OPTIONS = {
    'exact-wrapper': {},
    'synthetic': {'decay': float, 'eps0': float},
    'rom': {'drop_tol': float, 'max_basis': int},
}


@dataclass
class RunConfig:
    problem: str = 'P1'
    problem_options: dict[str, Any] = field(default_factory=dict)
    solver: str = 'exact'
    provider: str = 'exact-wrapper'
    provider_options: dict[str, Any] = field(default_factory=dict)
    hessian_strategy: str = 'gauss-newton'
    kkt_solver: str = 'projected'
    c1: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.5
    sigma: float = 0.1
    rho0: float = 1.0
    omega: float = 0.9
    a1: float = 0.5
    a2: float = 1.0
    r0: float = 1.0
    gamma: float = 0.5
    tau0: float = 1e-2
    tau_fg: float = 0.5
    tau_cg: float = 0.5
    tau_c: float = 0.5
    tol_f: float = 1e-6
    tol_c: float = 1e-6
    max_iter: int = 100
    max_inner: int = 50
    max_refinements: int = 10
    extra_backsteps: int = 5
    instrumented: bool = False
    seed: int = 0
    history: str = 'history.csv'
    summary: str = 'summary.txt'
    effective_config: Optional[str] = None

    def __post_init__(self) -> None:
        _check_choice('problem', self.problem, PROBLEMS)
        _check_choice('solver', self.solver, SOLVERS)
        _check_choice('provider', self.provider, PROVIDERS)
        _check_choice(
            'hessian_strategy', self.hessian_strategy,
            tuple(s.value for s in HessianStrategy),
        )
        if self.provider == 'rom' and self.problem != 'burgers':
            raise ConfigError('provider "rom" requires problem "burgers"')
        if self.problem_options and self.problem != 'burgers':
            raise ConfigError(
                f'problem {self.problem} takes no problem_options'
            )
        self.problem_options = _typed_options(
            'problem_options', self.problem_options, PROBLEM_OPTIONS,
        )
        self.provider_options = _typed_options(
            'provider_options', self.provider_options,
            PROVIDER_OPTIONS[self.provider],
        )
        if self.provider == 'synthetic':
            self.provider_options.setdefault('decay', 0.1)
        # parameter ranges are enforced by the library dataclasses
        try:
            self.solver_config()
            self.ledger()
        except ValueError as e:
            raise ConfigError(str(e))

    @classmethod
    def from_dict(cls, data: Any) -> RunConfig:
        if not isinstance(data, dict):
            raise ConfigError('configuration must be a JSON object')
        fields = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - set(fields))
        if unknown:
            raise ConfigError(f'unknown keys: {", ".join(unknown)}')
        values = {}
        for key, value in data.items():
            values[key] = _coerce(key, value, fields[key].type)
        return cls(**values)

    @classmethod
    def load(cls, path: Union[str, Path]) -> RunConfig:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as e:
            raise ConfigError(f'cannot read {path}: {e}')
        except json.JSONDecodeError as e:
            raise ConfigError(f'{path}:{e.lineno}: {e.msg}')
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            tol_f=self.tol_f,
            tol_c=self.tol_c,
            max_iter=self.max_iter,
            line_search=LineSearchParams(
                c1=self.c1, beta1=self.beta1, beta2=self.beta2,
            ),
            hessian_strategy=HessianStrategy(self.hessian_strategy),
            sigma=self.sigma,
            rho0=self.rho0,
            kkt_solver=self.kkt_solver,
            max_inner=self.max_inner,
            max_refinements=self.max_refinements,
            extra_backsteps=self.extra_backsteps,
            instrumented=self.instrumented,
        )

    def ledger(self) -> ToleranceLedger:
        return ToleranceLedger(
            omega=self.omega,
            a1=self.a1,
            a2=self.a2,
            r0=self.r0,
            gamma=self.gamma,
            tau=self.tau0,
            tau_fg=self.tau_fg,
            tau_cg=self.tau_cg,
            tau_c=self.tau_c,
        )

    def build_problem(self) -> tuple[Any, np.ndarray]:
        """Problem instance and starting point."""
        if self.problem == 'burgers':
            try:
                fom = Fom1D(**self.problem_options)
            except ValueError as e:
                raise ConfigError(f'problem_options: {e}')
            return fom, np.zeros(fom.n)
        problem = make_problem(self.problem)
        return problem, problem.x0.copy()

    def build_provider(self, problem: Any) -> Any:
        options = self.provider_options
        try:
            if self.provider == 'synthetic':
                return synthetic_provider(
                    problem, seed=self.seed, **options,
                )
            if self.provider == 'rom':
                return rom_provider(problem, **options)
        except ValueError as e:
            raise ConfigError(f'provider_options: {e}')
        return exact_wrapper(problem)


def _check_choice(key: str, value: Any, choices: tuple[str, ...]) -> None:
    if value not in choices:
        raise ConfigError(
            f'{key} must be one of {", ".join(choices)} (got {value!r})'
        )


_SCALARS = {'int': int, 'float': float, 'bool': bool, 'str': str}


def _coerce(key: str, value: Any, annotation: Any) -> Any:
    name = str(annotation)
    if name.startswith('dict'):
        if not isinstance(value, dict):
            raise ConfigError(f'{key} must be an object')
        return dict(value)
    if name.startswith('Optional'):
        if value is None:
            return None
        name = name[len('Optional['):-1]
    return _scalar(key, value, _SCALARS[name])


def _scalar(key: str, value: Any, kind: type) -> Any:
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f'{key} must be true or false')
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f'{key} must be an integer')
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f'{key} must be a number')
        if not math.isfinite(value):
            raise ConfigError(f'{key} must be finite')
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f'{key} must be a string')
    return value


def _typed_options(
    key: str, options: dict[str, Any], schema: dict[str, type],
) -> dict[str, Any]:
    unknown = sorted(set(options) - set(schema))
    if unknown:
        raise ConfigError(f'{key}: unknown keys: {", ".join(unknown)}')
    return {
        name: _scalar(f'{key}.{name}', value, schema[name])
        for name, value in sorted(options.items())
    }
