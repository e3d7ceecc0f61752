"""Exceptions raised by the solver kernels, drivers and the CLI."""

from __future__ import annotations


class SolverError(Exception):
    """Base class for numerical failures inside a solver run."""


class RankDeficient(SolverError):
    """The constraint Jacobian lost full row rank."""


class SingularKKT(SolverError):
    """The dense KKT matrix could not be factorized."""


class LineSearchFailure(SolverError):
    """No acceptable step size was found within the backtracking budget."""


class RefinementBudgetExhausted(SolverError):
    """The model construction loop hit its per-iteration refinement cap."""


class InfeasibleTolerance(SolverError):
    """The next model tolerance came out nonpositive."""


class CannotMeetTolerance(SolverError):
    """A provider cannot build a model with the requested error bound."""


class StateSolveFailure(SolverError):
    """A nonlinear state solve did not converge."""


class FomSolveFailure(StateSolveFailure):
    """Full-order state solve failure."""


class RomSolveFailure(StateSolveFailure):
    """Reduced-order state solve failure."""


class ConfigError(ValueError):
    """Invalid run configuration."""


class ParseError(ValueError):
    """Malformed history file."""
