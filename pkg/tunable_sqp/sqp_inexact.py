"""Line-search SQP on models of tunable accuracy.

Each outer iteration builds a model at x_k, computes a generalized Cauchy
point by one model SQP step (refining the model until the error at the
Cauchy point is small relative to the decrease it achieves), continues
with an inner SQP loop on the fixed model under an error budget, and
chooses the tolerance of the next model so that the next model's merit at
x_{k+1} keeps a fixed fraction of the Cauchy decrease.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, NamedTuple, Optional

import numpy as np

from .errors import (
    InfeasibleTolerance,
    LineSearchFailure,
    RefinementBudgetExhausted,
    SolverError,
    StateSolveFailure,
)
from .merit import (
    PenaltyState,
    backtracking_search,
    l1_norm,
    merit_directional_derivative,
    merit_value,
    update_penalty,
)
from .model_framework import (
    ModelProvider,
    ToleranceLedger,
    cauchy_acceptable,
    check_relative_errors,
    forcing_value,
    merit_error,
    model_merit,
    next_tolerance,
    omega_bound,
)
from .records import (
    HessianStrategy,
    IterateState,
    IterationRecord,
    OuterCheck,
    SolverConfig,
    Status,
)
from .sqp_exact import (
    DampedBfgs,
    compute_step,
    fonc_residuals,
    hessian_apply,
    initial_multiplier,
)

log = logging.getLogger(__name__)

# Relative slack on merit comparisons that recompute the same quantity
MERIT_SLACK = 1e-12


class SubminExit(Enum):
    MODEL_STATIONARY = 'ModelStationary'
    PENALTY_RAISED = 'PenaltyRaised'
    CONSTRAINT_BOUND = 'ConstraintBound'
    MAX_INNER = 'MaxInner'


@dataclass
class CauchyResult:
    x_cauchy: np.ndarray
    step: np.ndarray
    alpha: float
    lambda_next: np.ndarray
    penalty: PenaltyState
    refinements_used: int
    model: Any
    psi_xk: float
    psi_cauchy: float
    e_pow: float
    r_k: float
    cg_iterations: int = 0
    stationary: bool = False  # null model step, no Cauchy point

    @property
    def rho(self) -> float:
        return self.penalty.rho


@dataclass
class InnerRecord:
    j: int
    stationarity: float
    feasibility: float
    merit: float
    rho: float
    alpha: float


@dataclass
class SubminResult:
    x_next: np.ndarray
    lam: np.ndarray
    exit: SubminExit
    inner_records: list[InnerRecord] = field(default_factory=list)


class InexactResult(NamedTuple):
    state: IterateState
    history: list[IterationRecord]
    status: Status
    model: Any
    checks: list[OuterCheck]


def _ratios(gate: Any) -> str:
    return '%.3e/%.3e/%.3e' % (
        gate.gradient_ratio, gate.jacobian_ratio, gate.constraint_ratio,
    )


def _gate_model(
    provider: ModelProvider,
    problem: Any,
    ledger: ToleranceLedger,
    model: Any,
    x: np.ndarray,
    tau: float,
    rho: float,
    lam: np.ndarray,
    config: SolverConfig,
    used: int,
) -> tuple[Any, int]:
    """Refine `model` at x until the relative-error gates pass."""
    gate = check_relative_errors(model, problem, x, lam, ledger)
    while not gate.passed:
        if used >= config.max_refinements:
            raise RefinementBudgetExhausted(
                'relative error gates still failing (ratios %s) after %d '
                'refinements' % (_ratios(gate), used)
            )
        log.warning(
            'relative error gate failed (ratios %s); refining', _ratios(gate),
        )
        model = provider.refine(model, x, tau, rho, lam)
        used += 1
        gate = check_relative_errors(model, problem, x, lam, ledger)
    return model, used


def build_model(
    provider: ModelProvider,
    problem: Any,
    ledger: ToleranceLedger,
    x: np.ndarray,
    tau: float,
    rho: float,
    lam: np.ndarray,
    config: SolverConfig,
) -> tuple[Any, int]:
    model = provider.build(x, tau, rho, lam)
    log.info(
        'model built (level %d, basis %d, tau=%.3e)',
        model.refinement_level, model.basis_size, tau,
    )
    return _gate_model(
        provider, problem, ledger, model, x, tau, rho, lam, config, 0,
    )


def _model_values(model: Any, x: np.ndarray) -> tuple:
    return (
        model.objective(x),
        model.constraints(x),
        model.gradient(x),
        model.jacobian(x),
    )


def _merit_along(model: Any, x: np.ndarray, s: np.ndarray, rho: float):
    def phi(alpha: float) -> float:
        try:
            return model_merit(model, x + alpha * s, rho)
        except StateSolveFailure as e:
            log.debug('model trial alpha=%.3e rejected: %s', alpha, e)
            return math.inf

    return phi


def _inf_norm(v: np.ndarray) -> float:
    return float(np.max(np.abs(v), initial=0.0))


def compute_cauchy_point(
    provider: ModelProvider,
    problem: Any,
    ledger: ToleranceLedger,
    state: IterateState,
    config: SolverConfig,
    model: Any,
    bfgs: Optional[DampedBfgs] = None,
    refinements_used: int = 0,
) -> CauchyResult:
    """One model SQP step from x_k, refining until the step is trusted."""
    x, lam, k = state.x, state.lam, state.k
    r_k = forcing_value(ledger, k)
    params = config.line_search
    used = refinements_used

    for attempt in range(config.max_refinements + 1):
        if attempt > 0:
            if used >= config.max_refinements:
                break
            model = provider.refine(
                model, x, ledger.tau, penalty.rho, lam, enrich_at=x_cauchy,
            )
            used += 1
            model, used = _gate_model(
                provider, problem, ledger, model, x, ledger.tau,
                penalty.rho, lam, config, used,
            )
            log.info(
                'model refined (level %d, basis %d)',
                model.refinement_level, model.basis_size,
            )

        f, c, g, J = _model_values(model, x)
        H = hessian_apply(config.hessian_strategy, model, x, lam, bfgs)
        step = compute_step(H, J, g, c, config)
        penalty = update_penalty(state.penalty, _inf_norm(step.lam))
        rho = penalty.rho
        psi_xk = merit_value(f, c, rho)
        s = step.s
        if not np.any(s):
            return CauchyResult(
                x_cauchy=x, step=s, alpha=0.0, lambda_next=step.lam,
                penalty=penalty, refinements_used=used, model=model,
                psi_xk=psi_xk, psi_cauchy=psi_xk, e_pow=0.0, r_k=r_k,
                cg_iterations=step.cg_iterations, stationary=True,
            )

        D = merit_directional_derivative(g, s, c, rho)
        phi = _merit_along(model, x, s, rho)
        ls = backtracking_search(phi, psi_xk, D, params)
        alpha, psi_c = ls.alpha, ls.merit
        x_cauchy = x + alpha * s

        for backstep in range(config.extra_backsteps + 1):
            if backstep > 0:
                trial_alpha = 0.5 * alpha
                trial_psi = phi(trial_alpha)
                if trial_psi > psi_xk + params.c1 * trial_alpha * D:
                    break
                alpha, psi_c = trial_alpha, trial_psi
            x_c = x + alpha * s
            e_pow = omega_bound(merit_error(model, x_c, rho), ledger.omega)
            if cauchy_acceptable(ledger, e_pow, r_k, psi_xk - psi_c):
                log.debug(
                    'Cauchy point accepted: alpha=%.3e e^w=%.3e dec=%.3e',
                    alpha, e_pow, psi_xk - psi_c,
                )
                return CauchyResult(
                    x_cauchy=x_c, step=s, alpha=alpha, lambda_next=step.lam,
                    penalty=penalty, refinements_used=used, model=model,
                    psi_xk=psi_xk, psi_cauchy=psi_c, e_pow=e_pow, r_k=r_k,
                    cg_iterations=step.cg_iterations,
                )
        log.info(
            'Cauchy point rejected at k=%d (e^w=%.3e, r_k=%.3e, dec=%.3e)',
            k, e_pow, r_k, psi_xk - psi_c,
        )
    raise RefinementBudgetExhausted(
        f'no acceptable Cauchy point after {used} refinements'
    )


def solve_submin(
    ledger: ToleranceLedger,
    cauchy: CauchyResult,
    state: IterateState,
    config: SolverConfig,
    bfgs: Optional[DampedBfgs] = None,
) -> SubminResult:
    """SQP on the fixed model from the Cauchy point under an error budget."""
    model = cauchy.model
    rho_k = cauchy.rho
    params = config.line_search
    bound = min(
        cauchy.r_k,
        ledger.a2 * (1.0 - ledger.a1) * (cauchy.psi_xk - cauchy.psi_cauchy),
    )

    def within_budget(point: np.ndarray) -> bool:
        try:
            e = merit_error(model, point, rho_k)
        except StateSolveFailure:
            return False
        return omega_bound(e, ledger.omega) <= bound

    x = cauchy.x_cauchy
    lam = cauchy.lambda_next
    penalty = cauchy.penalty
    f, c, g, J = _model_values(model, x)
    records: list[InnerRecord] = []
    exit_reason = SubminExit.MAX_INNER

    for j in range(config.max_inner):
        stationarity = float(np.linalg.norm(g - J.T @ lam))
        feasibility = l1_norm(c)
        if stationarity < config.tol_f and feasibility < config.tol_c:
            exit_reason = SubminExit.MODEL_STATIONARY
            break
        H = hessian_apply(config.hessian_strategy, model, x, lam, bfgs)
        step = compute_step(H, J, g, c, config)
        penalty = update_penalty(penalty, _inf_norm(step.lam))
        s = step.s
        if not np.any(s):
            lam = step.lam
            exit_reason = SubminExit.MODEL_STATIONARY
            break
        D = merit_directional_derivative(g, s, c, penalty.rho)
        phi = _merit_along(model, x, s, penalty.rho)
        try:
            ls = backtracking_search(
                phi,
                merit_value(f, c, penalty.rho),
                D,
                params,
                accept=lambda a: within_budget(x + a * s),
            )
        except LineSearchFailure as e:
            log.debug('inner loop blocked at j=%d: %s', j, e)
            exit_reason = SubminExit.CONSTRAINT_BOUND
            break
        x_new = x + ls.alpha * s
        if penalty.rho > rho_k and (
            model_merit(model, x_new, rho_k) > cauchy.psi_cauchy
        ):
            exit_reason = SubminExit.PENALTY_RAISED
            break
        f_new, c_new, g_new, J_new = _model_values(model, x_new)
        if bfgs is not None:
            bfgs.update(
                x_new - x,
                (g_new - J_new.T @ step.lam) - (g - J.T @ step.lam),
            )
        x, f, c, g, J = x_new, f_new, c_new, g_new, J_new
        lam = step.lam
        records.append(InnerRecord(
            j=j,
            stationarity=stationarity,
            feasibility=feasibility,
            merit=ls.merit,
            rho=penalty.rho,
            alpha=ls.alpha,
        ))

    log.debug(
        'inner loop: %s after %d steps', exit_reason.value, len(records),
    )
    return SubminResult(x, lam, exit_reason, records)


def solve_inexact(
    provider: ModelProvider,
    problem: Any,
    x0: np.ndarray,
    ledger: Optional[ToleranceLedger] = None,
    config: Optional[SolverConfig] = None,
    lambda0: Optional[np.ndarray] = None,
) -> InexactResult:
    """Outer loop of the model-based SQP method.

    `problem` is touched only by the relative-error gates at each build
    point and, for instrumented runs, by the true first-order residuals.
    """
    config = config or SolverConfig()
    ledger = dataclasses.replace(ledger or ToleranceLedger(), tau_history=[])
    x = np.array(x0, dtype=float)
    penalty = PenaltyState(config.rho0, config.sigma)
    bfgs = (
        DampedBfgs(x.shape[0])
        if config.hessian_strategy is HessianStrategy.DAMPED_BFGS
        else None
    )
    history: list[IterationRecord] = []
    checks: list[OuterCheck] = []
    model = None
    lam = np.zeros(problem.m)
    k = 0

    def finish(status: Status) -> InexactResult:
        state = IterateState(
            x=x, lam=lam, penalty=penalty, k=k,
            eval_counts=provider.counts.snapshot(),
        )
        log.info(
            'inexact SQP finished: %s after %d iterations (%d FOM solves)',
            status.value, k, state.eval_counts.fom_solves,
        )
        return InexactResult(state, history, status, model, checks)

    try:
        if lambda0 is None:
            lam = initial_multiplier(problem.gradient(x), problem.jacobian(x))
        else:
            lam = np.array(lambda0, dtype=float)
        model, used = build_model(
            provider, problem, ledger, x, ledger.tau, penalty.rho, lam,
            config,
        )
    except SolverError as e:
        log.warning('inexact SQP could not start: %s', e)
        return finish(Status.from_error(e))

    while True:
        f, c, g, J = _model_values(model, x)
        stationarity = float(np.linalg.norm(g - J.T @ lam))
        feasibility = l1_norm(c)
        record = IterationRecord(
            k=k,
            stationarity=stationarity,
            feasibility=feasibility,
            merit=merit_value(f, c, penalty.rho),
            rho=penalty.rho,
            objective=f,
            fom_solves=provider.counts.fom_solves,
            rom_solves=provider.counts.rom_state,
            basis_size=model.basis_size,
            refinements=used,
            tau=ledger.tau,
        )
        if config.instrumented:
            record.true_stationarity, record.true_feasibility = (
                fonc_residuals(problem, x, lam)
            )
        history.append(record)
        log.info(
            'k=%d stat=%.3e feas=%.3e merit=%.10g rho=%.4g tau=%.3e',
            k, stationarity, feasibility, record.merit, penalty.rho,
            ledger.tau,
        )
        if stationarity < config.tol_f and feasibility < config.tol_c:
            return finish(Status.CONVERGED)
        if k >= config.max_iter:
            return finish(Status.MAX_ITER)

        state = IterateState(
            x=x, lam=lam, penalty=penalty, k=k,
            eval_counts=provider.counts.snapshot(),
        )
        try:
            cauchy = compute_cauchy_point(
                provider, problem, ledger, state, config, model, bfgs, used,
            )
            model = cauchy.model
            record.refinements = cauchy.refinements_used
            record.cg_iterations = cauchy.cg_iterations
            if cauchy.stationary:
                log.info('null model step at k=%d; updating multiplier', k)
                lam = cauchy.lambda_next
                penalty = cauchy.penalty
                used = cauchy.refinements_used
                k += 1
                continue

            submin = solve_submin(ledger, cauchy, state, config, bfgs)
            rho_k = cauchy.rho
            x_next = submin.x_next
            psi_next = model_merit(model, x_next, rho_k)
            e_next_pow = omega_bound(
                merit_error(model, x_next, rho_k), ledger.omega,
            )
            budget = min(
                cauchy.r_k,
                ledger.a2 * (1.0 - ledger.a1)
                * (cauchy.psi_xk - cauchy.psi_cauchy),
            )
            slack = MERIT_SLACK * (1.0 + abs(cauchy.psi_cauchy))
            if psi_next > cauchy.psi_cauchy + slack:
                raise LineSearchFailure(
                    f'no simple decrease: {psi_next:.6e} > '
                    f'{cauchy.psi_cauchy:.6e}'
                )
            if max(e_next_pow, cauchy.e_pow) > budget:
                raise InfeasibleTolerance(
                    f'model error exceeds the budget {budget:.3e}'
                )

            tau_next = next_tolerance(
                ledger, cauchy.psi_xk, cauchy.psi_cauchy, psi_next,
                e_next_pow, k,
            )
            if not 0.0 < tau_next <= cauchy.r_k:
                raise InfeasibleTolerance(
                    f'next tolerance {tau_next:.3e} outside (0, r_k]'
                )
            lam_next = submin.lam
            new_model, used = build_model(
                provider, problem, ledger, x_next,
                min(tau_next, tau_next ** (1.0 / ledger.omega)),
                rho_k, lam_next, config,
            )
        except SolverError as e:
            log.warning('inexact SQP stopped at k=%d: %s', k, e)
            return finish(Status.from_error(e))

        psi_new_model = model_merit(new_model, x_next, rho_k)
        a1 = ledger.a1
        decrease = cauchy.psi_xk - cauchy.psi_cauchy
        checks.append(OuterCheck(
            k=k,
            r_k=cauchy.r_k,
            tau_next=tau_next,
            psi_xk=cauchy.psi_xk,
            psi_cauchy=cauchy.psi_cauchy,
            psi_next=psi_next,
            simple_margin=cauchy.psi_cauchy - psi_next,
            mod_margin=budget - e_next_pow,
            cauchy_margin=budget - cauchy.e_pow,
            ideal_margin=(cauchy.psi_xk - psi_new_model) - a1 * decrease,
        ))
        log.debug('inner exit %s', submin.exit.value)

        record.alpha = cauchy.alpha
        record.step_norm = float(np.linalg.norm(x_next - x))
        ledger.advance(tau_next)
        x, lam, model, penalty = x_next, lam_next, new_model, cauchy.penalty
        k += 1
