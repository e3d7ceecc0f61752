"""Line-search SQP with l1-merit on exact function information.

Also home of the pieces shared with the inexact driver: the initial
multiplier estimate, the Hessian strategies and the KKT step with its
Levenberg safeguard.
"""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING, Any, NamedTuple, Optional

import numpy as np
import scipy.linalg as sla

from .errors import SolverError, StateSolveFailure
from .linalg import (
    KKTSolution,
    NullspaceProjector,
    Operator,
    dense_kkt_oracle,
    solve_kkt_projected,
)
from .merit import (
    PenaltyState,
    backtracking_search,
    l1_norm,
    merit_directional_derivative,
    merit_value,
    update_penalty,
)
from .records import (
    HessianStrategy,
    IterateState,
    IterationRecord,
    SolverConfig,
    Status,
)

if TYPE_CHECKING:
    from .problems import ProblemFunctions

log = logging.getLogger(__name__)

# Lowest admissible Rayleigh quotient of the Hessian on null(J)
CURVATURE_FLOOR = 1e-8
LEVENBERG_SHIFTS = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4)
BFGS_DAMPING = 0.2


class SolveResult(NamedTuple):
    state: IterateState
    history: list[IterationRecord]
    status: Status


def initial_multiplier(grad_f: np.ndarray, J: np.ndarray) -> np.ndarray:
    """Least-squares multiplier (J J^T)^{-1} J grad_f."""
    grad_f = np.asarray(grad_f, dtype=float)
    return NullspaceProjector(J).multiplier(grad_f)


def fonc_residuals(
    problem: Any, x: np.ndarray, lam: np.ndarray,
) -> tuple[float, float]:
    """|grad f - J^T lam| and |c|_1 of `problem` at (x, lam)."""
    g = problem.gradient(x)
    J = problem.jacobian(x)
    c = problem.constraints(x)
    return float(np.linalg.norm(g - J.T @ lam)), l1_norm(c)


class DampedBfgs:
    """Dense BFGS approximation with Powell damping.

    Starts from the identity and stays positive definite: pairs with
    s^T y < 0.2 s^T B s are blended with B s before the update.
    """

    def __init__(self, n: int) -> None:
        self.B = np.eye(n)
        self.updates = 0

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.B @ v

    def update(self, s: np.ndarray, y: np.ndarray) -> None:
        Bs = self.B @ s
        sBs = float(s @ Bs)
        if not sBs > 0.0:
            return
        sy = float(s @ y)
        if sy >= BFGS_DAMPING * sBs:
            theta = 1.0
        else:
            theta = (1.0 - BFGS_DAMPING) * sBs / (sBs - sy)
        r = theta * y + (1.0 - theta) * Bs
        self.B = (
            self.B - np.outer(Bs, Bs) / sBs + np.outer(r, r) / float(s @ r)
        )
        self.B = 0.5 * (self.B + self.B.T)
        self.updates += 1


def _identity(v: np.ndarray) -> np.ndarray:
    return np.array(v, dtype=float)


def hessian_apply(
    strategy: HessianStrategy,
    source: Any,
    x: np.ndarray,
    lam: np.ndarray,
    bfgs: Optional[DampedBfgs] = None,
) -> Operator:
    """Hessian approximation as an operator v -> H v.

    `source` is a problem or a model; for the Gauss-Newton strategy it must
    expose hessian_apply(x, lam). Positive definiteness on null(J) is
    enforced later by compute_step.
    """
    if strategy is HessianStrategy.IDENTITY:
        return _identity
    if strategy is HessianStrategy.DAMPED_BFGS:
        if bfgs is None:
            return _identity
        return bfgs.apply
    supplier = getattr(source, 'hessian_apply', None)
    op = supplier(x, lam) if supplier is not None else None
    if op is None:
        log.warning('no Hessian operator supplied; using identity')
        return _identity
    return op


def _shifted(H: Operator, mu: float) -> Operator:
    if mu == 0.0:
        return H
    return lambda v: H(v) + mu * v


def _solve_dense(
    H: Operator, proj: NullspaceProjector, g: np.ndarray, c: np.ndarray,
) -> KKTSolution:
    n = g.shape[0]
    H_mat = np.column_stack([H(e) for e in np.eye(n)])
    H_mat = 0.5 * (H_mat + H_mat.T)
    Z = sla.null_space(proj.J) if proj.m else np.eye(n)
    if Z.shape[1]:
        reduced = np.linalg.eigvalsh(Z.T @ H_mat @ Z)
        if reduced[0] <= CURVATURE_FLOOR:
            zero = np.zeros(n)
            return KKTSolution(
                s=zero, lam=np.zeros(proj.m), indefinite=True,
            )
    return dense_kkt_oracle(H_mat, proj.J, g, c)


def compute_step(
    H: Operator,
    J: np.ndarray,
    g: np.ndarray,
    c: np.ndarray,
    config: SolverConfig,
) -> KKTSolution:
    """KKT step with Levenberg shifts on low curvature.

    Raises RankDeficient when J loses full row rank.
    """
    proj = NullspaceProjector(J)
    g = np.asarray(g, dtype=float)
    c = np.asarray(c, dtype=float)

    def attempt(op: Operator) -> KKTSolution:
        if config.kkt_solver == 'dense':
            return _solve_dense(op, proj, g, c)
        return solve_kkt_projected(
            op, J, g, c,
            cg_tol=config.cg_tol,
            cg_maxit=config.cg_maxit,
            curvature_floor=CURVATURE_FLOOR,
            projector=proj,
        )

    for mu in (0.0,) + LEVENBERG_SHIFTS:
        step = attempt(_shifted(H, mu))
        if not step.indefinite:
            return step
        log.debug('low curvature with shift %.1e; increasing', mu)
    log.warning('Hessian not positive definite on null(J); using identity')
    return attempt(_identity)


def solve_exact(
    problem: ProblemFunctions,
    x0: np.ndarray,
    config: Optional[SolverConfig] = None,
    lambda0: Optional[np.ndarray] = None,
) -> SolveResult:
    """Run the line-search SQP method on exact evaluations of `problem`."""
    config = config or SolverConfig()
    x = np.array(x0, dtype=float)
    penalty = PenaltyState(config.rho0, config.sigma)
    history: list[IterationRecord] = []
    bfgs = (
        DampedBfgs(x.shape[0])
        if config.hessian_strategy is HessianStrategy.DAMPED_BFGS
        else None
    )

    def finish(lam: np.ndarray, k: int, status: Status) -> SolveResult:
        state = IterateState(
            x=x, lam=lam, penalty=penalty, k=k,
            eval_counts=problem.counts.snapshot(),
        )
        log.info(
            'exact SQP finished: %s after %d iterations', status.value, k,
        )
        return SolveResult(state, history, status)

    try:
        f = problem.objective(x)
        c = problem.constraints(x)
        g = problem.gradient(x)
        J = problem.jacobian(x)
        if lambda0 is None:
            lam = initial_multiplier(g, J)
        else:
            lam = np.array(lambda0, dtype=float)
    except SolverError as e:
        log.warning('exact SQP could not start: %s', e)
        return finish(np.zeros(problem.m), 0, Status.from_error(e))

    k = 0
    while True:
        stationarity = float(np.linalg.norm(g - J.T @ lam))
        feasibility = l1_norm(c)
        record = IterationRecord(
            k=k,
            stationarity=stationarity,
            feasibility=feasibility,
            merit=merit_value(f, c, penalty.rho),
            rho=penalty.rho,
            objective=f,
            fom_solves=problem.counts.fom_solves,
            rom_solves=problem.counts.rom_state,
        )
        history.append(record)
        log.info(
            'k=%d stat=%.3e feas=%.3e merit=%.10g rho=%.4g',
            k, stationarity, feasibility, record.merit, penalty.rho,
        )
        if stationarity < config.tol_f and feasibility < config.tol_c:
            return finish(lam, k, Status.CONVERGED)
        if k >= config.max_iter:
            return finish(lam, k, Status.MAX_ITER)

        try:
            H = hessian_apply(config.hessian_strategy, problem, x, lam, bfgs)
            step = compute_step(H, J, g, c, config)
            penalty = update_penalty(
                penalty, float(np.max(np.abs(step.lam), initial=0.0)),
            )
            rho = penalty.rho
            record.cg_iterations = step.cg_iterations
            s = step.s
            if not np.any(s):
                log.info('null step at k=%d; updating multiplier', k)
                lam = step.lam
                k += 1
                continue

            trial: dict[str, Any] = {}

            def phi(alpha: float) -> float:
                xt = x + alpha * s
                try:
                    ft = problem.objective(xt)
                    ct = problem.constraints(xt)
                except StateSolveFailure as e:
                    log.debug('trial alpha=%.3e rejected: %s', alpha, e)
                    return np.inf
                trial['alpha'], trial['f'], trial['c'] = alpha, ft, ct
                return merit_value(ft, ct, rho)

            D = merit_directional_derivative(g, s, c, rho)
            ls = backtracking_search(
                phi, merit_value(f, c, rho), D, config.line_search,
            )
            x_new = x + ls.alpha * s
            if trial.get('alpha') != ls.alpha:
                trial['f'] = problem.objective(x_new)
                trial['c'] = problem.constraints(x_new)
            g_new = problem.gradient(x_new)
            J_new = problem.jacobian(x_new)
        except SolverError as e:
            log.warning('exact SQP stopped at k=%d: %s', k, e)
            return finish(lam, k, Status.from_error(e))

        if bfgs is not None:
            bfgs.update(
                x_new - x,
                (g_new - J_new.T @ step.lam) - (g - J.T @ step.lam),
            )
        record.alpha = ls.alpha
        record.step_norm = float(np.linalg.norm(ls.alpha * s))
        x, f, c, g, J = x_new, trial['f'], trial['c'], g_new, J_new
        lam = step.lam
        k += 1
