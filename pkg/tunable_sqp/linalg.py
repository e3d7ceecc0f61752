"""Dense linear-algebra kernels for the SQP step.

The constraint Jacobian J (m x n, m small) enters only through the Gram
matrix J J^T, which is Cholesky-factorized once per step. The nullspace
projector P = I - J^T (J J^T)^{-1} J is applied to vectors and never formed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg as sla

from .errors import RankDeficient, SingularKKT

log = logging.getLogger(__name__)

Operator = Callable[[np.ndarray], np.ndarray]

# Gram matrix J J^T is rank deficient below RANK_TOL * |J|^2
RANK_TOL = 1e-12


@dataclass(frozen=True)
class KKTSolution:
    s: np.ndarray
    lam: np.ndarray
    cg_iterations: int = 0
    residual_norm: float = 0.0  # reduced (projected) CG residual
    indefinite: bool = False  # CG stopped on low curvature


class NullspaceProjector:
    """Factorization of J J^T serving particular solutions and projections."""

    def __init__(self, J: np.ndarray) -> None:
        J = np.atleast_2d(np.asarray(J, dtype=float))
        if J.size == 0:
            J = J.reshape(0, J.shape[-1])
        self.J = J
        self.m, self.n = J.shape
        self._factor = None
        if self.m == 0:
            return
        if not np.all(np.isfinite(J)):
            raise RankDeficient('constraint Jacobian has non-finite entries')
        gram = J @ J.T
        scale = np.linalg.norm(J, 2) ** 2
        try:
            factor = sla.cho_factor(gram, lower=True)
        except np.linalg.LinAlgError as e:
            raise RankDeficient(f'J J^T is not positive definite: {e}')
        pivots = np.diag(factor[0]) ** 2
        if scale == 0.0 or pivots.min() <= RANK_TOL * scale:
            raise RankDeficient(
                'J J^T is singular to tolerance '
                f'(pivot {pivots.min():.3e}, |J|^2 {scale:.3e})'
            )
        self._factor = factor

    def gram_solve(self, r: np.ndarray) -> np.ndarray:
        """Solve (J J^T) y = r."""
        if self.m == 0:
            return np.zeros(0)
        return sla.cho_solve(self._factor, r)

    def particular(self, c: np.ndarray) -> np.ndarray:
        """Minimum-norm solution of J s = -c."""
        if self.m == 0:
            return np.zeros(self.n)
        return -self.J.T @ self.gram_solve(np.asarray(c, dtype=float))

    def project(self, v: np.ndarray) -> np.ndarray:
        if self.m == 0:
            return np.array(v, dtype=float)
        return v - self.J.T @ self.gram_solve(self.J @ v)

    def multiplier(self, r: np.ndarray) -> np.ndarray:
        """Least-squares multiplier (J J^T)^{-1} J r."""
        if self.m == 0:
            return np.zeros(0)
        return self.gram_solve(self.J @ r)


def min_norm_particular(J: np.ndarray, c: np.ndarray) -> np.ndarray:
    return NullspaceProjector(J).particular(c)


def apply_nullspace_projector(J: np.ndarray, v: np.ndarray) -> np.ndarray:
    return NullspaceProjector(J).project(np.asarray(v, dtype=float))


def as_operator(H: Union[np.ndarray, Operator]) -> Operator:
    if callable(H):
        return H
    H = np.asarray(H, dtype=float)
    return lambda v: H @ v


def solve_kkt_projected(
    H_apply: Union[np.ndarray, Operator],
    J: np.ndarray,
    g: np.ndarray,
    c: np.ndarray,
    cg_tol: Optional[float] = None,
    cg_maxit: Optional[int] = None,
    curvature_floor: float = 0.0,
    projector: Optional[NullspaceProjector] = None,
) -> KKTSolution:
    """Solve the equality-constrained QP step by projected CG.

    s = s^c + z where s^c is the minimum-norm particular solution and z
    solves P H P z = -P (g + H s^c) in the nullspace of J. The multiplier
    follows the convention L = f - lam^T c, i.e. J^T lam = g + H s.

    CG stops when the reduced residual drops below cg_tol, after cg_maxit
    iterations, or when a direction d has d^T H d <= curvature_floor |d|^2;
    the last case returns the last iterate with `indefinite` set.
    """
    H = as_operator(H_apply)
    g = np.asarray(g, dtype=float)
    proj = projector if projector is not None else NullspaceProjector(J)
    n = g.shape[0]

    s_c = proj.particular(c)
    r = proj.project(g + H(s_c))
    r_norm = float(np.linalg.norm(r))
    if cg_tol is None:
        cg_tol = min(1e-10, 0.1 * r_norm)
    if cg_maxit is None:
        cg_maxit = 2 * n

    z = np.zeros(n)
    d = -r
    rr = r_norm ** 2
    iterations = 0
    indefinite = False
    while r_norm > cg_tol and iterations < cg_maxit:
        Hd = proj.project(H(d))
        curvature = float(d @ Hd)
        if curvature <= curvature_floor * float(d @ d):
            log.debug(
                'projected CG: curvature %.3e at iteration %d',
                curvature, iterations,
            )
            indefinite = True
            break
        step = rr / curvature
        z = z + step * d
        r = proj.project(r + step * Hd)
        rr_new = float(r @ r)
        r_norm = rr_new ** 0.5
        d = -r + (rr_new / rr) * d
        rr = rr_new
        iterations += 1

    s = s_c + z
    lam = proj.multiplier(g + H(s))
    log.debug(
        'projected CG: %d iterations, residual %.3e', iterations, r_norm,
    )
    return KKTSolution(
        s=s,
        lam=lam,
        cg_iterations=iterations,
        residual_norm=r_norm,
        indefinite=indefinite,
    )


def dense_kkt_oracle(
    H: np.ndarray,
    J: np.ndarray,
    g: np.ndarray,
    c: np.ndarray,
) -> KKTSolution:
    """Direct LU solve of [[H, -J^T], [J, 0]] [s; lam] = [-g; -c]."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    g = np.asarray(g, dtype=float)
    c = np.asarray(c, dtype=float).reshape(-1)
    n = g.shape[0]
    m = c.shape[0]
    J = np.asarray(J, dtype=float).reshape(m, n)

    K = np.zeros((n + m, n + m))
    K[:n, :n] = H
    K[:n, n:] = -J.T
    K[n:, :n] = J
    rhs = np.concatenate([-g, -c])
    lu, piv = sla.lu_factor(K, check_finite=True)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= 1e-14 * max(pivots.max(), 1.0):
        raise SingularKKT('KKT matrix is singular to working precision')
    sol = sla.lu_solve((lu, piv), rhs)
    s = sol[:n]
    resid = float(np.linalg.norm(K @ sol - rhs))
    return KKTSolution(s=s, lam=sol[n:], residual_norm=resid)


def orthonormalize(
    columns: Union[Sequence[np.ndarray], np.ndarray],
    drop_tol: float = 1e-10,
    dim: Optional[int] = None,
) -> np.ndarray:
    """Modified Gram-Schmidt with one reorthogonalization pass.

    A 2-D array is read column by column. A vector is dropped when its
    norm after orthogonalization falls below drop_tol times its original
    norm. Returns an (n, r) array with orthonormal columns.
    """
    if isinstance(columns, np.ndarray) and columns.ndim == 2:
        vectors = [columns[:, j] for j in range(columns.shape[1])]
        if dim is None:
            dim = columns.shape[0]
    else:
        vectors = [np.asarray(v, dtype=float).reshape(-1) for v in columns]
    if dim is None:
        dim = vectors[0].shape[0] if vectors else 0

    basis: list[np.ndarray] = []
    for v in vectors:
        original = float(np.linalg.norm(v))
        if original == 0.0:
            continue
        w = np.array(v, dtype=float)
        for _ in range(2):
            for q in basis:
                w -= (q @ w) * q
        norm = float(np.linalg.norm(w))
        if norm <= drop_tol * original:
            continue
        basis.append(w / norm)
    if not basis:
        return np.zeros((dim, 0))
    return np.column_stack(basis)
