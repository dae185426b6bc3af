"""Smallest eigenpair of the membrane operator by shifted inverse iteration.

The operator is an irreducible M-matrix (non-positive off-diagonals), so for
any strictly positive vector x the Collatz-Wielandt quotient
``min_i (A x)_i / x_i`` is a lower bound for the smallest eigenvalue.  Each
sweep shifts by that bound before solving, which keeps ``A - sigma I`` an
M-matrix (positive inverse, so iterates stay positive) and makes the
contraction factor ``(lam1 - sigma) / (lam2 - sigma)`` tend to zero.  This
matters on thin annuli and dumbbells, where ``lam1 / lam2`` is within a few
parts in a thousand (or closer) of one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spl

from .discretization import SymmetricSparseOperator

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 500
CLAMP = 1e-8


class EigenConvergenceError(RuntimeError):
    def __init__(self, message: str, best_residual: float):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual


class NonPerronError(RuntimeError):
    pass


@dataclass
class EigenResult:
    lam: float
    u: np.ndarray  # normalized so that h^2 * sum(u^2) == 1
    residual: float
    iterations: int
    gap_estimate: Optional[float] = None


def _factor(mat: sp.csr_matrix, sigma: float):
    n = mat.shape[0]
    shifted = (mat - sigma * sp.identity(n, format="csr")).tocsc()
    return spl.splu(shifted)


def _normalize(x: np.ndarray, h: float) -> np.ndarray:
    return x / (h * np.linalg.norm(x))


def smallest_eigenpair(
    op: SymmetricSparseOperator,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    x0: Optional[np.ndarray] = None,
) -> EigenResult:
    """Perron eigenpair of ``op``.

    Starts from the all-ones vector unless a strictly positive warm start
    ``x0`` is given.  The returned ``u`` satisfies ``h^2 sum u^2 = 1`` and
    ``sum u > 0``; the residual is ``|op u - lam u| / |u|``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    mat = op.matrix
    n = mat.shape[0]
    if x0 is not None and np.shape(x0) == (n,) and np.all(np.asarray(x0) > 0):
        x = np.array(x0, dtype=float)
    else:
        x = np.ones(n)
    x /= np.linalg.norm(x)

    scale = max(op.gershgorin_upper if np.isfinite(op.gershgorin_upper) else 0.0, 1.0)
    # the quotient bound needs non-positive off-diagonals; otherwise iterate unshifted
    off = (mat - sp.diags(mat.diagonal())).tocsr()
    shifted = off.nnz == 0 or off.data.max() <= 0
    sigma = 0.0
    best = np.inf
    it = 0
    while True:
        ax = mat @ x
        lam = float(x @ ax)
        residual = float(np.linalg.norm(ax - lam * x))
        best = min(best, residual)
        if residual <= tol:
            break
        if it >= max_iter:
            raise EigenConvergenceError(f"no convergence in {max_iter} sweeps", best)
        if shifted and np.all(x > 0):
            sigma = min(float(np.min(ax / x)), lam)
            # back off so the shifted matrix stays nonsingular
            sigma -= 1e-13 * scale
        try:
            y = _factor(mat, sigma).solve(x)
        except RuntimeError:
            sigma -= 1e-8 * scale
            y = _factor(mat, sigma).solve(x)
        if y.sum() < 0:
            y = -y
        x = y / np.linalg.norm(y)
        it += 1

    if x.sum() < 0:
        x = -x
    top = x.max()
    if x.min() < -CLAMP * top:
        raise NonPerronError(
            f"eigenvector has a component {x.min():.3e} below -{CLAMP:g} * max; not a Perron vector"
        )
    x = np.maximum(x, 0.0)
    logger.debug("eigenpair lam=%.12g residual=%.2e after %d sweeps", lam, residual, it)
    return EigenResult(lam=lam, u=_normalize(x, op.h), residual=residual, iterations=it)


def second_eigenvalue(
    op: SymmetricSparseOperator,
    first: EigenResult,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    block: int = 3,
) -> float:
    """Second eigenvalue by inverse iteration deflated against ``first.u``.

    The solve is shifted just below ``first.lam`` and a small block of
    vectors is iterated, re-orthogonalized against the Perron vector every
    sweep and rotated by Rayleigh-Ritz, so clustered ``lam2, lam3`` (nearly
    degenerate rotational modes) do not stall convergence.  Sets
    ``first.gap_estimate``.
    """
    mat = op.matrix
    n = mat.shape[0]
    if n < 2:
        raise ValueError("operator has no second eigenvalue")
    q = first.u / np.linalg.norm(first.u)
    scale = max(abs(first.lam), 1.0)
    sigma = first.lam - 1e-8 * scale
    lu = _factor(mat, sigma)
    p = min(block, n - 1)

    # deterministic start with no special symmetry
    k = np.arange(n)[:, None]
    j = np.arange(1, p + 1)[None, :]
    x = np.cos(k * 0.7548776662466927 * j) + 0.5 * np.sin(k * 0.5698402909980532 * j + j)
    best = np.inf
    for it in range(max_iter + 1):
        x -= np.outer(q, q @ x)
        x -= np.outer(q, q @ x)
        x, _ = np.linalg.qr(x)
        ax = mat @ x
        w, v = np.linalg.eigh(x.T @ ax)
        x, ax = x @ v, ax @ v
        lam2 = float(w[0])
        r = ax[:, 0] - lam2 * x[:, 0]
        r -= (q @ r) * q
        residual = float(np.linalg.norm(r))
        best = min(best, residual)
        if residual <= tol:
            break
        if it == max_iter:
            raise EigenConvergenceError(f"second eigenvalue: no convergence in {max_iter} sweeps", best)
        x = lu.solve(x)
    lam2 = max(lam2, first.lam)
    first.gap_estimate = lam2 - first.lam
    return lam2
