"""Discrete operator -Delta + alpha * chi_D and grid quadrature."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import GridDomain


@dataclass(frozen=True, eq=False)
class Field:
    """One value per interior cell of ``domain``."""

    values: np.ndarray
    domain: GridDomain

    def __post_init__(self):
        if np.shape(self.values) != (self.domain.n_cells,):
            raise ValueError("field length must equal the number of interior cells")


@dataclass(frozen=True, eq=False)
class SymmetricSparseOperator:
    """Symmetric positive definite CSR matrix, stored with both triangles."""

    matrix: sp.csr_matrix
    h: float = 1.0
    gershgorin_upper: float = np.inf

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_matrix(cls, mat, h: float = 1.0) -> "SymmetricSparseOperator":
        """Wrap an arbitrary symmetric matrix (used for synthetic operators)."""
        m = sp.csr_matrix(np.asarray(mat, dtype=float) if not sp.issparse(mat) else mat, dtype=float)
        if m.shape[0] != m.shape[1]:
            raise ValueError("operator must be square")
        asym = abs(m - m.T)
        if asym.nnz and asym.max() > 0:
            raise ValueError("operator is not symmetric")
        _, hi = gershgorin_bounds(m)
        return cls(matrix=m, h=float(h), gershgorin_upper=hi)

    def __matmul__(self, x):
        return self.matrix @ x


def gershgorin_bounds(m: sp.csr_matrix) -> tuple[float, float]:
    diag = m.diagonal()
    radius = np.asarray(abs(m).sum(axis=1)).ravel() - np.abs(diag)
    return float((diag - radius).min()), float((diag + radius).max())


def indicator(domain: GridDomain, cells) -> np.ndarray:
    """0/1 vector over interior cells for a set of cell indices (or a bool mask)."""
    cells = np.asarray(cells)
    if cells.dtype == bool:
        if cells.shape != (domain.n_cells,):
            raise ValueError("boolean configuration has the wrong length")
        return cells.astype(float)
    chi = np.zeros(domain.n_cells)
    if cells.size:
        if cells.min() < 0 or cells.max() >= domain.n_cells:
            raise ValueError("configuration references exterior cells")
        chi[cells] = 1.0
    return chi


def assemble(domain: GridDomain, D=None, alpha: float = 0.0) -> SymmetricSparseOperator:
    """Five-point operator for ``-Delta + alpha * chi_D`` with zero Dirichlet data.

    ``D`` may be a Configuration, an array of cell indices, a boolean mask
    over cells, or ``None`` for the empty set.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    lap = domain.laplacian
    if D is None or alpha == 0:
        mat = lap
        chi = None
    else:
        chi = indicator(domain, getattr(D, "cells", D))
        mat = (lap + sp.diags(alpha * chi, format="csr")).tocsr()
        mat.sort_indices()
    h = domain.h
    lo, hi = gershgorin_bounds(mat)
    # spectrum must sit inside [0, 8/h^2 + alpha]
    bound = 8.0 / h**2 + alpha
    if lo < -1e-9 * bound or hi > bound * (1 + 1e-12):
        raise AssertionError(f"Gershgorin bounds [{lo}, {hi}] escape [0, {bound}]")
    return SymmetricSparseOperator(matrix=mat, h=h, gershgorin_upper=hi)


def quadrature_inner(f: Field, g: Field) -> float:
    """h^2 * sum f_i g_i."""
    if not f.domain.same_grid(g.domain):
        raise ValueError("fields live on different domains")
    return float(f.domain.h**2 * np.dot(f.values, g.values))


def rayleigh_quotient(op: SymmetricSparseOperator, f) -> float:
    f = np.asarray(getattr(f, "values", f), dtype=float)
    denom = float(f @ f)
    if denom == 0.0:
        raise ValueError("Rayleigh quotient of the zero field")
    return float(f @ (op.matrix @ f)) / denom
