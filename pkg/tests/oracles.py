"""Independent reference computations: dense matrices built from scratch,
exhaustive subset search, and closed-form constants."""

import itertools

import numpy as np
from scipy.special import jn_zeros

SQUARE_MU1 = 2 * np.pi**2
DISK_MU1 = float(jn_zeros(0, 1)[0] ** 2)
SQUARE_RATIO_21 = 2.5

# frozen outputs of the functions below (recomputed in test_oracles.py)
BLOCK_3x4_ALPHA50_K4 = 1.3108672352629256
BLOCK_3x3_K3_ALPHA_BAR = 1.3529897322428042


def block_laplacian(rows: int, cols: int, h: float = 1.0) -> np.ndarray:
    """Dense 5-point Dirichlet Laplacian on a full rows x cols block of cells,
    row-major, as a Kronecker sum of 1D second differences."""
    def second_difference(n):
        return (2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)) / h**2

    return np.kron(second_difference(rows), np.eye(cols)) + np.kron(np.eye(rows), second_difference(cols))


def dense_laplacian(mask: np.ndarray, h: float) -> np.ndarray:
    """Dense Laplacian for an arbitrary boolean cell mask, by explicit loops."""
    idx = -np.ones(mask.shape, dtype=int)
    idx[mask] = np.arange(mask.sum())
    n = int(mask.sum())
    L = np.zeros((n, n))
    ny, nx = mask.shape
    for r in range(ny):
        for c in range(nx):
            i = idx[r, c]
            if i < 0:
                continue
            L[i, i] = 4 / h**2
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < ny and 0 <= cc < nx and idx[rr, cc] >= 0:
                    L[i, idx[rr, cc]] = -1 / h**2
    return L


def dense_lambda(L: np.ndarray, cells, alpha: float) -> float:
    pot = np.zeros(len(L))
    pot[list(cells)] = alpha
    return float(np.linalg.eigvalsh(L + np.diag(pot))[0])


def brute_force_Lambda(L: np.ndarray, alpha: float, k: int):
    """Minimum first eigenvalue over all k-subsets; returns (value, subset)."""
    best, arg = np.inf, None
    for cells in itertools.combinations(range(len(L)), k):
        lam = dense_lambda(L, cells, alpha)
        if lam < best:
            best, arg = lam, cells
    return best, arg


def brute_force_alpha_bar(L: np.ndarray, k: int, tol: float = 1e-12) -> float:
    """Root of Lambda(alpha) - alpha by plain bisection on exhaustive Lambda."""
    f = lambda a: brute_force_Lambda(L, a, k)[0] - a
    lo, hi = 0.0, 1.0
    while f(hi) > 0:
        lo, hi = hi, 2 * hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
