"""Rearrangement iteration for the composite membrane problem.

Alternate between solving for the ground state of ``-Delta + alpha chi_D``
and replacing ``D`` by the ``k`` cells where that ground state is smallest.
Every step lowers the eigenvalue: with ``u`` fixed, putting the potential
where ``u^2`` is smallest lowers the Rayleigh quotient, and re-solving can
only lower it further.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import ndimage

from .discretization import assemble
from .eigensolver import DEFAULT_TOL, EigenResult, smallest_eigenpair
from .geometry import GridDomain, measure

logger = logging.getLogger(__name__)

DEFAULT_MAX_OUTER = 200
DEFAULT_RESTARTS = 8
# an exchange must beat the current eigenvalue by more than round-off
SWAP_GAIN = 1e-10


class DegenerateAreaError(ValueError):
    pass


@dataclass(eq=False)
class Configuration:
    cells: np.ndarray  # sorted interior cell indices of D
    t: float
    h: float

    @property
    def k(self) -> int:
        return len(self.cells)

    @property
    def measure(self) -> float:
        return self.k * self.h**2

    def mask(self, n: int) -> np.ndarray:
        m = np.zeros(n, dtype=bool)
        m[self.cells] = True
        return m

    def __eq__(self, other) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return np.array_equal(self.cells, other.cells)

    @classmethod
    def from_cells(cls, domain: GridDomain, cells, t: float = float("nan")) -> "Configuration":
        cells = np.unique(np.asarray(cells, dtype=np.int64))
        if cells.size and (cells[0] < 0 or cells[-1] >= domain.n_cells):
            raise ValueError("configuration references exterior cells")
        return cls(cells=cells, t=float(t), h=domain.h)


@dataclass(eq=False)
class OptimizationResult:
    Lambda: float
    config: Configuration
    u: np.ndarray
    history: list
    converged: bool
    alpha: float
    A_target: float
    restart_id: int = 0
    iterations: int = 0
    cycled: bool = False
    residual: float = 0.0
    failures: dict = field(default_factory=dict)

    @property
    def realized_measure(self) -> float:
        return self.config.measure


def target_count(domain: GridDomain, A_target: float) -> int:
    if not 0 < A_target < measure(domain):
        raise DegenerateAreaError("degenerate area fraction")
    k = int(round(A_target / domain.h**2))
    if k <= 0 or k >= domain.n_cells:
        raise DegenerateAreaError("degenerate area fraction")
    return k


def select_sublevel(u, A_target: float, domain: GridDomain) -> Configuration:
    """The ``round(A / h^2)`` cells with the smallest ``u``.

    Ties at the cut value go to the lower cell index.
    """
    u = np.asarray(getattr(u, "values", u), dtype=float)
    if u.shape != (domain.n_cells,):
        raise ValueError("field length must equal the number of interior cells")
    k = target_count(domain, A_target)
    order = np.argsort(u, kind="stable")
    cells = np.sort(order[:k])
    return Configuration(cells=cells, t=float(u[order[k - 1]]), h=domain.h)


def _eigen(domain, cells, alpha, tol) -> EigenResult:
    # always from the same start, so u is a function of D alone even when the
    # two lowest eigenvalues nearly coincide (dumbbells)
    return smallest_eigenpair(assemble(domain, cells, alpha), tol=tol)


def _threshold(score, A_target, domain, u) -> Configuration:
    """Sublevel of ``score``, with the threshold reported in units of ``u``."""
    cfg = select_sublevel(score, A_target, domain)
    cfg.t = float(u[cfg.cells].max())
    return cfg


def _improving_swap(domain, alpha, current, eig, n_candidates, tol):
    """First single exchange near the threshold that lowers the eigenvalue.

    Candidates are the ``n_candidates`` cells of D with the largest ``u``
    and the cells outside D with the smallest ``u``, tried in order of the
    first-order cost ``u_j^2 - u_i^2``.  Returns ``(cells, eigenpair)`` or
    ``None``.
    """
    u = eig.u
    inside = current.cells
    outside = np.setdiff1d(np.arange(domain.n_cells), inside, assume_unique=True)
    leave = inside[np.argsort(-u[inside], kind="stable")[:n_candidates]]
    enter = outside[np.argsort(u[outside], kind="stable")[:n_candidates]]
    pairs = [(u[j] ** 2 - u[i] ** 2, a, b, i, j)
             for a, i in enumerate(leave) for b, j in enumerate(enter)]
    pairs.sort()
    bar = eig.lam - SWAP_GAIN * max(1.0, eig.lam)
    for *_, i, j in pairs:
        cells = np.sort(np.append(inside[inside != i], j))
        trial = _eigen(domain, cells, alpha, tol)
        if trial.lam < bar:
            return cells, trial
    return None


def optimize(
    domain: GridDomain,
    alpha: float,
    A_target: float,
    init,
    tol: float = DEFAULT_TOL,
    max_outer: int = DEFAULT_MAX_OUTER,
    swap_candidates: int = 0,
    project: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> OptimizationResult:
    """Run the rearrangement iteration from ``init`` until ``D`` repeats.

    At a fixed point, single exchanges between the ``swap_candidates`` cells
    on either side of the threshold are tried; an exchange that strictly
    lowers the eigenvalue restarts the iteration (0 disables this).
    ``project`` maps ``u`` to the field that is thresholded, e.g. a radial
    average to stay inside rotationally symmetric configurations.
    """
    k = target_count(domain, A_target)
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if alpha == 0:
        eig = _eigen(domain, None, 0.0, tol)
        cfg = select_sublevel(eig.u, A_target, domain)
        return OptimizationResult(Lambda=eig.lam, config=cfg, u=eig.u, history=[eig.lam],
                                  converged=True, alpha=0.0, A_target=A_target,
                                  residual=eig.residual)
    current = init if isinstance(init, Configuration) else Configuration.from_cells(domain, init)
    if current.k != k:
        raise ValueError(f"initial configuration has {current.k} cells, expected {k}")

    history = []
    previous = None
    converged = cycled = False
    eig = None
    pending = None  # eigenpair already computed for ``current`` by the swap search
    while len(history) < max_outer:
        if pending is None:
            eig = _eigen(domain, current.cells, alpha, tol)
            history.append(eig.lam)
        else:
            eig, pending = pending, None
        score = eig.u if project is None else project(eig.u)
        nxt = _threshold(score, A_target, domain, eig.u)
        if nxt == current:
            current = nxt
            if swap_candidates > 0 and len(history) < max_outer:
                found = _improving_swap(domain, alpha, current, eig, swap_candidates, tol)
                if found is not None:
                    cells, pending = found
                    history.append(pending.lam)
                    previous = None
                    current = Configuration.from_cells(domain, cells)
                    continue
            converged = True
            break
        if previous is not None and nxt == previous:
            cycled = True
            logger.warning("2-cycle detected; last eigenvalues %r", history[-2:])
            break
        previous, current = current, nxt
    else:
        # budget exhausted: report the pair that was actually solved
        if previous is not None:
            current = previous
    return OptimizationResult(
        Lambda=eig.lam, config=current, u=eig.u, history=history, converged=converged,
        alpha=float(alpha), A_target=float(A_target), iterations=len(history),
        cycled=cycled, residual=eig.residual,
    )


def radial_projection(domain: GridDomain, center=(0.0, 0.0), width: Optional[float] = None):
    """Average a field over thin circular shells (width ``h/4`` by default)."""
    width = domain.h / 4 if width is None else width
    r = np.hypot(domain.centers[:, 0] - center[0], domain.centers[:, 1] - center[1])
    shell = np.floor(r / width).astype(np.int64)
    _, shell = np.unique(shell, return_inverse=True)
    counts = np.bincount(shell)

    def project(u):
        return (np.bincount(shell, weights=u) / counts)[shell]

    return project


def boundary_layer_init(domain: GridDomain, A_target: float) -> Configuration:
    """The k cells closest to the exterior."""
    k = target_count(domain, A_target)
    dist = ndimage.distance_transform_edt(domain.interior).ravel()[domain.flat]
    order = np.argsort(dist, kind="stable")
    return Configuration.from_cells(domain, order[:k])


def radial_init(domain: GridDomain, A_target: float, inner: float, outer: float,
                center=(0.0, 0.0)) -> Configuration:
    """Rotationally symmetric start for a ring ``inner < r < outer``.

    Ranks cells by the one-dimensional Dirichlet profile across the ring.
    """
    k = target_count(domain, A_target)
    r = np.hypot(domain.centers[:, 0] - center[0], domain.centers[:, 1] - center[1])
    profile = np.sin(np.pi * np.clip((r - inner) / (outer - inner), 0.0, 1.0))
    order = np.argsort(profile, kind="stable")
    return Configuration.from_cells(domain, order[:k])


def restart_rng(seed: int, restart_id: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, restart_id)."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, restart_id], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def random_init(domain: GridDomain, A_target: float, seed: int, restart_id: int) -> Configuration:
    k = target_count(domain, A_target)
    cells = restart_rng(seed, restart_id).choice(domain.n_cells, size=k, replace=False)
    return Configuration.from_cells(domain, cells)


def initial_configuration(domain, A_target, restart_id, seed, psi=None) -> Configuration:
    if restart_id == 0:
        return boundary_layer_init(domain, A_target)
    if restart_id == 1:
        if psi is None:
            psi = _eigen(domain, None, 0.0, DEFAULT_TOL).u
        return select_sublevel(psi, A_target, domain)
    return random_init(domain, A_target, seed, restart_id)


def multistart(
    domain: GridDomain,
    alpha: float,
    A_target: float,
    n_restarts: int = DEFAULT_RESTARTS,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    max_outer: int = DEFAULT_MAX_OUTER,
    psi: Optional[np.ndarray] = None,
    swap_candidates: int = 3,
) -> OptimizationResult:
    """Best of ``n_restarts`` rearrangement runs.

    Restart 0 starts from the boundary layer, restart 1 from the sublevel
    set of the alpha = 0 ground state, the rest from random k-subsets.  The
    lowest eigenvalue wins; ties go to the lowest restart id.  With more
    than one restart the winner is then continued with single-exchange
    descent (``swap_candidates`` cells per side; 0 disables it), so a single
    restart reproduces :func:`optimize` exactly.
    """
    if n_restarts < 1:
        raise ValueError("n_restarts must be at least 1")
    target_count(domain, A_target)
    if n_restarts > 1 and psi is None and alpha > 0:
        psi = _eigen(domain, None, 0.0, tol).u
    best = None
    failures = {}
    for rid in range(n_restarts):
        try:
            init = initial_configuration(domain, A_target, rid, seed, psi)
            res = optimize(domain, alpha, A_target, init, tol=tol, max_outer=max_outer)
        except (RuntimeError, ArithmeticError) as exc:
            failures[rid] = repr(exc)
            logger.warning("restart %d failed: %s", rid, exc)
            continue
        res.restart_id = rid
        logger.debug("restart %d: Lambda=%.12g converged=%s after %d", rid, res.Lambda,
                     res.converged, res.iterations)
        if best is None or res.Lambda < best.Lambda:
            best = res
        if alpha == 0:
            break
    if best is None:
        raise RuntimeError(f"all {n_restarts} restarts failed: {failures}")
    if swap_candidates > 0 and n_restarts > 1 and alpha > 0 and best.converged:
        polished = optimize(domain, alpha, A_target, best.config, tol=tol, max_outer=max_outer,
                            swap_candidates=swap_candidates)
        if polished.Lambda <= best.Lambda:
            # the continuation re-solves the winning configuration first
            polished.history = best.history + polished.history[1:]
            polished.iterations = len(polished.history)
            polished.restart_id = best.restart_id
            best = polished
    best.failures = failures
    return best


def find_alpha_bar(
    domain: GridDomain,
    A_target: float,
    tol: float = 1e-6,
    n_restarts: int = DEFAULT_RESTARTS,
    seed: int = 0,
    max_doublings: int = 60,
    max_bisections: int = 200,
    Lambda: Optional[Callable[[float], float]] = None,
) -> float:
    """The potential height at which the optimal eigenvalue equals itself.

    ``f(alpha) = Lambda(alpha, A) - alpha`` is non-increasing (its slope is
    minus the mass of ``u^2`` outside ``D``), positive at zero, and negative
    once alpha exceeds the Dirichlet eigenvalue of the best hole of area
    ``|Omega| - A``.  The root is bracketed by doubling from ``mu_1`` and
    then bisected until ``|f| <= tol``.
    """
    target_count(domain, A_target)
    if Lambda is None:
        def Lambda(alpha):
            return multistart(domain, alpha, A_target, n_restarts=n_restarts, seed=seed).Lambda

    mu1 = Lambda(0.0)
    lo, f_lo = 0.0, mu1
    hi = mu1
    f_hi = Lambda(hi) - hi
    doublings = 0
    while f_hi >= 0:
        if abs(f_hi) <= tol:
            return hi
        if doublings >= max_doublings:
            raise RuntimeError(f"alpha_bar bracket not found in {max_doublings} doublings")
        lo, f_lo = hi, f_hi
        hi *= 2.0
        f_hi = Lambda(hi) - hi
        doublings += 1
    for _ in range(max_bisections):
        mid = 0.5 * (lo + hi)
        f_mid = Lambda(mid) - mid
        if abs(f_mid) <= tol:
            return mid
        if f_mid > 0:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    raise RuntimeError(f"bisection stalled with |f| = {min(abs(f_lo), abs(f_hi)):.3e} > {tol}")
