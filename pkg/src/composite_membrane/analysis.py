"""Checks on computed optimal pairs.

Exact checks (eigenvalue bounds, sublevel nesting) are discrete identities
that hold for any symmetric stencil, so they are asserted to solver
tolerance.  Everything involving unknown constants is reported as a ratio.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .discretization import assemble
from .eigensolver import DEFAULT_TOL, smallest_eigenpair, second_eigenvalue
from .geometry import HANDLE, LEFT_LOBE, NONE, RIGHT_LOBE, GridDomain, measure
from .optimizer import Configuration, OptimizationResult, multistart, select_sublevel

logger = logging.getLogger(__name__)

BOUND_TOL = 1e-9
N_BINS = 256
N_MODES = 32


class InvariantViolation(AssertionError):
    def __init__(self, name: str, detail: str):
        super().__init__(f"{name}: {detail}")
        self.name = name


@dataclass
class BaseEigenpair:
    mu1: float
    psi: np.ndarray
    M: float
    gap: float
    mu2: float
    residual: float


def base_eigenpair(domain: GridDomain, tol: float = DEFAULT_TOL) -> BaseEigenpair:
    """First Dirichlet eigenpair of the grid Laplacian plus the spectral gap."""
    op = assemble(domain)
    eig = smallest_eigenpair(op, tol=tol)
    mu2 = second_eigenvalue(op, eig, tol=tol) if domain.n_cells > 1 else np.inf
    return BaseEigenpair(mu1=eig.lam, psi=eig.u, M=float(eig.u.max()),
                         gap=mu2 - eig.lam, mu2=mu2, residual=eig.residual)


# --- perturbation bounds -------------------------------------------------


@dataclass
class BoundCheckReport:
    lam_minus_mu1: float
    alpha: float
    psi_mass_D: float
    u_mass_Dc: float
    mu1_minus_shifted: float  # mu1 - (Lambda - alpha)
    ok_lower: bool
    ok_upper: bool
    ok_psi_bound: bool
    ok_shifted: bool
    sup_diff: float
    ratio_alpha: float
    ratio_area: float
    l2_orth: float
    gap_ratio: float

    @property
    def ok(self) -> bool:
        return self.ok_lower and self.ok_upper and self.ok_psi_bound and self.ok_shifted


def check_perturbation_bounds(result: OptimizationResult, base: BaseEigenpair,
                              domain: GridDomain, tol: float = BOUND_TOL) -> BoundCheckReport:
    h2 = domain.h**2
    alpha = result.alpha
    lam = result.Lambda
    inD = result.config.mask(domain.n_cells)
    u, psi = result.u, base.psi
    psi_mass_D = h2 * float(np.sum(psi[inD] ** 2))
    u_mass_Dc = h2 * float(np.sum(u[~inD] ** 2))
    diff = lam - base.mu1
    shifted = base.mu1 - (lam - alpha)
    sup_diff = float(np.max(np.abs(u - psi)))
    area_c = measure(domain) - result.config.measure
    beta1 = h2 * float(u @ psi)
    orth = u - beta1 * psi
    l2_orth = float(np.sqrt(h2 * orth @ orth))
    return BoundCheckReport(
        lam_minus_mu1=diff,
        alpha=alpha,
        psi_mass_D=psi_mass_D,
        u_mass_Dc=u_mass_Dc,
        mu1_minus_shifted=shifted,
        ok_lower=diff >= -tol,
        ok_upper=diff <= alpha + tol,
        ok_psi_bound=diff <= alpha * psi_mass_D + tol,
        ok_shifted=(-tol <= shifted <= alpha * u_mass_Dc + tol),
        sup_diff=sup_diff,
        ratio_alpha=sup_diff / alpha if alpha > 0 else 0.0,
        ratio_area=sup_diff / area_c if area_c > 0 else float("inf"),
        l2_orth=l2_orth,
        gap_ratio=l2_orth * base.gap / alpha if alpha > 0 else 0.0,
    )


# --- sublevel nesting ------------------------------------------------------


@dataclass
class NestingReport:
    eps: float
    t: float
    lower_violations: int  # cells with psi <= t - eps outside D
    upper_violations: int  # cells of D with psi > t + eps
    delta: Optional[float] = None  # smallest delta with {psi <= M - delta} inside D

    @property
    def ok(self) -> bool:
        return self.lower_violations == 0 and self.upper_violations == 0


def check_nesting(result: OptimizationResult, base: BaseEigenpair, domain: GridDomain,
                  strict: bool = True) -> NestingReport:
    """``{psi <= t - eps} <= D <= {psi <= t + eps}`` with ``eps = max |u - psi|``."""
    u, psi = result.u, base.psi
    t = result.config.t
    eps = float(np.max(np.abs(u - psi)))
    inD = result.config.mask(domain.n_cells)
    lower = int(np.count_nonzero((psi <= t - eps) & ~inD))
    upper = int(np.count_nonzero(inD & (psi > t + eps)))
    delta = None
    if result.config.measure / measure(domain) > 0.9 and (~inD).any():
        delta = float(base.M - psi[~inD].min())
    rep = NestingReport(eps=eps, t=t, lower_violations=lower, upper_violations=upper, delta=delta)
    if strict and not rep.ok:
        raise InvariantViolation("nesting", f"{lower} lower and {upper} upper inclusion failures")
    return rep


# --- iteration certificates --------------------------------------------------


def check_descent(result: OptimizationResult, slack: float = 1e-10) -> bool:
    h = np.asarray(result.history)
    return bool(np.all(np.diff(h) <= slack))


def fixed_point_certificate(result: OptimizationResult, domain: GridDomain,
                            tol: float = DEFAULT_TOL) -> bool:
    """Re-solve with the final D and re-threshold; True iff D comes back."""
    if result.alpha == 0:
        return True
    eig = smallest_eigenpair(assemble(domain, result.config.cells, result.alpha), tol=tol)
    again = select_sublevel(eig.u, result.A_target, domain)
    return again == result.config


def boundary_layer_contained(result: OptimizationResult, domain: GridDomain) -> Optional[bool]:
    """D contains every cell next to the exterior (None when the layer exceeds A)."""
    layer = domain.boundary_cells
    if len(layer) > result.config.k:
        return None
    return bool(np.all(np.isin(layer, result.config.cells)))


def level_tie_fraction(result: OptimizationResult) -> float:
    """Fraction of cells sharing their exact u value with another cell, the
    threshold value excluded."""
    u = result.u
    keep = u != result.config.t
    vals, counts = np.unique(u[keep], return_counts=True)
    return float(counts[counts > 1].sum()) / max(len(u), 1)


@dataclass
class AnnularReport:
    inner_radius: np.ndarray  # per sector, smallest radius among D cells
    variation: float
    max_Dc_radius: float
    contains_boundary_layer: bool

    def ok(self, h: float) -> bool:
        return self.variation <= 2 * h and self.contains_boundary_layer


def annular_check(result: OptimizationResult, domain: GridDomain, center=(0.0, 0.0),
                  n_sectors: int = 64) -> AnnularReport:
    inD = result.config.mask(domain.n_cells)
    dx = domain.centers[:, 0] - center[0]
    dy = domain.centers[:, 1] - center[1]
    r = np.hypot(dx, dy)
    sector = (np.floor((np.arctan2(dy, dx) + np.pi) / (2 * np.pi) * n_sectors).astype(int)) % n_sectors
    inner = np.full(n_sectors, np.inf)
    np.minimum.at(inner, sector[inD], r[inD])
    layer = boundary_layer_contained(result, domain)
    return AnnularReport(
        inner_radius=inner,
        variation=float(inner.max() - inner.min()),
        max_Dc_radius=float(r[~inD].max()) if (~inD).any() else 0.0,
        contains_boundary_layer=bool(layer),
    )


# --- symmetry ----------------------------------------------------------------


@dataclass
class SymmetryReport:
    fourier_amps: np.ndarray  # modes 0..N_MODES
    dominant_N: int
    beta_estimate: float
    reflection_score: dict  # axis angle -> |D xor reflect(D)| h^2
    histogram: np.ndarray = field(repr=False, default=None)

    def dominance(self) -> float:
        """Dominant amplitude over the median of the other modes >= 1."""
        others = np.delete(self.fourier_amps[1:], self.dominant_N - 1)
        med = float(np.median(others))
        top = float(self.fourier_amps[self.dominant_N])
        return np.inf if med == 0 else top / med


def angular_histogram(points: np.ndarray, weights, center=(0.0, 0.0), n_bins: int = N_BINS) -> np.ndarray:
    """Weighted histogram over angle; bin j is centered on angle 2 pi j / n_bins.
    A point at the center itself has no angle and is skipped."""
    dx, dy = points[:, 0] - center[0], points[:, 1] - center[1]
    keep = (dx != 0) | (dy != 0)
    th = np.arctan2(dy[keep], dx[keep])
    b = np.floor(th / (2 * np.pi) * n_bins + 0.5).astype(np.int64) % n_bins
    w = np.broadcast_to(np.asarray(weights, dtype=float), len(points))[keep]
    return np.bincount(b, weights=w, minlength=n_bins)


def angular_amplitudes(hist: np.ndarray, n_modes: int = N_MODES) -> np.ndarray:
    return np.abs(np.fft.rfft(hist))[: n_modes + 1]


def reflect_cells(domain: GridDomain, cells, center=(0.0, 0.0), angle: float = 0.0) -> tuple[np.ndarray, int]:
    """Nearest-cell images of ``cells`` under reflection in the line through
    ``center`` at ``angle``.  Returns (image cell indices, number of images
    that fall outside the interior)."""
    c2, s2 = np.cos(2 * angle), np.sin(2 * angle)
    p = domain.centers[np.asarray(cells)] - np.asarray(center)
    q = np.column_stack([c2 * p[:, 0] + s2 * p[:, 1], s2 * p[:, 0] - c2 * p[:, 1]]) + np.asarray(center)
    col = np.rint((q[:, 0] - domain.origin[0]) / domain.h - 0.5).astype(np.int64)
    row = domain.ny - 1 - np.rint((q[:, 1] - domain.origin[1]) / domain.h - 0.5).astype(np.int64)
    ok = (col >= 0) & (col < domain.nx) & (row >= 0) & (row < domain.ny)
    idx = np.full(len(q), -1, dtype=np.int64)
    idx[ok] = domain.cell_index[row[ok], col[ok]]
    return np.unique(idx[idx >= 0]), int(np.count_nonzero(idx < 0))


def reflection_score(domain: GridDomain, cells, center=(0.0, 0.0), angle: float = 0.0) -> float:
    cells = np.asarray(cells)
    image, lost = reflect_cells(domain, cells, center, angle)
    # images can collide only for off-grid axes; count collisions as mismatches
    collided = len(cells) - lost - len(image)
    sym = len(np.setxor1d(cells, image)) + lost + collided
    return sym * domain.h**2


def symmetry_metrics(result: OptimizationResult, domain: GridDomain, center=(0.0, 0.0),
                     axes: Sequence[float] = (0.0, np.pi / 2)) -> SymmetryReport:
    inD = result.config.mask(domain.n_cells)
    if inD.all():
        raise ValueError("complement of D is empty")
    hist = angular_histogram(domain.centers[~inD], domain.h**2, center)
    amps = angular_amplitudes(hist)
    dom = int(np.argmax(amps[1:]) + 1)
    scores = {float(a): reflection_score(domain, result.config.cells, center, a) for a in axes}
    return SymmetryReport(fourier_amps=amps, dominant_N=dom, beta_estimate=np.pi / dom,
                          reflection_score=scores, histogram=hist)


# --- convexity -------------------------------------------------------------------


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Counter-clockwise hull vertices (monotone chain), collinear points dropped."""
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) < 3:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def inside_inset(hull: np.ndarray, points: np.ndarray, inset: float) -> np.ndarray:
    """Points at distance >= ``inset`` inside a counter-clockwise hull."""
    inside = np.ones(len(points), dtype=bool)
    for a, b in zip(hull, np.roll(hull, -1, axis=0)):
        e = b - a
        cross = e[0] * (points[:, 1] - a[1]) - e[1] * (points[:, 0] - a[0])
        inside &= cross >= inset * np.hypot(*e)
    return inside


@dataclass
class ConvexityReport:
    violations: int
    hull: np.ndarray

    @property
    def convex(self) -> bool:
        return self.violations == 0


def convexity_check(result: OptimizationResult, domain: GridDomain) -> ConvexityReport:
    """Cells of D inside the one-cell inset of the hull of D^c."""
    inD = result.config.mask(domain.n_cells)
    pts = domain.centers[~inD]
    hull = convex_hull(pts)
    if len(hull) < 3:
        return ConvexityReport(violations=0, hull=hull)
    bad = inside_inset(hull, domain.centers[inD], domain.h)
    return ConvexityReport(violations=int(np.count_nonzero(bad)), hull=hull)


# --- dumbbell lobes ------------------------------------------------------------

LOBE_CENTERS = {LEFT_LOBE: (-2.0, 0.0), RIGHT_LOBE: (2.0, 0.0)}


@dataclass
class LobeReport:
    label_counts: dict  # label name -> number of D^c cells
    lobe: Optional[int]
    stray: int  # D^c cells outside that lobe beyond the tolerance ring
    handle_interior: int  # D^c cells in the handle away from both lobes
    opposite_lobe: int
    reflection_score: float

    @property
    def contained(self) -> bool:
        return self.lobe is not None and self.stray == 0


def lobe_containment(result: OptimizationResult, domain: GridDomain) -> LobeReport:
    """Whether D^c lies in a single lobe disk, up to a one-cell ring."""
    if domain.cell_labels is None:
        raise ValueError("domain carries no lobe/handle labels")
    from .geometry import LABEL_NAMES

    inD = result.config.mask(domain.n_cells)
    lab = domain.cell_labels
    counts = {LABEL_NAMES[k]: int(np.count_nonzero(~inD & (lab == k)))
              for k in (LEFT_LOBE, RIGHT_LOBE, HANDLE, NONE)}
    pts = domain.centers
    dist = {k: np.hypot(pts[:, 0] - c[0], pts[:, 1] - c[1]) for k, c in LOBE_CENTERS.items()}
    Dc = ~inD
    in_lobe = {k: Dc & (d < 1.0) for k, d in dist.items()}
    lobe = max(LOBE_CENTERS, key=lambda k: (np.count_nonzero(in_lobe[k]), -k))
    if not in_lobe[lobe].any():
        lobe_out = None
        stray = int(np.count_nonzero(Dc))
    else:
        lobe_out = lobe
        stray = int(np.count_nonzero(Dc & (dist[lobe] > 1.0 + domain.h)))
    other = RIGHT_LOBE if lobe == LEFT_LOBE else LEFT_LOBE
    away = (dist[LEFT_LOBE] > 1.0 + domain.h) & (dist[RIGHT_LOBE] > 1.0 + domain.h)
    return LobeReport(
        label_counts=counts,
        lobe=lobe_out,
        stray=stray,
        handle_interior=int(np.count_nonzero(Dc & (lab == HANDLE) & away)),
        opposite_lobe=int(np.count_nonzero(in_lobe[other])),
        reflection_score=reflection_score(domain, result.config.cells, (0.0, 0.0), np.pi / 2),
    )


# --- free boundary ---------------------------------------------------------------


@dataclass
class FreeBoundary:
    t: float
    segments: list  # (m, 2) vertex arrays, in traversal order
    closed: list
    grad_mag: list
    flagged: list
    two_sided: list = field(default_factory=list)

    @property
    def n_vertices(self) -> int:
        return sum(len(s) for s in self.segments)

    def vertices(self) -> np.ndarray:
        if not self.segments:
            return np.zeros((0, 2))
        return np.concatenate(self.segments)

    def all_flagged(self) -> np.ndarray:
        return np.concatenate(self.flagged) if self.flagged else np.zeros(0, dtype=bool)

    def all_two_sided(self) -> np.ndarray:
        return np.concatenate(self.two_sided) if self.two_sided else np.zeros(0, dtype=bool)


def _grid_gradient(domain: GridDomain, V: np.ndarray) -> np.ndarray:
    gr, gc = np.gradient(V, domain.h)
    # row index grows downward
    return np.hypot(gc, -gr)


def free_boundary_from_field(domain: GridDomain, u: np.ndarray, t: float,
                             inside: Optional[np.ndarray] = None,
                             eps_grad: float = 0.05) -> FreeBoundary:
    """Contour ``{u = t}`` by marching squares over cells whose four corners
    are interior.  ``inside`` (default ``u <= t``) decides which side of the
    level a corner is on; saddle squares are resolved by the bilinear center
    value."""
    u = np.asarray(u, dtype=float)
    if inside is None:
        inside = u <= t
    if not (u.min() < t < u.max()):
        return FreeBoundary(t=t, segments=[], closed=[], grad_mag=[], flagged=[], two_sided=[])
    V = domain.to_grid(u)
    B = domain.to_grid(np.asarray(inside, dtype=bool), fill=True)
    I = domain.interior
    G = _grid_gradient(domain, V)
    ok = I[:-1, :-1] & I[:-1, 1:] & I[1:, :-1] & I[1:, 1:]
    tl, tr, bl, br = B[:-1, :-1], B[:-1, 1:], B[1:, :-1], B[1:, 1:]
    mixed = ok & ~((tl == tr) & (tr == bl) & (bl == br))

    def edge_point(kind, r, c):
        if kind == "h":
            (ra, ca), (rb, cb) = (r, c), (r, c + 1)
        else:
            (ra, ca), (rb, cb) = (r, c), (r + 1, c)
        va, vb = V[ra, ca], V[rb, cb]
        f = 0.5 if va == vb else min(max((t - va) / (vb - va), 0.0), 1.0)
        xa, ya = domain.center_of(ra, ca)
        xb, yb = domain.center_of(rb, cb)
        g = (1 - f) * G[ra, ca] + f * G[rb, cb]
        return (float(xa + f * (xb - xa)), float(ya + f * (yb - ya))), float(g)

    adj: dict = {}

    def link(a, b):
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)

    for r, c in zip(*np.nonzero(mixed)):
        top, right = ("h", r, c), ("v", r, c + 1)
        bottom, left = ("h", r + 1, c), ("v", r, c)
        a, b, d, e = tl[r, c], tr[r, c], br[r, c], bl[r, c]
        cross = [k for k, p, q in ((top, a, b), (right, b, d), (bottom, e, d), (left, a, e)) if p != q]
        if len(cross) == 2:
            link(*cross)
            continue
        # saddle: a == d != b == e
        center_in = (V[r, c] + V[r, c + 1] + V[r + 1, c] + V[r + 1, c + 1]) / 4.0 <= t
        if center_in == a:
            link(top, right)
            link(left, bottom)
        else:
            link(top, left)
            link(right, bottom)

    visited = set()
    chains = []
    for start in sorted(k for k in adj if len(adj[k]) == 1) + sorted(adj):
        if start in visited:
            continue
        chain = [start]
        visited.add(start)
        prev, cur = None, start
        while True:
            nxt = [k for k in sorted(adj[cur]) if k != prev and k not in visited]
            if not nxt:
                break
            prev, cur = cur, nxt[0]
            chain.append(cur)
            visited.add(cur)
        closed = len(chain) > 2 and start in adj[cur]
        chains.append((chain, closed))

    segments, grads, closed_flags = [], [], []
    for chain, closed in chains:
        pts, gs = zip(*(edge_point(*k) for k in chain))
        segments.append(np.array(pts))
        grads.append(np.array(gs))
        closed_flags.append(closed)
    gmax = max(float(g.max()) for g in grads)
    flagged = [g < eps_grad * gmax for g in grads]

    # cells within 2h on either side of the level
    tree = cKDTree(domain.centers)
    above, below = u > t, u < t
    two_sided = []
    for seg in segments:
        nb = tree.query_ball_point(seg, r=2 * domain.h * (1 + 1e-12))
        two_sided.append(np.array([above[n].any() and below[n].any() for n in nb]))
    return FreeBoundary(t=t, segments=segments, closed=closed_flags, grad_mag=grads,
                        flagged=flagged, two_sided=two_sided)


def extract_free_boundary(result: OptimizationResult, domain: GridDomain,
                          eps_grad: float = 0.05) -> FreeBoundary:
    inside = result.config.mask(domain.n_cells)
    return free_boundary_from_field(domain, result.u, result.config.t, inside, eps_grad)


# --- exceptional set ---------------------------------------------------------------


def _lower_envelope_1d(f: np.ndarray) -> np.ndarray:
    """Squared distance transform of a sampled function (Felzenszwalb-Huttenlocher)."""
    n = len(f)
    d = np.empty(n)
    v = np.zeros(n, dtype=np.int64)
    z = np.empty(n + 1)
    k = 0
    first = np.flatnonzero(np.isfinite(f))
    if first.size == 0:
        d.fill(np.inf)
        return d
    v[0] = first[0]
    z[0], z[1] = -np.inf, np.inf
    for q in range(first[0] + 1, n):
        if not np.isfinite(f[q]):
            continue
        while True:
            p = v[k]
            s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * (q - p))
            if s <= z[k]:
                k -= 1
                if k < 0:
                    break
            else:
                break
        k += 1
        v[k] = q
        z[k] = s if k > 0 else -np.inf
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        p = v[k]
        d[q] = (q - p) ** 2 + f[p]
    return d


def distance_transform(seeds: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance (in cells) from every grid point to the nearest
    seed, by two separable passes (columns, then rows)."""
    seeds = np.asarray(seeds, dtype=bool)
    f = np.where(seeds, 0.0, np.inf)
    g = np.empty_like(f)
    for c in range(f.shape[1]):
        g[:, c] = _lower_envelope_1d(f[:, c])
    out = np.empty_like(f)
    for r in range(f.shape[0]):
        out[r, :] = _lower_envelope_1d(g[r, :])
    return np.sqrt(out)


@dataclass
class ExceptionalSetEstimate:
    eps_levels: list
    F_eps: list  # per level, boolean mask over free-boundary vertices
    E_proxy: np.ndarray  # boolean mask over vertices
    vertices: np.ndarray
    nested: list  # per consecutive pair of levels

    def exceptional_points(self) -> np.ndarray:
        return self.vertices[self.E_proxy]


def estimate_exceptional_set(fb: FreeBoundary, domain: GridDomain,
                             eps_levels: Sequence[float], strict: bool = True) -> ExceptionalSetEstimate:
    """Grid version of the interior-ball sets: K_eps is the set of grid points
    whose distance to F is eps (within h/2), F_eps the vertices within
    eps + h of K_eps, and E_proxy the vertices in no F_eps."""
    h = domain.h
    eps_levels = [float(e) for e in eps_levels]
    if fb.n_vertices == 0:
        raise ValueError("empty free boundary")
    if any(e < 2 * h * (1 - 1e-9) for e in eps_levels):
        raise ValueError("ε under-resolved")
    if any(a <= b for a, b in zip(eps_levels, eps_levels[1:])):
        raise ValueError("eps_levels must be strictly descending")
    verts = fb.vertices()
    col = np.clip(np.rint((verts[:, 0] - domain.origin[0]) / h - 0.5).astype(int), 0, domain.nx - 1)
    row = np.clip(domain.ny - 1 - np.rint((verts[:, 1] - domain.origin[1]) / h - 0.5).astype(int),
                  0, domain.ny - 1)
    seeds = np.zeros((domain.ny, domain.nx), dtype=bool)
    seeds[row, col] = True
    dist = (distance_transform(seeds) * h).ravel()[domain.flat]

    F_eps = []
    for eps in eps_levels:
        K = domain.centers[np.abs(dist - eps) <= h / 2]
        if len(K) == 0:
            F_eps.append(np.zeros(len(verts), dtype=bool))
            continue
        d, _ = cKDTree(K).query(verts)
        F_eps.append(d <= eps + h * (1 + 1e-12))
    E = ~np.any(F_eps, axis=0)

    nested = []
    for big, small in zip(F_eps, F_eps[1:]):
        if not big.any():
            nested.append(True)
            continue
        if not small.any():
            nested.append(False)
            continue
        d, _ = cKDTree(verts[small]).query(verts[big])
        nested.append(bool(np.all(d <= h * (1 + 1e-12))))
    if strict and not all(nested):
        raise InvariantViolation("F_eps nesting", f"levels {eps_levels}: {nested}")
    return ExceptionalSetEstimate(eps_levels=eps_levels, F_eps=F_eps, E_proxy=E,
                                  vertices=verts, nested=nested)


# --- monotonicity in A ----------------------------------------------------------------


@dataclass
class MonotonicityReport:
    A_list: list
    results: list
    excess: dict  # (i, j) with i < j -> |D_i minus D_j| h^2
    asserted: bool

    @property
    def nested(self) -> bool:
        return all(v == 0 for v in self.excess.values())


def monotonicity_probe(domain: GridDomain, alpha: float, A_list: Sequence[float], seed: int = 0,
                       n_restarts: int = 8, expect_nested: Optional[bool] = None) -> MonotonicityReport:
    """Solve for every area and measure how far the optimal sets are from
    being nested.  Nesting is only enforced on the disk (or when asked)."""
    A_list = [float(a) for a in A_list]
    if any(a >= b for a, b in zip(A_list, A_list[1:])):
        raise ValueError("A_list must be strictly increasing")
    if expect_nested is None:
        expect_nested = domain.spec is not None and domain.spec.kind == "disk"
    results = [multistart(domain, alpha, A, n_restarts=n_restarts, seed=seed) for A in A_list]
    excess = {}
    for i in range(len(A_list)):
        for j in range(i + 1, len(A_list)):
            extra = np.setdiff1d(results[i].config.cells, results[j].config.cells)
            excess[(i, j)] = len(extra) * domain.h**2
    rep = MonotonicityReport(A_list=A_list, results=results, excess=excess, asserted=expect_nested)
    if expect_nested and not rep.nested:
        raise InvariantViolation("monotonicity", f"optimal sets not nested: {excess}")
    return rep
