"""Domain shapes and their rasterization to a cell-centered grid.

Arrays on a :class:`GridDomain` are stored image-style: row 0 is the top of
the bounding box, so a mask can be written to PGM without flipping.  The
spatial ``origin`` is the lower-left corner of the (padded) bounding box.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

KINDS = ("rectangle", "disk", "annulus", "dumbbell", "polygon", "mask_file")

# dumbbell region tags
NONE, LEFT_LOBE, RIGHT_LOBE, HANDLE = 0, 1, 2, 3
LABEL_NAMES = {NONE: "none", LEFT_LOBE: "left_lobe", RIGHT_LOBE: "right_lobe", HANDLE: "handle"}


class DegenerateGridError(ValueError):
    pass


@dataclass(frozen=True)
class DomainSpec:
    """Shape of the membrane.

    Use the classmethod constructors; ``kind`` selects which of the
    remaining fields are meaningful.
    """

    kind: str
    width: float = 1.0
    height: float = 1.0
    radius: float = 1.0
    a: float = 0.0
    handle: float = 0.0
    vertices: tuple = ()
    path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind == "rectangle" and not (self.width > 0 and self.height > 0):
            raise ValueError("rectangle dimensions must be positive")
        if self.kind == "disk" and not self.radius > 0:
            raise ValueError("disk radius must be positive")
        if self.kind == "annulus" and not self.a > 0:
            raise ValueError("annulus requires a > 0")
        if self.kind == "dumbbell" and not 0 < self.handle < 1:
            raise ValueError("dumbbell requires 0 < h_handle < 1")
        if self.kind == "polygon":
            if len(self.vertices) < 3:
                raise ValueError("polygon needs at least 3 vertices")
            if not _is_simple(np.asarray(self.vertices, dtype=float)):
                raise ValueError("polygon is self-intersecting")
        if self.kind == "mask_file" and not self.path:
            raise ValueError("mask_file requires a path")

    @classmethod
    def rectangle(cls, width: float, height: float) -> "DomainSpec":
        return cls("rectangle", width=float(width), height=float(height))

    @classmethod
    def disk(cls, radius: float = 1.0) -> "DomainSpec":
        return cls("disk", radius=float(radius))

    @classmethod
    def annulus(cls, a: float) -> "DomainSpec":
        """Ring ``a < |x| < a + 1``."""
        return cls("annulus", a=float(a))

    @classmethod
    def dumbbell(cls, handle: float) -> "DomainSpec":
        """Two unit lobes at (+-2, 0) joined by the strip (-2, 2) x (-handle, handle)."""
        return cls("dumbbell", handle=float(handle))

    @classmethod
    def polygon(cls, vertices: Sequence[Sequence[float]]) -> "DomainSpec":
        return cls("polygon", vertices=tuple((float(x), float(y)) for x, y in vertices))

    @classmethod
    def mask_file(cls, path) -> "DomainSpec":
        return cls("mask_file", path=str(path))

    def bbox(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the shape."""
        if self.kind == "rectangle":
            return 0.0, 0.0, self.width, self.height
        if self.kind == "disk":
            r = self.radius
            return -r, -r, r, r
        if self.kind == "annulus":
            r = self.a + 1.0
            return -r, -r, r, r
        if self.kind == "dumbbell":
            return -3.0, -1.0, 3.0, 1.0
        if self.kind == "polygon":
            v = np.asarray(self.vertices)
            return v[:, 0].min(), v[:, 1].min(), v[:, 0].max(), v[:, 1].max()
        raise ValueError("mask_file domains have no analytic bounding box")

    def contains(self, x, y) -> np.ndarray:
        """Strict-interior predicate, vectorized over coordinates."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "rectangle":
            return (x > 0) & (x < self.width) & (y > 0) & (y < self.height)
        if self.kind == "disk":
            return x * x + y * y < self.radius**2
        if self.kind == "annulus":
            r2 = x * x + y * y
            return (r2 > self.a**2) & (r2 < (self.a + 1.0) ** 2)
        if self.kind == "dumbbell":
            return self.dumbbell_labels(x, y) != NONE
        if self.kind == "polygon":
            return _point_in_polygon(x, y, np.asarray(self.vertices))
        raise ValueError("mask_file domains have no analytic predicate")

    def dumbbell_labels(self, x, y) -> np.ndarray:
        h = self.handle
        in_left = (x + 2.0) ** 2 + y * y < 1.0
        in_right = (x - 2.0) ** 2 + y * y < 1.0
        in_handle = (x > -2.0) & (x < 2.0) & (y > -h) & (y < h)
        lab = np.full(np.shape(x), NONE, dtype=np.int8)
        lab[in_left] = LEFT_LOBE
        lab[in_right] = RIGHT_LOBE
        # handle wins ties with the lobes
        lab[in_handle] = HANDLE
        return lab


def _orient(ax, ay, bx, by, cx, cy):
    return np.sign((bx - ax) * (cy - ay) - (by - ay) * (cx - ax))


def _is_simple(v: np.ndarray) -> bool:
    n = len(v)
    for i in range(n):
        p1, p2 = v[i], v[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            q1, q2 = v[j], v[(j + 1) % n]
            d1 = _orient(*p1, *p2, *q1)
            d2 = _orient(*p1, *p2, *q2)
            d3 = _orient(*q1, *q2, *p1)
            d4 = _orient(*q1, *q2, *p2)
            if d1 * d2 < 0 and d3 * d4 < 0:
                return False
            if d1 == d2 == d3 == d4 == 0:
                # collinear overlap
                if (
                    max(min(p1[0], p2[0]), min(q1[0], q2[0])) <= min(max(p1[0], p2[0]), max(q1[0], q2[0]))
                    and max(min(p1[1], p2[1]), min(q1[1], q2[1])) <= min(max(p1[1], p2[1]), max(q1[1], q2[1]))
                ):
                    return False
    return True


def _point_in_polygon(x, y, v) -> np.ndarray:
    """Even-odd ray casting; points on an edge count as outside."""
    inside = np.zeros(np.shape(x), dtype=bool)
    on_edge = np.zeros(np.shape(x), dtype=bool)
    n = len(v)
    for k in range(n):
        x1, y1 = v[k]
        x2, y2 = v[(k + 1) % n]
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xint)
        cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
        within = (
            (np.minimum(x1, x2) <= x) & (x <= np.maximum(x1, x2))
            & (np.minimum(y1, y2) <= y) & (y <= np.maximum(y1, y2))
        )
        on_edge |= (cross == 0) & within
    return inside & ~on_edge


@dataclass(eq=False)
class GridDomain:
    h: float
    origin: tuple[float, float]
    nx: int
    ny: int
    interior: np.ndarray  # (ny, nx) bool, row 0 at the top
    labels: Optional[np.ndarray] = None  # (ny, nx) int8 region tags
    spec: Optional[DomainSpec] = field(default=None, repr=False)

    def __post_init__(self):
        self.interior = np.ascontiguousarray(self.interior, dtype=bool)
        if self.interior.shape != (self.ny, self.nx):
            raise ValueError("interior mask shape does not match (ny, nx)")
        if not self.interior.any():
            raise DegenerateGridError("degenerate grid")
        self.interior.setflags(write=False)

    @cached_property
    def flat(self) -> np.ndarray:
        """Flat (row-major) positions of the interior cells, ordered by cell index."""
        return np.flatnonzero(self.interior.ravel())

    @property
    def n_cells(self) -> int:
        return len(self.flat)

    @cached_property
    def cell_index(self) -> np.ndarray:
        idx = np.full(self.nx * self.ny, -1, dtype=np.int64)
        idx[self.flat] = np.arange(self.n_cells)
        return idx.reshape(self.ny, self.nx)

    @cached_property
    def rows(self) -> np.ndarray:
        return self.flat // self.nx

    @cached_property
    def cols(self) -> np.ndarray:
        return self.flat % self.nx

    def center_of(self, rows, cols) -> tuple[np.ndarray, np.ndarray]:
        x = self.origin[0] + (np.asarray(cols) + 0.5) * self.h
        y = self.origin[1] + (self.ny - np.asarray(rows) - 0.5) * self.h
        return x, y

    @cached_property
    def centers(self) -> np.ndarray:
        """(N, 2) coordinates of interior cell centers."""
        x, y = self.center_of(self.rows, self.cols)
        return np.column_stack([x, y])

    @cached_property
    def cell_labels(self) -> Optional[np.ndarray]:
        if self.labels is None:
            return None
        return self.labels.ravel()[self.flat]

    @cached_property
    def boundary_cells(self) -> np.ndarray:
        """Cell indices of interior cells with at least one exterior 4-neighbour."""
        p = np.pad(self.interior, 1, constant_values=False)
        core = p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
        edge = self.interior & ~core
        return np.sort(self.cell_index[edge])

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        """Five-point Dirichlet Laplacian (-Delta) over interior cells."""
        n = self.n_cells
        idx = self.cell_index
        rows, cols = [], []
        # right and down neighbours; symmetric counterpart added below
        for a, b in ((idx[:, :-1], idx[:, 1:]), (idx[:-1, :], idx[1:, :])):
            both = (a >= 0) & (b >= 0)
            rows.append(a[both])
            cols.append(b[both])
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        inv_h2 = 1.0 / (self.h * self.h)
        off = np.full(len(r), -inv_h2)
        mat = sp.coo_matrix(
            (
                np.concatenate([off, off, np.full(n, 4.0 * inv_h2)]),
                (np.concatenate([r, c, np.arange(n)]), np.concatenate([c, r, np.arange(n)])),
            ),
            shape=(n, n),
        ).tocsr()
        mat.sort_indices()
        return mat

    def same_grid(self, other: "GridDomain") -> bool:
        return self is other or (
            self.h == other.h
            and self.origin == other.origin
            and self.interior.shape == other.interior.shape
            and bool(np.array_equal(self.interior, other.interior))
        )

    def to_grid(self, values, fill=0.0) -> np.ndarray:
        """Scatter per-cell values onto the full (ny, nx) array."""
        values = np.asarray(values)
        out = np.full(self.nx * self.ny, fill, dtype=values.dtype)
        out[self.flat] = values
        return out.reshape(self.ny, self.nx)


def rasterize(spec: DomainSpec, h: float) -> GridDomain:
    """Cell-centered rasterization of ``spec`` at spacing ``h``.

    The outermost ring of cells is centered on the bounding-box edges, so it
    is always exterior (strict-interior test) and serves as the one-cell
    padding.  For rectangles this puts the zero Dirichlet data exactly on the
    boundary.
    """
    if not h > 0:
        raise ValueError("spacing must be positive")
    if spec.kind == "mask_file":
        return read_mask_file(spec.path, h)
    xmin, ymin, xmax, ymax = spec.bbox()
    mx = int(np.ceil((xmax - xmin) / h - 1e-9))
    my = int(np.ceil((ymax - ymin) / h - 1e-9))
    nx, ny = mx + 1, my + 1
    # centered so that symmetric shapes get symmetric grids
    x0 = 0.5 * (xmin + xmax) - 0.5 * nx * h
    y0 = 0.5 * (ymin + ymax) - 0.5 * ny * h
    xs = x0 + (np.arange(nx) + 0.5) * h
    ys = y0 + (ny - np.arange(ny) - 0.5) * h
    X, Y = np.meshgrid(xs, ys)
    interior = spec.contains(X, Y)
    labels = spec.dumbbell_labels(X, Y) if spec.kind == "dumbbell" else None
    if not interior.any():
        raise DegenerateGridError("degenerate grid")
    return GridDomain(h=float(h), origin=(float(x0), float(y0)), nx=nx, ny=ny,
                      interior=interior, labels=labels, spec=spec)


def measure(domain: GridDomain, subset=None) -> float:
    """Area of the whole grid domain, or of a subset of cell indices."""
    if subset is None:
        return domain.n_cells * domain.h**2
    subset = np.unique(np.asarray(subset, dtype=np.int64))
    if subset.size and (subset[0] < 0 or subset[-1] >= domain.n_cells):
        raise ValueError("subset contains non-interior cell indices")
    return subset.size * domain.h**2


_HEADER_NUM = r"[-+0-9.eE]+"


def parse_pgm(path) -> tuple[np.ndarray, list[str]]:
    """Read a plain (P2) PGM; returns the pixel array and its comment lines."""
    text = Path(path).read_text()
    comments = [ln[1:].strip() for ln in text.splitlines() if ln.lstrip().startswith("#")]
    tokens = []
    for ln in text.splitlines():
        tokens.extend(ln.split("#", 1)[0].split())
    if not tokens or tokens[0] != "P2":
        raise OSError(f"{path}: not a plain PGM (P2) file")
    try:
        nx, ny, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
        pix = np.array([int(t) for t in tokens[4:]], dtype=np.int64)
    except (IndexError, ValueError) as exc:
        raise OSError(f"{path}: malformed PGM header") from exc
    if pix.size != nx * ny or maxval <= 0:
        raise OSError(f"{path}: expected {nx * ny} pixels, found {pix.size}")
    return pix.reshape(ny, nx), comments


def read_mask_file(path, h: Optional[float] = None) -> GridDomain:
    """Domain from a PGM mask; nonzero pixels are interior."""
    pix, comments = parse_pgm(path)
    meta = " ".join(comments)
    mh = re.search(rf"h=({_HEADER_NUM})", meta)
    mo = re.search(rf"origin=({_HEADER_NUM})\s+({_HEADER_NUM})", meta)
    if mh is None or mo is None:
        raise OSError(f"{path}: header comment must carry 'h=<spacing> origin=<x> <y>'")
    fh = float(mh.group(1))
    if h is not None and not np.isclose(h, fh, rtol=1e-12, atol=0.0):
        raise ValueError(f"requested spacing {h} differs from mask spacing {fh}")
    x0, y0 = float(mo.group(1)), float(mo.group(2))
    interior = pix > 0
    ny, nx = interior.shape
    if interior[0].any() or interior[-1].any() or interior[:, 0].any() or interior[:, -1].any():
        interior = np.pad(interior, 1, constant_values=False)
        x0 -= fh
        y0 -= fh
        ny, nx = interior.shape
    spec = DomainSpec.mask_file(path)
    return GridDomain(h=fh, origin=(x0, y0), nx=nx, ny=ny, interior=interior, spec=spec)
