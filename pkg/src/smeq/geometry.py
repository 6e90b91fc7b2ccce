"""Model domains, boundary tests, and quadrature grids.

Three domain shapes are supported: an interval (a, b), a disk, and an
axis-aligned rectangle.  Grids are midpoint-rule tensor grids; on the disk
the cells are clipped to the circle with exact piecewise-analytic areas and
centroids, so the quadrature weights sum to the domain volume at machine
precision.  Every other module consumes these grids, and the node ordering
(row-major by axis index) is fixed so that matrices, reports, and CSV output
are bitwise reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Domain",
    "Grid",
    "GridFunction",
    "build_grid",
]

# A Point is a sequence of 1 or 2 coordinates; arrays of shape (n, dim)
# are used for vectorized queries.


def _as_points(x, dim: int) -> np.ndarray:
    """Coerce a point or an array of points to shape (n, dim)."""
    a = np.atleast_1d(np.asarray(x, dtype=float))
    if a.ndim == 1:
        if a.shape[0] != dim:
            raise ValueError(
                f"dimension mismatch: expected {dim} coordinates, got {a.shape[0]}"
            )
        return a.reshape(1, dim)
    if a.ndim != 2 or a.shape[1] != dim:
        raise ValueError(
            f"dimension mismatch: expected points of dimension {dim}, got shape {a.shape}"
        )
    return a


@dataclass(frozen=True)
class Domain:
    """A model region: interval(a, b), disk(center, radius), or rectangle.

    Parameters are stored in ``params``:

    * ``interval``: (a, b)
    * ``disk``: (cx, cy, radius)
    * ``rectangle``: (a1, b1, a2, b2)

    Use the factory classmethods rather than the raw constructor.
    """

    kind: str
    params: tuple[float, ...]

    @classmethod
    def interval(cls, a: float, b: float) -> "Domain":
        if not a < b:
            raise ValueError(f"interval requires a < b, got ({a}, {b})")
        return cls("interval", (float(a), float(b)))

    @classmethod
    def disk(cls, center, radius: float) -> "Domain":
        cx, cy = (float(c) for c in center)
        if not radius > 0:
            raise ValueError(f"disk requires radius > 0, got {radius}")
        return cls("disk", (cx, cy, float(radius)))

    @classmethod
    def rectangle(cls, a1: float, b1: float, a2: float, b2: float) -> "Domain":
        if not (a1 < b1 and a2 < b2):
            raise ValueError(
                f"rectangle requires a1 < b1 and a2 < b2, got ({a1}, {b1}, {a2}, {b2})"
            )
        return cls("rectangle", (float(a1), float(b1), float(a2), float(b2)))

    @property
    def dimension(self) -> int:
        return 1 if self.kind == "interval" else 2

    @property
    def volume(self) -> float:
        if self.kind == "interval":
            a, b = self.params
            return b - a
        if self.kind == "disk":
            return math.pi * self.params[2] ** 2
        a1, b1, a2, b2 = self.params
        return (b1 - a1) * (b2 - a2)

    def signed_distance(self, x) -> np.ndarray:
        """Distance to the boundary, positive inside, negative outside."""
        p = _as_points(x, self.dimension)
        if self.kind == "interval":
            a, b = self.params
            return np.minimum(p[:, 0] - a, b - p[:, 0])
        if self.kind == "disk":
            cx, cy, r = self.params
            return r - np.hypot(p[:, 0] - cx, p[:, 1] - cy)
        a1, b1, a2, b2 = self.params
        return np.minimum(
            np.minimum(p[:, 0] - a1, b1 - p[:, 0]),
            np.minimum(p[:, 1] - a2, b2 - p[:, 1]),
        )

    def contains(self, x) -> bool | np.ndarray:
        """True iff the point is strictly interior.

        Accepts a single point (returns a bool) or an (n, dim) array
        (returns a bool array).
        """
        d = self.signed_distance(x)
        inside = d > 0.0
        return bool(inside[0]) if inside.shape == (1,) else inside

    def boundary_distance(self, x) -> float | np.ndarray:
        """Euclidean distance from an interior point to the boundary.

        Raises for points on or outside the boundary.
        """
        d = self.signed_distance(x)
        if np.any(d <= 0.0):
            raise ValueError(f"outside-domain: point not strictly interior of {self.kind}")
        return float(d[0]) if d.shape == (1,) else d


# ---------------------------------------------------------------------------
# Exact circle-box clipping
# ---------------------------------------------------------------------------

def _circle_segment_integrals(r: float, a: float, b: float):
    """Return (int yh, int x*yh, int yh^2) over [a, b], yh = sqrt(r^2-x^2)."""
    a = min(max(a, -r), r)
    b = min(max(b, -r), r)
    f1 = 0.5 * (b * math.sqrt(max(r * r - b * b, 0.0)) + r * r * math.asin(b / r)) - 0.5 * (
        a * math.sqrt(max(r * r - a * a, 0.0)) + r * r * math.asin(a / r)
    )
    f2 = -((max(r * r - b * b, 0.0)) ** 1.5 - (max(r * r - a * a, 0.0)) ** 1.5) / 3.0
    f3 = (r * r * b - b**3 / 3.0) - (r * r * a - a**3 / 3.0)
    return f1, f2, f3


def _clip_cell(x1: float, x2: float, y1: float, y2: float, r: float):
    """Area and centroid of [x1,x2] x [y1,y2] intersected with the disk of
    radius r centered at the origin.

    Returns (area, cx, cy); (0, 0, 0) when the intersection is empty.  The
    integrand is piecewise analytic between breakpoints where the circle
    crosses the horizontal cell edges, so the result is exact up to rounding.
    """
    lo = max(x1, -r)
    hi = min(x2, r)
    if lo >= hi:
        return 0.0, 0.0, 0.0
    cuts = {lo, hi}
    for yedge in (y1, y2):
        if abs(yedge) < r:
            xc = math.sqrt(r * r - yedge * yedge)
            for s in (-xc, xc):
                if lo < s < hi:
                    cuts.add(s)
    xs = sorted(cuts)
    area = 0.0
    mx = 0.0
    my = 0.0
    for a, b in zip(xs[:-1], xs[1:]):
        xm = 0.5 * (a + b)
        yh = math.sqrt(max(r * r - xm * xm, 0.0))
        upper = min(y2, yh)
        lower = max(y1, -yh)
        if upper <= lower:
            continue
        up_circ = yh < y2
        lo_circ = -yh > y1
        f1, f2, f3 = _circle_segment_integrals(r, a, b)
        w = b - a
        # area and x-moment
        if up_circ:
            area += f1
            mx += f2
        else:
            area += y2 * w
            mx += y2 * 0.5 * (b * b - a * a)
        if lo_circ:
            area += f1
            mx += f2
        else:
            area -= y1 * w
            mx -= y1 * 0.5 * (b * b - a * a)
        # y-moment: (upper^2 - lower^2) / 2
        uy = f3 if up_circ else y2 * y2 * w
        ly = f3 if lo_circ else y1 * y1 * w
        my += 0.5 * (uy - ly)
    if area <= 0.0:
        return 0.0, 0.0, 0.0
    return area, mx / area, my / area


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Grid:
    """Midpoint quadrature grid on a domain.

    ``nodes`` has shape (N, dim) and holds the quadrature nodes (cell
    centers; clipped-cell centroids on the disk boundary ring).  ``weights``
    are the cell volumes/areas.  ``index`` holds the integer lattice
    coordinates of each node and ``lattice`` maps lattice coordinates back to
    node ids (-1 for cells outside the domain), which the finite-difference
    modules use to find neighbors.
    """

    domain: Domain
    resolution: tuple[int, ...]
    nodes: np.ndarray
    weights: np.ndarray
    spacing: tuple[float, ...]
    index: np.ndarray
    lattice: np.ndarray

    def __post_init__(self):
        for arr in (self.nodes, self.weights, self.index, self.lattice):
            arr.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def node_nearest(self, x) -> int:
        """Id of the grid node closest to a point."""
        p = _as_points(x, self.domain.dimension)[0]
        return int(np.argmin(np.sum((self.nodes - p) ** 2, axis=1)))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Scalar field sampled at the grid nodes, with quadrature pairing."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"values shape {v.shape} does not match grid with {self.grid.n_nodes} nodes"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("GridFunction values must be finite")
        object.__setattr__(self, "values", v)
        v.setflags(write=False)

    def pair(self, eta) -> float:
        """Quadrature pairing <u, eta> = sum u_i eta_i w_i.

        ``eta`` may be a GridFunction, a per-node array, or a callable
        evaluated at the nodes.
        """
        ev = _eval_on_nodes(eta, self.grid)
        return float(np.sum(self.values * ev * self.grid.weights))

    def l1_norm(self) -> float:
        return float(np.sum(np.abs(self.values) * self.grid.weights))

    def linf_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def _eval_on_nodes(eta, grid: Grid) -> np.ndarray:
    if isinstance(eta, GridFunction):
        if eta.grid is not grid and eta.grid.n_nodes != grid.n_nodes:
            raise ValueError("grid mismatch in pairing")
        return eta.values
    if callable(eta):
        out = np.asarray(eta(grid.nodes), dtype=float)
        if out.shape != (grid.n_nodes,):
            raise ValueError("node function must return one value per node")
        return out
    out = np.asarray(eta, dtype=float)
    if out.shape != (grid.n_nodes,):
        raise ValueError("per-node values must match the grid size")
    return out


def interpolate(u: GridFunction, points) -> np.ndarray:
    """Multilinear off-grid evaluation with zero Dirichlet extension.

    Values are treated as sitting at cell centers; outside the node hull
    (and in dropped disk cells) the field continues with value 0, matching
    the boundary behavior of the solutions this toolkit produces.
    """
    grid = u.grid
    domain = grid.domain
    P = _as_points(points, domain.dimension)
    if domain.dimension == 1:
        a, b = domain.params
        xs = np.concatenate(([a], grid.nodes[:, 0], [b]))
        ys = np.concatenate(([0.0], u.values, [0.0]))
        return np.interp(P[:, 0], xs, ys)
    if domain.kind == "rectangle":
        origin = (domain.params[0], domain.params[2])
    else:
        cx, cy, r = domain.params
        origin = (cx - r, cy - r)
    nx, ny = grid.lattice.shape
    hx, hy = grid.spacing
    fx = (P[:, 0] - origin[0]) / hx - 0.5
    fy = (P[:, 1] - origin[1]) / hy - 0.5
    i0 = np.floor(fx).astype(np.int64)
    j0 = np.floor(fy).astype(np.int64)
    tx = fx - i0
    ty = fy - j0
    out = np.zeros(P.shape[0])
    for di, wx in ((0, 1.0 - tx), (1, tx)):
        for dj, wy in ((0, 1.0 - ty), (1, ty)):
            ii = i0 + di
            jj = j0 + dj
            ok = (ii >= 0) & (ii < nx) & (jj >= 0) & (jj < ny)
            nid = np.where(ok, grid.lattice[np.clip(ii, 0, nx - 1), np.clip(jj, 0, ny - 1)], -1)
            val = np.where(nid >= 0, u.values[np.clip(nid, 0, None)], 0.0)
            out += wx * wy * val
    return out


def _resolution_tuple(domain: Domain, resolution) -> tuple[int, ...]:
    if np.isscalar(resolution):
        res = (int(resolution),) * domain.dimension
    else:
        res = tuple(int(r) for r in resolution)
    if len(res) != domain.dimension:
        raise ValueError(
            f"resolution {res} does not match domain dimension {domain.dimension}"
        )
    if any(r < 2 for r in res):
        raise ValueError(f"resolution must be at least 2 per axis, got {res}")
    return res


def build_grid(domain: Domain, resolution) -> Grid:
    """Build the midpoint quadrature grid at a per-axis resolution.

    Interval and rectangle grids are plain tensor midpoint grids.  Disk
    grids tile the bounding square and keep every cell whose intersection
    with the disk has positive area; such a cell gets the exact clipped area
    as weight and the exact centroid as node, so the weight sum equals the
    disk area at machine precision.

    Parameters
    ----------
    domain : Domain
    resolution : int or tuple of int
        Cells per axis, at least 2.

    Returns
    -------
    Grid
    """
    res = _resolution_tuple(domain, resolution)
    if domain.kind == "interval":
        a, b = domain.params
        n = res[0]
        h = (b - a) / n
        idx = np.arange(n, dtype=np.int64)
        nodes = (a + (idx + 0.5) * h).reshape(-1, 1)
        weights = np.full(n, h)
        return Grid(domain, res, nodes, weights, (h,), idx.reshape(-1, 1), idx.copy())

    if domain.kind == "rectangle":
        a1, b1, a2, b2 = domain.params
        nx, ny = res
        hx = (b1 - a1) / nx
        hy = (b2 - a2) / ny
        ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        ix = ix.ravel()
        iy = iy.ravel()
        nodes = np.column_stack([a1 + (ix + 0.5) * hx, a2 + (iy + 0.5) * hy])
        weights = np.full(nx * ny, hx * hy)
        lattice = np.arange(nx * ny, dtype=np.int64).reshape(nx, ny)
        index = np.column_stack([ix, iy]).astype(np.int64)
        return Grid(domain, res, nodes, weights, (hx, hy), index, lattice)

    # disk
    cx, cy, r = domain.params
    nx, ny = res
    hx = 2.0 * r / nx
    hy = 2.0 * r / ny
    full = hx * hy
    # a cell is kept only when its clipped area is meaningfully positive
    area_floor = 1e-12 * full
    nodes_list = []
    weights_list = []
    index_list = []
    lattice = np.full((nx, ny), -1, dtype=np.int64)
    nid = 0
    for ix in range(nx):
        x1 = -r + ix * hx
        x2 = x1 + hx
        for iy in range(ny):
            y1 = -r + iy * hy
            y2 = y1 + hy
            # nearest and farthest cell points decide the all-in/all-out cases
            px = min(max(0.0, x1), x2)
            py = min(max(0.0, y1), y2)
            nearest = math.hypot(px, py)
            if nearest >= r:
                continue
            farthest = math.hypot(max(abs(x1), abs(x2)), max(abs(y1), abs(y2)))
            if farthest <= r:
                area, mx, my = full, 0.5 * (x1 + x2), 0.5 * (y1 + y2)
            else:
                area, mx, my = _clip_cell(x1, x2, y1, y2, r)
                if area <= area_floor:
                    continue
            nodes_list.append((cx + mx, cy + my))
            weights_list.append(area)
            index_list.append((ix, iy))
            lattice[ix, iy] = nid
            nid += 1
    nodes = np.array(nodes_list, dtype=float)
    weights = np.array(weights_list, dtype=float)
    index = np.array(index_list, dtype=np.int64)
    return Grid(domain, res, nodes, weights, (hx, hy), index, lattice)
