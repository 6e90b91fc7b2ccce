"""Finite-difference Dirichlet Laplacian pieces shared by the mollifier
solve and the variational pipeline.

The stiffness matrix S is assembled from face conductances so that
eta^T S eta approximates the Dirichlet energy integral of |grad eta|^2 with
zero boundary values: interior faces between lattice neighbors contribute
(eta_i - eta_j)^2 / h^2 times the face volume, and each missing neighbor
(domain boundary) contributes a half-distance wall term.  This path shares
no code with the Green-kernel pipeline on purpose: agreement between the
two solvers is then evidence rather than tautology.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .geometry import Grid
from .measures import MeasureSpec, curve_quadrature

__all__ = ["dirichlet_stiffness", "lump_measure"]


def dirichlet_stiffness(grid: Grid) -> sp.csr_matrix:
    """Sparse SPD stiffness of -Delta with zero boundary values.

    1D: tridiagonal with 1/h face conductances and 2/h wall closure.
    2D: 5-point stencil on the kept lattice cells, wall closure 2*hy/hx per
    missing x-neighbor (and symmetrically in y).  The quadratic form
    eta^T S eta approximates the integral of |grad eta|^2.
    """
    n = grid.n_nodes
    rows = []
    cols = []
    vals = []
    diag = np.zeros(n)

    if grid.domain.dimension == 1:
        h = grid.spacing[0]
        for i in range(n):
            for j in (i - 1, i + 1):
                if 0 <= j < n:
                    rows.append(i)
                    cols.append(j)
                    vals.append(-1.0 / h)
                    diag[i] += 1.0 / h
                else:
                    diag[i] += 2.0 / h
        mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n))
        mat = mat + sp.diags(diag)
        return mat.tocsr()

    hx, hy = grid.spacing
    cond = (hy / hx, hx / hy)
    lattice = grid.lattice
    nx, ny = lattice.shape
    for i in range(n):
        ix, iy = grid.index[i]
        for axis, (dx, dy) in enumerate(((1, 0), (0, 1))):
            for sgn in (-1, 1):
                jx, jy = ix + sgn * dx, iy + sgn * dy
                j = lattice[jx, jy] if 0 <= jx < nx and 0 <= jy < ny else -1
                if j >= 0:
                    rows.append(i)
                    cols.append(j)
                    vals.append(-cond[axis])
                    diag[i] += cond[axis]
                else:
                    diag[i] += 2.0 * cond[axis]
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n))
    mat = mat + sp.diags(diag)
    return mat.tocsr()


def _scatter_multilinear(grid: Grid, b: np.ndarray, point, weight: float) -> None:
    """Deposit a point mass onto the bracketing nodes with linear weights."""
    dim = grid.domain.dimension
    p = np.asarray(point, dtype=float).ravel()
    nodes = grid.nodes
    if dim == 1:
        x = p[0]
        xs = nodes[:, 0]
        j = int(np.searchsorted(xs, x))
        if j == 0:
            b[0] += weight
            return
        if j >= xs.size:
            b[-1] += weight
            return
        lam = (x - xs[j - 1]) / (xs[j] - xs[j - 1])
        b[j - 1] += (1.0 - lam) * weight
        b[j] += lam * weight
        return

    # 2D: bilinear over the four surrounding lattice cells, renormalized
    # over the cells that exist (disk boundary may drop some)
    hx, hy = grid.spacing
    if grid.domain.kind == "disk":
        cx, cy, r = grid.domain.params
        ox, oy = cx - r, cy - r
    else:
        a1, _, a2, _ = grid.domain.params
        ox, oy = a1, a2
    fx = (p[0] - ox) / hx - 0.5
    fy = (p[1] - oy) / hy - 0.5
    ix0 = int(np.floor(fx))
    iy0 = int(np.floor(fy))
    tx = fx - ix0
    ty = fy - iy0
    shares = []
    nx, ny = grid.lattice.shape
    for dx, wx in ((0, 1.0 - tx), (1, tx)):
        for dy, wy in ((0, 1.0 - ty), (1, ty)):
            jx, jy = ix0 + dx, iy0 + dy
            j = grid.lattice[jx, jy] if 0 <= jx < nx and 0 <= jy < ny else -1
            if j >= 0 and wx * wy > 0:
                shares.append((j, wx * wy))
    total = sum(s for _, s in shares)
    if total <= 0:
        b[grid.node_nearest(p)] += weight
        return
    for j, s in shares:
        b[j] += weight * s / total


def _capped_power_side(s1: float, s2: float, beta: float, coef: float, cap: float) -> float:
    """Integral of min(coef r^-beta, cap) over distances [s1, s2], coef > 0."""
    if s2 <= s1:
        return 0.0
    r_c = 0.0 if not np.isfinite(cap) else (coef / cap) ** (1.0 / beta)
    flat = 0.0 if r_c == 0.0 else cap * max(0.0, min(s2, r_c) - min(s1, r_c))
    lo = max(s1, r_c)
    hi = max(s2, r_c)
    if hi <= lo:
        return flat
    if lo == 0.0 and beta >= 1.0:
        raise ValueError(
            "non-integrable power density must be capped before lumping"
        )
    if beta == 1.0:
        tail = coef * (np.log(hi) - np.log(lo))
    else:
        e = 1.0 - beta
        tail = coef * (hi**e - lo**e) / e
    return flat + tail


def _exact_power_masses(grid: Grid, data: MeasureSpec) -> np.ndarray | None:
    """Exact cell integrals for 1D densities built from simple power terms.

    Supported: every term a constant or a single power factor.  The cap is
    applied per term rather than to the sum, which overshoots only inside
    the tiny cap radius of each center.  Anything else (products, 2D)
    returns None and the caller falls back to nodewise sampling.
    """
    if grid.domain.dimension != 1 or data.terms is None:
        return None
    for _coef, factors in data.terms:
        if len(factors) > 1 or any(beta <= 0 for _p, beta in factors):
            return None
    a, bnd = grid.domain.params
    n = grid.n_nodes
    edges = a + np.arange(n + 1) * grid.spacing[0]
    out = np.zeros(n)
    for coef, factors in data.terms:
        if not factors:
            if np.isfinite(data.cap):
                coef = float(np.clip(coef, -data.cap, data.cap))
            out += coef * grid.weights
            continue
        (p,), beta = factors[0]
        sgn = 1.0 if coef >= 0 else -1.0
        mag = abs(coef)
        for i in range(n):
            e0, e1 = edges[i] - p, edges[i + 1] - p
            if e0 >= 0.0:
                m = _capped_power_side(e0, e1, beta, mag, data.cap)
            elif e1 <= 0.0:
                m = _capped_power_side(-e1, -e0, beta, mag, data.cap)
            else:
                m = _capped_power_side(0.0, -e0, beta, mag, data.cap)
                m += _capped_power_side(0.0, e1, beta, mag, data.cap)
            out[i] += sgn * m
    return out


def lump_measure(grid: Grid, data: MeasureSpec) -> np.ndarray:
    """Node masses of a measure: density * cell weight (exact cell
    integrals for 1D power terms), atoms split multilinearly onto
    bracketing nodes, curves deposited quadrature point by quadrature
    point onto nearest nodes."""
    b = np.zeros(grid.n_nodes)
    exact = _exact_power_masses(grid, data)
    if exact is not None:
        b += exact
    else:
        dens = data.density_values(grid.nodes)
        if dens is not None:
            b += dens * grid.weights
    for point, weight in data.atoms:
        _scatter_multilinear(grid, b, point, weight)
    for curve in data.curves:
        pts, ds = curve_quadrature(curve, min(grid.spacing))
        g = curve.density_values(pts)
        for k in range(pts.shape[0]):
            d2 = np.sum((grid.nodes - pts[k]) ** 2, axis=1)
            b[int(np.argmin(d2))] += g[k] * ds[k]
    return b
