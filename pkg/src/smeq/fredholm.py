"""Second-kind integral-equation solve for the perturbed potential.

The equation u + R(u nu) = R mu is collocated on the quadrature grid: the
potential measure is lumped to per-node masses m_i (density value times
cell weight, 1D atoms split between their bracketing nodes, curves
deposited along their arc), and the kernel matrix acts through those
masses, giving the dense system

    (I + K diag(m_i / w_i)) u = (R mu at the nodes).

Singular potentials go through a rising ladder of truncation caps; the
capped solves decrease monotonically and their limit is the solution, with
values at divergence points driven to zero jointly by cap and resolution.
The ladder stops when successive solves differ by less than a fixed
fraction of the data's total variation.

``resolvent_identity_residual`` re-tests a solve against the exchange
identity w + R(w nu) = R eta with quadrature deliberately foreign to the
collocation grid (off-grid probes, interpolated w, the singularity-aware
integrator), so discretization errors do not cancel the way they would if
the residual reused the solver's own matrix.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._laplace import lump_measure
from .geometry import Domain, Grid, GridFunction, interpolate
from .green import GreenKernel, KernelMatrix, apply_R, assemble
from .measures import (
    MeasureSpec,
    PotentialMeasure,
    curve_quadrature,
    integrate_with_singularities,
    total_variation,
    truncate,
)

__all__ = [
    "SolveReport",
    "DEFAULT_TRUNCATION_LEVELS",
    "kernel_matrix",
    "solve_duality",
    "solve_R_nu_eta",
    "resolvent_identity_residual",
    "neumann_series_solve",
]

DEFAULT_TRUNCATION_LEVELS = (1e1, 1e2, 1e3, 1e4)

# ladder stop: successive solves closer than this fraction of ||mu||_TV
_STOP_FRACTION = 1e-4

_KM_CACHE: "weakref.WeakKeyDictionary[Grid, dict]" = weakref.WeakKeyDictionary()


def kernel_matrix(grid: Grid, alpha: float = 0.0) -> KernelMatrix:
    """Assembled kernel matrix for a grid, cached per grid object."""
    per = _KM_CACHE.get(grid)
    if per is None:
        per = {}
        _KM_CACHE[grid] = per
    km = per.get(alpha)
    if km is None:
        km = assemble(GreenKernel(grid.domain, alpha), grid)
        per[alpha] = km
    return km


@dataclass(frozen=True)
class SolveReport:
    """Result of a ladder solve.

    ``truncation_levels`` lists the caps actually run and ``l1_deltas`` the
    L1 distances between successive capped solutions (one fewer entry).
    ``nu_mass_of_u`` is the integral of |u| against the final capped
    potential, the quantity bounded by the data's total variation.
    """

    solution: GridFunction
    truncation_levels: tuple
    l1_deltas: tuple
    nu_mass_of_u: float
    residuals: dict
    stop_reason: str


def _effective_levels(nu: PotentialMeasure, levels) -> list:
    lv = [float(l) for l in levels]
    if any(b <= a for a, b in zip(lv, lv[1:])):
        raise ValueError("levels must be strictly increasing")
    if lv:
        return lv
    # truncation is mandatory for declared-singular potentials
    if nu.singular_points:
        return list(DEFAULT_TRUNCATION_LEVELS)
    return [np.inf]


def _solve_level(km: KernelMatrix, nu: PotentialMeasure, level: float, b: np.ndarray):
    """One capped solve; returns (u, node masses of the capped potential)."""
    masses = lump_measure(km.grid, truncate(nu, level).base)
    system = km.entries * (masses / km.grid.weights)[None, :]
    np.fill_diagonal(system, system.diagonal() + 1.0)
    lu, piv = scipy.linalg.lu_factor(system, overwrite_a=True)
    u = scipy.linalg.lu_solve((lu, piv), b)
    return u, masses


def solve_duality(
    d: Domain, g: Grid, nu: PotentialMeasure, mu: MeasureSpec, levels=()
) -> SolveReport:
    """Solve u + R(u nu) = R mu through the truncation ladder.

    The solution is the last capped solve; when the data charges a
    divergence point of the potential, the ladder progressively discards
    that mass, so the limit solves the equation with the reduced data.
    """
    if g.domain != d:
        raise ValueError("grid was built for a different domain")
    km = kernel_matrix(g)
    b = apply_R(km, mu).values
    tv = total_variation(mu)
    threshold = _STOP_FRACTION * tv

    lv = _effective_levels(nu, levels)
    deltas = []
    ran = []
    stop_reason = "levels-exhausted"
    u_prev = None
    u = np.zeros(g.n_nodes)
    masses = np.zeros(g.n_nodes)
    for level in lv:
        u, masses = _solve_level(km, nu, level, b)
        ran.append(level)
        if u_prev is not None:
            delta = float(np.sum(np.abs(u - u_prev) * g.weights))
            deltas.append(delta)
            if delta < threshold:
                stop_reason = "delta-threshold"
                u_prev = u
                break
        u_prev = u

    mass_of_u = float(np.sum(np.abs(u) * masses))
    lin = float(
        np.max(np.abs(u + km.entries @ (masses / g.weights * u) - b))
    )
    scale = float(np.max(np.abs(b))) if b.size else 0.0
    residuals = {
        "linear_system": lin / scale if scale > 0 else lin,
        "nu_mass_ratio": mass_of_u / tv if tv > 0 else 0.0,
    }
    return SolveReport(
        GridFunction(g, u), tuple(ran), tuple(deltas), mass_of_u, residuals, stop_reason
    )


def solve_R_nu_eta(d: Domain, g: Grid, nu: PotentialMeasure, eta, levels=()) -> GridFunction:
    """Perturbed potential of a bounded function: data measure eta dx."""
    mu = MeasureSpec.from_density(d, eta)
    return solve_duality(d, g, nu, mu, levels).solution


def _probe_points(domain: Domain, count: int = 64) -> np.ndarray:
    """Fixed interior probe points away from the collocation nodes."""
    if domain.dimension == 1:
        a, b = domain.params
        return (a + (b - a) * (np.arange(count) + 0.5) / count).reshape(-1, 1)
    if domain.kind == "rectangle":
        a1, b1, a2, b2 = domain.params
        lo = np.array([a1, a2])
        span = np.array([b1 - a1, b2 - a2])
        margin = 0.06
    else:
        cx, cy, r = domain.params
        lo = np.array([cx - r, cy - r])
        span = np.array([2 * r, 2 * r])
        margin = 0.06
    n = 12
    xs = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    pts = lo + span * np.column_stack([X.ravel(), Y.ravel()])
    diam = float(np.max(span))
    keep = []
    for p in pts:
        if domain.contains(p) and domain.boundary_distance(p) > margin * diam:
            keep.append(p)
        if len(keep) == count:
            break
    return np.asarray(keep)


def resolvent_identity_residual(
    d: Domain, g: Grid, nu: PotentialMeasure, eta, levels=()
) -> float:
    """Relative L1 residual of w + R(w nu) = R eta at off-grid probes.

    ``w`` comes from the collocated solve at the final truncation level;
    everything else (probe locations, the interpolant of w, the potential
    and data integrals) is computed independently of the collocation, so
    the returned number measures how well the discrete solution satisfies
    the continuum identity rather than its own linear system.
    """
    lv = _effective_levels(nu, levels)
    w = solve_R_nu_eta(d, g, nu, eta, levels)
    nu_n = truncate(nu, lv[-1])
    base = nu_n.base

    probes = _probe_points(d)
    kernel = GreenKernel(d)
    singular_centers = [p for p, _beta, _c in nu.singular_points]

    num = 0.0
    den = 0.0
    for p in probes:
        kv = lambda pts: kernel.evaluate_many(p, pts)
        rhs = integrate_with_singularities(
            d, lambda pts: kv(pts) * np.asarray(eta(pts), dtype=float), [tuple(p)]
        )
        term = 0.0
        if base.density is not None:
            term += integrate_with_singularities(
                d,
                lambda pts: kv(pts) * interpolate(w, pts) * base.density_values(pts),
                singular_centers + [tuple(p)],
            )
        for site, weight in base.atoms:
            pa = np.asarray(site, dtype=float).reshape(1, -1)
            term += weight * float(kernel.evaluate_many(p, pa)[0]) * float(
                interpolate(w, pa)[0]
            )
        for curve in base.curves:
            cpts, ds = curve_quadrature(curve, curve.length / 4096)
            term += float(
                np.sum(
                    kernel.evaluate_many(p, cpts)
                    * curve.density_values(cpts)
                    * interpolate(w, cpts)
                    * ds
                )
            )
        lhs = float(interpolate(w, p.reshape(1, -1))[0])
        num += abs(lhs + term - rhs)
        den += abs(rhs)
    return num / den if den > 0 else num


def neumann_series_solve(
    d: Domain, g: Grid, nu: PotentialMeasure, mu: MeasureSpec, max_iter: int = 50, tol: float = 1e-10
) -> GridFunction:
    """Fixed-point iteration u <- R mu - R(u nu), radius-checked first.

    Runs 50 steps of power iteration on the lumped operator; an estimated
    spectral radius at or above 1 raises "series-divergent" and the caller
    should use the direct solve instead.
    """
    if g.domain != d:
        raise ValueError("grid was built for a different domain")
    km = kernel_matrix(g)
    cap = DEFAULT_TRUNCATION_LEVELS[-1] if nu.singular_points else np.inf
    masses = lump_measure(g, truncate(nu, cap).base)
    scale = masses / g.weights

    def apply_M(v):
        return km.entries @ (scale * v)

    v = g.weights.copy()
    radius = 0.0
    for _ in range(50):
        nv = apply_M(v)
        norm = float(np.sum(np.abs(nv)))
        base_norm = float(np.sum(np.abs(v)))
        if norm == 0.0:
            radius = 0.0
            break
        radius = norm / base_norm
        v = nv / norm
    if radius >= 1.0:
        raise ValueError(
            f"series-divergent: power-iteration radius estimate {radius:.3g}"
        )

    b = apply_R(km, mu).values
    u = b.copy()
    for _ in range(max_iter):
        nxt = b - apply_M(u)
        delta = float(np.sum(np.abs(nxt - u) * g.weights))
        u = nxt
        if delta < tol:
            break
    return GridFunction(g, u)
