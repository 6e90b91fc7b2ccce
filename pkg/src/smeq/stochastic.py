"""Killed-diffusion simulation and Feynman-Kac Monte Carlo estimators.

The walk is an Euler scheme for the diffusion generated by the full
Laplacian (increment variance 2*dt per coordinate), killed on leaving the
domain; in 1D an exponential bridge correction catches within-step boundary
crossings.  Along each path the additive functional of the potential
measure accumulates as a trapezoid of the density part plus thin-shell
occupation terms for atoms and curves, and the estimators average the
resulting path functionals:

* ``estimate_R``      E int f(X) dt                  (potential of f)
* ``estimate_R_nu``   E int exp(-A) f(X) dt          (perturbed potential)
* ``estimate_phi``    E int exp(-t) exp(-A) dt       (killing-time functional)
* ``revuz_check``     E int f(X) dA vs the kernel quadrature of the same
  quantity, the correspondence that pins the functional to its measure.

Estimates are reproducible bit for bit: the random stream is counter-based
per (seed, path index) and reductions run in fixed path order.  Several
estimators can share one path ensemble (``estimate_batch``), which is
exactly equivalent to separate runs with the same seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _mc_kernels as _mk
from .geometry import Domain, _as_points
from .measures import (
    MeasureSpec,
    PotentialMeasure,
    classify_singular_set,
    curve_quadrature,
    integrate_with_singularities,
)

__all__ = [
    "FunctionSpec",
    "PathConfig",
    "PCAFTrace",
    "MCEstimate",
    "PathFunctionals",
    "simulate_path",
    "estimate_R",
    "estimate_R_nu",
    "estimate_phi",
    "estimate_batch",
    "revuz_check",
    "truncation_monotonicity_check",
    "accumulate_functional",
]


# ---------------------------------------------------------------------------
# Test functions usable by both pipelines
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FunctionSpec:
    """A bounded test function in a compiled-friendly family.

    The Monte Carlo kernels evaluate the same (kind, params) encoding that
    ``evaluate`` computes in numpy, so a FunctionSpec can be paired across
    the stochastic and deterministic pipelines without code duplication.
    """

    kind: int
    params: tuple[float, ...]
    label: str

    def __post_init__(self):
        p = tuple(float(v) for v in self.params)
        p = p + (0.0,) * (6 - len(p))
        object.__setattr__(self, "params", p)

    @classmethod
    def constant(cls, c: float) -> "FunctionSpec":
        return cls(0, (c,), f"const[{c:g}]")

    @classmethod
    def coordinate(cls, axis: int = 0, shift: float = 0.0, scale: float = 1.0) -> "FunctionSpec":
        return cls(1, (float(axis), shift, scale), f"coord[{axis}]")

    @classmethod
    def parabola(cls, domain: Domain, amp: float = 1.0) -> "FunctionSpec":
        """Product profile vanishing on the bounding box of the domain."""
        if domain.kind == "interval":
            a, b = domain.params
            return cls(2, (a, b, 0.0, 1.0, amp), "parabola")
        if domain.kind == "rectangle":
            a1, b1, a2, b2 = domain.params
            return cls(2, (a1, b1, a2, b2, amp), "parabola")
        cx, cy, r = domain.params
        return cls(4, (cx, cy, r, amp), "radial-parabola")

    @classmethod
    def bump(cls, center, sigma: float, amp: float = 1.0) -> "FunctionSpec":
        c = np.atleast_1d(np.asarray(center, dtype=float))
        cx = float(c[0])
        cy = float(c[1]) if c.size > 1 else 0.0
        return cls(3, (cx, cy, sigma, amp), f"bump[{cx:g}]")

    def evaluate(self, pts) -> np.ndarray:
        P = np.asarray(pts, dtype=float)
        if P.ndim == 1:
            P = P.reshape(-1, 1)
        x = P[:, 0]
        y = P[:, 1] if P.shape[1] > 1 else np.zeros_like(x)
        k = self.kind
        p = self.params
        if k == 0:
            return np.full(x.shape, p[0])
        if k == 1:
            c = x if p[0] == 0.0 else y
            return p[1] + p[2] * c
        if k == 2:
            v = p[4] * (x - p[0]) * (p[1] - x)
            if P.shape[1] > 1:
                v = v * (y - p[2]) * (p[3] - y)
            return v
        if k == 3:
            dx = x - p[0]
            dy = y - p[1] if P.shape[1] > 1 else 0.0
            return p[3] * np.exp(-(dx * dx + dy * dy) / (2.0 * p[2] * p[2]))
        dx = x - p[0]
        dy = y - p[1] if P.shape[1] > 1 else 0.0
        return p[3] * np.maximum(p[2] * p[2] - dx * dx - dy * dy, 0.0)

    def __call__(self, pts) -> np.ndarray:
        return self.evaluate(pts)


# ---------------------------------------------------------------------------
# Configuration and result types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathConfig:
    """Simulation parameters for one path ensemble."""

    dt: float
    seed: int
    n_paths: int = 10_000
    max_time: float = 5.0
    shell_epsilon: Optional[float] = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_paths < 1:
            raise ValueError(f"n_paths must be at least 1, got {self.n_paths}")
        if not self.max_time > 0:
            raise ValueError(f"max_time must be positive, got {self.max_time}")
        eps = self.shell_epsilon
        floor = math.sqrt(self.dt)
        if eps is None:
            eps = 2.0 * floor
            object.__setattr__(self, "shell_epsilon", eps)
        if eps < floor - 1e-15:
            raise ValueError(
                f"shell_epsilon {eps} is below the accuracy floor sqrt(dt) = {floor}"
            )

    @property
    def max_steps(self) -> int:
        return int(math.ceil(self.max_time / self.dt))


@dataclass(frozen=True)
class PCAFTrace:
    """One simulated path: positions, functional values, exit data."""

    positions: np.ndarray
    A_values: np.ndarray
    exit_time: float
    blew_up: bool

    def __post_init__(self):
        self.positions.setflags(write=False)
        self.A_values.setflags(write=False)


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    n_paths: int


def _reduce(samples: np.ndarray, n_paths: int) -> MCEstimate:
    mean = float(np.mean(samples))
    if n_paths > 1:
        stderr = float(np.std(samples, ddof=1) / math.sqrt(n_paths))
    else:
        stderr = 0.0
    return MCEstimate(mean, stderr, n_paths)


@dataclass(frozen=True)
class PathFunctionals:
    """Raw per-path functionals of one shared ensemble.

    Rows are paths in index order.  ``I_disc`` has one slice per truncation
    level (the last level is the full functional).
    """

    fs: tuple
    levels: tuple
    occ_targets: tuple
    I_time: np.ndarray
    I_disc: np.ndarray
    I_dA: np.ndarray
    I_occ: np.ndarray
    I_phi: np.ndarray
    exit_time: np.ndarray
    blew_up: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.I_time.shape[0]

    def R(self, f_index: int = 0) -> MCEstimate:
        return _reduce(self.I_time[:, f_index], self.n_paths)

    def R_nu(self, f_index: int = 0, level_index: int = -1) -> MCEstimate:
        return _reduce(self.I_disc[:, f_index, level_index], self.n_paths)

    def f_dA(self, f_index: int = 0) -> MCEstimate:
        return _reduce(self.I_dA[:, f_index], self.n_paths)

    def green(self, target_index: int = 0) -> MCEstimate:
        """Killed-kernel value at an occupation target (discounted local time)."""
        return _reduce(self.I_occ[:, target_index], self.n_paths)

    def phi(self) -> MCEstimate:
        return _reduce(self.I_phi, self.n_paths)


# ---------------------------------------------------------------------------
# Encodings
# ---------------------------------------------------------------------------

_DOM_CODES = {"interval": 0, "disk": 1, "rectangle": 2}


def _encode_domain(domain: Domain):
    code = _DOM_CODES[domain.kind]
    params = np.zeros(4)
    params[: len(domain.params)] = domain.params
    return code, params


def _encode_nu(nu: Optional[PotentialMeasure]):
    """Flatten a potential measure into kernel arrays.

    The density must be in structured terms form (the Monte Carlo contract:
    singular densities are evaluated exactly from their declared family),
    and curve components must carry constant densities.
    """
    if nu is None:
        base = None
        cap = math.inf
    else:
        base = nu.base
        cap = base.cap
    if base is None or base.density is None:
        term_coef = np.zeros(0)
        term_off = np.zeros(1, dtype=np.int64)
        fac_pt = np.zeros((0, 2))
        fac_beta = np.zeros(0)
    else:
        if base.terms is None:
            raise ValueError(
                "Monte Carlo requires the potential density in declared "
                "power-product form, not a bare callable"
            )
        coefs = []
        offs = [0]
        pts = []
        betas = []
        for coef, factors in base.terms:
            coefs.append(coef)
            for point, beta in factors:
                p2 = (point[0], point[1] if len(point) > 1 else 0.0)
                pts.append(p2)
                betas.append(beta)
            offs.append(len(betas))
        term_coef = np.asarray(coefs)
        term_off = np.asarray(offs, dtype=np.int64)
        fac_pt = np.asarray(pts).reshape(-1, 2)
        fac_beta = np.asarray(betas)
    kinds = []
    params = []
    gs = []
    if base is not None:
        for point, weight in base.atoms:
            kinds.append(0)
            params.append((point[0], point[1] if len(point) > 1 else 0.0, 0.0, 0.0))
            gs.append(weight)
        for curve in base.curves:
            if callable(curve.density):
                raise ValueError(
                    "Monte Carlo shell terms require constant curve densities"
                )
            if curve.kind == "circle":
                kinds.append(1)
                params.append(curve.params + (0.0,))
            else:
                kinds.append(2)
                params.append(curve.params)
            gs.append(float(curve.density))
    shell_kind = np.asarray(kinds, dtype=np.int64).reshape(-1)
    shell_params = np.asarray(params).reshape(-1, 4) if params else np.zeros((0, 4))
    shell_g = np.asarray(gs).reshape(-1)
    return term_coef, term_off, fac_pt, fac_beta, shell_kind, shell_params, shell_g, cap


def _encode_fs(fs: Sequence[FunctionSpec]):
    f_kind = np.asarray([f.kind for f in fs], dtype=np.int64)
    f_params = np.asarray([f.params for f in fs], dtype=float).reshape(len(fs), 6)
    return f_kind, f_params


def _start_point(domain: Domain, x0) -> tuple[float, float]:
    p = _as_points(x0, domain.dimension)[0]
    if not domain.contains(p):
        raise ValueError(f"x0 not interior: {tuple(p)} in {domain.kind}")
    return float(p[0]), float(p[1]) if p.size > 1 else 0.0


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

def estimate_batch(
    domain: Domain,
    x0,
    fs: Sequence[FunctionSpec],
    nu: Optional[PotentialMeasure],
    cfg: PathConfig,
    levels: Sequence[float] = (),
    occ_targets: Sequence = (),
) -> PathFunctionals:
    """Run one path ensemble and collect every requested functional.

    ``levels`` lists truncation caps for the density part of the potential;
    the full (uncapped beyond the measure's own cap) functional is always
    appended as the last level.  ``occ_targets`` lists interior points (1D
    only) whose discounted bridge local times estimate the killed kernel
    against a point mass of data.  Sharing the ensemble across integrands
    is bit-identical to separate runs with the same seed, because
    trajectories and the functional depend only on (seed, potential), not
    on the integrands.
    """
    px, py = _start_point(domain, x0)
    code, dparams = _encode_domain(domain)
    (term_coef, term_off, fac_pt, fac_beta,
     shell_kind, shell_params, shell_g, cap) = _encode_nu(nu)
    lv = [float(l) for l in levels]
    if any(b <= a for a, b in zip(lv, lv[1:])):
        raise ValueError("levels must be strictly increasing")
    lv.append(cap)
    levels_arr = np.asarray(lv)
    f_kind, f_params = _encode_fs(fs)
    occ = tuple(tuple(np.atleast_1d(np.asarray(t, dtype=float))) for t in occ_targets)
    if occ and domain.dimension != 1:
        raise ValueError("occupation targets require a one-dimensional domain")
    occ_pt = np.zeros((len(occ), 2))
    for j, t in enumerate(occ):
        occ_pt[j, 0] = t[0]
    out = _mk.run_paths(
        code,
        dparams,
        px,
        py,
        term_coef,
        term_off,
        fac_pt,
        fac_beta,
        shell_kind,
        shell_params,
        shell_g,
        occ_pt,
        levels_arr,
        f_kind,
        f_params,
        float(cfg.dt),
        float(cfg.shell_epsilon),
        np.int64(cfg.max_steps),
        np.uint64(cfg.seed),
        np.int64(cfg.n_paths),
    )
    I_time, I_disc, I_dA, I_occ, I_phi, exit_time, blew = out
    return PathFunctionals(
        tuple(fs), tuple(lv), occ, I_time, I_disc, I_dA, I_occ, I_phi,
        exit_time, blew,
    )


def estimate_R(domain: Domain, x0, f: FunctionSpec, cfg: PathConfig) -> MCEstimate:
    """Monte Carlo potential of a bounded function at a point."""
    ens = estimate_batch(domain, x0, [f], None, cfg)
    return ens.R(0)


def estimate_R_nu(
    domain: Domain, x0, f: FunctionSpec, nu: Optional[PotentialMeasure], cfg: PathConfig
) -> MCEstimate:
    """Monte Carlo perturbed potential: E int exp(-A) f(X) dt."""
    ens = estimate_batch(domain, x0, [f], nu, cfg)
    return ens.R_nu(0, -1)


def estimate_green(
    domain: Domain, x0, targets, nu: Optional[PotentialMeasure], cfg: PathConfig
) -> list[MCEstimate]:
    """Killed-kernel column values by discounted bridge local time (1D).

    Returns one estimate of the perturbed kernel between x0 and each
    target, so a point mass of data at a target is handled without any
    shell-width bias.
    """
    ens = estimate_batch(
        domain, x0, [FunctionSpec.constant(1.0)], nu, cfg, occ_targets=targets
    )
    return [ens.green(j) for j in range(len(ens.occ_targets))]


def estimate_phi(
    domain: Domain, x0, nu: Optional[PotentialMeasure], cfg: PathConfig
) -> MCEstimate:
    """Monte Carlo killing-time functional: E int exp(-t) exp(-A) dt."""
    ens = estimate_batch(domain, x0, [FunctionSpec.constant(1.0)], nu, cfg)
    return ens.phi()


def simulate_path(
    domain: Domain, x0, nu: Optional[PotentialMeasure], cfg: PathConfig, path_index: int = 0
) -> PCAFTrace:
    """Simulate one path and return its trace.

    ``path_index`` selects the path's stream within the seed's ensemble, so
    trace k here is the same trajectory as path k of the estimators.
    """
    px, py = _start_point(domain, x0)
    code, dparams = _encode_domain(domain)
    (term_coef, term_off, fac_pt, fac_beta,
     shell_kind, shell_params, shell_g, cap) = _encode_nu(nu)
    positions, A_values, n_steps, exit_time, blew = _mk.run_trace(
        code,
        dparams,
        px,
        py,
        term_coef,
        term_off,
        fac_pt,
        fac_beta,
        shell_kind,
        shell_params,
        shell_g,
        float(cap),
        float(cfg.dt),
        float(cfg.shell_epsilon),
        np.int64(cfg.max_steps),
        np.uint64(cfg.seed),
        np.int64(path_index),
    )
    dim = domain.dimension
    pos = positions[: n_steps + 1, :dim].copy()
    return PCAFTrace(pos, A_values[: n_steps + 1].copy(), float(exit_time), bool(blew))


def revuz_check(
    domain: Domain,
    x0,
    f: FunctionSpec,
    nu: PotentialMeasure,
    cfg: PathConfig,
    kernel,
) -> tuple[MCEstimate, float]:
    """Compare E int f(X) dA against the kernel quadrature of G f d(nu).

    The start point must not be a divergence point of the potential; there
    the pairing is not defined.
    """
    c = classify_singular_set(nu, kernel)
    p = _as_points(x0, domain.dimension)[0]
    if c.in_n_nu(p):
        raise ValueError(
            "revuz-undefined-at-exceptional-point: start point carries a "
            "divergent potential integral"
        )
    ens = estimate_batch(domain, x0, [f], nu, cfg)
    mc = ens.f_dA(0)

    exact = 0.0
    if nu.base.density is not None:

        def integrand(pts):
            g = kernel.evaluate_many(p, pts)
            return g * nu.base.density_values(pts) * f.evaluate(pts)

        centers = list(nu.base.density_singularities)
        centers.append(tuple(p))
        exact += integrate_with_singularities(domain, integrand, centers)
    for point, weight in nu.base.atoms:
        pa = np.asarray(point, dtype=float)
        exact += weight * float(kernel.evaluate_many(pa, p.reshape(1, -1))[0]) * float(
            f.evaluate(pa.reshape(1, -1))[0]
        )
    for curve in nu.base.curves:
        pts, ds = curve_quadrature(curve, curve.length / 4096)
        g = curve.density_values(pts)
        kv = kernel.evaluate_many(p, pts)
        exact += float(np.sum(kv * g * f.evaluate(pts) * ds))
    return mc, float(exact)


def truncation_monotonicity_check(
    domain: Domain,
    x0,
    nu: PotentialMeasure,
    levels: Sequence[float],
    cfg: PathConfig,
) -> list[MCEstimate]:
    """Estimates of the perturbed potential of 1 under rising truncation caps.

    All levels share one path ensemble, so the sequence is nonincreasing
    pathwise, not only in mean.
    """
    lv = [float(l) for l in levels]
    if any(b <= a for a, b in zip(lv, lv[1:])) or not lv:
        raise ValueError("levels must be nonempty and strictly increasing")
    ens = estimate_batch(
        domain, x0, [FunctionSpec.constant(1.0)], nu, cfg, levels=lv
    )
    return [ens.R_nu(0, i) for i in range(len(lv))]


def accumulate_functional(
    positions: np.ndarray, dt: float, nu: Optional[PotentialMeasure], eps: float
) -> np.ndarray:
    """Recompute the additive functional along a recorded trajectory.

    Pure-Python mirror of the kernel accumulation (same trapezoid, same
    order of operations), used to test additivity under time shifts: the
    functional of a path segment equals the difference of the full
    functional's values.
    """
    (term_coef, term_off, fac_pt, fac_beta,
     shell_kind, shell_params, shell_g, cap) = _encode_nu(nu)

    def density(x, y, dim):
        total = 0.0
        for t in range(term_coef.shape[0]):
            v = term_coef[t]
            dead = False
            for j in range(term_off[t], term_off[t + 1]):
                dx = x - fac_pt[j, 0]
                d = abs(dx) if dim == 1 else math.hypot(dx, y - fac_pt[j, 1])
                if d <= 0.0:
                    if fac_beta[j] > 0.0:
                        v = _mk.V_CAP
                    elif fac_beta[j] < 0.0:
                        v = 0.0
                    dead = True
                    break
                v = v * d ** (-fac_beta[j])
            total += v
            if dead:
                continue
        return min(total, _mk.V_CAP)

    def shell(x, y, dim):
        s = 0.0
        for j in range(shell_kind.shape[0]):
            k = shell_kind[j]
            if k == 0:
                if dim == 1:
                    continue
                d = math.hypot(x - shell_params[j, 0], y - shell_params[j, 1])
            elif k == 1:
                d = abs(
                    math.hypot(x - shell_params[j, 0], y - shell_params[j, 1])
                    - shell_params[j, 2]
                )
            else:
                px, py, qx, qy = shell_params[j]
                ex, ey = qx - px, qy - py
                L2 = ex * ex + ey * ey
                t = min(max(((x - px) * ex + (y - py) * ey) / L2, 0.0), 1.0)
                d = math.hypot(x - (px + t * ex), y - (py + t * ey))
            if d < eps:
                s += shell_g[j] / (2.0 * eps)
        return s

    P = np.asarray(positions, dtype=float)
    dim = P.shape[1]
    out = np.zeros(P.shape[0])
    sqdt = np.sqrt(dt)
    x, y = P[0, 0], P[0, 1] if dim == 2 else 0.0
    V_old = density(x, y, dim)
    s_old = shell(x, y, dim)
    A = 0.0
    for k in range(1, P.shape[0]):
        xp = x
        x, y = P[k, 0], P[k, 1] if dim == 2 else 0.0
        V_new = density(x, y, dim)
        s_new = shell(x, y, dim)
        dL = 0.0
        if dim == 1:
            dL = _mk._atom_local_time(
                xp, x, shell_kind, shell_params, shell_g, dt, sqdt
            )
        A += 0.5 * dt * (min(V_old, cap) + min(V_new, cap) + s_old + s_new) + dL
        out[k] = A
        V_old, s_old = V_new, s_new
    return out
