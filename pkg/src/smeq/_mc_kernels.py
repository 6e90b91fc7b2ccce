"""Compiled path-simulation kernels.

The random stream is counter-based: each path derives a Philox4x32-10 key
from (seed, path index) through splitmix64, and each step consumes exactly
one Philox block addressed by the step index.  Path i therefore produces
the same numbers no matter how paths are scheduled, and a pure-Python
mirror of the generator in the test suite checks the kernels word for word.

One fused kernel walks an ensemble and accumulates every per-path integral
the estimators need: time integrals of the test functions, discounted
integrals weighted by exp(-A) at several truncation caps, integrals against
dA, discounted local times at target points, and the killing-time
functional.  The additive functional A uses a per-step trapezoid of the
density part (capped per truncation level) plus thin-shell occupation terms
for curves; a point mass of the potential in one dimension instead
accumulates the exact expected local time of the Brownian bridge spanning
each step, which removes the shell-width bias entirely.

No fastmath: accumulation order is fixed and IEEE-strict so results are
bit-reproducible.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit
from numba import uint32, uint64

# Philox4x32 multipliers and Weyl key increments
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint32(0x9E3779B9)
_W1 = np.uint32(0xBB67AE85)

_TWO_PI = 6.283185307179586476925287
_INV_2_32 = 1.0 / 4294967296.0

# per-step density cap and additive-functional overflow threshold
V_CAP = 1.0e12
BLOWUP_THRESHOLD = 700.0


@njit(cache=True, inline="always")
def _splitmix64(z):
    z = uint64(z + uint64(0x9E3779B97F4A7C15))
    z = uint64((z ^ (z >> uint64(30))) * uint64(0xBF58476D1CE4E5B9))
    z = uint64((z ^ (z >> uint64(27))) * uint64(0x94D049BB133111EB))
    return uint64(z ^ (z >> uint64(31)))


@njit(cache=True, inline="always")
def _path_key(seed, path_index):
    k = _splitmix64(_splitmix64(uint64(seed)) ^ uint64(path_index))
    return uint32(k & uint64(0xFFFFFFFF)), uint32(k >> uint64(32))


@njit(cache=True, inline="always")
def _philox4(step, k0, k1):
    c0 = uint32(step & uint64(0xFFFFFFFF))
    c1 = uint32(step >> uint64(32))
    c2 = uint32(0)
    c3 = uint32(0)
    for _ in range(10):
        p0 = uint64(_M0) * uint64(c0)
        p1 = uint64(_M1) * uint64(c2)
        hi0 = uint32(p0 >> uint64(32))
        lo0 = uint32(p0 & uint64(0xFFFFFFFF))
        hi1 = uint32(p1 >> uint64(32))
        lo1 = uint32(p1 & uint64(0xFFFFFFFF))
        c0 = uint32(hi1 ^ c1 ^ k0)
        c1 = lo1
        c2 = uint32(hi0 ^ c3 ^ k1)
        c3 = lo0
        k0 = uint32(k0 + _W0)
        k1 = uint32(k1 + _W1)
    return c0, c1, c2, c3


@njit(cache=True, inline="always")
def _uniform(word):
    return (np.float64(word) + 0.5) * _INV_2_32


@njit(cache=True, inline="always")
def _gauss_pair(u1, u2):
    r = np.sqrt(-2.0 * np.log(u1))
    return r * np.cos(_TWO_PI * u2), r * np.sin(_TWO_PI * u2)


@njit(cache=True, inline="always")
def _erfcx(z):
    """Scaled complementary error function exp(z^2) erfc(z) for z >= 0."""
    if z < 10.0:
        return np.exp(z * z) * math.erfc(z)
    iz = 1.0 / z
    iz2 = iz * iz
    s = 1.0 - 0.5 * iz2 + 0.75 * iz2 * iz2 - 1.875 * iz2 * iz2 * iz2
    return s * iz * 0.5641895835477563  # 1/sqrt(pi)


@njit(cache=True, inline="always")
def _bridge_local_time(x, y, p, dt, sqdt):
    """Expected local time at level p of the step bridge from x to y.

    The walk has generator the full Laplacian (variance 2t), for which
    E[L^p | X_0=x, X_dt=y] = (sqrt(pi dt)/2) erfcx((|p-x|+|p-y|)/(2 sqrt(dt)))
    times exp(-(p-x)(p-y)/dt) when x and y lie on the same side of p.
    Far steps return exactly 0: the skipped value is below one ulp of any
    accumulated functional.
    """
    q = (p - x) * (p - y)
    if q > 0.0:
        if q > 45.0 * dt:
            return 0.0
        w = np.exp(-q / dt)
    else:
        w = 1.0
    d1 = np.abs(p - x)
    d2 = np.abs(p - y)
    z = (d1 + d2) / (2.0 * sqdt)
    return 0.8862269254527580 * sqdt * _erfcx(z) * w  # sqrt(pi)/2


@njit(cache=True, inline="always")
def _atom_local_time(x, xn, shell_kind, shell_params, shell_g, dt, sqdt):
    """Summed weighted bridge local time over the potential's 1D point masses."""
    dL = 0.0
    for j in range(shell_kind.shape[0]):
        if shell_kind[j] == 0:
            dL += shell_g[j] * _bridge_local_time(
                x, xn, shell_params[j, 0], dt, sqdt
            )
    return dL


@njit(cache=True, inline="always")
def _occ_local_time(x, xn, occ_pt, dt, sqdt, out):
    """Bridge local time of the step at each occupation target (1D)."""
    for j in range(occ_pt.shape[0]):
        out[j] = _bridge_local_time(x, xn, occ_pt[j, 0], dt, sqdt)


@njit(cache=True, inline="always")
def _inside(dom_kind, dp, x, y):
    if dom_kind == 0:
        return dp[0] < x < dp[1]
    if dom_kind == 1:
        dx = x - dp[0]
        dy = y - dp[1]
        return dx * dx + dy * dy < dp[2] * dp[2]
    return dp[0] < x < dp[1] and dp[2] < y < dp[3]


@njit(cache=True, inline="always")
def _density_raw(x, y, dim, term_coef, term_off, fac_pt, fac_beta):
    """Uncapped density value of the potential at a point, clamped at V_CAP."""
    total = 0.0
    for t in range(term_coef.shape[0]):
        v = term_coef[t]
        for j in range(term_off[t], term_off[t + 1]):
            dx = x - fac_pt[j, 0]
            if dim == 1:
                d = np.abs(dx)
            else:
                dy = y - fac_pt[j, 1]
                d = np.sqrt(dx * dx + dy * dy)
            if d <= 0.0:
                # exactly on a factor point: cap for a pole, zero for a root
                if fac_beta[j] > 0.0:
                    v = V_CAP
                elif fac_beta[j] < 0.0:
                    v = 0.0
                break
            v = v * d ** (-fac_beta[j])
        total += v
    if total > V_CAP:
        total = V_CAP
    return total


@njit(cache=True, inline="always")
def _shell_density(x, y, dim, shell_kind, shell_params, shell_g, eps):
    """Occupation density: sum of g_j/(2 eps) over components within eps.

    One-dimensional point masses are excluded: they accumulate through the
    exact bridge local time instead.
    """
    s = 0.0
    for j in range(shell_kind.shape[0]):
        k = shell_kind[j]
        if k == 0:
            if dim == 1:
                continue
            d = np.sqrt(
                (x - shell_params[j, 0]) ** 2 + (y - shell_params[j, 1]) ** 2
            )
        elif k == 1:
            d = np.abs(
                np.sqrt((x - shell_params[j, 0]) ** 2 + (y - shell_params[j, 1]) ** 2)
                - shell_params[j, 2]
            )
        else:
            px = shell_params[j, 0]
            py = shell_params[j, 1]
            qx = shell_params[j, 2]
            qy = shell_params[j, 3]
            ex = qx - px
            ey = qy - py
            L2 = ex * ex + ey * ey
            t = ((x - px) * ex + (y - py) * ey) / L2
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            d = np.sqrt((x - (px + t * ex)) ** 2 + (y - (py + t * ey)) ** 2)
        if d < eps:
            s += shell_g[j] / (2.0 * eps)
    return s


@njit(cache=True, inline="always")
def _test_function(x, y, dim, kind, params):
    if kind == 0:  # constant
        return params[0]
    if kind == 1:  # affine in one coordinate
        c = x if params[0] == 0.0 else y
        return params[1] + params[2] * c
    if kind == 2:  # product parabola: prod over axes of (c-lo)(hi-c), scaled
        v = params[4] * (x - params[0]) * (params[1] - x)
        if dim == 2:
            v *= (y - params[2]) * (params[3] - y)
        return v
    if kind == 3:  # gaussian bump
        dx = x - params[0]
        dy = y - params[1] if dim == 2 else 0.0
        return params[3] * np.exp(-(dx * dx + dy * dy) / (2.0 * params[2] * params[2]))
    # kind == 4: radial parabola amp * max(0, r^2 - |x-c|^2)
    dx = x - params[0]
    dy = y - params[1] if dim == 2 else 0.0
    v = params[2] * params[2] - dx * dx - dy * dy
    return params[3] * v if v > 0.0 else 0.0


@njit(cache=True)
def run_paths(
    dom_kind,
    dom_params,
    x0,
    y0,
    term_coef,
    term_off,
    fac_pt,
    fac_beta,
    shell_kind,
    shell_params,
    shell_g,
    occ_pt,
    levels,
    f_kind,
    f_params,
    dt,
    eps,
    max_steps,
    seed,
    n_paths,
):
    """Walk an ensemble and return per-path functionals.

    Returns (I_time, I_disc, I_dA, I_occ, I_phi, exit_time, blew) where
    I_time[p, f] = int f(X) dt, I_disc[p, f, l] = int exp(-A_l) f(X) dt for
    truncation cap levels[l], I_dA[p, f] = int f(X) dA (full functional),
    I_occ[p, j] = int exp(-A_full) dL^{occ_pt[j]} (discounted local time at
    the j-th target, 1D only), I_phi[p] = int exp(-t) exp(-A_full) dt, and
    blew flags A_full > 700.
    """
    dim = 1 if dom_kind == 0 else 2
    nf = f_kind.shape[0]
    nl = levels.shape[0]
    no = occ_pt.shape[0]
    sdt = np.sqrt(2.0 * dt)
    sqdt = np.sqrt(dt)

    I_time = np.zeros((n_paths, nf))
    I_disc = np.zeros((n_paths, nf, nl))
    I_dA = np.zeros((n_paths, nf))
    I_occ = np.zeros((n_paths, no))
    I_phi = np.zeros(n_paths)
    exit_time = np.full(n_paths, dt * max_steps)
    blew = np.zeros(n_paths, dtype=np.uint8)

    f_old = np.empty(nf)
    f_new = np.empty(nf)
    A = np.empty(nl)
    E_old = np.empty(nl)
    occ_dL = np.empty(no) if no > 0 else np.empty(1)

    for p in range(n_paths):
        k0, k1 = _path_key(seed, p)
        x = x0
        y = y0
        V_old = _density_raw(x, y, dim, term_coef, term_off, fac_pt, fac_beta)
        s_old = _shell_density(x, y, dim, shell_kind, shell_params, shell_g, eps)
        for f in range(nf):
            f_old[f] = _test_function(x, y, dim, f_kind[f], f_params[f])
        for l in range(nl):
            A[l] = 0.0
            E_old[l] = 1.0
        t = 0.0
        for step in range(max_steps):
            w0, w1, w2, w3 = _philox4(uint64(step), k0, k1)
            u1 = _uniform(w0)
            u2 = _uniform(w1)
            z0, z1 = _gauss_pair(u1, u2)
            if dim == 1:
                xn = x + sdt * z0
                yn = 0.0
            else:
                xn = x + sdt * z0
                yn = y + sdt * z1
            killed = not _inside(dom_kind, dom_params, xn, yn)
            if not killed and dim == 1:
                # exponential bridge: within-step boundary crossing
                a = dom_params[0]
                b = dom_params[1]
                qa = (x - a) * (xn - a)
                qb = (b - x) * (b - xn)
                # skipped exponentials are below the smallest uniform draw,
                # so the kill decision is unchanged
                pa = np.exp(-qa / dt) if qa < 45.0 * dt else 0.0
                pb = np.exp(-qb / dt) if qb < 45.0 * dt else 0.0
                pc = pa + pb
                if pc > 1.0:
                    pc = 1.0
                if _uniform(w2) < pc:
                    killed = True
            if killed:
                # the path dies inside the step: half a trapezoid panel,
                # and half the bridge terms of the interrupted step
                half = 0.5 * dt
                dL = 0.0
                if dim == 1:
                    dL = _atom_local_time(
                        x, xn, shell_kind, shell_params, shell_g, dt, sqdt
                    )
                D_old_full = min(V_old, levels[nl - 1]) + s_old
                for f in range(nf):
                    I_time[p, f] += half * f_old[f]
                    I_dA[p, f] += half * f_old[f] * D_old_full + 0.5 * dL * f_old[f]
                    for l in range(nl):
                        I_disc[p, f, l] += half * E_old[l] * f_old[f]
                if no > 0 and dim == 1:
                    _occ_local_time(x, xn, occ_pt, dt, sqdt, occ_dL)
                    for j in range(no):
                        I_occ[p, j] += 0.5 * occ_dL[j] * E_old[nl - 1]
                I_phi[p] += half * np.exp(-t) * E_old[nl - 1]
                exit_time[p] = t + half
                break
            V_new = _density_raw(xn, yn, dim, term_coef, term_off, fac_pt, fac_beta)
            s_new = _shell_density(xn, yn, dim, shell_kind, shell_params, shell_g, eps)
            for f in range(nf):
                f_new[f] = _test_function(xn, yn, dim, f_kind[f], f_params[f])
            tn = t + dt
            dL = 0.0
            if dim == 1:
                dL = _atom_local_time(
                    x, xn, shell_kind, shell_params, shell_g, dt, sqdt
                )
            D_old_full = min(V_old, levels[nl - 1]) + s_old
            D_new_full = min(V_new, levels[nl - 1]) + s_new
            for f in range(nf):
                I_time[p, f] += 0.5 * dt * (f_old[f] + f_new[f])
                I_dA[p, f] += 0.5 * dt * (
                    f_old[f] * D_old_full + f_new[f] * D_new_full
                ) + 0.5 * dL * (f_old[f] + f_new[f])
            phi_old = np.exp(-t) * E_old[nl - 1]
            E_last_old = E_old[nl - 1]
            for l in range(nl):
                dA = 0.5 * dt * (
                    min(V_old, levels[l]) + min(V_new, levels[l]) + s_old + s_new
                ) + dL
                A[l] += dA
                E_new = np.exp(-A[l]) if A[l] <= BLOWUP_THRESHOLD else 0.0
                for f in range(nf):
                    I_disc[p, f, l] += 0.5 * dt * (
                        E_old[l] * f_old[f] + E_new * f_new[f]
                    )
                E_old[l] = E_new
            if A[nl - 1] > BLOWUP_THRESHOLD:
                blew[p] = 1
            if no > 0 and dim == 1:
                _occ_local_time(x, xn, occ_pt, dt, sqdt, occ_dL)
                for j in range(no):
                    I_occ[p, j] += 0.5 * occ_dL[j] * (E_last_old + E_old[nl - 1])
            I_phi[p] += 0.5 * dt * (phi_old + np.exp(-tn) * E_old[nl - 1])
            x = xn
            y = yn
            V_old = V_new
            s_old = s_new
            for f in range(nf):
                f_old[f] = f_new[f]
            t = tn
    return I_time, I_disc, I_dA, I_occ, I_phi, exit_time, blew


@njit(cache=True)
def run_trace(
    dom_kind,
    dom_params,
    x0,
    y0,
    term_coef,
    term_off,
    fac_pt,
    fac_beta,
    shell_kind,
    shell_params,
    shell_g,
    cap,
    dt,
    eps,
    max_steps,
    seed,
    path_index,
):
    """Walk one path and record positions and the additive functional.

    Returns (positions, A_values, n_steps, exit_time, blew): positions has
    n_steps+1 valid rows; A_values[k] is A at step time k*dt, nondecreasing
    and starting at 0.
    """
    dim = 1 if dom_kind == 0 else 2
    sdt = np.sqrt(2.0 * dt)
    sqdt = np.sqrt(dt)
    k0, k1 = _path_key(seed, path_index)

    positions = np.zeros((max_steps + 1, 2))
    A_values = np.zeros(max_steps + 1)
    x = x0
    y = y0
    positions[0, 0] = x
    positions[0, 1] = y
    V_old = _density_raw(x, y, dim, term_coef, term_off, fac_pt, fac_beta)
    s_old = _shell_density(x, y, dim, shell_kind, shell_params, shell_g, eps)
    A = 0.0
    blew = False
    n_steps = 0
    exit_time = dt * max_steps
    t = 0.0
    for step in range(max_steps):
        w0, w1, w2, w3 = _philox4(uint64(step), k0, k1)
        u1 = _uniform(w0)
        u2 = _uniform(w1)
        z0, z1 = _gauss_pair(u1, u2)
        if dim == 1:
            xn = x + sdt * z0
            yn = 0.0
        else:
            xn = x + sdt * z0
            yn = y + sdt * z1
        killed = not _inside(dom_kind, dom_params, xn, yn)
        if not killed and dim == 1:
            a = dom_params[0]
            b = dom_params[1]
            qa = (x - a) * (xn - a)
            qb = (b - x) * (b - xn)
            # skipped exponentials are below the smallest uniform draw,
            # so the kill decision is unchanged
            pa = np.exp(-qa / dt) if qa < 45.0 * dt else 0.0
            pb = np.exp(-qb / dt) if qb < 45.0 * dt else 0.0
            pc = pa + pb
            if pc > 1.0:
                pc = 1.0
            if _uniform(w2) < pc:
                killed = True
        if killed:
            exit_time = t + 0.5 * dt
            break
        V_new = _density_raw(xn, yn, dim, term_coef, term_off, fac_pt, fac_beta)
        s_new = _shell_density(xn, yn, dim, shell_kind, shell_params, shell_g, eps)
        dL = 0.0
        if dim == 1:
            dL = _atom_local_time(x, xn, shell_kind, shell_params, shell_g, dt, sqdt)
        A += 0.5 * dt * (min(V_old, cap) + min(V_new, cap) + s_old + s_new) + dL
        if A > BLOWUP_THRESHOLD:
            blew = True
        n_steps = step + 1
        positions[n_steps, 0] = xn
        positions[n_steps, 1] = yn
        A_values[n_steps] = A
        x = xn
        y = yn
        V_old = V_new
        s_old = s_new
        t += dt
    return positions, A_values, n_steps, exit_time, blew
