"""Monte Carlo kernels against a pure-python mirror and closed forms."""

import math

import numpy as np
import pytest

import reference as ref
from smeq import (
    Domain,
    FunctionSpec,
    GreenKernel,
    MeasureSpec,
    PathConfig,
    PotentialMeasure,
    estimate_batch,
    estimate_green,
)
from smeq import _mc_kernels as mk
from smeq.stochastic import (
    accumulate_functional,
    estimate_phi,
    estimate_R,
    estimate_R_nu,
    revuz_check,
    simulate_path,
    truncation_monotonicity_check,
)

I1 = Domain.interval(0.0, 1.0)
DISK = Domain.disk((0.0, 0.0), 1.0)


# -- random stream ----------------------------------------------------------

def test_path_key_matches_reference():
    for seed, idx in [(0, 0), (42, 7), (2**63 + 11, 12345)]:
        assert tuple(int(v) for v in mk._path_key(np.uint64(seed), np.int64(idx))) == \
            ref.path_key_ref(seed, idx)


def test_philox_block_matches_reference():
    for step, k0, k1 in [(0, 0, 0), (1, 1, 2), (977, 0xDEADBEEF, 0x12345678), (2**40, 7, 9)]:
        got = mk._philox4(np.uint64(step), np.uint32(k0), np.uint32(k1))
        assert tuple(int(v) for v in got) == tuple(ref.philox4_ref(step, k0, k1))


def test_uniform_and_gauss_mapping():
    for w in (0, 1, 2**31, 2**32 - 1):
        u = float(mk._uniform(np.uint32(w)))
        assert u == ref.uniform_ref(w)
        assert 0.0 < u < 1.0
    g = mk._gauss_pair(0.25, 0.6)
    assert g == pytest.approx(ref.gauss_pair_ref(0.25, 0.6), abs=1e-15)


def test_bridge_local_time_against_quadrature():
    # the closed form is the exact conditional expectation; the time
    # quadrature of the bridge density is an independent derivation
    dt = 1e-3
    cases = [(0.50, 0.52, 0.51), (0.50, 0.52, 0.53), (0.48, 0.52, 0.50)]
    for x, y, p in cases:
        closed = float(mk._bridge_local_time(x, y, p, dt, math.sqrt(dt)))
        assert closed == pytest.approx(ref.bridge_local_time_ref(x, y, p, dt), rel=1e-12)
        assert closed == pytest.approx(ref.bridge_local_time_quadrature(x, y, p, dt), rel=1e-4)
    # coincident endpoints: the time integral is elementary, pi sqrt(dt)/ (2 sqrt(pi))
    closed = float(mk._bridge_local_time(0.5, 0.5, 0.5, dt, math.sqrt(dt)))
    assert closed == pytest.approx(0.5 * math.sqrt(math.pi * dt), rel=1e-12)


def test_bridge_local_time_far_point_is_negligible():
    dt = 1e-3
    v = float(mk._bridge_local_time(0.2, 0.21, 0.8, dt, math.sqrt(dt)))
    assert v < 1e-30


# -- single-path mirror -----------------------------------------------------

def mirror_nu():
    # power density plus one atom, built directly to keep both structured
    return PotentialMeasure(
        MeasureSpec(
            I1,
            terms=((1.0, (((0.5,), 0.5),)),),
            density_singularities=((0.5,),),
            atoms=(((0.3,), 2.0),),
        ),
        singular_points=(((0.5,), 0.5, 1.0),),
    )


@pytest.mark.parametrize("path_index", [0, 3])
def test_trace_matches_python_mirror(path_index):
    nu = mirror_nu()
    cfg = PathConfig(dt=1e-3, seed=20260822, n_paths=1)
    tr = simulate_path(I1, (0.25,), nu, cfg, path_index=path_index)

    cap = 1e12  # mirror of the kernel's hard density cap
    density = lambda x: min(abs(x - 0.5) ** -0.5 if x != 0.5 else cap, cap)
    pos, A, n_steps, exit_time = ref.walk_trace_ref(
        0.0, 1.0, 0.25, density, [(0.3, 2.0)], math.inf, 1e-3,
        cfg.max_steps, 20260822, path_index,
    )
    assert tr.positions.shape == (n_steps + 1, 1)
    np.testing.assert_array_equal(tr.positions[:, 0], pos)
    np.testing.assert_allclose(tr.A_values, A, rtol=1e-12, atol=1e-15)
    assert tr.exit_time == pytest.approx(exit_time, abs=1e-15)
    assert not tr.blew_up


def test_trace_A_monotone_and_reaccumulates():
    nu = mirror_nu()
    cfg = PathConfig(dt=1e-3, seed=7, n_paths=1)
    tr = simulate_path(I1, (0.25,), nu, cfg, path_index=1)
    assert np.all(np.diff(tr.A_values) >= 0.0)
    reacc = accumulate_functional(tr.positions, cfg.dt, nu, cfg.shell_epsilon)
    np.testing.assert_allclose(reacc, tr.A_values, rtol=1e-12, atol=1e-15)


def test_functional_is_additive_along_the_path():
    nu = mirror_nu()
    cfg = PathConfig(dt=1e-3, seed=11, n_paths=1)
    tr = simulate_path(I1, (0.25,), nu, cfg, path_index=0)
    k = tr.positions.shape[0] // 2
    full = accumulate_functional(tr.positions, cfg.dt, nu, cfg.shell_epsilon)
    tail = accumulate_functional(tr.positions[k:], cfg.dt, nu, cfg.shell_epsilon)
    np.testing.assert_allclose(tail, full[k:] - full[k], rtol=1e-10, atol=1e-14)


def test_a_monotonicity_sweep_zero_violations():
    nu = mirror_nu()
    cfg = PathConfig(dt=1e-3, seed=3, n_paths=1)
    for idx in range(100):
        tr = simulate_path(I1, (0.4,), nu, cfg, path_index=idx)
        assert np.all(np.diff(tr.A_values) >= 0.0)


# -- determinism and ensemble sharing ---------------------------------------

def cfg_small(seed=123, n_paths=2000, dt=1e-3):
    return PathConfig(dt=dt, seed=seed, n_paths=n_paths)


def test_estimates_bit_identical_on_rerun():
    nu = PotentialMeasure.power(I1, (0.5,), 0.5)
    fs = [FunctionSpec.constant(1.0), FunctionSpec.parabola(I1)]
    a = estimate_batch(I1, (0.25,), fs, nu, cfg_small(), levels=(10.0,), occ_targets=((0.7,),))
    b = estimate_batch(I1, (0.25,), fs, nu, cfg_small(), levels=(10.0,), occ_targets=((0.7,),))
    for name in ("I_time", "I_disc", "I_dA", "I_occ", "I_phi", "exit_time", "blew_up"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert a.R(0).mean == b.R(0).mean
    assert a.green(0).stderr == b.green(0).stderr


def test_path_prefix_property():
    # counter-based streams: the first k paths of a larger ensemble are
    # exactly the k-path ensemble
    f = [FunctionSpec.constant(1.0)]
    small = estimate_batch(I1, (0.3,), f, None, cfg_small(n_paths=500))
    large = estimate_batch(I1, (0.3,), f, None, cfg_small(n_paths=2000))
    np.testing.assert_array_equal(small.I_time, large.I_time[:500])
    np.testing.assert_array_equal(small.exit_time, large.exit_time[:500])


def test_shared_ensemble_equals_standalone_estimators():
    nu = PotentialMeasure.lebesgue(I1, 2.0)
    f = FunctionSpec.parabola(I1)
    ens = estimate_batch(I1, (0.4,), [FunctionSpec.constant(1.0), f], nu, cfg_small())
    assert ens.R(1).mean == estimate_R(I1, (0.4,), f, cfg_small()).mean
    assert ens.R_nu(0).mean == estimate_R_nu(
        I1, (0.4,), FunctionSpec.constant(1.0), nu, cfg_small()
    ).mean
    assert ens.phi().mean == estimate_phi(I1, (0.4,), nu, cfg_small()).mean
    greens = estimate_green(I1, (0.4,), [(0.6,)], nu, cfg_small())
    ens_g = estimate_batch(
        I1, (0.4,), [FunctionSpec.constant(1.0)], nu, cfg_small(), occ_targets=[(0.6,)]
    )
    assert greens[0].mean == ens_g.green(0).mean


def test_different_seeds_differ():
    f = [FunctionSpec.constant(1.0)]
    a = estimate_batch(I1, (0.3,), f, None, cfg_small(seed=1))
    b = estimate_batch(I1, (0.3,), f, None, cfg_small(seed=2))
    assert a.R(0).mean != b.R(0).mean


# -- closed-form agreement --------------------------------------------------

def within(est, exact, allowance=1e-3):
    return abs(est.mean - exact) <= 3.0 * est.stderr + allowance


def test_exit_time_estimate_interval():
    est = estimate_R(I1, (0.25,), FunctionSpec.constant(1.0), cfg_small(n_paths=4000))
    assert within(est, float(ref.u_flat_lebesgue(0.25)), allowance=2e-3)


def test_exit_time_estimate_disk_center():
    est = estimate_R(DISK, (0.0, 0.0), FunctionSpec.constant(1.0), cfg_small(n_paths=3000))
    # no bridge correction in 2D: kill checks only at step ends, so the
    # allowance covers the O(sqrt(dt)) boundary-layer bias
    assert within(est, 0.25, allowance=8e-3)


def test_green_estimates_free_potential():
    ests = estimate_green(I1, (0.25,), [(0.3,), (0.7,)], None, cfg_small(n_paths=6000))
    assert within(ests[0], float(ref.kernel0(0.25, 0.3)), allowance=1.5e-3)
    assert within(ests[1], float(ref.kernel0(0.25, 0.7)), allowance=1.5e-3)


def test_green_estimate_unit_lebesgue_potential():
    nu = PotentialMeasure.lebesgue(I1)
    est = estimate_green(I1, (0.25,), [(0.6,)], nu, cfg_small(n_paths=6000))[0]
    assert within(est, float(ref.kernel1(0.25, 0.6)), allowance=1.5e-3)


def test_r_nu_atom_potential_fixed_point():
    # nu = 4 delta_{1/2}: u(1/4) = 3/32 - 4 u(1/2) G(1/4,1/2) = 1/16
    nu = PotentialMeasure(MeasureSpec.point_mass(I1, (0.5,), 4.0))
    est = estimate_R_nu(I1, (0.25,), FunctionSpec.constant(1.0), nu, cfg_small(n_paths=6000))
    assert within(est, 0.0625, allowance=1.5e-3)


def test_r_nu_lebesgue_closed_form():
    nu = PotentialMeasure.lebesgue(I1)
    est = estimate_R_nu(I1, (0.25,), FunctionSpec.constant(1.0), nu, cfg_small(n_paths=4000))
    assert within(est, float(ref.u_lebesgue_lebesgue(0.25)), allowance=2e-3)


def test_phi_bounded_by_exit_time_functional():
    nu = PotentialMeasure.lebesgue(I1)
    cfg = cfg_small(n_paths=2000)
    phi = estimate_phi(I1, (0.25,), nu, cfg)
    R1 = estimate_R(I1, (0.25,), FunctionSpec.constant(1.0), cfg)
    assert 0.0 < phi.mean < R1.mean


# -- Revuz correspondence ---------------------------------------------------

def test_revuz_lebesgue_is_exit_time():
    nu = PotentialMeasure.lebesgue(I1)
    mc, exact = revuz_check(
        I1, (0.25,), FunctionSpec.constant(1.0), nu, cfg_small(n_paths=4000), GreenKernel(I1)
    )
    assert exact == pytest.approx(float(ref.u_flat_lebesgue(0.25)), rel=1e-6)
    assert within(mc, exact, allowance=2e-3)


def test_revuz_atom_is_kernel_value():
    nu = PotentialMeasure(MeasureSpec.point_mass(I1, (0.5,), 4.0))
    mc, exact = revuz_check(
        I1, (0.25,), FunctionSpec.constant(1.0), nu, cfg_small(n_paths=4000), GreenKernel(I1)
    )
    assert exact == pytest.approx(4.0 * float(ref.kernel0(0.25, 0.5)), rel=1e-12)
    assert within(mc, exact, allowance=4e-3)


def test_revuz_rejects_exceptional_start():
    nu = PotentialMeasure.power(I1, (0.5,), 1.0)
    with pytest.raises(ValueError, match="revuz-undefined-at-exceptional-point"):
        revuz_check(
            I1, (0.5,), FunctionSpec.constant(1.0), nu, cfg_small(), GreenKernel(I1)
        )


# -- truncation monotonicity ------------------------------------------------

def test_truncation_monotone_pathwise_and_in_mean():
    nu = PotentialMeasure.power(I1, (0.5,), 0.5)
    cfg = cfg_small(n_paths=2000)
    ests = truncation_monotonicity_check(I1, (0.25,), nu, (1.0, 10.0, 100.0), cfg)
    means = [e.mean for e in ests]
    assert means[0] >= means[1] >= means[2]
    # pathwise: every path's discounted integral is nonincreasing in the cap
    ens = estimate_batch(
        I1, (0.25,), [FunctionSpec.constant(1.0)], nu, cfg, levels=(1.0, 10.0, 100.0)
    )
    d = np.diff(ens.I_disc[:, 0, :], axis=1)
    assert np.all(d <= 1e-15)


def test_truncation_levels_validated():
    nu = PotentialMeasure.power(I1, (0.5,), 0.5)
    with pytest.raises(ValueError, match="increasing"):
        truncation_monotonicity_check(I1, (0.25,), nu, (10.0, 1.0), cfg_small())


# -- input contracts --------------------------------------------------------

def test_path_config_validation():
    with pytest.raises(ValueError, match="dt"):
        PathConfig(dt=0.0, seed=1)
    with pytest.raises(ValueError, match="n_paths"):
        PathConfig(dt=1e-3, seed=1, n_paths=0)
    with pytest.raises(ValueError, match="max_time"):
        PathConfig(dt=1e-3, seed=1, max_time=0.0)
    with pytest.raises(ValueError, match="floor"):
        PathConfig(dt=1e-2, seed=1, shell_epsilon=1e-3)
    assert PathConfig(dt=1e-4, seed=1).shell_epsilon == pytest.approx(0.02)


def test_occupation_targets_require_1d():
    with pytest.raises(ValueError, match="one-dimensional"):
        estimate_batch(
            DISK, (0.0, 0.0), [FunctionSpec.constant(1.0)], None,
            cfg_small(), occ_targets=[(0.5, 0.0)],
        )


def test_start_point_must_be_interior():
    with pytest.raises(ValueError, match="not interior"):
        estimate_R(I1, (1.5,), FunctionSpec.constant(1.0), cfg_small())


def test_mc_rejects_bare_callable_density():
    nu = PotentialMeasure(
        MeasureSpec.from_density(I1, lambda pts: np.ones(pts.shape[0]))
    )
    with pytest.raises(ValueError, match="power-product"):
        estimate_R_nu(I1, (0.5,), FunctionSpec.constant(1.0), nu, cfg_small())


def test_mc_rejects_callable_curve_density():
    from smeq import Curve

    curve = Curve.circle((0.0, 0.0), 0.5, density=lambda pts: np.ones(pts.shape[0]))
    nu = PotentialMeasure(MeasureSpec.on_curve(DISK, curve))
    with pytest.raises(ValueError, match="constant curve densities"):
        estimate_R_nu(DISK, (0.0, 0.0), FunctionSpec.constant(1.0), nu, cfg_small())


# -- FunctionSpec -----------------------------------------------------------

def test_function_spec_families():
    pts1 = np.array([[0.2], [0.5], [0.9]])
    assert np.all(FunctionSpec.constant(2.5).evaluate(pts1) == 2.5)
    np.testing.assert_allclose(
        FunctionSpec.coordinate(0, shift=-0.5, scale=2.0).evaluate(pts1),
        2.0 * pts1[:, 0] - 0.5,
    )
    np.testing.assert_allclose(
        FunctionSpec.parabola(I1).evaluate(pts1), pts1[:, 0] * (1.0 - pts1[:, 0])
    )
    np.testing.assert_allclose(
        FunctionSpec.bump((0.5,), 0.25).evaluate(pts1),
        np.exp(-((pts1[:, 0] - 0.5) ** 2) / (2 * 0.25**2)),
    )
    pts2 = np.array([[0.0, 0.0], [0.3, 0.4]])
    np.testing.assert_allclose(
        FunctionSpec.parabola(DISK).evaluate(pts2), [1.0, 1.0 - 0.25]
    )


def test_function_spec_matches_compiled_kernel():
    fs = [
        FunctionSpec.constant(1.5),
        FunctionSpec.parabola(I1),
        FunctionSpec.bump((0.3,), 0.2),
    ]
    xs = np.linspace(0.05, 0.95, 11)
    for f in fs:
        want = f.evaluate(xs.reshape(-1, 1))
        got = [
            float(mk._test_function(x, 0.0, 1, np.int64(f.kind), np.asarray(f.params)))
            for x in xs
        ]
        np.testing.assert_allclose(got, want, rtol=1e-15)
