"""Measure algebra, total variation, and the divergence classifier."""

import math

import numpy as np
import pytest

from smeq import (
    Curve,
    Domain,
    GreenKernel,
    MeasureSpec,
    PotentialMeasure,
    classify_singular_set,
    decompose,
    reduce_measure,
    total_variation,
    truncate,
)
from smeq.measures import curve_quadrature

I1 = Domain.interval(0.0, 1.0)
DISK = Domain.disk((0.0, 0.0), 1.0)


# -- curves ----------------------------------------------------------------

def test_curve_lengths():
    assert Curve.circle((0.0, 0.0), 0.5).length == pytest.approx(math.pi)
    assert Curve.segment((0.0, 0.0), (3.0, 4.0)).length == pytest.approx(5.0)


def test_curve_validation():
    with pytest.raises(ValueError):
        Curve.circle((0.0, 0.0), 0.0)
    with pytest.raises(ValueError):
        Curve.segment((0.2, 0.2), (0.2, 0.2))


def test_curve_quadrature_total_mass():
    c = Curve.circle((0.1, 0.0), 0.4, density=2.0)
    pts, ds = curve_quadrature(c, 1e-3)
    assert float(np.sum(c.density_values(pts) * ds)) == pytest.approx(2.0 * c.length)
    # points sit on the circle
    r = np.hypot(pts[:, 0] - 0.1, pts[:, 1])
    np.testing.assert_allclose(r, 0.4, atol=1e-12)


def test_curve_distance():
    c = Curve.circle((0.0, 0.0), 0.5)
    d = c.distance(np.array([[0.0, 0.0], [0.5, 0.0], [0.8, 0.0]]))
    np.testing.assert_allclose(d, [0.5, 0.0, 0.3], atol=1e-12)
    s = Curve.segment((0.0, 0.0), (1.0, 0.0))
    d = s.distance(np.array([[0.5, 0.2], [-0.3, 0.0], [2.0, 0.0]]))
    np.testing.assert_allclose(d, [0.2, 0.3, 1.0], atol=1e-12)


def test_curve_scaling_and_absolute():
    c = Curve.segment((0.0, 0.0), (1.0, 0.0), density=-1.5)
    pts, _ = curve_quadrature(c, 0.1)
    np.testing.assert_allclose(c.scaled(2.0).density_values(pts), -3.0)
    np.testing.assert_allclose(c.absolute().density_values(pts), 1.5)


# -- measure construction and algebra --------------------------------------

def test_zero_measure():
    assert MeasureSpec.zero(I1).is_zero
    assert not MeasureSpec.lebesgue(I1).is_zero


def test_lebesgue_density_is_constant():
    m = MeasureSpec.lebesgue(I1, 2.5)
    pts = np.linspace(0.1, 0.9, 7).reshape(-1, 1)
    np.testing.assert_allclose(m.density_values(pts), 2.5)


def test_power_density_and_inferred_singularity():
    m = MeasureSpec.power(I1, (0.5,), 0.5, coef=3.0)
    pts = np.array([[0.25], [0.75], [0.9]])
    np.testing.assert_allclose(m.density_values(pts), 3.0 / np.sqrt(np.abs(pts[:, 0] - 0.5)))
    assert m.density_singularities == ((0.5,),)


def test_cap_clips_density_symmetrically():
    m = MeasureSpec.power(I1, (0.5,), 0.5)
    capped = MeasureSpec(I1, terms=m.terms, cap=2.0)
    pts = np.array([[0.5 + 1e-6], [0.25]])
    np.testing.assert_allclose(capped.density_values(pts), [2.0, 2.0])


def test_atom_outside_domain_rejected():
    with pytest.raises(ValueError, match="outside-domain"):
        MeasureSpec.point_mass(I1, (1.5,), 1.0)


def test_curve_requires_2d():
    with pytest.raises(ValueError, match="2D"):
        MeasureSpec(I1, curves=(Curve.segment((0.0, 0.0), (1.0, 0.0)),))
    with pytest.raises(ValueError, match="outside-domain"):
        MeasureSpec.on_curve(DISK, Curve.circle((0.0, 0.0), 1.5))


def test_addition_keeps_structured_terms():
    m = MeasureSpec.lebesgue(I1) + MeasureSpec.power(I1, (0.5,), 0.5)
    assert m.terms is not None and len(m.terms) == 2
    pts = np.array([[0.25]])
    assert m.density_values(pts)[0] == pytest.approx(1.0 + 1.0 / math.sqrt(0.25))


def test_addition_rejects_mismatched_domain_and_caps():
    with pytest.raises(ValueError, match="different domains"):
        MeasureSpec.lebesgue(I1) + MeasureSpec.lebesgue(Domain.interval(0.0, 2.0))
    capped = MeasureSpec(I1, terms=((1.0, ()),), cap=5.0)
    with pytest.raises(ValueError, match="capped"):
        capped + MeasureSpec.lebesgue(I1)


def test_scaling_and_subtraction():
    m = MeasureSpec.point_mass(I1, (0.3,), 1.0) - 2.0 * MeasureSpec.point_mass(I1, (0.7,), 1.0)
    assert m.atoms == (((0.3,), 1.0), ((0.7,), -2.0))
    assert total_variation(m) == pytest.approx(3.0)
    assert total_variation(m.absolute()) == pytest.approx(3.0)
    assert m.absolute().atoms[1][1] == pytest.approx(2.0)


def test_scalar_multiple_of_density():
    m = 3.0 * MeasureSpec.lebesgue(I1, 0.5)
    np.testing.assert_allclose(m.density_values(np.array([[0.4]])), 1.5)


# -- potential validation ---------------------------------------------------

def test_potential_rejects_signed_parts():
    with pytest.raises(ValueError, match="nonnegative"):
        PotentialMeasure(MeasureSpec.lebesgue(I1, -1.0))
    with pytest.raises(ValueError, match="nonnegative"):
        PotentialMeasure(MeasureSpec.point_mass(I1, (0.5,), -2.0))
    with pytest.raises(ValueError, match="nonnegative"):
        PotentialMeasure(
            MeasureSpec.on_curve(DISK, Curve.circle((0.0, 0.0), 0.5, density=-1.0))
        )


def test_potential_rejects_2d_atoms():
    with pytest.raises(ValueError, match="polar"):
        PotentialMeasure(MeasureSpec.point_mass(DISK, (0.0, 0.0), 1.0))


def test_potential_power_declares_singularity():
    nu = PotentialMeasure.power(I1, (0.5,), 0.5, coef=2.0)
    assert nu.singular_points == (((0.5,), 0.5, 2.0),)
    flat = PotentialMeasure.power(I1, (0.5,), 0.0, coef=2.0)
    assert flat.singular_points == ()


def test_truncate_caps_and_clears_declarations():
    nu = PotentialMeasure.power(I1, (0.5,), 0.5)
    t = truncate(nu, 10.0)
    assert t.base.cap == 10.0
    assert t.singular_points == ()
    # tightening only: a second, looser truncation keeps the lower cap
    assert truncate(t, 100.0).base.cap == 10.0
    with pytest.raises(ValueError):
        truncate(nu, 0.0)


# -- total variation --------------------------------------------------------

def test_total_variation_battery():
    assert total_variation(MeasureSpec.lebesgue(I1)) == pytest.approx(1.0, rel=1e-6)
    nu = MeasureSpec.power(I1, (0.5,), 0.5)
    assert total_variation(nu) == pytest.approx(2.0 * math.sqrt(2.0), rel=1e-5)
    disk_nu = MeasureSpec.power(DISK, (0.0, 0.0), 1.5)
    assert total_variation(disk_nu) == pytest.approx(4.0 * math.pi, rel=1e-4)


def test_total_variation_curve_component():
    m = MeasureSpec.on_curve(DISK, Curve.circle((0.0, 0.0), 0.4, density=2.0))
    assert total_variation(m) == pytest.approx(2.0 * 2.0 * math.pi * 0.4, rel=1e-9)


def test_total_variation_divergent_raises():
    with pytest.raises(ValueError, match="not-bounded-measure"):
        total_variation(MeasureSpec.power(I1, (0.5,), 1.5))
    with pytest.raises(ValueError, match="not-bounded-measure"):
        total_variation(MeasureSpec.power(DISK, (0.0, 0.0), 2.5))


# -- decomposition ----------------------------------------------------------

def test_decompose_1d_everything_diffuse():
    m = MeasureSpec.lebesgue(I1) + MeasureSpec.point_mass(I1, (0.5,), 2.0)
    diffuse, conc = decompose(m, I1)
    assert conc.is_zero
    assert diffuse.atoms == m.atoms


def test_decompose_2d_atoms_concentrated():
    m = MeasureSpec.lebesgue(DISK) + MeasureSpec.point_mass(DISK, (0.4, 0.0), 1.0)
    diffuse, conc = decompose(m, DISK)
    assert diffuse.atoms == ()
    assert diffuse.density is not None
    assert conc.atoms == (((0.4, 0.0), 1.0),)
    assert conc.density is None


# -- classifier -------------------------------------------------------------

@pytest.mark.parametrize(
    "beta,divergent",
    [(0.5, False), (1.0, True), (1.5, True)],
)
def test_classifier_interval(beta, divergent):
    nu = PotentialMeasure.power(I1, (0.5,), beta)
    c = classify_singular_set(nu, GreenKernel(I1))
    assert c.in_n_nu((0.5,)) == divergent
    assert (len(c.n_nu) == 1) == divergent
    d = c.diagnostics[0]
    assert d["divergent"] == divergent
    assert d["mass_exponent"] == pytest.approx(beta, abs=0.02)
    if divergent:
        assert all(math.isinf(v) for v in d["I_k"])
    else:
        I = d["I_k"]
        assert all(np.isfinite(I))
        assert all(b <= a for a, b in zip(I, I[1:]))
        # beta = 1/2 ball integrals scale like sqrt(radius)
        assert I[-1] < 0.05 and I[-1] < I[0] / 10.0


@pytest.mark.parametrize(
    "beta,divergent",
    [(1.5, False), (1.9, False), (2.0, True), (2.5, True)],
)
def test_classifier_disk(beta, divergent):
    nu = PotentialMeasure.power(DISK, (0.0, 0.0), beta)
    c = classify_singular_set(nu, GreenKernel(DISK))
    assert c.in_n_nu((0.0, 0.0)) == divergent
    assert c.diagnostics[0]["mass_exponent"] == pytest.approx(beta, abs=0.02)


def test_classifier_examines_1d_atoms_as_convergent():
    nu = PotentialMeasure(MeasureSpec.point_mass(I1, (0.5,), 4.0))
    c = classify_singular_set(nu, GreenKernel(I1))
    assert c.n_nu == ()
    assert len(c.diagnostics) == 1
    assert c.diagnostics[0]["point"] == (0.5,)
    assert not c.diagnostics[0]["divergent"]


def test_classifier_disagreement_raises():
    # declared exponent says divergent but the density is actually flat
    nu = PotentialMeasure(
        MeasureSpec.lebesgue(I1),
        singular_points=(((0.5,), 1.5, 1.0),),
    )
    with pytest.raises(ValueError, match="rule-diagnostic-disagreement"):
        classify_singular_set(nu, GreenKernel(I1))


def test_classifier_input_validation():
    nu = PotentialMeasure(
        MeasureSpec.lebesgue(I1),
        singular_points=(((0.5,), 0.5, 1.0), ((0.5,), 0.3, 1.0)),
    )
    with pytest.raises(ValueError, match="distinct"):
        classify_singular_set(nu, GreenKernel(I1))


def test_classifier_curve_mass_enters_shells():
    # an absolutely continuous curve layer never causes divergence
    ring = Curve.circle((0.0, 0.0), 0.3)
    nu = PotentialMeasure(
        MeasureSpec.on_curve(DISK, ring),
        singular_points=(((0.0, 0.0), 1.5, 0.0),),
    )
    c = classify_singular_set(nu, GreenKernel(DISK))
    assert c.n_nu == ()
    assert any(m > 0 for m in c.diagnostics[0]["shell_masses"])


# -- reduction --------------------------------------------------------------

def test_reduce_measure_drops_charged_atoms():
    nu = PotentialMeasure.power(DISK, (0.0, 0.0), 2.5)
    c = classify_singular_set(nu, GreenKernel(DISK))
    mu = (
        MeasureSpec.point_mass(DISK, (0.0, 0.0), 1.0)
        + MeasureSpec.point_mass(DISK, (0.4, 0.0), 2.0)
        + MeasureSpec.lebesgue(DISK)
    )
    r = reduce_measure(mu, c)
    assert r.atoms == (((0.4, 0.0), 2.0),)
    assert r.density is not None


def test_reduce_measure_no_divergence_is_identity():
    nu = PotentialMeasure.power(I1, (0.5,), 0.5)
    c = classify_singular_set(nu, GreenKernel(I1))
    mu = MeasureSpec.point_mass(I1, (0.5,), 1.0)
    assert reduce_measure(mu, c).atoms == mu.atoms
