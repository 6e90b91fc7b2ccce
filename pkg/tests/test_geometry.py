"""Domain, grid, and interpolation tests against exact geometry."""

import math

import numpy as np
import pytest

from smeq import Domain, GridFunction, build_grid
from smeq.geometry import interpolate


def test_interval_factory_validates():
    with pytest.raises(ValueError):
        Domain.interval(1.0, 0.0)
    with pytest.raises(ValueError):
        Domain.disk((0.0, 0.0), -1.0)
    with pytest.raises(ValueError):
        Domain.rectangle(0.0, 1.0, 2.0, 1.0)


def test_dimension_and_volume():
    assert Domain.interval(0.0, 2.0).volume == 2.0
    assert Domain.rectangle(0.0, 2.0, 0.0, 3.0).volume == 6.0
    assert Domain.disk((1.0, 1.0), 2.0).volume == pytest.approx(4.0 * math.pi)


def test_contains_and_boundary_distance():
    d = Domain.interval(0.0, 1.0)
    assert d.contains((0.5,))
    assert not d.contains((0.0,))
    assert not d.contains((1.5,))
    assert d.boundary_distance((0.25,)) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        d.boundary_distance((1.0,))

    disk = Domain.disk((0.0, 0.0), 1.0)
    assert disk.contains((0.5, 0.5))
    assert not disk.contains((0.8, 0.8))
    assert disk.boundary_distance((0.6, 0.0)) == pytest.approx(0.4)


def test_contains_vectorized():
    d = Domain.disk((0.0, 0.0), 1.0)
    pts = np.array([[0.0, 0.0], [2.0, 0.0], [0.5, 0.5]])
    np.testing.assert_array_equal(d.contains(pts), [True, False, True])


@pytest.mark.parametrize("n", [2, 7, 64])
def test_interval_grid_weights(n):
    d = Domain.interval(0.0, 2.0)
    g = build_grid(d, n)
    assert g.nodes.shape == (n, 1)
    assert np.sum(g.weights) == pytest.approx(2.0)
    # midpoint nodes
    h = 2.0 / n
    np.testing.assert_allclose(g.nodes[:, 0], (np.arange(n) + 0.5) * h)


def test_rectangle_grid_weights():
    d = Domain.rectangle(0.0, 1.0, 0.0, 2.0)
    g = build_grid(d, (8, 16))
    assert g.nodes.shape == (8 * 16, 2)
    assert np.sum(g.weights) == pytest.approx(2.0)
    assert np.all(d.contains(g.nodes))


@pytest.mark.parametrize("n", [16, 48, 128])
def test_disk_grid_area_is_exact(n):
    d = Domain.disk((0.0, 0.0), 1.0)
    g = build_grid(d, n)
    # clipped cells carry exact areas, so the total is the disk area
    assert np.sum(g.weights) == pytest.approx(math.pi, rel=1e-12)
    r = np.hypot(g.nodes[:, 0], g.nodes[:, 1])
    assert np.all(r < 1.0)


def test_disk_grid_first_moment_is_exact():
    # centroid nodes weighted by area integrate linear functions exactly
    d = Domain.disk((0.5, -0.25), 1.5)
    g = build_grid(d, 32)
    for axis, c in ((0, 0.5), (1, -0.25)):
        moment = float(np.sum(g.nodes[:, axis] * g.weights))
        assert moment == pytest.approx(c * d.volume, abs=1e-12)


def test_grid_lattice_roundtrip():
    d = Domain.rectangle(0.0, 1.0, 0.0, 1.0)
    g = build_grid(d, (4, 5))
    for nid, (i, j) in enumerate(g.index):
        assert g.lattice[i, j] == nid


def test_build_grid_validation():
    d = Domain.interval(0.0, 1.0)
    with pytest.raises(ValueError):
        build_grid(d, 1)
    with pytest.raises(ValueError):
        build_grid(d, (4, 4))


def test_gridfunction_validates_shape_and_finiteness():
    g = build_grid(Domain.interval(0.0, 1.0), 8)
    with pytest.raises(ValueError):
        GridFunction(g, np.zeros(7))
    with pytest.raises(ValueError):
        GridFunction(g, np.full(8, np.nan))


def test_pair_is_quadrature():
    g = build_grid(Domain.interval(0.0, 1.0), 256)
    x = g.nodes[:, 0]
    u = GridFunction(g, x)
    # <x, x> = 1/3 by midpoint quadrature, exact for this rule up to h^2
    assert u.pair(x) == pytest.approx(1.0 / 3.0, abs=1e-5)


def test_interpolate_1d_linear_exact():
    g = build_grid(Domain.interval(0.0, 1.0), 64)
    u = GridFunction(g, 2.0 * g.nodes[:, 0])
    pts = np.array([[0.25], [0.5], [0.123]])
    np.testing.assert_allclose(interpolate(u, pts), 2.0 * pts[:, 0], rtol=1e-12)


def test_interpolate_extends_by_zero():
    g = build_grid(Domain.interval(0.0, 1.0), 64)
    u = GridFunction(g, np.ones(g.n_nodes))
    # the wall value is pinned to 0 and ramps to the first node
    vals = interpolate(u, np.array([[0.0], [1.0 / 256.0], [-0.5]]))
    assert vals[0] == 0.0
    assert vals[1] == pytest.approx(0.5)
    assert vals[2] == 0.0


def test_interpolate_2d_bilinear_exact_inside():
    g = build_grid(Domain.rectangle(0.0, 1.0, 0.0, 1.0), (32, 32))
    u = GridFunction(g, g.nodes[:, 0] + 3.0 * g.nodes[:, 1])
    pts = np.array([[0.5, 0.5], [0.31, 0.62], [0.77, 0.21]])
    np.testing.assert_allclose(interpolate(u, pts), pts[:, 0] + 3.0 * pts[:, 1], rtol=1e-12)


def test_grid_arrays_are_read_only():
    g = build_grid(Domain.interval(0.0, 1.0), 8)
    with pytest.raises(ValueError):
        g.nodes[0, 0] = 99.0
