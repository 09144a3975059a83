import math

import numpy as np
import pytest

from conedbp.containers import Volume3D
from conedbp.dbp import (
    PlaneGrid,
    compute_dbp,
    coverage_mask,
    missing_frequency_mask,
    plane_grid_for_volume,
    sigma,
    spectral_signature,
)
from conedbp.errors import ConfigError, InsufficientViewsError
from conedbp.geometry import ArcSpec, ScanGeometry, plane_of_interest
from conedbp.projector import forward_project


@pytest.fixture(scope="module")
def geom():
    return ScanGeometry(R=500.0, D=1000.0, nu=96, nv=96, pitch=4.0, n_views=180)


@pytest.fixture(scope="module")
def blob_setup(geom):
    """Small smooth blob volume and its full-circle projections."""
    n = 48
    grid3 = Volume3D(n, n, n, 8.0 * 48 / n / 2)  # 4 mm spacing, 192 mm cube
    xs, ys, zs = (grid3.axis_coords(a) for a in range(3))
    r2 = (
        (xs[None, None, :] - 8.0) ** 2
        + ys[None, :, None] ** 2
        + (zs[:, None, None] - 12.0) ** 2
    )
    vol = grid3.with_data(np.exp(-((r2 / 30.0**2) ** 2)))
    proj = forward_project(vol, geom)
    return vol, proj


def test_sigma_values_and_cancellation(geom):
    plane = plane_of_interest(geom, "coronal", 40.0)
    sig = spectral_signature(geom, plane, (10.0, 40.0, 25.0))
    assert np.linalg.norm(sig.d_minus) == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.norm(sig.d_plus) == pytest.approx(1.0, abs=1e-12)
    rng = np.random.default_rng(0)
    vals = set()
    for _ in range(200):
        omega = rng.standard_normal(3)
        s = sigma(sig, omega)
        assert s.real == 0.0
        vals.add(complex(s))
    # only the three generic values appear
    assert vals <= {0j, 2j * math.pi, -2j * math.pi}
    assert 2j * math.pi in vals and -2j * math.pi in vals

    # d- = d+ -> spectral factor vanishes for every frequency
    from conedbp.dbp import SpectralSignature

    d = np.array([0.6, 0.8, 0.0])
    degenerate = SpectralSignature(np.zeros(3), 0.0, 1.0, d, d)
    for _ in range(20):
        assert sigma(degenerate, rng.standard_normal(3)) == 0j


def test_sigma_sign_table(geom):
    plane = plane_of_interest(geom, "coronal", 0.0)
    sig = spectral_signature(geom, plane, (0.0, 0.0, 0.0))
    # d- = -x_hat, d+ = +x_hat at the isocenter
    assert np.allclose(sig.d_minus, [-1.0, 0.0, 0.0], atol=1e-12)
    assert np.allclose(sig.d_plus, [1.0, 0.0, 0.0], atol=1e-12)
    # omega with omega.d- > 0 > omega.d+ gives +2*pi*i
    assert sigma(sig, (-1.0, 0.3, 0.2)) == pytest.approx(2j * math.pi)
    assert sigma(sig, (1.0, -0.3, 0.2)) == pytest.approx(-2j * math.pi)
    # sgn(0) = 0 convention, probed with exact endpoint directions
    from conedbp.dbp import SpectralSignature

    exact = SpectralSignature(np.zeros(3), 0.0, math.pi,
                              np.array([-1.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]))
    assert sigma(exact, (0.0, 1.0, 1.0)) == 0j
    assert sigma(exact, (0.0, 0.0, 0.0)) == 0j  # undefined-frequency sentinel


def test_missing_mask_symmetric_and_subset(geom):
    # odd grid so every frequency bin has an exact negation partner
    x = (30.0, -20.0, 40.0)
    cor = missing_frequency_mask(geom, x, "coronal", (25, 25), 2.0)
    sag = missing_frequency_mask(geom, x, "sagittal", (25, 25), 2.0)
    idx = (-np.arange(25)) % 25
    assert np.array_equal(cor, cor[np.ix_(idx, idx)])  # omega -> -omega symmetry
    both = cor & sag
    assert np.all(both <= cor) and np.all(both <= sag)
    assert both.sum() < cor.sum()


def test_missing_mask_matches_pointwise_sigma(geom):
    x = np.array([25.0, 10.0, 30.0])
    rows = cols = 16
    spacing = 2.0
    mask = missing_frequency_mask(geom, x, "sagittal", (rows, cols), spacing)
    plane = plane_of_interest(geom, "sagittal", x[0])
    sig = spectral_signature(geom, plane, x)
    wy = 2 * np.pi * np.fft.fftfreq(rows, d=spacing)
    wx = 2 * np.pi * np.fft.fftfreq(cols, d=spacing)
    for r in range(rows):
        for c in range(cols):
            omega = np.array([wx[c], wy[r], 0.0])
            assert mask[r, c] == (sigma(sig, omega) == 0j)


def test_missing_mask_outside_cylinder(geom):
    with pytest.raises(ConfigError):
        missing_frequency_mask(geom, (600.0, 0.0, 0.0), "coronal", (8, 8))


def test_dbp_zero_projections(geom, blob_setup):
    _, proj = blob_setup
    plane = plane_of_interest(geom, "coronal", 2.0)
    grid = PlaneGrid(nt=32, nz=32, dt=4.0, dz=4.0, t0=-62.0, z0=-62.0)
    zeroed = proj.with_data(np.zeros_like(proj.data))
    dbp = compute_dbp(zeroed, geom, plane, plane.arc("short"), grid)
    assert np.all(dbp.g == 0.0)


def test_dbp_linearity(geom, blob_setup):
    _, proj = blob_setup
    plane = plane_of_interest(geom, "coronal", 2.0)
    grid = PlaneGrid(nt=24, nz=24, dt=4.0, dz=4.0, t0=-46.0, z0=-46.0)
    arc = plane.arc("short")
    rng = np.random.default_rng(1)
    other = proj.with_data(rng.random(proj.data.shape))
    a, b = 0.7, -1.9
    lhs = compute_dbp(proj.with_data(a * proj.data + b * other.data),
                      geom, plane, arc, grid).g
    rhs = a * compute_dbp(proj, geom, plane, arc, grid).g \
        + b * compute_dbp(other, geom, plane, arc, grid).g
    assert np.linalg.norm(lhs - rhs) <= 1e-6 * np.linalg.norm(rhs)


def test_dbp_full_circle_cancels(geom, blob_setup):
    vol, proj = blob_setup
    plane = plane_of_interest(geom, "coronal", 2.0)
    grid = plane_grid_for_volume(plane, vol)
    g_full = compute_dbp(proj, geom, plane, plane.arc("full"), grid).g
    g_short = compute_dbp(proj, geom, plane, plane.arc("short"), grid).g
    assert np.abs(g_full).max() <= 1e-2 * np.abs(g_short).max()


def test_dbp_complement_negates_short(geom, blob_setup):
    # complementary arcs share endpoints; their ideal responses differ by
    # sign only, so short + complement = full-circle ~ 0
    vol, proj = blob_setup
    plane = plane_of_interest(geom, "coronal", -14.0)
    grid = plane_grid_for_volume(plane, vol)
    g_s = compute_dbp(proj, geom, plane, plane.arc("short"), grid).g
    g_c = compute_dbp(proj, geom, plane, plane.arc("complement"), grid).g
    assert np.linalg.norm(g_s + g_c) <= 0.05 * np.linalg.norm(g_s)


def test_dbp_insufficient_views(geom, blob_setup):
    _, proj = blob_setup
    plane = plane_of_interest(geom, "coronal", 2.0)
    grid = PlaneGrid(nt=8, nz=8, dt=4.0, dz=4.0, t0=-14.0, z0=-14.0)
    narrow = ArcSpec("short", 0.001, 0.02)  # fewer than 3 views at 2 deg spacing
    with pytest.raises(InsufficientViewsError):
        compute_dbp(proj, geom, plane, narrow, grid)


def test_plane_grid_for_volume_alignment(geom):
    vol = Volume3D(20, 20, 20, 4.0)
    for direction, axis in (("coronal", 0), ("sagittal", 1)):
        plane = plane_of_interest(geom, direction, vol.axis_coords(1)[3])
        grid = plane_grid_for_volume(plane, vol)
        assert grid.nt == 20 and grid.nz == 20
        assert grid.dt == 4.0 and grid.dz == 4.0
        # ascending t covers the same coordinates as the voxel axis
        assert np.allclose(np.sort(np.abs(grid.t_coords)),
                           np.sort(np.abs(vol.axis_coords(axis))))


def test_coverage_mask_monotone(geom):
    plane = plane_of_interest(geom, "coronal", 10.0)
    grid = PlaneGrid(nt=32, nz=32, dt=4.0, dz=4.0, t0=-62.0, z0=-62.0)
    mask = coverage_mask(geom, plane, grid)
    assert mask.shape == (32, 32)
    assert mask[16, 16]  # center is covered
    # coverage shrinks with |z|
    per_row = mask.sum(axis=1)
    top = per_row[16:]
    assert np.all(np.diff(top) <= 0)
