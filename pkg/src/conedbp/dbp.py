"""Angle-differentiated backprojection onto planes of interest.

``compute_dbp`` evaluates, for every chord-grid point x of a plane, the
arc integral of the source-position derivative of the line integrals at
fixed ray direction, weighted by the inverse source distance.  The
derivative at fixed direction is discretized by resampling the two
neighboring views along the ray through x frozen at the current view's
direction and central-differencing over the source angle; arc endpoints
use one-sided differences and trapezoid weights.

The result of a full-circle arc cancels to quadrature error -- the
signature test that signs and weights are right -- while an open arc
yields the Hilbert-filtered plane image consumed by the deconvolution
stage.

``sigma`` and ``missing_frequency_mask`` expose the spectral content of
an arc's output at a point: frequencies whose signs agree against both
endpoint ray directions are invisible to the arc pair and need the
complementary scan direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .containers import ProjectionSet, Volume3D
from .errors import ConfigError, InsufficientViewsError
from .geometry import (
    ArcSpec,
    PlaneOfInterest,
    ScanGeometry,
    plane_of_interest,
    source_position,
)

__all__ = [
    "PlaneGrid",
    "DbpPlane",
    "SpectralSignature",
    "compute_dbp",
    "sigma",
    "spectral_signature",
    "missing_frequency_mask",
    "plane_grid_for_volume",
    "coverage_mask",
]


@dataclass(frozen=True)
class PlaneGrid:
    """Uniform (t, z) sampling of a plane of interest."""

    nt: int
    nz: int
    dt: float
    dz: float
    t0: float
    z0: float

    def __post_init__(self):
        if min(self.nt, self.nz) < 1:
            raise ConfigError("nt and nz must be >= 1")
        if min(self.dt, self.dz) <= 0:
            raise ConfigError("dt and dz must be positive")

    @property
    def t_coords(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.nt)

    @property
    def z_coords(self) -> np.ndarray:
        return self.z0 + self.dz * np.arange(self.nz)


@dataclass
class DbpPlane:
    """DBP samples g[z, t] on one plane for one arc."""

    plane: PlaneOfInterest
    arc: ArcSpec
    grid: PlaneGrid
    g: np.ndarray

    def __post_init__(self):
        self.g = np.ascontiguousarray(self.g, dtype=np.float64)
        if self.g.shape != (self.grid.nz, self.grid.nt):
            raise ConfigError(
                f"g shape {self.g.shape} does not match grid ({self.grid.nz}, {self.grid.nt})"
            )
        if not np.all(np.isfinite(self.g)):
            raise ConfigError("DBP plane contains non-finite values")

    @property
    def nt(self) -> int:
        return self.grid.nt

    @property
    def nz(self) -> int:
        return self.grid.nz


def plane_grid_for_volume(plane: PlaneOfInterest, vol: Volume3D) -> PlaneGrid:
    """Chord grid aligned with the volume's in-plane voxel centers.

    The chord axis is +-x for coronal planes and +-y for sagittal ones;
    the grid is expressed with ascending t regardless of the chord
    direction's sign, so assembly back into the volume is index (de)reversal
    at most, never interpolation.
    """
    axis = 0 if plane.direction == "coronal" else 1
    coords = vol.axis_coords(axis)
    # t of each voxel column: (p - foot) . e with p on the chord axis.
    sign = float(plane.e[axis])
    if abs(abs(sign) - 1.0) > 1e-12:
        raise ConfigError("plane chord axis is not grid aligned")
    t_vals = coords * sign
    dt = vol.spacing[axis]
    t0 = float(t_vals.min())
    zs = vol.axis_coords(2)
    return PlaneGrid(nt=coords.size, nz=zs.size, dt=dt, dz=vol.spacing[2],
                     t0=t0, z0=float(zs[0]))


def _arc_view_schedule(proj: ProjectionSet, arc: ArcSpec):
    """Ordered view indices along the arc plus difference/quadrature tables.

    Returns (order, prev_idx, next_idx, inv_dlam, quad_w); indices address
    ``proj`` views.  Full arcs wrap periodically, open arcs use one-sided
    differences and half trapezoid weights at the ends.
    """
    lams = proj.lambdas
    two_pi = 2.0 * math.pi
    if arc.kind == "full":
        order = np.arange(proj.n_views, dtype=np.int64)
        pos = lams.astype(np.float64)
    else:
        inside = arc.contains(lams)
        idx = np.nonzero(inside)[0]
        if idx.size < 3:
            raise InsufficientViewsError(
                f"arc [{arc.lambda_minus:.4f}, {arc.lambda_plus:.4f}] holds only "
                f"{idx.size} views; need at least 3"
            )
        pos = lams[idx].copy()
        pos[pos < arc.lambda_minus - 1e-12] += two_pi
        srt = np.argsort(pos)
        order = idx[srt].astype(np.int64)
        pos = pos[srt]

    n = order.size
    prev_i = np.empty(n, dtype=np.int64)
    next_i = np.empty(n, dtype=np.int64)
    inv_dlam = np.empty(n, dtype=np.float64)
    quad_w = np.empty(n, dtype=np.float64)

    if arc.kind == "full":
        if n < 3:
            raise InsufficientViewsError("full-circle DBP needs at least 3 views")
        prev_i[:] = np.roll(order, 1)
        next_i[:] = np.roll(order, -1)
        dls = np.empty(n)
        dls[:-1] = np.diff(pos)
        dls[-1] = pos[0] + two_pi - pos[-1]
        gaps = np.roll(dls, 1) + dls  # lambda_{k+1} - lambda_{k-1} (wrapped)
        inv_dlam[:] = 1.0 / gaps
        quad_w[:] = 0.5 * gaps  # periodic trapezoid = midpoint rule
        return order, prev_i, next_i, inv_dlam, quad_w

    prev_i[1:] = order[:-1]
    prev_i[0] = order[0]
    next_i[:-1] = order[1:]
    next_i[-1] = order[-1]
    gaps = np.empty(n)
    gaps[1:-1] = pos[2:] - pos[:-2]
    gaps[0] = pos[1] - pos[0]
    gaps[-1] = pos[-1] - pos[-2]
    inv_dlam[:] = 1.0 / gaps
    steps = np.diff(pos)
    quad_w[1:-1] = 0.5 * (steps[:-1] + steps[1:])
    quad_w[0] = 0.5 * steps[0]
    quad_w[-1] = 0.5 * steps[-1]
    return order, prev_i, next_i, inv_dlam, quad_w


def compute_dbp(proj: ProjectionSet, geom: ScanGeometry, plane: PlaneOfInterest,
                arc: ArcSpec, grid: PlaneGrid) -> DbpPlane:
    """Differentiated backprojection of ``proj`` onto one plane grid."""
    if proj.nu != geom.nu or proj.nv != geom.nv:
        raise ConfigError("projection detector shape does not match geometry")
    order, prev_i, next_i, inv_dlam, quad_w = _arc_view_schedule(proj, arc)
    srcs = source_position(geom, proj.lambdas)
    coss = np.cos(proj.lambdas)
    sins = np.sin(proj.lambdas)
    out = np.empty((grid.nz, grid.nt), dtype=np.float64)
    _kernels.dbp_plane(
        np.ascontiguousarray(proj.data, dtype=np.float64),
        coss, sins, np.ascontiguousarray(srcs),
        order, prev_i, next_i, inv_dlam, quad_w,
        geom.R, geom.D, geom.pitch,
        plane.foot[0], plane.foot[1], plane.foot[2],
        plane.e[0], plane.e[1], plane.e[2],
        np.ascontiguousarray(grid.t_coords), np.ascontiguousarray(grid.z_coords),
        out,
    )
    return DbpPlane(plane=plane, arc=arc, grid=grid, g=out)


def coverage_mask(geom: ScanGeometry, plane: PlaneOfInterest, grid: PlaneGrid,
                  margin_cells: float = 2.0) -> np.ndarray:
    """Plane points whose rays stay on the detector for every view.

    A point at in-plane radius rho and height z projects, from the least
    favorable source, to |v| = D |z| / (R - rho) and at most
    |u| = D rho / sqrt(R^2 - rho^2); both must clear the detector edges
    by ``margin_cells`` for the DBP value there to be trustworthy.
    Uncovered corners of a plane grid carry silently truncated data and
    should be excluded from any fit against the forward model.
    """
    t = grid.t_coords
    z = grid.z_coords
    rho2 = t**2 + plane.s**2
    rho = np.sqrt(rho2)
    rho = np.minimum(rho, geom.R * (1.0 - 1e-9))
    u_lim = (geom.nu / 2.0 - margin_cells) * geom.pitch
    v_lim = (geom.nv / 2.0 - margin_cells) * geom.pitch
    u_max = geom.D * rho / np.sqrt(geom.R**2 - rho**2)
    v_max = geom.D * np.abs(z)[:, None] / (geom.R - rho)[None, :]
    return (u_max[None, :] <= u_lim) & (v_max <= v_lim)


@dataclass(frozen=True)
class SpectralSignature:
    """Endpoint ray directions governing an arc pair's spectrum at x."""

    x: np.ndarray
    lambda_minus: float
    lambda_plus: float
    d_minus: np.ndarray
    d_plus: np.ndarray


def spectral_signature(geom: ScanGeometry, plane: PlaneOfInterest, x) -> SpectralSignature:
    """Signature of ``plane``'s arc pair at world point ``x``."""
    x = np.asarray(x, dtype=float)
    a_minus = source_position(geom, plane.lambda_minus)
    a_plus = source_position(geom, plane.lambda_plus)
    d_minus = x - a_minus
    d_plus = x - a_plus
    nm = np.linalg.norm(d_minus)
    np_ = np.linalg.norm(d_plus)
    if nm == 0 or np_ == 0:
        raise ConfigError("x coincides with an arc endpoint")
    return SpectralSignature(
        x=x,
        lambda_minus=plane.lambda_minus,
        lambda_plus=plane.lambda_plus,
        d_minus=d_minus / nm,
        d_plus=d_plus / np_,
    )


def _sgn(value, scale):
    """Sign with sgn(0) = 0, robust to floating fuzz at the measure-zero set."""
    return np.where(np.abs(value) <= 1e-12 * scale, 0.0, np.sign(value))


def sigma(sig: SpectralSignature, omega) -> complex:
    """Spectral factor i*pi*(sgn(w . d-) - sgn(w . d+)) in {0, +-i*pi, +-2i*pi}.

    sgn(0) is taken as 0 (with a relative fuzz tolerance, so frequencies
    exactly orthogonal to an endpoint direction behave as the convention
    says even when the direction carries trigonometric round-off);
    omega = 0 itself returns 0 (undefined frequency sentinel).
    """
    omega = np.asarray(omega, dtype=float)
    scale = float(np.linalg.norm(omega))
    if scale == 0.0:
        return 0j
    s_minus = _sgn(float(omega @ sig.d_minus), scale)
    s_plus = _sgn(float(omega @ sig.d_plus), scale)
    return 1j * math.pi * (s_minus - s_plus)


def missing_frequency_mask(geom: ScanGeometry, x, direction: str,
                           shape, spacing: float = 1.0,
                           omega_z: float = 0.0) -> np.ndarray:
    """Boolean mask of axial-plane frequencies invisible to a direction's arcs.

    ``shape`` = (rows, cols) of the axial frequency grid (rows vary with
    omega_y, cols with omega_x, FFT bin order); a bin is marked when the
    spectral factor vanishes at (omega_x, omega_y, omega_z) for the plane
    through ``x`` of the given direction.  Both arcs of a pair share
    endpoints, hence one mask.

    At ``omega_z = 0`` and points off the midplane the region degenerates
    to the line orthogonal to the chord direction; slicing at a nonzero
    ``omega_z`` shows the full band whose width grows with |z| -- the
    direction-dependent region the blending stage compensates.
    """
    x = np.asarray(x, dtype=float)
    if math.hypot(x[0], x[1]) >= geom.R:
        raise ConfigError("x must lie inside the trajectory cylinder")
    s = x[1] if direction == "coronal" else x[0]
    plane = plane_of_interest(geom, direction, float(s))
    sig = spectral_signature(geom, plane, x)
    rows, cols = int(shape[0]), int(shape[1])
    wy = 2.0 * np.pi * np.fft.fftfreq(rows, d=spacing)
    wx = 2.0 * np.pi * np.fft.fftfreq(cols, d=spacing)
    scale = np.sqrt(wx[None, :] ** 2 + wy[:, None] ** 2 + omega_z**2)
    scale[scale == 0.0] = 1.0
    dot_minus = (wx[None, :] * sig.d_minus[0] + wy[:, None] * sig.d_minus[1]
                 + omega_z * sig.d_minus[2])
    dot_plus = (wx[None, :] * sig.d_plus[0] + wy[:, None] * sig.d_plus[1]
                + omega_z * sig.d_plus[2])
    return _sgn(dot_minus, scale) == _sgn(dot_plus, scale)
