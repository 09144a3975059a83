"""Circular-trajectory scan geometry and the per-plane chord coordinates.

The source travels on ``a(lam) = (R cos lam, R sin lam, 0)``.  A flat
detector of ``nv`` rows by ``nu`` columns sits at distance ``D`` from the
source, centered on the source-isocenter ray; its u-axis is parallel to
the trajectory tangent and its v-axis to the world z-axis.

A *plane of interest* is a vertical plane (parallel to z) that cuts the
trajectory at two angles.  Everything downstream works in its chord
coordinates (t, s, z):

* ``e``       unit vector from ``a(lambda_minus)`` to ``a(lambda_plus)``
* ``e_z``     world z
* ``e_perp``  ``e_z x e`` (the triple {e, e_perp, e_z} is right-handed)

``lambda_minus < lambda_plus`` are the wrapped intersection angles in
ascending order.  The chord midpoint of the plane (its foot point) is
``s * n`` with ``n`` the +y axis for coronal planes (y = s) and +x for
sagittal planes (x = s); ``world_from_chord`` anchors at that foot point
so the returned points satisfy the plane equation for signed ``s``.

Arc naming: the ``short`` arc is the wrapped interval
``[lambda_minus, lambda_plus]``; ``complement`` is the rest of the
circle.  The two partition [0, 2*pi) up to endpoints, and at s = 0 the
short arc midpoint lands at pi/2 (coronal) and pi (sagittal).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .containers import Volume3D
from .errors import ConfigError, NoIntersectionError

__all__ = [
    "ScanGeometry",
    "ArcSpec",
    "PlaneOfInterest",
    "source_position",
    "virtual_source",
    "plane_of_interest",
    "world_from_chord",
    "chord_from_world",
    "planes_for_volume",
    "geometry_preset",
    "GEOMETRY_PRESETS",
]

DIRECTIONS = ("coronal", "sagittal")
ARC_KINDS = ("short", "complement", "full")

# Cone-angle declarations must agree with the detector extent this closely.
CONE_ANGLE_TOL_DEG = 0.1


@dataclass(frozen=True)
class ScanGeometry:
    """Circular cone-beam acquisition description.

    R : mm, source-to-isocenter distance
    D : mm, source-to-detector distance
    nu, nv : detector columns / rows
    pitch : mm per detector cell (square cells)
    n_views : number of views over the full circle
    """

    R: float
    D: float
    nu: int
    nv: int
    pitch: float
    n_views: int

    def __post_init__(self):
        if not 0 < self.R < self.D:
            raise ConfigError(f"need 0 < R < D, got R={self.R}, D={self.D}")
        if min(self.nu, self.nv, self.n_views) < 1:
            raise ConfigError("nu, nv and n_views must all be >= 1")
        if self.pitch <= 0:
            raise ConfigError(f"pitch must be positive, got {self.pitch}")

    @property
    def half_cone_angle_deg(self) -> float:
        """Half-angle subtended by the detector's axial extent at the source."""
        return math.degrees(math.atan(self.nv * self.pitch / 2.0 / self.D))

    @property
    def fov_radius(self) -> float:
        """Radius (mm) of the fully sampled cylinder at the isocenter."""
        return self.nu * self.pitch / 2.0 * self.R / self.D

    @property
    def fov_half_height(self) -> float:
        """Axial half-extent (mm) covered at the isocenter."""
        return self.nv * self.pitch / 2.0 * self.R / self.D

    def check_cone_angle(self, declared_half_deg: float) -> None:
        """Validate a user-declared half cone angle against the detector."""
        got = self.half_cone_angle_deg
        if abs(got - declared_half_deg) > CONE_ANGLE_TOL_DEG:
            raise ConfigError(
                f"declared half cone angle {declared_half_deg:.3f} deg does not match "
                f"detector geometry ({got:.3f} deg)"
            )

    def lambdas(self) -> np.ndarray:
        """Full-circle view angles, uniform in [0, 2*pi), endpoint excluded."""
        return np.arange(self.n_views) * (2.0 * np.pi / self.n_views)

    def crop_rows(self, half_angle_deg: float) -> "ScanGeometry":
        """Geometry with detector rows cropped to the requested half cone angle."""
        if half_angle_deg <= 0:
            raise ConfigError("half_angle_deg must be positive")
        if half_angle_deg > self.half_cone_angle_deg + CONE_ANGLE_TOL_DEG:
            raise ConfigError(
                f"requested half angle {half_angle_deg} deg exceeds detector maximum "
                f"{self.half_cone_angle_deg:.3f} deg"
            )
        half_height = self.D * math.tan(math.radians(half_angle_deg))
        nv = min(self.nv, 2 * int(round(half_height / self.pitch)))
        nv = max(nv, 2)
        return ScanGeometry(self.R, self.D, self.nu, nv, self.pitch, self.n_views)


@dataclass(frozen=True)
class ArcSpec:
    """A trajectory segment.  Angles are wrapped; ``lambda_plus`` may exceed
    2*pi to express an interval crossing the branch cut."""

    kind: str
    lambda_minus: float
    lambda_plus: float

    def __post_init__(self):
        if self.kind not in ARC_KINDS:
            raise ConfigError(f"arc kind must be one of {ARC_KINDS}, got {self.kind!r}")
        if self.kind != "full" and not self.lambda_minus < self.lambda_plus:
            raise ConfigError("arc needs lambda_minus < lambda_plus")

    @classmethod
    def full_circle(cls) -> "ArcSpec":
        return cls("full", 0.0, 2.0 * math.pi)

    @property
    def length(self) -> float:
        return self.lambda_plus - self.lambda_minus

    def contains(self, lam: np.ndarray) -> np.ndarray:
        """Membership mask for wrapped angles ``lam`` in [0, 2*pi)."""
        lam = np.asarray(lam, dtype=float)
        if self.kind == "full":
            return np.ones(lam.shape, dtype=bool)
        two_pi = 2.0 * math.pi
        unwrapped = np.where(lam < self.lambda_minus - 1e-12, lam + two_pi, lam)
        return (unwrapped >= self.lambda_minus - 1e-12) & (
            unwrapped <= self.lambda_plus + 1e-12
        )


@dataclass(frozen=True)
class PlaneOfInterest:
    """One factorization plane: orientation, arc endpoints, chord basis."""

    direction: str
    s: float
    lambda_minus: float
    lambda_plus: float
    e: np.ndarray
    e_perp: np.ndarray
    e_z: np.ndarray
    foot: np.ndarray        # s * n, the on-plane anchor of the chord frame
    half_chord: float       # |a(lambda_plus) - a(lambda_minus)| / 2
    t_range: tuple = None   # mm extents, filled in when bound to a volume/FOV
    z_range: tuple = None

    @property
    def short_arc(self) -> ArcSpec:
        return ArcSpec("short", self.lambda_minus, self.lambda_plus)

    @property
    def complement_arc(self) -> ArcSpec:
        return ArcSpec("complement", self.lambda_plus, self.lambda_minus + 2.0 * math.pi)

    def arc(self, kind: str) -> ArcSpec:
        if kind == "short":
            return self.short_arc
        if kind == "complement":
            return self.complement_arc
        if kind == "full":
            return ArcSpec.full_circle()
        raise ConfigError(f"unknown arc kind {kind!r}")


def source_position(geom: ScanGeometry, lam) -> np.ndarray:
    """Source position a(lam) = (R cos lam, R sin lam, 0); lam wraps mod 2*pi."""
    lam = np.asarray(lam, dtype=float)
    pos = np.stack(
        [geom.R * np.cos(lam), geom.R * np.sin(lam), np.zeros_like(lam)], axis=-1
    )
    return pos


def virtual_source(geom: ScanGeometry, lam, z: float) -> np.ndarray:
    """Source position lifted by z along the world z-axis."""
    pos = source_position(geom, lam)
    pos[..., 2] += z
    return pos


def detector_frame(geom: ScanGeometry, lam: float):
    """Detector center and in-plane axes (e_u, e_v) for one view.

    The detector center sits on the far side of the isocenter:
    ``a(lam) - D * r_hat`` with ``r_hat = (cos lam, sin lam, 0)``.
    e_u is the trajectory tangent, e_v the world z-axis.
    """
    c, s = math.cos(lam), math.sin(lam)
    src = np.array([geom.R * c, geom.R * s, 0.0])
    center = np.array([(geom.R - geom.D) * c, (geom.R - geom.D) * s, 0.0])
    e_u = np.array([-s, c, 0.0])
    e_v = np.array([0.0, 0.0, 1.0])
    return src, center, e_u, e_v


def plane_of_interest(geom: ScanGeometry, direction: str, s: float) -> PlaneOfInterest:
    """Construct the plane y = s (coronal) or x = s (sagittal).

    The plane must genuinely cut the trajectory: |s| < R.  Intersection
    angles are wrapped into [0, 2*pi) and sorted ascending.
    """
    if direction not in DIRECTIONS:
        raise ConfigError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    s = float(s)
    if not abs(s) < geom.R:
        raise NoIntersectionError(
            f"plane offset |s| = {abs(s)} must be < R = {geom.R} to cut the trajectory"
        )
    two_pi = 2.0 * math.pi
    if direction == "coronal":
        # R sin(lam) = s
        base = math.asin(s / geom.R)
        angles = sorted(((base % two_pi), ((math.pi - base) % two_pi)))
        normal = np.array([0.0, 1.0, 0.0])
    else:
        # R cos(lam) = s
        base = math.acos(s / geom.R)
        angles = sorted((base % two_pi, (-base) % two_pi))
        normal = np.array([1.0, 0.0, 0.0])
    lam_minus, lam_plus = float(angles[0]), float(angles[1])
    a_minus = source_position(geom, lam_minus)
    a_plus = source_position(geom, lam_plus)
    chord = a_plus - a_minus
    half_chord = float(np.linalg.norm(chord)) / 2.0
    e = chord / (2.0 * half_chord)
    e_z = np.array([0.0, 0.0, 1.0])
    e_perp = np.cross(e_z, e)
    foot = s * normal
    return PlaneOfInterest(
        direction=direction,
        s=s,
        lambda_minus=lam_minus,
        lambda_plus=lam_plus,
        e=e,
        e_perp=e_perp,
        e_z=e_z,
        foot=foot,
        half_chord=half_chord,
        t_range=(-geom.fov_radius, geom.fov_radius),
        z_range=(-geom.fov_half_height, geom.fov_half_height),
    )


def world_from_chord(plane: PlaneOfInterest, t, z) -> np.ndarray:
    """Map chord coordinates (t, z) on the plane to world mm.

    Anchored at the plane's foot point, i.e. the e_perp term is scaled so
    points land on the plane with signed offset exactly ``s``.
    """
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=float)
    return (
        plane.foot
        + t[..., None] * plane.e
        + z[..., None] * plane.e_z
    )


def chord_from_world(plane: PlaneOfInterest, x) -> tuple:
    """Inverse of :func:`world_from_chord` for points on the plane."""
    x = np.asarray(x, dtype=float)
    rel = x - plane.foot
    return rel @ plane.e, rel @ plane.e_z


def planes_for_volume(geom: ScanGeometry, direction: str, vol: Volume3D):
    """One plane per voxel row of the volume, in index order.

    Coronal planes sweep the y rows, sagittal planes the x columns, so
    deconvolved planes reassemble into the voxel grid with no
    interpolation.  Returns a list of (row_index, PlaneOfInterest).
    """
    if direction not in DIRECTIONS:
        raise ConfigError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    axis = 1 if direction == "coronal" else 0
    coords = vol.axis_coords(axis)
    out = []
    for idx, s in enumerate(coords):
        if abs(s) >= geom.R:
            raise NoIntersectionError(
                f"voxel row {idx} at {s} mm lies outside the trajectory radius"
            )
        out.append((idx, plane_of_interest(geom, direction, float(s))))
    return out


GEOMETRY_PRESETS = {
    # Simulation geometry: 1440^2 detector at 1 mm pitch, 1200 views,
    # R = 500 mm, D = 1000 mm; declared half cone angle 35.8 deg.
    "aapm-sim": dict(R=500.0, D=1000.0, nu=1440, nv=1440, pitch=1.0, n_views=1200,
                     declared_half_cone_deg=35.8),
    # Bench scanner: 1024^2 detector at 0.4 mm pitch, 360 views,
    # R = 1700 mm, D = 2250 mm; the vendor quotes the full cone angle
    # (10.32 deg), so the declared half angle is 5.16 deg.
    "head-real": dict(R=1700.0, D=2250.0, nu=1024, nv=1024, pitch=0.4, n_views=360,
                      declared_half_cone_deg=5.16),
    # Laptop-sized default used by the pipeline: proportional to aapm-sim
    # with ~4x coarser sampling.
    "desk": dict(R=500.0, D=1000.0, nu=256, nv=256, pitch=2.0, n_views=360,
                 declared_half_cone_deg=None),
    # Further reduced geometry for parameter sweeps.  The angular sampling
    # stays dense because the strength of the plane-by-plane route is
    # second order in the view spacing.
    "desk-small": dict(R=500.0, D=1000.0, nu=128, nv=128, pitch=4.0, n_views=360,
                       declared_half_cone_deg=None),
}


def geometry_preset(name: str) -> ScanGeometry:
    """Look up a named geometry preset."""
    if name not in GEOMETRY_PRESETS:
        raise ConfigError(
            f"unknown geometry preset {name!r}; available: {sorted(GEOMETRY_PRESETS)}"
        )
    spec = dict(GEOMETRY_PRESETS[name])
    declared = spec.pop("declared_half_cone_deg")
    geom = ScanGeometry(**spec)
    if declared is not None:
        geom.check_cone_angle(declared)
    return geom
