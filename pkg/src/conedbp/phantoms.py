"""Analytic test objects and their voxelizations.

The disk phantom is a coaxial stack of solid cylinders along z,
alternating disk / gap with equal prominence to cone-beam artifacts at
every height; sphere and box primitives have closed-form chord lengths
and serve as the projector oracle.

Voxelization uses the voxel-center-in-solid rule by default, which keeps
the oracle objects exact and deterministic.  An optional supersampling
factor averages subsamples per voxel for smoother boundaries where a
test wants voxelization noise out of the way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .containers import Volume3D, centered_origin
from .errors import ConfigError, UnsupportedError
from .geometry import ScanGeometry, detector_frame

__all__ = [
    "DiskPhantomSpec",
    "Primitive",
    "make_disk_phantom",
    "make_primitive_volume",
    "analytic_projection",
    "default_grid",
    "DISK_PHANTOM_TABLE",
]

# Published disk-phantom parameter sets (thickness mm, spacing mm, count).
DISK_PHANTOM_TABLE = {
    "a": dict(thickness=10.0, spacing=10.0, n_disks=9),
    "b": dict(thickness=14.0, spacing=14.0, n_disks=7),
    "c": dict(thickness=20.0, spacing=20.0, n_disks=5),
    "d": dict(thickness=16.0, spacing=16.0, n_disks=7),
}


@dataclass(frozen=True)
class DiskPhantomSpec:
    """Stack of coaxial disks along z, symmetric about the midplane."""

    disk_radius: float = 80.0
    thickness: float = 16.0
    spacing: float = 16.0
    n_disks: int = 7
    inside_value: float = 1.0
    outside_value: float = 0.0

    def __post_init__(self):
        if min(self.disk_radius, self.thickness, self.spacing) <= 0:
            raise ConfigError("disk_radius, thickness and spacing must be positive")
        if self.n_disks < 1:
            raise ConfigError(f"n_disks must be >= 1, got {self.n_disks}")

    @property
    def stack_height(self) -> float:
        """Total extent in z: n disks plus n-1 gaps."""
        return self.n_disks * self.thickness + (self.n_disks - 1) * self.spacing

    def disk_intervals(self):
        """(z_low, z_high) of each disk, centered about z = 0."""
        z0 = -self.stack_height / 2.0
        step = self.thickness + self.spacing
        return [
            (z0 + i * step, z0 + i * step + self.thickness)
            for i in range(self.n_disks)
        ]


@dataclass(frozen=True)
class Primitive:
    """Additive solid: sphere, cylinder (axis along z) or axis-aligned box.

    ``size`` means radius for a sphere, (radius, half_height) for a
    cylinder, and half-extents (hx, hy, hz) for a box.
    """

    kind: str
    center: tuple
    size: tuple
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in ("sphere", "cylinder", "box"):
            raise ConfigError(f"unknown primitive kind {self.kind!r}")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        object.__setattr__(self, "size", tuple(float(c) for c in np.atleast_1d(self.size)))
        expected = {"sphere": 1, "cylinder": 2, "box": 3}[self.kind]
        if len(self.size) != expected:
            raise ConfigError(
                f"{self.kind} needs {expected} size parameter(s), got {self.size}"
            )
        if len(self.center) != 3:
            raise ConfigError(f"center must have 3 components, got {self.center}")
        if any(v <= 0 for v in self.size):
            raise ConfigError(f"size parameters must be positive, got {self.size}")


def default_grid(n: int = 256, spacing: float = 1.0) -> Volume3D:
    """Empty isocenter-centered cube; 256^3 at 1 mm holds every published
    disk-phantom configuration with margin."""
    return Volume3D(n, n, n, (spacing, spacing, spacing))


def _grid_coords(grid: Volume3D, supersample: int):
    """Per-axis sample coordinates, optionally supersampled within voxels."""
    coords = []
    for axis in range(3):
        base = grid.axis_coords(axis)
        if supersample == 1:
            coords.append(base)
        else:
            step = grid.spacing[axis]
            offs = (np.arange(supersample) + 0.5) / supersample - 0.5
            coords.append((base[:, None] + offs[None, :] * step).ravel())
    return coords


def _inside(prim: Primitive, x, y, z):
    cx, cy, cz = prim.center
    if prim.kind == "sphere":
        r = prim.size[0]
        return (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2 <= r * r
    if prim.kind == "cylinder":
        r, hh = prim.size
        return ((x - cx) ** 2 + (y - cy) ** 2 <= r * r) & (np.abs(z - cz) <= hh)
    hx, hy, hz = prim.size
    return (np.abs(x - cx) <= hx) & (np.abs(y - cy) <= hy) & (np.abs(z - cz) <= hz)


def make_primitive_volume(prims, grid: Volume3D, supersample: int = 1) -> Volume3D:
    """Voxelize primitives additively onto the grid of ``grid``.

    With ``supersample=1`` a voxel gets a primitive's full value iff its
    center lies in the solid; larger factors average supersample^3
    subsamples per voxel (partial-volume boundaries).
    """
    supersample = int(supersample)
    if supersample < 1:
        raise ConfigError("supersample must be >= 1")
    xs, ys, zs = _grid_coords(grid, supersample)
    nzs, nys, nxs = zs.size, ys.size, xs.size
    acc = np.zeros((nzs, nys, nxs), dtype=np.float64)
    x = xs[None, None, :]
    y = ys[None, :, None]
    z = zs[:, None, None]
    for prim in prims:
        acc += prim.value * _inside(prim, x, y, z)
    if supersample > 1:
        k = supersample
        acc = acc.reshape(grid.nz, k, grid.ny, k, grid.nx, k).mean(axis=(1, 3, 5))
    return grid.with_data(acc.astype(np.float32))


def make_disk_phantom(spec: DiskPhantomSpec, grid: Volume3D) -> Volume3D:
    """Voxelize a disk phantom; disks are coaxial cylinders along z.

    Raises if the stack does not fit inside the grid's z extent.
    """
    zs = grid.axis_coords(2)
    z_lo = zs[0] - grid.spacing[2] / 2.0
    z_hi = zs[-1] + grid.spacing[2] / 2.0
    if spec.stack_height > (z_hi - z_lo) + 1e-9:
        raise ConfigError(
            f"disk stack height {spec.stack_height} mm exceeds grid z extent "
            f"{z_hi - z_lo} mm"
        )
    xs = grid.axis_coords(0)
    ys = grid.axis_coords(1)
    in_circle = (
        xs[None, :] ** 2 + ys[:, None] ** 2 <= spec.disk_radius ** 2
    )
    in_disk_z = np.zeros(zs.size, dtype=bool)
    for lo, hi in spec.disk_intervals():
        in_disk_z |= (zs >= lo) & (zs <= hi)
    data = np.full((grid.nz, grid.ny, grid.nx), spec.outside_value, dtype=np.float32)
    inside = in_disk_z[:, None, None] & in_circle[None, :, :]
    data[inside] = spec.inside_value
    return grid.with_data(data)


def _ray_through_cell(geom: ScanGeometry, lam: float, u: float, v: float):
    """Source point and unit direction of the ray through detector (u, v) mm."""
    src, center, e_u, e_v = detector_frame(geom, lam)
    target = center + u * e_u + v * e_v
    direction = target - src
    direction /= np.linalg.norm(direction)
    return src, direction


def _sphere_chord(prim: Primitive, src, direction):
    r = prim.size[0]
    rel = src - np.asarray(prim.center)
    b = float(rel @ direction)
    disc = b * b - float(rel @ rel) + r * r
    if disc <= 0.0:
        return 0.0
    return 2.0 * math.sqrt(disc)


def _box_chord(prim: Primitive, src, direction):
    # Slab intersection; chord = max(0, t_exit - t_entry).
    t0, t1 = -math.inf, math.inf
    for axis in range(3):
        half = prim.size[axis]
        lo = prim.center[axis] - half
        hi = prim.center[axis] + half
        d = direction[axis]
        o = src[axis]
        if abs(d) < 1e-300:
            if o < lo or o > hi:
                return 0.0
            continue
        ta, tb = (lo - o) / d, (hi - o) / d
        t0 = max(t0, min(ta, tb))
        t1 = min(t1, max(ta, tb))
    return max(0.0, t1 - t0)


def analytic_projection(prims, geom: ScanGeometry, lam: float, u: float, v: float) -> float:
    """Exact line integral through detector cell (u, v) mm at view ``lam``.

    Closed-form chords exist for spheres and boxes only; these are the
    oracle objects for the numerical projector.
    """
    src, direction = _ray_through_cell(geom, lam, u, v)
    total = 0.0
    for prim in prims:
        if prim.kind == "sphere":
            total += prim.value * _sphere_chord(prim, src, direction)
        elif prim.kind == "box":
            total += prim.value * _box_chord(prim, src, direction)
        else:
            raise UnsupportedError(
                f"no closed-form chord for primitive kind {prim.kind!r}"
            )
    return total
