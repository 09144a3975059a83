"""Voxel and projection containers shared by every stage of the pipeline.

Conventions fixed here and relied on everywhere else:

* World coordinates are in mm, isocenter at (0, 0, 0).  The voxel center
  of index (i, j, k) sits at ``origin + (i, j, k) * spacing`` where i, j, k
  run along x, y, z.
* ``Volume3D.data`` is stored as a C-contiguous array of shape
  (nz, ny, nx), i.e. x varies fastest in memory.  That matches the raw
  file layout (x-fastest, then y, then z).
* ``ProjectionSet.data`` has shape (n_views, nv, nu): detector column u
  fastest, then row v, then view.
* Attenuation values are unitless; Hounsfield mapping is applied only at
  slice export time.

Containers are treated as immutable once constructed: the payload array
is marked read-only so concurrent readers can share it safely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, ConfigError

__all__ = ["Volume3D", "ProjectionSet", "SliceImage", "extract_slice", "centered_origin"]


def centered_origin(shape_xyz, spacing_xyz):
    """Origin that puts the volume center at the isocenter.

    ``shape_xyz`` is (nx, ny, nz); ``spacing_xyz`` mm per voxel per axis.
    """
    n = np.asarray(shape_xyz, dtype=float)
    s = np.asarray(spacing_xyz, dtype=float)
    return tuple(float(v) for v in -(n - 1.0) / 2.0 * s)


def _as_triple(value, name):
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.size == 1:
        arr = np.repeat(arr, 3)
    if arr.size != 3:
        raise ConfigError(f"{name} must be a scalar or length-3 sequence, got {value!r}")
    return tuple(float(v) for v in arr)


@dataclass
class Volume3D:
    """Regular voxel grid of attenuation values with physical placement.

    Parameters
    ----------
    nx, ny, nz : int
        Grid size along x, y, z.
    spacing : tuple of float
        mm per voxel along each axis (scalar allowed).
    origin : tuple of float
        mm offset of the center of voxel (0, 0, 0) from the isocenter.
    data : ndarray, shape (nz, ny, nx)
        Attenuation per voxel, finite, any real dtype.
    """

    nx: int
    ny: int
    nz: int
    spacing: tuple = (1.0, 1.0, 1.0)
    origin: tuple = None
    data: np.ndarray = None

    def __post_init__(self):
        for name in ("nx", "ny", "nz"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
            setattr(self, name, int(v))
        self.spacing = _as_triple(self.spacing, "spacing")
        if any(s <= 0 for s in self.spacing):
            raise ConfigError(f"spacing must be positive, got {self.spacing}")
        if self.origin is None:
            self.origin = centered_origin((self.nx, self.ny, self.nz), self.spacing)
        else:
            self.origin = _as_triple(self.origin, "origin")
        if self.data is None:
            self.data = np.zeros((self.nz, self.ny, self.nx), dtype=np.float32)
        self.data = np.ascontiguousarray(self.data)
        if self.data.shape != (self.nz, self.ny, self.nx):
            raise ConfigError(
                f"data shape {self.data.shape} does not match (nz, ny, nx) = "
                f"{(self.nz, self.ny, self.nx)}"
            )
        if not np.all(np.isfinite(self.data)):
            raise ConfigError("volume data contains non-finite values")
        self.data.flags.writeable = False

    @property
    def shape_xyz(self):
        return (self.nx, self.ny, self.nz)

    def voxel_center(self, i, j, k):
        """World coordinates (mm) of the center of voxel (i, j, k)."""
        return np.array(
            [
                self.origin[0] + i * self.spacing[0],
                self.origin[1] + j * self.spacing[1],
                self.origin[2] + k * self.spacing[2],
            ]
        )

    def axis_coords(self, axis: int) -> np.ndarray:
        """Voxel-center coordinates along one axis (0=x, 1=y, 2=z)."""
        n = (self.nx, self.ny, self.nz)[axis]
        return self.origin[axis] + self.spacing[axis] * np.arange(n)

    def with_data(self, data) -> "Volume3D":
        """Same grid, new payload."""
        return Volume3D(self.nx, self.ny, self.nz, self.spacing, self.origin, np.asarray(data))


@dataclass
class ProjectionSet:
    """Per-view 2-D detector arrays tied to source angles.

    ``lambdas`` are the source angles in radians, strictly increasing in
    [0, 2*pi).  ``data`` has shape (n_views, nv, nu) and holds line
    integrals (mm * attenuation); values may go negative only after
    noise injection.
    """

    n_views: int
    lambdas: np.ndarray
    nu: int
    nv: int
    pitch: float
    data: np.ndarray = None

    def __post_init__(self):
        self.n_views = int(self.n_views)
        self.nu = int(self.nu)
        self.nv = int(self.nv)
        self.pitch = float(self.pitch)
        if min(self.n_views, self.nu, self.nv) < 1:
            raise ConfigError("n_views, nu, nv must all be >= 1")
        if self.pitch <= 0:
            raise ConfigError(f"pitch must be positive, got {self.pitch}")
        self.lambdas = np.ascontiguousarray(np.asarray(self.lambdas, dtype=np.float64))
        if self.lambdas.shape != (self.n_views,):
            raise ConfigError(
                f"lambdas length {self.lambdas.size} != n_views {self.n_views}"
            )
        if not np.all(np.isfinite(self.lambdas)):
            raise ConfigError("lambdas contain non-finite values")
        if np.any(self.lambdas < 0) or np.any(self.lambdas >= 2 * np.pi):
            raise ConfigError("lambdas must lie in [0, 2*pi)")
        if self.n_views > 1 and np.any(np.diff(self.lambdas) <= 0):
            raise ConfigError("lambdas must be strictly increasing")
        if self.data is None:
            self.data = np.zeros((self.n_views, self.nv, self.nu), dtype=np.float64)
        self.data = np.ascontiguousarray(self.data)
        if self.data.shape != (self.n_views, self.nv, self.nu):
            raise ConfigError(
                f"data shape {self.data.shape} does not match (n_views, nv, nu) = "
                f"{(self.n_views, self.nv, self.nu)}"
            )
        if not np.all(np.isfinite(self.data)):
            raise ConfigError("projection data contains non-finite values")
        self.data.flags.writeable = False

    def with_data(self, data) -> "ProjectionSet":
        return ProjectionSet(self.n_views, self.lambdas, self.nu, self.nv, self.pitch,
                             np.asarray(data))


@dataclass
class SliceImage:
    """A 2-D slice pulled out of a volume, with its in-plane pixel spacing."""

    rows: int
    cols: int
    spacing: float
    data: np.ndarray = None

    def __post_init__(self):
        self.rows = int(self.rows)
        self.cols = int(self.cols)
        if min(self.rows, self.cols) < 1:
            raise ConfigError("rows and cols must be >= 1")
        self.spacing = float(self.spacing)
        if self.data is None:
            self.data = np.zeros((self.rows, self.cols), dtype=np.float32)
        self.data = np.ascontiguousarray(self.data)
        if self.data.shape != (self.rows, self.cols):
            raise ConfigError(
                f"data shape {self.data.shape} does not match (rows, cols) = "
                f"{(self.rows, self.cols)}"
            )


_AXES = {"axial": 2, "coronal": 1, "sagittal": 0}


def extract_slice(vol: Volume3D, axis: str, index: int) -> SliceImage:
    """Pull one slice out of a volume as an independent copy.

    Orientations (row index varies slowest):

    * ``axial``    -- fixed z: rows = y, cols = x
    * ``coronal``  -- fixed y: rows = z, cols = x
    * ``sagittal`` -- fixed x: rows = z, cols = y
    """
    if axis not in _AXES:
        raise ConfigError(f"axis must be one of {sorted(_AXES)}, got {axis!r}")
    ax = _AXES[axis]
    n = vol.shape_xyz[ax]
    index = int(index)
    if not 0 <= index < n:
        raise BoundsError(f"{axis} index {index} out of range [0, {n})")
    if axis == "axial":
        plane = vol.data[index, :, :]
        spacing = vol.spacing[0]
    elif axis == "coronal":
        plane = vol.data[:, index, :]
        spacing = vol.spacing[0]
    else:
        plane = vol.data[:, :, index]
        spacing = vol.spacing[1]
    plane = np.array(plane, copy=True)
    return SliceImage(plane.shape[0], plane.shape[1], spacing, plane)
