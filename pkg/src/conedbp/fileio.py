"""Raw + sidecar file formats.

Every array on disk is a raw little-endian float32 payload next to a
plain-text ``.meta`` sidecar, so intermediates stay inspectable with

    od -f volume.raw | head
    cat volume.meta

Layouts:

* volume ``<name>.raw``: x-fastest, then y, then z;
  sidecar keys nx, ny, nz, sx, sy, sz, ox, oy, oz (mm).
* projections ``<name>.raw``: u-fastest, then v, then view;
  sidecar keys nu, nv, nviews, pitch and a ``lambdas`` comma list (rad).
* slice export: 16-bit binary PGM with window/level mapping.

Sidecars are written atomically (temp file + rename) so a crashed run
never leaves a truncated sidecar next to a full payload.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .containers import ProjectionSet, SliceImage, Volume3D
from .errors import FormatError

__all__ = [
    "read_volume",
    "write_volume",
    "read_projections",
    "write_projections",
    "write_dbp_plane",
    "read_dbp_plane",
    "write_slice_pgm",
    "hounsfield",
]

# Display-only mapping: unitless 0 -> air (-1000 HU), 1 -> densest phantom
# material.  Chosen so the binary phantoms span the usual CT number range.
HU_AIR = -1000.0
HU_SCALE = 6108.0


def hounsfield(values):
    """Map unitless attenuation to display Hounsfield units."""
    return HU_AIR + HU_SCALE * np.asarray(values, dtype=np.float64)


def _sidecar_path(path) -> Path:
    return Path(path).with_suffix(".meta")


def _atomic_write_text(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_sidecar(path: Path) -> dict:
    if not path.exists():
        raise FormatError(f"missing sidecar {path}")
    meta = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"malformed sidecar line in {path}: {line!r}")
        key, value = line.split("=", 1)
        meta[key.strip()] = value.strip()
    return meta


def _require(meta: dict, keys, path):
    missing = [k for k in keys if k not in meta]
    if missing:
        raise FormatError(f"sidecar {path} missing keys {missing}")


def write_volume(vol: Volume3D, path) -> None:
    """Write a volume as raw float32 (x-fastest) plus text sidecar."""
    path = Path(path)
    try:
        payload = np.ascontiguousarray(vol.data, dtype="<f4")
        with open(path, "wb") as fh:
            fh.write(payload.tobytes())
        lines = [
            f"nx={vol.nx}",
            f"ny={vol.ny}",
            f"nz={vol.nz}",
            f"sx={vol.spacing[0]!r}",
            f"sy={vol.spacing[1]!r}",
            f"sz={vol.spacing[2]!r}",
            f"ox={vol.origin[0]!r}",
            f"oy={vol.origin[1]!r}",
            f"oz={vol.origin[2]!r}",
        ]
        _atomic_write_text(_sidecar_path(path), "\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"while writing volume to {path}: {exc}") from exc


def read_volume(path) -> Volume3D:
    """Read a volume written by :func:`write_volume`; exact round-trip."""
    path = Path(path)
    meta = _read_sidecar(_sidecar_path(path))
    _require(meta, ["nx", "ny", "nz", "sx", "sy", "sz", "ox", "oy", "oz"], path)
    try:
        nx, ny, nz = int(meta["nx"]), int(meta["ny"]), int(meta["nz"])
        spacing = (float(meta["sx"]), float(meta["sy"]), float(meta["sz"]))
        origin = (float(meta["ox"]), float(meta["oy"]), float(meta["oz"]))
    except ValueError as exc:
        raise FormatError(f"corrupt sidecar values for {path}: {exc}") from exc
    expected = nx * ny * nz * 4
    payload = path.read_bytes()
    if len(payload) != expected:
        raise FormatError(
            f"payload {path} holds {len(payload)} bytes, expected {expected} "
            f"for {nx}x{ny}x{nz} float32"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(nz, ny, nx)
    return Volume3D(nx, ny, nz, spacing, origin, data)


def write_projections(proj: ProjectionSet, path) -> None:
    """Write a projection set: raw float32 (u-fastest) plus sidecar."""
    path = Path(path)
    try:
        payload = np.ascontiguousarray(proj.data, dtype="<f4")
        with open(path, "wb") as fh:
            fh.write(payload.tobytes())
        lam = ",".join(repr(float(v)) for v in proj.lambdas)
        lines = [
            f"nu={proj.nu}",
            f"nv={proj.nv}",
            f"nviews={proj.n_views}",
            f"pitch={proj.pitch!r}",
            f"lambdas={lam}",
        ]
        _atomic_write_text(_sidecar_path(path), "\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"while writing projections to {path}: {exc}") from exc


def read_projections(path) -> ProjectionSet:
    path = Path(path)
    meta = _read_sidecar(_sidecar_path(path))
    _require(meta, ["nu", "nv", "nviews", "pitch", "lambdas"], path)
    try:
        nu, nv, nviews = int(meta["nu"]), int(meta["nv"]), int(meta["nviews"])
        pitch = float(meta["pitch"])
        lambdas = np.array([float(v) for v in meta["lambdas"].split(",")])
    except ValueError as exc:
        raise FormatError(f"corrupt sidecar values for {path}: {exc}") from exc
    expected = nviews * nv * nu * 4
    payload = path.read_bytes()
    if len(payload) != expected:
        raise FormatError(
            f"payload {path} holds {len(payload)} bytes, expected {expected} "
            f"for {nviews}x{nv}x{nu} float32"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(nviews, nv, nu)
    return ProjectionSet(nviews, lambdas, nu, nv, pitch, data)


def write_dbp_plane(dbp, path) -> None:
    """Write a DBP plane: raw float32 g[z, t] (t-fastest) plus sidecar."""
    path = Path(path)
    grid = dbp.grid
    plane = dbp.plane
    payload = np.ascontiguousarray(dbp.g, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(payload.tobytes())
    lines = [
        f"nt={grid.nt}",
        f"nz={grid.nz}",
        f"dt={grid.dt!r}",
        f"dz={grid.dz!r}",
        f"t0={grid.t0!r}",
        f"z0={grid.z0!r}",
        f"direction={plane.direction}",
        f"s={plane.s!r}",
        f"arc={dbp.arc.kind}",
        f"arc_lambda_minus={dbp.arc.lambda_minus!r}",
        f"arc_lambda_plus={dbp.arc.lambda_plus!r}",
    ]
    _atomic_write_text(_sidecar_path(path), "\n".join(lines) + "\n")


def read_dbp_plane(path, geom):
    """Read a DBP plane written by :func:`write_dbp_plane`.

    Needs the scan geometry to rebuild the plane-of-interest frame.
    """
    from .dbp import DbpPlane, PlaneGrid
    from .geometry import ArcSpec, plane_of_interest

    path = Path(path)
    meta = _read_sidecar(_sidecar_path(path))
    _require(meta, ["nt", "nz", "dt", "dz", "t0", "z0", "direction", "s",
                    "arc", "arc_lambda_minus", "arc_lambda_plus"], path)
    try:
        grid = PlaneGrid(
            nt=int(meta["nt"]), nz=int(meta["nz"]),
            dt=float(meta["dt"]), dz=float(meta["dz"]),
            t0=float(meta["t0"]), z0=float(meta["z0"]),
        )
        plane = plane_of_interest(geom, meta["direction"], float(meta["s"]))
        arc = ArcSpec(meta["arc"], float(meta["arc_lambda_minus"]),
                      float(meta["arc_lambda_plus"]))
    except ValueError as exc:
        raise FormatError(f"corrupt sidecar values for {path}: {exc}") from exc
    expected = grid.nz * grid.nt * 4
    payload = path.read_bytes()
    if len(payload) != expected:
        raise FormatError(
            f"payload {path} holds {len(payload)} bytes, expected {expected}"
        )
    g = np.frombuffer(payload, dtype="<f4").reshape(grid.nz, grid.nt)
    return DbpPlane(plane=plane, arc=arc, grid=grid, g=np.asarray(g, dtype=np.float64))


def write_slice_pgm(img: SliceImage, path, window: float = 1.0, level: float = 0.5,
                    hu: bool = False) -> None:
    """Export a slice as 16-bit binary PGM.

    ``window``/``level`` select the displayed value range
    [level - window/2, level + window/2]; values outside are clipped.
    With ``hu=True`` the window/level are interpreted in Hounsfield units
    and the data is converted before mapping.
    """
    if window <= 0:
        raise FormatError(f"window must be positive, got {window}")
    data = np.asarray(img.data, dtype=np.float64)
    if hu:
        data = hounsfield(data)
    lo = level - window / 2.0
    scaled = np.clip((data - lo) / window, 0.0, 1.0)
    pixels = np.round(scaled * 65535.0).astype(">u2")
    path = Path(path)
    header = f"P5\n{img.cols} {img.rows}\n65535\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(pixels.tobytes())
