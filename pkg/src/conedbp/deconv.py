"""Per-plane inversion: recover f(t, z) from arc DBP measurements.

On a plane whose chord meets the trajectory at t = -c and t = +c, the
DBP of an arc couples the plane image along the two pencils of lines
through those endpoints, blurred by a discrete Hilbert kernel along t:

    g(t, z) = sign * pi * sum_tau h[t - tau] (f(tau, z1) + f(tau, z2))

with z1(tau) = z (tau + c)/(t + c) and z2(tau) = z (tau - c)/(t - c) the
heights where the lines through (t, z) and the chord endpoints cross
column tau.  The short arc carries sign -1 and its complement +1 (they
share endpoints, so their ideal responses differ only by sign); feeding
both measurements to one least-squares system is what makes the
inversion noticeably better conditioned than a single arc.

``deconvolve_plane`` solves the stacked system with Tikhonov (CG on the
normal equations) or anisotropic-TV (proximal gradient) regularization.
``reg_weight`` is relative to the estimated spectral norm of A^T A, since
the useful range scales with the operator.  An external command can be
plugged in instead of the built-in solvers via ``external_deconvolve``.
"""

from __future__ import annotations

import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import _kernels
from ._tv import tv_prox, tv_value
from .containers import Volume3D
from .dbp import DbpPlane, PlaneGrid
from .errors import (
    AssemblyError,
    ConfigError,
    DegenerateSystemError,
    SolverFailureError,
)
from .geometry import ArcSpec, PlaneOfInterest, ScanGeometry

__all__ = [
    "hilbert_kernel",
    "hilbert_taps",
    "apply_hilbert",
    "PlaneSystem",
    "DeconvConfig",
    "DeconvolvedPlane",
    "build_plane_system",
    "deconvolve_plane",
    "deconvolve_planes",
    "assemble_volume",
    "extract_plane_image",
    "external_deconvolve",
]

ARC_SIGN = {"short": -1.0, "complement": 1.0}


def hilbert_kernel(n):
    """Band-limited discrete Hilbert tap: h[n] = (1 - cos(pi n))/(pi n), h[0] = 0.

    Zero at even n, 2/(pi n) at odd n; applying the full kernel twice
    negates a band-limited signal.
    """
    n = np.asarray(n, dtype=np.float64)
    out = np.zeros_like(n)
    nz = n != 0
    out[nz] = (1.0 - np.cos(np.pi * n[nz])) / (np.pi * n[nz])
    return out if out.ndim else float(out)


def hilbert_taps(n_max: int, taper_frac: float = 0.1) -> np.ndarray:
    """Taps for offsets -n_max..n_max with a raised-cosine tail taper.

    The taper covers the outermost ``taper_frac`` of the support and
    suppresses truncation ripple without touching the passband.
    """
    if n_max < 1:
        raise ConfigError("n_max must be >= 1")
    offs = np.arange(-n_max, n_max + 1)
    h = hilbert_kernel(offs)
    k0 = (1.0 - taper_frac) * n_max
    k = np.abs(offs)
    ramp = k > k0
    w = np.ones(offs.size)
    if np.any(ramp) and n_max > k0:
        w[ramp] = 0.5 * (1.0 + np.cos(np.pi * (k[ramp] - k0) / (n_max - k0)))
    return h * w


def apply_hilbert(x: np.ndarray, axis: int = -1, taper_frac: float = 0.1) -> np.ndarray:
    """Discrete Hilbert transform along ``axis`` with full-width taps."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[axis]
    taps = hilbert_taps(n, taper_frac)
    x_moved = np.moveaxis(x, axis, -1)
    pad = np.zeros(x_moved.shape[:-1] + (3 * n,), dtype=np.float64)
    pad[..., n : 2 * n] = x_moved
    spec = np.fft.rfft(pad, axis=-1)
    kern = np.zeros(3 * n)
    kern[: n + 1] = taps[n:]
    kern[-n:] = taps[:n]
    out = np.fft.irfft(spec * np.fft.rfft(kern), n=3 * n, axis=-1)[..., n : 2 * n]
    return np.moveaxis(out, -1, axis)


@dataclass
class _CsrOp:
    """CSR matrix with a numba row-parallel matvec."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    shape: tuple

    @classmethod
    def from_scipy(cls, m: sp.csr_matrix) -> "_CsrOp":
        return cls(
            indptr=np.ascontiguousarray(m.indptr, dtype=np.int64),
            indices=np.ascontiguousarray(m.indices, dtype=np.int64),
            data=np.ascontiguousarray(m.data, dtype=np.float64),
            shape=m.shape,
        )

    def matvec(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(self.shape[0], dtype=np.float64)
        _kernels.csr_matvec(self.indptr, self.indices, self.data,
                            np.ascontiguousarray(x, dtype=np.float64), out)
        return out

    def matmat(self, x: np.ndarray) -> np.ndarray:
        out = np.empty((self.shape[0], x.shape[1]), dtype=np.float64)
        _kernels.csr_matmat(self.indptr, self.indices, self.data,
                            np.ascontiguousarray(x, dtype=np.float64), out)
        return out


@dataclass
class PlaneSystem:
    """Forward model of one plane for one or two arcs.

    Both arc blocks share the same magnitude ``pi * M`` and differ only
    by sign, so the system is stored once with per-arc signs; ``operator``
    materializes the stacked sparse map when a caller wants the literal
    rows.

    ``fit_mask`` flags the grid points whose measured DBP is trustworthy
    (inside the detector's coverage); the solvers weight the data term
    with it.  The forward model itself is never masked.
    """

    plane: PlaneOfInterest
    arcs: tuple
    grid: PlaneGrid
    matrix: sp.csr_matrix           # pi * M, maps f (nt*nz) to one g block
    signs: np.ndarray               # per-arc sign applied to the block
    fit_mask: np.ndarray = None     # (nz, nt) bool, default all true

    _fwd: _CsrOp = field(init=False, repr=False)
    _adj: _CsrOp = field(init=False, repr=False)
    _norm: float = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if not 1 <= len(self.arcs) <= 2:
            raise ConfigError("PlaneSystem supports 1 or 2 arcs")
        if not np.all(np.isfinite(self.matrix.data)):
            raise DegenerateSystemError("plane system contains non-finite coefficients")
        if self.fit_mask is None:
            self.fit_mask = np.ones((self.grid.nz, self.grid.nt), dtype=bool)
        self.fit_mask = np.ascontiguousarray(self.fit_mask, dtype=bool)
        if self.fit_mask.shape != (self.grid.nz, self.grid.nt):
            raise ConfigError("fit_mask shape does not match the grid")
        self._w = self.fit_mask.ravel().astype(np.float64)
        self._fwd = _CsrOp.from_scipy(self.matrix)
        self._adj = _CsrOp.from_scipy(self.matrix.T.tocsr())

    @property
    def n_unknowns(self) -> int:
        return self.grid.nt * self.grid.nz

    @property
    def n_rows(self) -> int:
        return len(self.arcs) * self.n_unknowns

    @property
    def operator(self) -> sp.csr_matrix:
        """The stacked sparse map (one block of rows per arc)."""
        return sp.vstack([float(s) * self.matrix for s in self.signs]).tocsr()

    def apply(self, f: np.ndarray) -> np.ndarray:
        """A @ f, stacked over arcs; f flattened (iz * nt + it) order."""
        base = self._fwd.matvec(np.ravel(f))
        return np.concatenate([s * base for s in self.signs])

    def apply_adjoint(self, g: np.ndarray, masked: bool = False) -> np.ndarray:
        g = np.ravel(g)
        n = self.n_unknowns
        acc = np.zeros(n, dtype=np.float64)
        for i, s in enumerate(self.signs):
            block = g[i * n : (i + 1) * n]
            if masked:
                block = block * self._w
            acc += s * self._adj.matvec(block)
        return acc

    def normal_apply(self, f: np.ndarray) -> np.ndarray:
        """(A^T W A) f = n_arcs * (pi M)^T W (pi M) f with W the fit mask."""
        return len(self.arcs) * self._adj.matvec(self._w * self._fwd.matvec(f))

    def apply_block(self, f_block: np.ndarray) -> np.ndarray:
        """A @ F for a dense block of unknowns (n_unknowns, k)."""
        base = self._fwd.matmat(f_block)
        return np.concatenate([s * base for s in self.signs], axis=0)

    def apply_adjoint_block(self, g_block: np.ndarray, masked: bool = False) -> np.ndarray:
        n = self.n_unknowns
        acc = np.zeros((n, g_block.shape[1]), dtype=np.float64)
        for i, s in enumerate(self.signs):
            block = g_block[i * n : (i + 1) * n]
            if masked:
                block = block * self._w[:, None]
            acc += s * self._adj.matmat(block)
        return acc

    def normal_apply_block(self, f_block: np.ndarray) -> np.ndarray:
        return len(self.arcs) * self._adj.matmat(
            self._w[:, None] * self._fwd.matmat(f_block)
        )

    def normal_norm_estimate(self, n_iter: int = 20) -> float:
        """Spectral norm of A^T A by power iteration (deterministic start).

        Cached: the estimate is reused across the planes sharing this
        system.
        """
        if self._norm is not None:
            return self._norm
        v = np.ones(self.n_unknowns, dtype=np.float64)
        v /= np.linalg.norm(v)
        lam = 1.0
        for _ in range(n_iter):
            w = self.normal_apply(v)
            lam = float(np.linalg.norm(w))
            if lam == 0.0:
                break
            v = w / lam
        self._norm = lam
        return lam


@dataclass(frozen=True)
class DeconvConfig:
    """regularizer: 'tikhonov' or 'tv'; reg_weight is relative to the
    spectral norm of A^T A; cg_tol is a relative residual target."""

    regularizer: str = "tikhonov"
    reg_weight: float = 1e-3
    max_iter: int = 150
    cg_tol: float = 1e-8

    def __post_init__(self):
        if self.regularizer not in ("tikhonov", "tv"):
            raise ConfigError(f"unknown regularizer {self.regularizer!r}")
        if self.reg_weight <= 0:
            raise ConfigError(f"reg_weight must be positive, got {self.reg_weight}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")


def build_plane_system(geom: ScanGeometry, plane: PlaneOfInterest, arcs,
                       grid: PlaneGrid, taper_frac: float = 0.1,
                       fit_mask: np.ndarray = None) -> PlaneSystem:
    """Assemble the sparse per-plane forward model on ``grid``.

    Row (iz, it) couples, per Hilbert tap tau, the plane image linearly
    interpolated in z along the two endpoint lines; samples falling
    outside the grid are treated as zero (objects are assumed inside).
    ``fit_mask`` restricts the solvers' data term to trustworthy points
    (see :func:`conedbp.dbp.coverage_mask`).
    """
    if isinstance(arcs, ArcSpec):
        arcs = (arcs,)
    arcs = tuple(arcs)
    if not 1 <= len(arcs) <= 2:
        raise ConfigError("build_plane_system takes 1 or 2 arcs")
    signs = []
    for arc in arcs:
        if arc.kind not in ARC_SIGN:
            raise ConfigError(f"plane systems support short/complement arcs, got {arc.kind!r}")
        signs.append(ARC_SIGN[arc.kind])
    c = plane.half_chord
    if c <= 0:
        raise DegenerateSystemError("tangent plane: zero chord length")
    nt, nz = grid.nt, grid.nz
    t = grid.t_coords
    z = grid.z_coords
    taps = hilbert_taps(nt, taper_frac)
    offsets = np.arange(-nt, nt + 1)
    nz_taps = np.nonzero(taps != 0.0)[0]

    rows_all, cols_all, vals_all = [], [], []
    iz = np.arange(nz)
    it = np.arange(nt)
    for o in nz_taps:
        n_off = int(offsets[o])
        h = float(taps[o])
        k = it - n_off  # tau index per output column
        valid_t = (k >= 0) & (k < nt)
        if not np.any(valid_t):
            continue
        it_v = it[valid_t]
        k_v = k[valid_t]
        for alpha in (
            (t[k_v] + c) / (t[it_v] + c),
            (t[k_v] - c) / (t[it_v] - c),
        ):
            # z' = z * alpha broadcast over (iz, valid it)
            zq = z[:, None] * alpha[None, :]
            gz = (zq - grid.z0) / grid.dz
            j = np.floor(gz).astype(np.int64)
            fz = gz - j
            inb = (j >= 0) & (j <= nz - 2)
            if not np.any(inb):
                continue
            rr, cc = np.nonzero(inb)
            row_ids = iz[rr] * nt + it_v[cc]
            j_in = j[rr, cc]
            f_in = fz[rr, cc]
            col_lo = j_in * nt + k_v[cc]
            col_hi = (j_in + 1) * nt + k_v[cc]
            rows_all.append(np.concatenate([row_ids, row_ids]))
            cols_all.append(np.concatenate([col_lo, col_hi]))
            vals_all.append(np.concatenate([h * (1.0 - f_in), h * f_in]))

    n_unknowns = nt * nz
    if rows_all:
        rows = np.concatenate(rows_all)
        cols = np.concatenate(cols_all)
        vals = np.concatenate(vals_all) * np.pi
    else:
        rows = np.zeros(0, dtype=np.int64)
        cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0, dtype=np.float64)
    m = sp.coo_matrix((vals, (rows, cols)), shape=(n_unknowns, n_unknowns)).tocsr()
    m.sum_duplicates()
    return PlaneSystem(plane=plane, arcs=arcs, grid=grid, matrix=m,
                       signs=np.asarray(signs, dtype=np.float64),
                       fit_mask=fit_mask)


def _stack_measurements(sys: PlaneSystem, g) -> np.ndarray:
    if isinstance(g, DbpPlane):
        g = (g,)
    g = tuple(g)
    if len(g) != len(sys.arcs):
        raise ConfigError(f"system has {len(sys.arcs)} arcs but got {len(g)} measurements")
    blocks = []
    by_kind = {m.arc.kind: m for m in g}
    if len(by_kind) != len(g):
        raise ConfigError("duplicate arc kinds in measurements")
    for arc in sys.arcs:
        if arc.kind not in by_kind:
            raise ConfigError(f"missing measurement for arc kind {arc.kind!r}")
        meas = by_kind[arc.kind]
        if meas.grid != sys.grid:
            raise ConfigError("measurement grid does not match the plane system")
        blocks.append(np.ravel(meas.g))
    return np.concatenate(blocks)


def _cg_normal_block(sys: PlaneSystem, rhs: np.ndarray, reg_abs: float,
                     cfg: DeconvConfig):
    """CG on (A^T W A + reg I) F = RHS for a block of right-hand sides.

    Columns run their own recurrences but share each operator pass, so a
    group of planes with the same system costs little more than one.
    Divergence detection per column.
    """
    f = np.zeros_like(rhs)
    r = rhs.copy()
    p = r.copy()
    rs = np.sum(r * r, axis=0)
    rs0 = rs.copy()
    active = rs0 > 0
    if not np.any(active):
        return f
    growth = np.zeros(rhs.shape[1], dtype=np.int64)
    for _ in range(cfg.max_iter):
        ap = sys.normal_apply_block(p) + reg_abs * p
        denom = np.sum(p * ap, axis=0)
        alpha = np.where((denom > 0) & active, rs / np.maximum(denom, 1e-300), 0.0)
        f += alpha[None, :] * p
        r -= alpha[None, :] * ap
        rs_new = np.sum(r * r, axis=0)
        # CG residual norms legitimately wiggle; only sustained growth
        # above the starting residual counts as divergence.
        grew = (rs_new > rs) & (rs_new > rs0) & active
        growth = np.where(grew, growth + 1, 0)
        if np.any(growth >= 10):
            raise SolverFailureError(
                "CG residual grew for 10 consecutive iterations",
                iterate=f.copy(),
            )
        active = active & (rs_new > cfg.cg_tol**2 * rs0)
        if not np.any(active):
            break
        beta = np.where(rs > 0, rs_new / np.maximum(rs, 1e-300), 0.0)
        p = r + beta[None, :] * p
        rs = rs_new
    return f


def _prox_gradient_tv_block(sys: PlaneSystem, g_block: np.ndarray, reg_abs: float,
                            cfg: DeconvConfig, shape):
    """Monotone accelerated proximal gradient for ||W(A f - g)||^2 + reg * TV(f).

    Warm-started from a short Tikhonov solve (which restores everything
    the data determines well); the accelerated iterations then mostly
    work on the poorly determined spectral wedge, where the TV prior
    extrapolates piecewise-constant structure.  Kept monotone per column
    by holding on to the best iterate, so the objective never increases.
    """
    k = g_block.shape[1]
    norm_est = sys.normal_norm_estimate()
    if norm_est == 0.0:
        return np.zeros((sys.n_unknowns, k))
    step = 1.0 / (2.0 * norm_est)
    w_full = np.concatenate([sys._w] * len(sys.arcs))

    def objectives(f_block):
        resid = w_full[:, None] * (sys.apply_block(f_block) - g_block)
        vals = np.sum(resid * resid, axis=0)
        for c in range(k):
            vals[c] += reg_abs * tv_value(f_block[:, c].reshape(shape))
        return vals

    def prox_block(v_block, gamma):
        out = np.empty_like(v_block)
        for c in range(k):
            out[:, c] = tv_prox(v_block[:, c].reshape(shape), gamma).ravel()
        return out

    warm_cfg = DeconvConfig(regularizer="tikhonov", reg_weight=cfg.reg_weight,
                            max_iter=min(cfg.max_iter, 80), cg_tol=cfg.cg_tol)
    f = _cg_normal_block(sys, sys.apply_adjoint_block(g_block, masked=True),
                         reg_abs, warm_cfg)

    y = f.copy()
    f_prev = f.copy()
    tk = 1.0
    best_obj = objectives(f)
    stalled = np.zeros(k, dtype=np.int64)
    for _ in range(cfg.max_iter):
        grad = 2.0 * sys.apply_adjoint_block(sys.apply_block(y) - g_block, masked=True)
        z = prox_block(y - step * grad, step * reg_abs)
        z_obj = objectives(z)
        if not np.all(np.isfinite(z_obj)):
            raise SolverFailureError(
                "TV iteration produced a non-finite objective",
                iterate=f.copy(),
            )
        better = z_obj <= best_obj
        small_gain = better & (best_obj - z_obj <= cfg.cg_tol * np.maximum(np.abs(best_obj), 1e-300))
        stalled = np.where(better & ~small_gain, 0, stalled + 1)
        f_new = np.where(better[None, :], z, f)
        best_obj = np.minimum(best_obj, z_obj)
        tk_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        y = f_new + (tk / tk_new) * (z - f_new) + ((tk - 1.0) / tk_new) * (f_new - f_prev)
        f_prev = f_new
        f = f_new
        tk = tk_new
        if np.all(stalled >= 20):
            break
    return f


def deconvolve_planes(sys: PlaneSystem, measurements, cfg: DeconvConfig = DeconvConfig()):
    """Recover several plane images sharing one system in a single solve.

    ``measurements`` is a sequence of per-plane arc measurement tuples;
    the returned list holds one (nz, nt) image per entry.  The block
    formulation shares every operator pass across the planes, which is
    where the runtime of a volume-scale deconvolution goes.
    """
    stacks = [_stack_measurements(sys, g) for g in measurements]
    if not stacks:
        return []
    g_block = np.stack(stacks, axis=1)
    shape = (sys.grid.nz, sys.grid.nt)
    norm_est = sys.normal_norm_estimate()
    reg_abs = cfg.reg_weight * norm_est
    if cfg.regularizer == "tikhonov":
        rhs = sys.apply_adjoint_block(g_block, masked=True)
        f = _cg_normal_block(sys, rhs, reg_abs, cfg)
    else:
        f = _prox_gradient_tv_block(sys, g_block, reg_abs, cfg, shape)
    return [f[:, c].reshape(shape) for c in range(f.shape[1])]


def deconvolve_plane(sys: PlaneSystem, g, cfg: DeconvConfig = DeconvConfig()) -> np.ndarray:
    """Recover the plane image from its arc measurements.

    Returns the (nz, nt) minimizer of the regularized least squares
    problem; deterministic for fixed inputs.
    """
    return deconvolve_planes(sys, [g], cfg)[0]


@dataclass
class DeconvolvedPlane:
    """A recovered plane image tagged with its volume row."""

    row_index: int
    plane: PlaneOfInterest
    grid: PlaneGrid
    image: np.ndarray

    def __post_init__(self):
        self.image = np.ascontiguousarray(self.image, dtype=np.float64)
        if self.image.shape != (self.grid.nz, self.grid.nt):
            raise ConfigError(
                f"image shape {self.image.shape} does not match grid "
                f"({self.grid.nz}, {self.grid.nt})"
            )


def _chord_axis(plane: PlaneOfInterest) -> int:
    return 0 if plane.direction == "coronal" else 1


def _t_ascends_with_index(plane: PlaneOfInterest) -> bool:
    return float(plane.e[_chord_axis(plane)]) > 0


def extract_plane_image(vol: Volume3D, row_index: int, plane: PlaneOfInterest,
                        grid: PlaneGrid) -> np.ndarray:
    """Volume values on a plane's (t, z) grid; exact inverse of assembly."""
    if plane.direction == "coronal":
        img = np.array(vol.data[:, row_index, :], dtype=np.float64)
    else:
        img = np.array(vol.data[:, :, row_index], dtype=np.float64)
    if not _t_ascends_with_index(plane):
        img = img[:, ::-1]
    if img.shape != (grid.nz, grid.nt):
        raise ConfigError("volume in-plane shape does not match the grid")
    return np.ascontiguousarray(img)


def assemble_volume(planes, direction: str, template: Volume3D) -> Volume3D:
    """Stack deconvolved planes back into the template's voxel grid.

    Requires exactly one plane per voxel row of the direction; chord
    grids are voxel aligned by construction so this is pure indexing.
    """
    n_rows = template.ny if direction == "coronal" else template.nx
    by_row = {}
    for p in planes:
        if p.plane.direction != direction:
            raise AssemblyError(
                f"plane direction {p.plane.direction!r} does not match {direction!r}"
            )
        if p.row_index in by_row:
            raise AssemblyError(f"duplicate plane for row {p.row_index}")
        by_row[p.row_index] = p
    missing = sorted(set(range(n_rows)) - set(by_row))
    if missing:
        raise AssemblyError(f"missing planes for rows {missing[:8]}"
                            + ("..." if len(missing) > 8 else ""))
    out = np.zeros((template.nz, template.ny, template.nx), dtype=np.float64)
    for idx, p in by_row.items():
        img = p.image
        if not _t_ascends_with_index(p.plane):
            img = img[:, ::-1]
        if direction == "coronal":
            if img.shape != (template.nz, template.nx):
                raise AssemblyError("plane image shape does not match the template")
            out[:, idx, :] = img
        else:
            if img.shape != (template.nz, template.ny):
                raise AssemblyError("plane image shape does not match the template")
            out[:, :, idx] = img
    return template.with_data(out)


def external_deconvolve(planes, cmd: str, workdir=None) -> np.ndarray:
    """Run an external per-plane operator.

    Contract: the command is invoked as

        cmd <dbp_file ...> <output_file>

    with one raw+sidecar DBP file per arc measurement; it must write the
    recovered image as raw little-endian float32 of shape (nz, nt),
    t-fastest, to <output_file>.
    """
    from .fileio import write_dbp_plane

    if isinstance(planes, DbpPlane):
        planes = (planes,)
    planes = tuple(planes)
    if not planes:
        raise ConfigError("external_deconvolve needs at least one DBP plane")
    grid = planes[0].grid
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        tmp = Path(tmp)
        paths = []
        for i, p in enumerate(planes):
            path = tmp / f"dbp_{p.arc.kind}_{i}.raw"
            write_dbp_plane(p, path)
            paths.append(str(path))
        out_path = tmp / "image.raw"
        argv = cmd.split() + paths + [str(out_path)]
        result = subprocess.run(argv, capture_output=True, text=True)
        if result.returncode != 0:
            raise SolverFailureError(
                f"external operator failed (exit {result.returncode}): "
                f"{result.stderr.strip()[:500]}"
            )
        payload = out_path.read_bytes()
        expected = grid.nz * grid.nt * 4
        if len(payload) != expected:
            raise ConfigError(
                f"external operator wrote {len(payload)} bytes, expected {expected}"
            )
        img = np.frombuffer(payload, dtype="<f4").reshape(grid.nz, grid.nt)
    return np.asarray(img, dtype=np.float64)
