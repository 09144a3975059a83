"""Fourier-domain fusion of coronal- and sagittal-processed volumes.

Each scan direction leaves an angular wedge of axial frequencies poorly
determined (see :func:`conedbp.dbp.missing_frequency_mask`); the wedges
of the two directions are transposes of each other, so an axial slice
can take each direction's reliable wedge and lose only the small square
where both are blind.  The bow-tie weight does exactly that:

    fused = IFFT( w . FFT(f_coronal) + (1 - w) . FFT(f_sagittal) )

with w = 1 on the |w_x| > |w_y| wedge (reliable for coronal processing),
0 on the transpose wedge, and a raised-cosine ramp across the diagonals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .containers import SliceImage, Volume3D
from .errors import ConfigError

__all__ = ["BowTieMask", "make_bowtie_mask", "blend_axial", "blend_volume"]


@dataclass
class BowTieMask:
    """Angular wedge weights on an FFT-ordered axial frequency grid."""

    rows: int
    cols: int
    transition_deg: float
    w: np.ndarray

    def __post_init__(self):
        if self.w.shape != (self.rows, self.cols):
            raise ConfigError("mask shape mismatch")
        if np.any(self.w < 0) or np.any(self.w > 1):
            raise ConfigError("mask weights must lie in [0, 1]")


def make_bowtie_mask(rows: int, cols: int, transition_deg: float = 10.0) -> BowTieMask:
    """Build the wedge weights for (rows, cols) axial slices.

    The weight depends only on the angle of (|w_x|, |w_y|): 1 below
    45 deg - transition, 0 above 45 deg + transition, raised cosine in
    between.  The DC bin gets 0.5 (both directions are equally reliable
    there); with transition_deg = 0 the exact diagonals also tie at 0.5.
    """
    if rows < 2 or cols < 2:
        raise ConfigError("mask needs rows, cols >= 2")
    if transition_deg < 0:
        raise ConfigError(f"transition_deg must be >= 0, got {transition_deg}")
    wy = np.fft.fftfreq(rows)[:, None]
    wx = np.fft.fftfreq(cols)[None, :]
    phi = np.arctan2(np.abs(wy), np.abs(wx))  # 0 along w_x axis, pi/2 along w_y
    quarter = np.pi / 4.0
    delta = np.radians(transition_deg)
    w = np.empty((rows, cols), dtype=np.float64)
    if delta == 0.0:
        w[:] = np.where(phi < quarter, 1.0, np.where(phi > quarter, 0.0, 0.5))
    else:
        lo = quarter - delta
        hi = quarter + delta
        ramp = 0.5 * (1.0 + np.cos(np.pi * (phi - lo) / (hi - lo)))
        w[:] = np.where(phi <= lo, 1.0, np.where(phi >= hi, 0.0, ramp))
    w[0, 0] = 0.5
    return BowTieMask(rows=rows, cols=cols, transition_deg=float(transition_deg), w=w)


def _blend_array(f_cor: np.ndarray, f_sag: np.ndarray, mask: BowTieMask) -> np.ndarray:
    spec = mask.w * np.fft.fft2(f_cor) + (1.0 - mask.w) * np.fft.fft2(f_sag)
    out = np.fft.ifft2(spec)
    scale = np.linalg.norm(out)
    if scale > 0 and np.linalg.norm(out.imag) > 1e-6 * scale:
        raise ConfigError("blended slice has unexpectedly large imaginary part")
    return np.ascontiguousarray(out.real)


def blend_axial(f_cor: SliceImage, f_sag: SliceImage, mask: BowTieMask) -> SliceImage:
    """Fuse two axial slices with the bow-tie weights."""
    if (f_cor.rows, f_cor.cols) != (f_sag.rows, f_sag.cols):
        raise ConfigError(
            f"slice shapes differ: ({f_cor.rows}, {f_cor.cols}) vs "
            f"({f_sag.rows}, {f_sag.cols})"
        )
    if (f_cor.rows, f_cor.cols) != (mask.rows, mask.cols):
        raise ConfigError("mask shape does not match the slices")
    data = _blend_array(np.asarray(f_cor.data, dtype=np.float64),
                        np.asarray(f_sag.data, dtype=np.float64), mask)
    return SliceImage(f_cor.rows, f_cor.cols, f_cor.spacing, data)


def blend_volume(v_cor: Volume3D, v_sag: Volume3D, mask: BowTieMask | None = None) -> Volume3D:
    """Apply :func:`blend_axial` slice by slice over z."""
    if v_cor.data.shape != v_sag.data.shape:
        raise ConfigError(
            f"volume shapes differ: {v_cor.data.shape} vs {v_sag.data.shape}"
        )
    if mask is None:
        mask = make_bowtie_mask(v_cor.ny, v_cor.nx)
    if (mask.rows, mask.cols) != (v_cor.ny, v_cor.nx):
        raise ConfigError("mask shape does not match the axial slices")
    out = np.empty((v_cor.nz, v_cor.ny, v_cor.nx), dtype=np.float64)
    for k in range(v_cor.nz):
        out[k] = _blend_array(np.asarray(v_cor.data[k], dtype=np.float64),
                              np.asarray(v_sag.data[k], dtype=np.float64), mask)
    return v_cor.with_data(out)
