"""Fidelity metrics and the per-slice artifact profile.

PSNR follows the nonstandard printed definition
``20 log10(N M ||f*||_inf / ||f - f*||_2)`` with the pixel-count product
inside the logarithm and an l2 (not RMS) denominator; keep that in mind
when comparing against other toolkits.  ``psnr_standard`` provides the
conventional peak-over-RMSE variant as a sanity check, and reports carry
both.  SSIM uses global image statistics (no sliding window).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .containers import Volume3D
from .errors import ConfigError, UndefinedReferenceError

__all__ = [
    "nmse",
    "psnr",
    "psnr_standard",
    "ssim",
    "artifact_profile",
    "MetricReport",
    "volume_report",
]


def _pair(f, f_star):
    f = np.asarray(f, dtype=np.float64)
    f_star = np.asarray(f_star, dtype=np.float64)
    if f.shape != f_star.shape:
        raise ConfigError(f"shape mismatch: {f.shape} vs {f_star.shape}")
    return f, f_star


def nmse(f, f_star) -> float:
    """sum (f* - f)^2 / sum (f*)^2."""
    f, f_star = _pair(f, f_star)
    den = float(np.sum(f_star * f_star))
    if den == 0.0:
        raise UndefinedReferenceError("NMSE reference is identically zero")
    return float(np.sum((f_star - f) ** 2)) / den


def psnr(f, f_star, n_rows: int | None = None, m_cols: int | None = None) -> float:
    """20 log10(N M ||f*||_inf / ||f - f*||_2), +inf when f equals f*.

    N and M default to the first/second array dimensions; for flat inputs
    pass them explicitly.
    """
    f, f_star = _pair(f, f_star)
    if n_rows is None or m_cols is None:
        if f.ndim != 2:
            raise ConfigError("pass n_rows and m_cols explicitly for non-2D input")
        n_rows, m_cols = f.shape
    diff = float(np.linalg.norm((f - f_star).ravel()))
    if diff == 0.0:
        return math.inf
    peak = float(np.max(np.abs(f_star)))
    return 20.0 * math.log10(n_rows * m_cols * peak / diff)


def psnr_standard(f, f_star) -> float:
    """Conventional PSNR: 20 log10(||f*||_inf / RMSE)."""
    f, f_star = _pair(f, f_star)
    mse = float(np.mean((f - f_star) ** 2))
    if mse == 0.0:
        return math.inf
    peak = float(np.max(np.abs(f_star)))
    return 20.0 * math.log10(peak / math.sqrt(mse))


def ssim(f, f_star, dynamic_range: float | None = None,
         k1: float = 0.01, k2: float = 0.03) -> float:
    """Global-statistics structural similarity.

    Means, variances (population) and covariance are taken over the whole
    array; c1 = (k1 L)^2, c2 = (k2 L)^2 with L the dynamic range of the
    reference by default.
    """
    f, f_star = _pair(f, f_star)
    if dynamic_range is None:
        dynamic_range = float(f_star.max() - f_star.min())
        if dynamic_range == 0.0:
            dynamic_range = 1.0
    if dynamic_range <= 0:
        raise ConfigError(f"dynamic range must be positive, got {dynamic_range}")
    c1 = (k1 * dynamic_range) ** 2
    c2 = (k2 * dynamic_range) ** 2
    mu_f = float(f.mean())
    mu_g = float(f_star.mean())
    var_f = float(f.var())
    var_g = float(f_star.var())
    cov = float(((f - mu_f) * (f_star - mu_g)).mean())
    return ((2 * mu_f * mu_g + c1) * (2 * cov + c2)) / (
        (mu_f**2 + mu_g**2 + c1) * (var_f + var_g + c2)
    )


def artifact_profile(recon: Volume3D, truth: Volume3D):
    """Per-axial-slice NMSE, indexed by slice z in mm.

    Slices whose reference is identically zero get NaN (the ratio is
    undefined there); callers filter as needed.
    """
    if recon.data.shape != truth.data.shape:
        raise ConfigError(
            f"shape mismatch: {recon.data.shape} vs {truth.data.shape}"
        )
    zs = truth.axis_coords(2)
    out = np.empty(zs.size, dtype=np.float64)
    for k in range(zs.size):
        den = float(np.sum(truth.data[k].astype(np.float64) ** 2))
        if den == 0.0:
            out[k] = math.nan
        else:
            diff = truth.data[k].astype(np.float64) - recon.data[k].astype(np.float64)
            out[k] = float(np.sum(diff**2)) / den
    return zs, out


@dataclass
class MetricReport:
    """Bundle of volume fidelity numbers.

    ``psnr_db`` is the printed-definition PSNR averaged over axial slices
    with nonzero reference; ``psnr_standard_db`` the conventional global
    variant; ``nmse`` and ``ssim`` are global.
    """

    nmse: float
    psnr_db: float
    psnr_standard_db: float
    ssim: float
    per_slice: tuple = None

    def lines(self):
        out = [
            f"nmse={self.nmse:.10e}",
            f"psnr_db={self.psnr_db:.10f}",
            f"psnr_standard_db={self.psnr_standard_db:.10f}",
            f"ssim={self.ssim:.10f}",
        ]
        return out

    def __str__(self):
        return "\n".join(self.lines())


def volume_report(recon: Volume3D, truth: Volume3D, with_profile: bool = True) -> MetricReport:
    """Standard metric bundle for a reconstructed volume."""
    value_nmse = nmse(recon.data, truth.data)
    slice_psnrs = []
    for k in range(truth.nz):
        ref = truth.data[k]
        if not np.any(ref):
            continue
        slice_psnrs.append(psnr(recon.data[k], ref))
    psnr_db = float(np.mean(slice_psnrs)) if slice_psnrs else math.inf
    report = MetricReport(
        nmse=value_nmse,
        psnr_db=psnr_db,
        psnr_standard_db=psnr_standard(recon.data, truth.data),
        ssim=ssim(recon.data, truth.data),
    )
    if with_profile:
        zs, prof = artifact_profile(recon, truth)
        report.per_slice = (zs, prof)
    return report
