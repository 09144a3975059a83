"""Anisotropic total variation: forward differences, replicate boundary.

Shared by the per-plane deconvolution (2-D) and the volumetric iterative
reconstruction (3-D).  TV here is the sum over axes of the l1 norms of
one-sided differences, matching the objective the reconstructions
minimize -- not the isotropic (root-of-squares) variant.
"""

from __future__ import annotations

import numpy as np

__all__ = ["tv_value", "tv_prox", "forward_diff", "forward_diff_adjoint"]


def forward_diff(u: np.ndarray, axis: int) -> np.ndarray:
    """Forward difference with replicate boundary (last row of zeros)."""
    d = np.zeros_like(u)
    src = [slice(None)] * u.ndim
    dst = [slice(None)] * u.ndim
    src[axis] = slice(1, None)
    dst[axis] = slice(None, -1)
    d[tuple(dst)] = u[tuple(src)] - u[tuple(dst)]
    return d


def forward_diff_adjoint(p: np.ndarray, axis: int) -> np.ndarray:
    """Adjoint of :func:`forward_diff` (negative divergence)."""
    out = np.zeros_like(p)
    first = [slice(None)] * p.ndim
    first[axis] = slice(None, -1)
    out[tuple(first)] -= p[tuple(first)]
    shifted = [slice(None)] * p.ndim
    shifted[axis] = slice(1, None)
    out[tuple(shifted)] += p[tuple(first)]
    return out


def tv_value(u: np.ndarray) -> float:
    """Sum over axes of ||forward differences||_1."""
    return float(sum(np.abs(forward_diff(u, ax)).sum() for ax in range(u.ndim)))


def tv_prox(v: np.ndarray, gamma: float, n_iter: int = 10) -> np.ndarray:
    """Proximal map of gamma * TV via iterative clipping on the dual.

    Solves min_u 1/2 ||u - v||^2 + gamma * sum_ax ||D_ax u||_1
    approximately with ``n_iter`` projected dual ascent sweeps; the dual
    variables are clipped to [-gamma, gamma] each sweep.  Deterministic.
    """
    if gamma <= 0:
        return v.copy()
    ndim = v.ndim
    ps = [np.zeros_like(v) for _ in range(ndim)]
    # ||D||^2 <= 4 per axis with forward differences.
    sigma = 1.0 / (4.0 * ndim)
    u = v.copy()
    for _ in range(n_iter):
        for ax in range(ndim):
            ps[ax] = np.clip(ps[ax] + sigma * forward_diff(u, ax), -gamma, gamma)
        u = v.copy()
        for ax in range(ndim):
            u -= forward_diff_adjoint(ps[ax], ax)
    return u
