"""Numba kernels behind the projector, FDK and DBP stages.

Every parallel loop writes to outputs owned by exactly one iteration, so
results are bit-identical for any thread count: forward projection is
ray-parallel, FDK and DBP are target-point-parallel, and the adjoint
scatters each view into a private per-view buffer which the caller sums
in fixed view order.

World/volume conventions match :mod:`conedbp.containers`: volumes are
indexed ``[iz, iy, ix]``, voxel (i, j, k) centered at
``origin + (i, j, k) * spacing``; detector cells are indexed ``[iv, iu]``
with u along the trajectory tangent and v along world z.
"""

import numpy as np
from numba import njit, prange

_JIT = dict(cache=True, nogil=True)


@njit(inline="always")
def _ray_box(ox, oy, oz, dx, dy, dz, lox, loy, loz, hix, hiy, hiz):
    """Entry/exit parameters of a ray against an axis-aligned box."""
    t0 = -1e300
    t1 = 1e300
    if abs(dx) > 1e-12:
        ta = (lox - ox) / dx
        tb = (hix - ox) / dx
        t0 = max(t0, min(ta, tb))
        t1 = min(t1, max(ta, tb))
    elif ox < lox or ox > hix:
        return 1.0, 0.0
    if abs(dy) > 1e-12:
        ta = (loy - oy) / dy
        tb = (hiy - oy) / dy
        t0 = max(t0, min(ta, tb))
        t1 = min(t1, max(ta, tb))
    elif oy < loy or oy > hiy:
        return 1.0, 0.0
    if abs(dz) > 1e-12:
        ta = (loz - oz) / dz
        tb = (hiz - oz) / dz
        t0 = max(t0, min(ta, tb))
        t1 = min(t1, max(ta, tb))
    elif oz < loz or oz > hiz:
        return 1.0, 0.0
    return t0, t1


@njit(inline="always")
def _trilinear(vol, gx, gy, gz, nx, ny, nz):
    """Trilinear sample at fractional index (gx, gy, gz); 0 outside."""
    ix = int(np.floor(gx))
    iy = int(np.floor(gy))
    iz = int(np.floor(gz))
    if ix < 0 or iy < 0 or iz < 0 or ix > nx - 2 or iy > ny - 2 or iz > nz - 2:
        return 0.0
    fx = gx - ix
    fy = gy - iy
    fz = gz - iz
    c000 = vol[iz, iy, ix]
    c100 = vol[iz, iy, ix + 1]
    c010 = vol[iz, iy + 1, ix]
    c110 = vol[iz, iy + 1, ix + 1]
    c001 = vol[iz + 1, iy, ix]
    c101 = vol[iz + 1, iy, ix + 1]
    c011 = vol[iz + 1, iy + 1, ix]
    c111 = vol[iz + 1, iy + 1, ix + 1]
    return (
        c000 * (1 - fx) * (1 - fy) * (1 - fz)
        + c100 * fx * (1 - fy) * (1 - fz)
        + c010 * (1 - fx) * fy * (1 - fz)
        + c110 * fx * fy * (1 - fz)
        + c001 * (1 - fx) * (1 - fy) * fz
        + c101 * fx * (1 - fy) * fz
        + c011 * (1 - fx) * fy * fz
        + c111 * fx * fy * fz
    )


@njit(parallel=True, **_JIT)
def forward_view(vol, ox, oy, oz, sx, sy, sz,
                 srcx, srcy, srcz, cenx, ceny, cenz,
                 eux, euy, euz, nu, nv, pitch, step, out):
    """Line integrals for one view; ray-parallel, each ray owns one cell.

    Rays march from box entry to exit with a uniform substep <= ``step``
    and midpoint sampling, so forward and adjoint share the exact same
    sample locations and weights.
    """
    nz, ny, nx = vol.shape
    # Sampling is valid on the box spanned by outermost voxel centers.
    lox, hix = ox, ox + (nx - 1) * sx
    loy, hiy = oy, oy + (ny - 1) * sy
    loz, hiz = oz, oz + (nz - 1) * sz
    for idx in prange(nv * nu):
        iv = idx // nu
        iu = idx % nu
        u = (iu - (nu - 1) * 0.5) * pitch
        v = (iv - (nv - 1) * 0.5) * pitch
        px = cenx + u * eux
        py = ceny + u * euy
        pz = cenz + v
        dx = px - srcx
        dy = py - srcy
        dz = pz - srcz
        norm = np.sqrt(dx * dx + dy * dy + dz * dz)
        dx /= norm
        dy /= norm
        dz /= norm
        t0, t1 = _ray_box(srcx, srcy, srcz, dx, dy, dz, lox, loy, loz, hix, hiy, hiz)
        if t1 <= t0:
            out[iv, iu] = 0.0
            continue
        n = int(np.ceil((t1 - t0) / step))
        h = (t1 - t0) / n
        acc = 0.0
        for k in range(n):
            t = t0 + (k + 0.5) * h
            gx = (srcx + t * dx - ox) / sx
            gy = (srcy + t * dy - oy) / sy
            gz = (srcz + t * dz - oz) / sz
            acc += _trilinear(vol, gx, gy, gz, nx, ny, nz)
        out[iv, iu] = acc * h


@njit(parallel=True, **_JIT)
def adjoint_views(proj, srcs, cens, eus, ox, oy, oz, sx, sy, sz,
                  nx, ny, nz, pitch, step, bufs):
    """Exact adjoint of :func:`forward_view` for a chunk of views.

    ``proj`` is (n_chunk, nv, nu); view ``c`` scatters into its private
    buffer ``bufs[c]``.  The caller sums the buffers in view order, which
    makes the reduction independent of the thread count.
    """
    n_chunk, nv, nu = proj.shape
    lox, hix = ox, ox + (nx - 1) * sx
    loy, hiy = oy, oy + (ny - 1) * sy
    loz, hiz = oz, oz + (nz - 1) * sz
    for c in prange(n_chunk):
        srcx, srcy, srcz = srcs[c, 0], srcs[c, 1], srcs[c, 2]
        cenx, ceny, cenz = cens[c, 0], cens[c, 1], cens[c, 2]
        eux, euy = eus[c, 0], eus[c, 1]
        buf = bufs[c]
        for iv in range(nv):
            v = (iv - (nv - 1) * 0.5) * pitch
            for iu in range(nu):
                val = proj[c, iv, iu]
                if val == 0.0:
                    continue
                u = (iu - (nu - 1) * 0.5) * pitch
                px = cenx + u * eux
                py = ceny + u * euy
                pz = cenz + v
                dx = px - srcx
                dy = py - srcy
                dz = pz - srcz
                norm = np.sqrt(dx * dx + dy * dy + dz * dz)
                dx /= norm
                dy /= norm
                dz /= norm
                t0, t1 = _ray_box(srcx, srcy, srcz, dx, dy, dz,
                                  lox, loy, loz, hix, hiy, hiz)
                if t1 <= t0:
                    continue
                n = int(np.ceil((t1 - t0) / step))
                h = (t1 - t0) / n
                vh = val * h
                for k in range(n):
                    t = t0 + (k + 0.5) * h
                    gx = (srcx + t * dx - ox) / sx
                    gy = (srcy + t * dy - oy) / sy
                    gz = (srcz + t * dz - oz) / sz
                    ix = int(np.floor(gx))
                    iy = int(np.floor(gy))
                    iz = int(np.floor(gz))
                    if ix < 0 or iy < 0 or iz < 0 or ix > nx - 2 or iy > ny - 2 or iz > nz - 2:
                        continue
                    fx = gx - ix
                    fy = gy - iy
                    fz = gz - iz
                    buf[iz, iy, ix] += vh * (1 - fx) * (1 - fy) * (1 - fz)
                    buf[iz, iy, ix + 1] += vh * fx * (1 - fy) * (1 - fz)
                    buf[iz, iy + 1, ix] += vh * (1 - fx) * fy * (1 - fz)
                    buf[iz, iy + 1, ix + 1] += vh * fx * fy * (1 - fz)
                    buf[iz + 1, iy, ix] += vh * (1 - fx) * (1 - fy) * fz
                    buf[iz + 1, iy, ix + 1] += vh * fx * (1 - fy) * fz
                    buf[iz + 1, iy + 1, ix] += vh * (1 - fx) * fy * fz
                    buf[iz + 1, iy + 1, ix + 1] += vh * fx * fy * fz


@njit(parallel=True, **_JIT)
def fdk_backproject(filtered, coss, sins, R, D, pitch, weight_scale,
                    ox, oy, oz, sx, sy, sz, out):
    """Distance-weighted cone-beam backprojection onto the voxel grid.

    ``filtered`` is (n_views, nv, nu) of ramp-filtered, cosine-weighted
    rows.  For voxel x and view angle b: U = R - x . r_hat(b) is the
    distance along the central ray, the detector intersection is
    (u*, v*) = (D/U) (x . e_u, x_z), and the contribution is weighted by
    weight_scale * (R/U)^2.  Voxel-parallel over z slices; the view sum
    within a voxel runs in fixed order.
    """
    n_views, nv, nu = filtered.shape
    nz, ny, nx = out.shape
    for iz in prange(nz):
        z = oz + iz * sz
        for iy in range(ny):
            y = oy + iy * sy
            for ix in range(nx):
                x = ox + ix * sx
                acc = 0.0
                for k in range(n_views):
                    c = coss[k]
                    s = sins[k]
                    U = R - (x * c + y * s)
                    if U <= 1e-9:
                        continue
                    m = D / U
                    us = m * (-x * s + y * c)
                    vs = m * z
                    gu = us / pitch + (nu - 1) * 0.5
                    gv = vs / pitch + (nv - 1) * 0.5
                    ju = int(np.floor(gu))
                    jv = int(np.floor(gv))
                    if ju < 0 or jv < 0 or ju > nu - 2 or jv > nv - 2:
                        continue
                    fu = gu - ju
                    fv = gv - jv
                    q = (
                        filtered[k, jv, ju] * (1 - fu) * (1 - fv)
                        + filtered[k, jv, ju + 1] * fu * (1 - fv)
                        + filtered[k, jv + 1, ju] * (1 - fu) * fv
                        + filtered[k, jv + 1, ju + 1] * fu * fv
                    )
                    w = R / U
                    acc += q * w * w
                out[iz, iy, ix] = acc * weight_scale


@njit(inline="always")
def _detector_sample(proj_view, srcx, srcy, srcz, cosl, sinl,
                     thx, thy, thz, R, D, pitch, nu, nv):
    """Resample one view along the ray from its source with direction th.

    The ray generally does not pass through the original grid of rays;
    the detector plane {p : (p - center) . r_hat = 0} is intersected and
    the stored view is sampled bilinearly there.  Returns 0 outside the
    detector (objects are assumed inside the fully sampled cylinder).
    """
    denom = thx * cosl + thy * sinl
    if denom >= -1e-12:
        return 0.0
    tau = -D / denom
    px = srcx + tau * thx
    py = srcy + tau * thy
    pz = srcz + tau * thz
    cenx = (R - D) * cosl
    ceny = (R - D) * sinl
    u = -(px - cenx) * sinl + (py - ceny) * cosl
    gu = u / pitch + (nu - 1) * 0.5
    gv = pz / pitch + (nv - 1) * 0.5
    ju = int(np.floor(gu))
    jv = int(np.floor(gv))
    if ju < 0 or jv < 0 or ju > nu - 2 or jv > nv - 2:
        return 0.0
    fu = gu - ju
    fv = gv - jv
    return (
        proj_view[jv, ju] * (1 - fu) * (1 - fv)
        + proj_view[jv, ju + 1] * fu * (1 - fv)
        + proj_view[jv + 1, ju] * (1 - fu) * fv
        + proj_view[jv + 1, ju + 1] * fu * fv
    )


@njit(parallel=True, **_JIT)
def dbp_plane(proj, coss, sins, srcs, order, prev_idx, next_idx,
              inv_dlam, quad_w, R, D, pitch,
              footx, footy, footz, ex, ey, ez_unused,
              t_coords, z_coords, out):
    """Angle-derivative backprojection onto one plane of interest.

    For each plane point x and each arc view k the ray direction
    th = (x - src_k)/|x - src_k| is held fixed while the line integral is
    resampled from the neighboring views ``prev_idx[k]``/``next_idx[k]``;
    their central difference (times ``inv_dlam[k]``) approximates the
    source-position derivative at fixed ray direction.  Contributions are
    weighted by 1/|x - src_k| and the trapezoid weights ``quad_w``.

    Point-parallel; each (t, z) output owns its accumulation.
    """
    nt = t_coords.size
    nzp = z_coords.size
    nk = order.size
    nvw, nv, nu = proj.shape
    for idx in prange(nzp * nt):
        izp = idx // nt
        itp = idx % nt
        t = t_coords[itp]
        zc = z_coords[izp]
        x = footx + t * ex
        y = footy + t * ey
        z = footz + zc
        acc = 0.0
        for k in range(nk):
            kv = order[k]
            sxx = srcs[kv, 0]
            syy = srcs[kv, 1]
            thx = x - sxx
            thy = y - syy
            thz = z
            r = np.sqrt(thx * thx + thy * thy + thz * thz)
            thx /= r
            thy /= r
            thz /= r
            jn = next_idx[k]
            jp = prev_idx[k]
            dn = _detector_sample(proj[jn], srcs[jn, 0], srcs[jn, 1], 0.0,
                                  coss[jn], sins[jn], thx, thy, thz,
                                  R, D, pitch, nu, nv)
            dp = _detector_sample(proj[jp], srcs[jp, 0], srcs[jp, 1], 0.0,
                                  coss[jp], sins[jp], thx, thy, thz,
                                  R, D, pitch, nu, nv)
            acc += quad_w[k] * (dn - dp) * inv_dlam[k] / r
        out[izp, itp] = acc


@njit(parallel=True, **_JIT)
def csr_matvec(indptr, indices, data, x, out):
    """out = A @ x for CSR A; row-parallel, deterministic."""
    n = indptr.size - 1
    for i in prange(n):
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc += data[p] * x[indices[p]]
        out[i] = acc


@njit(parallel=True, **_JIT)
def csr_matmat(indptr, indices, data, x, out):
    """out = A @ X for CSR A and a narrow dense block X (n, k).

    One pass over the matrix serves every column, so solving the handful
    of planes that share an operator costs barely more than solving one.
    """
    n = indptr.size - 1
    k = x.shape[1]
    for i in prange(n):
        acc = np.zeros(k)
        for p in range(indptr[i], indptr[i + 1]):
            v = data[p]
            col = indices[p]
            for c in range(k):
                acc[c] += v * x[col, c]
        for c in range(k):
            out[i, c] = acc[c]
