"""Acceptance suite: one test per criterion, one printed verdict line each.

Run with `pytest tests/test_acceptance.py -v -s`.  The expensive desk-scale
study is computed once and shared by the criteria that read it.
"""

import math
import time
from contextlib import contextmanager
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import spearmanr

import conedbp
from conedbp.containers import Volume3D
from conedbp.dbp import DbpPlane, compute_dbp, plane_grid_for_volume
from conedbp.deconv import (
    DeconvConfig,
    apply_hilbert,
    build_plane_system,
    deconvolve_plane,
)
from conedbp.fdk import FdkConfig, fdk_reconstruct
from conedbp.geometry import ScanGeometry, plane_of_interest
from conedbp.mbir import MbirConfig, cg_least_squares, mbir_objective, mbir_reconstruct
from conedbp.metrics import artifact_profile, nmse, psnr, ssim
from conedbp.phantoms import (
    DISK_PHANTOM_TABLE,
    DiskPhantomSpec,
    Primitive,
    analytic_projection,
    make_primitive_volume,
)
from conedbp.pipeline import (
    pipeline_preset,
    run_cone_angle_sweep,
    run_noise_sweep,
    run_pipeline,
)
from conedbp.projector import NoiseSpec, back_project, forward_project


@contextmanager
def criterion(number, label):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {number:2d} FAIL  {label}")
        raise
    print(f"ACCEPTANCE {number:2d} PASS  {label}")


@pytest.fixture(scope="module")
def desk_result():
    """The desk-scale disk study (shared by criteria 4 and 8)."""
    cfg = pipeline_preset("desk-disk")
    t0 = time.time()
    result = run_pipeline(cfg)
    result.elapsed_s = time.time() - t0
    return result


@pytest.fixture(scope="module")
def blob_720():
    """Smooth blob, dense views: the cross-model consistency testbed."""
    geom = ScanGeometry(R=500.0, D=1000.0, nu=192, nv=192, pitch=2.0, n_views=720)
    grid3 = Volume3D(64, 64, 64, 2.0)
    xs, ys, zs = (grid3.axis_coords(a) for a in range(3))
    cx, cy, cz, a = 6.0, 0.0, 10.0, 30.0
    r2 = ((xs[None, None, :] - cx) ** 2 + (ys[None, :, None] - cy) ** 2
          + (zs[:, None, None] - cz) ** 2)
    vol = grid3.with_data(np.exp(-((r2 / a**2) ** 2)))
    proj = forward_project(vol, geom)
    return geom, vol, proj, (cx, cy, cz, a)


def test_criterion_01_adjoint_correctness():
    with criterion(1, "adjoint identity on 20 random 32^3 / 16-view pairs"):
        t0 = time.time()
        geom = ScanGeometry(R=500.0, D=1000.0, nu=32, nv=32, pitch=8.0, n_views=16)
        grid = Volume3D(32, 32, 32, 6.0)
        rng = np.random.default_rng(42)
        worst = 0.0
        for _ in range(20):
            x = grid.with_data(rng.standard_normal((32, 32, 32)))
            ax = forward_project(x, geom)
            y = rng.standard_normal(ax.data.shape)
            aty = back_project(ax.with_data(y), geom, grid)
            lhs = float(np.sum(ax.data * y))
            rhs = float(np.sum(x.data * aty.data))
            denom = np.linalg.norm(ax.data.ravel()) * np.linalg.norm(y.ravel())
            worst = max(worst, abs(lhs - rhs) / denom)
        elapsed = time.time() - t0
        assert worst <= 1e-4, f"worst adjoint gap {worst:.2e}"
        assert elapsed < 60.0, f"took {elapsed:.0f}s"


def test_criterion_02_projector_accuracy():
    with criterion(2, "sphere projections vs analytic chords, 1000 rays <= 1%"):
        geom = ScanGeometry(R=500.0, D=1000.0, nu=192, nv=192, pitch=2.0, n_views=60)
        grid = Volume3D(96, 96, 96, 2.0)
        sph = [Primitive("sphere", (0.0, 0.0, 0.0), (80.0,), 1.0)]
        vol = make_primitive_volume(sph, grid, supersample=3)
        proj = forward_project(vol, geom, step=0.5)
        rng = np.random.default_rng(7)
        worst = 0.0
        checked = 0
        while checked < 1000:
            k = int(rng.integers(0, proj.n_views))
            iv = int(rng.integers(0, geom.nv))
            iu = int(rng.integers(0, geom.nu))
            u = (iu - (geom.nu - 1) / 2) * geom.pitch
            v = (iv - (geom.nv - 1) / 2) * geom.pitch
            ref = analytic_projection(sph, geom, float(proj.lambdas[k]), u, v)
            if ref < 0.5 * 160.0:
                continue  # keep chords long enough for a meaningful ratio
            worst = max(worst, abs(proj.data[k, iv, iu] - ref) / ref)
            checked += 1
        assert worst <= 0.01, f"max relative chord error {worst:.4f}"


def test_criterion_03_fdk_midplane_exactness():
    with criterion(3, "FDK central slice NMSE <= 1e-2 on the centered sphere"):
        t0 = time.time()
        geom = ScanGeometry(R=500.0, D=1000.0, nu=256, nv=256, pitch=2.0, n_views=360)
        grid = Volume3D(128, 128, 128, 2.0)
        vol = make_primitive_volume(
            [Primitive("sphere", (0.0, 0.0, 0.0), (80.0,), 1.0)], grid
        )
        proj = forward_project(vol, geom)
        rec = fdk_reconstruct(proj, geom, FdkConfig(), grid)
        mid = grid.nz // 2
        err = nmse(rec.data[mid], vol.data[mid])
        elapsed = time.time() - t0
        assert err <= 1e-2, f"central-slice NMSE {err:.4f}"
        assert elapsed < 300.0, f"took {elapsed:.0f}s"


def test_criterion_04_cone_artifact_signature(desk_result):
    with criterion(4, "FDK per-slice NMSE grows with |z| (Spearman >= 0.9)"):
        truth = desk_result.volumes["truth"]
        fdk_vol = desk_result.volumes["fdk"]
        zs, prof = artifact_profile(fdk_vol, truth)
        finite = np.isfinite(prof)
        rho = spearmanr(np.abs(zs[finite]), prof[finite]).statistic
        assert rho >= 0.9, f"Spearman {rho:.3f}"


def test_criterion_05_full_circle_dbp_cancellation():
    with criterion(5, "full-circle DBP cancels to <= 1e-2 of the short arc"):
        geom = ScanGeometry(R=500.0, D=1000.0, nu=192, nv=192, pitch=2.0, n_views=360)
        grid3 = Volume3D(64, 64, 64, 2.0)
        vol = make_primitive_volume(
            [Primitive("sphere", (0.0, 0.0, 0.0), (50.0,), 1.0)], grid3
        )
        proj = forward_project(vol, geom)
        plane = plane_of_interest(geom, "coronal", 0.0)
        grid = plane_grid_for_volume(plane, grid3)
        g_full = compute_dbp(proj, geom, plane, plane.arc("full"), grid).g
        g_short = compute_dbp(proj, geom, plane, plane.arc("short"), grid).g
        ratio = np.abs(g_full).max() / np.abs(g_short).max()
        assert ratio <= 1e-2, f"cancellation ratio {ratio:.2e}"


def test_criterion_06_hilbert_involution():
    with criterion(6, "double Hilbert negates bandlimited signals <= 1e-3"):
        n = 1024
        worst = 0.0
        for seed in range(5):
            rng = np.random.default_rng(seed)
            spec = np.fft.rfft(rng.standard_normal(n))
            spec[:16] = 0.0
            spec[int(0.3 * spec.size):] = 0.0
            x = np.fft.irfft(spec, n=n)
            window = np.zeros(n)
            m = n // 2
            window[(n - m) // 2 : (n - m) // 2 + m] = np.hanning(m)
            x = x * window
            hhx = apply_hilbert(apply_hilbert(x))
            worst = max(worst, np.linalg.norm(hhx + x) / np.linalg.norm(x))
        assert worst <= 1e-3, f"involution error {worst:.2e}"


def test_criterion_07_cross_model_consistency(blob_720):
    with criterion(7, "plane forward model vs measured DBP <= 5% relative L2"):
        geom, vol, proj, (cx, cy, cz, a) = blob_720
        plane = plane_of_interest(geom, "coronal", 0.0)
        grid = plane_grid_for_volume(plane, vol)
        # ground truth restricted to the plane
        T, Z = np.meshgrid(grid.t_coords, grid.z_coords)
        W = (plane.foot[None, None, :] + T[..., None] * plane.e[None, None, :]
             + Z[..., None] * np.array([0.0, 0.0, 1.0]))
        r2 = ((W[..., 0] - cx) ** 2 + (W[..., 1] - cy) ** 2 + (W[..., 2] - cz) ** 2)
        f_true = np.exp(-((r2 / a**2) ** 2))
        sysx = build_plane_system(
            geom, plane, (plane.arc("short"), plane.arc("complement")), grid
        )
        pred = sysx.apply(f_true.ravel())
        n = grid.nt * grid.nz
        for kind, block in (("short", pred[:n]), ("complement", pred[n:])):
            g = compute_dbp(proj, geom, plane, plane.arc(kind), grid).g
            err = np.linalg.norm(block.reshape(grid.nz, grid.nt) - g) / np.linalg.norm(g)
            assert err <= 0.05, f"{kind} arc mismatch {err:.4f}"


def test_criterion_08_pipeline_beats_fdk(desk_result):
    with criterion(8, "desk study: blended NMSE <= 0.7 x FDK and <= both single"
                      " directions"):
        reports = desk_result.reports
        blended = reports["blended"].nmse
        fdk_nmse = reports["fdk"].nmse
        single = min(reports["coronal"].nmse, reports["sagittal"].nmse)
        assert blended <= 0.7 * fdk_nmse, (
            f"blended {blended:.4f} vs 0.7*FDK {0.7 * fdk_nmse:.4f}"
        )
        assert blended <= single, f"blended {blended:.4f} vs best single {single:.4f}"
        assert desk_result.elapsed_s < 1800.0, f"took {desk_result.elapsed_s:.0f}s"


def test_criterion_09_cone_angle_sweep_trend():
    with criterion(9, "FDK NMSE strictly grows with cone angle; pipeline grows"
                      " slower"):
        cfg = pipeline_preset("sweep-disk")
        rows = run_cone_angle_sweep(cfg, [8.0, 10.0, 12.0, 14.3])
        fdk_curve = [r["fdk_nmse"] for r in rows]
        pipe_curve = [r["blended_nmse"] for r in rows]
        assert all(b > a for a, b in zip(fdk_curve, fdk_curve[1:])), fdk_curve
        fdk_ratio = fdk_curve[-1] / fdk_curve[0]
        pipe_ratio = pipe_curve[-1] / pipe_curve[0]
        assert pipe_ratio < fdk_ratio, (
            f"pipeline growth {pipe_ratio:.3f} vs FDK growth {fdk_ratio:.3f}"
        )


def test_criterion_10_noise_robustness_trend():
    with criterion(10, "pipeline PSNR >= FDK PSNR at three noise levels"
                       " (5 realizations)"):
        # water-like attenuation so the photon statistics are in the regime
        # the study is about (measured SNR ~12-23 dB)
        disk = DiskPhantomSpec(inside_value=0.04, **DISK_PHANTOM_TABLE["d"])
        cfg = replace(pipeline_preset("sweep-disk"), disk=disk)
        rows = run_noise_sweep(cfg, [50.0, 200.0, 1000.0], realizations=5)
        snrs = [r["snr_db"] for r in rows]
        assert max(snrs) - min(snrs) >= 4.0, f"SNR span {snrs}"
        for r in rows:
            assert r["blended"].psnr_db >= r["fdk"].psnr_db, (
                f"I0={r['i0']:g}: blended {r['blended'].psnr_db:.2f} dB"
                f" vs FDK {r['fdk'].psnr_db:.2f} dB"
            )


def test_criterion_11_mbir_correctness():
    with criterion(11, "MBIR monotone objective, exact gradient, matches CG at"
                       " lambda=0"):
        # (a) objective non-increasing over 50 backtracking iterations
        geom = ScanGeometry(R=500.0, D=1000.0, nu=16, nv=16, pitch=16.0, n_views=12)
        rng = np.random.default_rng(0)
        truth = Volume3D(8, 8, 8, 12.0, None,
                         (rng.random((8, 8, 8)) > 0.7).astype(float))
        y = forward_project(truth, geom)
        f0 = Volume3D(8, 8, 8, 12.0)
        lam = 0.3
        cur = f0
        prev = mbir_objective(cur, y, geom, lam)
        for _ in range(50):
            cur = mbir_reconstruct(y, geom, MbirConfig(lambda_tv=lam, n_iter=1), cur)
            obj = mbir_objective(cur, y, geom, lam)
            assert obj <= prev * (1 + 1e-9), f"objective rose: {prev} -> {obj}"
            prev = obj

        # (b) data-term gradient vs central finite differences on 8^3
        from conedbp.mbir import _data_grad

        f_rand = Volume3D(8, 8, 8, 12.0, None, rng.random((8, 8, 8)))
        y2 = forward_project(Volume3D(8, 8, 8, 12.0, None, rng.random((8, 8, 8))), geom)
        grad = _data_grad(f_rand, y2, geom)
        h = 1e-4
        worst = 0.0
        for k, j, i in rng.integers(0, 8, (10, 3)):
            fp = np.array(f_rand.data)
            fm = np.array(f_rand.data)
            fp[k, j, i] += h
            fm[k, j, i] -= h
            op = mbir_objective(f_rand.with_data(fp), y2, geom, 0.0)
            om = mbir_objective(f_rand.with_data(fm), y2, geom, 0.0)
            fd = (op - om) / (2 * h)
            scale = max(abs(fd), abs(grad[k, j, i]))
            worst = max(worst, abs(fd - grad[k, j, i]) / scale)
        assert worst <= 1e-4, f"gradient check {worst:.2e}"

        # (c) lambda = 0 matches CG least squares on 16^3 within 1%
        geom16 = ScanGeometry(R=500.0, D=1000.0, nu=32, nv=32, pitch=12.0, n_views=36)
        truth16 = Volume3D(16, 16, 16, 8.0, None, rng.random((16, 16, 16)))
        y16 = forward_project(truth16, geom16)
        f016 = Volume3D(16, 16, 16, 8.0)
        ref = cg_least_squares(y16, geom16, f016, n_iter=300)
        rec = mbir_reconstruct(y16, geom16, MbirConfig(lambda_tv=0.0, n_iter=500), f016)
        err = np.linalg.norm(rec.data - ref.data) / np.linalg.norm(ref.data)
        assert err <= 0.01, f"lambda=0 vs CG: {err:.4f}"


def test_criterion_12_metrics_verbatim():
    with criterion(12, "metric definitions reproduce their printed examples"):
        rng = np.random.default_rng(3)
        f = rng.random((6, 6))
        assert nmse(f, f) == 0.0
        assert ssim(f, f, dynamic_range=1.0) == pytest.approx(1.0, abs=1e-15)
        value = psnr(np.zeros((2, 2)), np.ones((2, 2)))
        assert value == pytest.approx(20 * math.log10(4 / 2), abs=1e-9)

        # SSIM against an independently coded global-statistics oracle
        g = rng.random((6, 6))

        def oracle(a, b, L=1.0, k1=0.01, k2=0.03):
            a = a.ravel()
            b = b.ravel()
            ma, mb = a.mean(), b.mean()
            va, vb = ((a - ma) ** 2).mean(), ((b - mb) ** 2).mean()
            cov = ((a - ma) * (b - mb)).mean()
            c1, c2 = (k1 * L) ** 2, (k2 * L) ** 2
            return ((2 * ma * mb + c1) * (2 * cov + c2)) / (
                (ma**2 + mb**2 + c1) * (va + vb + c2)
            )

        assert ssim(f, g, dynamic_range=1.0) == pytest.approx(oracle(f, g), abs=1e-12)


def test_criterion_13_determinism_across_workers():
    with criterion(13, "bit-identical noise and reports for 1, 2 and 8 workers"):
        cfg = pipeline_preset("tiny-disk", noise=NoiseSpec(I0=2e5, seed=11), seed=11)
        results = []
        noisy = []
        for workers in (1, 2, 8):
            conedbp.set_workers(workers)
            from conedbp.projector import add_poisson_noise

            truth = cfg.make_truth()
            clean = forward_project(truth, cfg.geometry)
            noisy.append(add_poisson_noise(clean, cfg.noise).data.copy())
            results.append(run_pipeline(cfg))
        conedbp.set_workers(8)
        for other in noisy[1:]:
            assert np.array_equal(noisy[0], other)
        base = results[0].report_text()
        for other in results[1:]:
            assert base == other.report_text()
