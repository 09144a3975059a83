import numpy as np
import pytest

from conedbp._tv import forward_diff, forward_diff_adjoint, tv_value
from conedbp.containers import Volume3D
from conedbp.errors import ConfigError
from conedbp.geometry import ScanGeometry
from conedbp.mbir import MbirConfig, cg_least_squares, mbir_objective, mbir_reconstruct
from conedbp.projector import forward_project


@pytest.fixture(scope="module")
def tiny_geom():
    return ScanGeometry(R=500.0, D=1000.0, nu=12, nv=12, pitch=24.0, n_views=10)


def brute_force_objective(f, y, geom, lam):
    """Triple-loop transcription of the objective."""
    resid = forward_project(f, geom).data - y.data
    total = 0.5 * float(np.sum(resid * resid))
    data = np.asarray(f.data, dtype=float)
    nz, ny, nx = data.shape
    tv = 0.0
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                if i + 1 < nx:
                    tv += abs(data[k, j, i + 1] - data[k, j, i])
                if j + 1 < ny:
                    tv += abs(data[k, j + 1, i] - data[k, j, i])
                if k + 1 < nz:
                    tv += abs(data[k + 1, j, i] - data[k, j, i])
    return total + lam * tv


def test_objective_trivial_cases(tiny_geom):
    f = Volume3D(8, 8, 8, 16.0)
    y = forward_project(f, tiny_geom)
    assert mbir_objective(f, y, tiny_geom, 1.0) == 0.0
    const = f.with_data(np.full((8, 8, 8), 3.0))
    y0 = forward_project(Volume3D(8, 8, 8, 16.0), tiny_geom)
    # constant volume: TV term vanishes, leaving only the data term
    obj = mbir_objective(const, y0, tiny_geom, 123.0)
    resid = forward_project(const, tiny_geom).data
    assert obj == pytest.approx(0.5 * float(np.sum(resid**2)), rel=1e-12)


def test_objective_matches_brute_force(tiny_geom):
    rng = np.random.default_rng(0)
    f = Volume3D(8, 8, 8, 16.0, None, rng.random((8, 8, 8)))
    y = forward_project(Volume3D(8, 8, 8, 16.0, None, rng.random((8, 8, 8))), tiny_geom)
    lam = 0.37
    got = mbir_objective(f, y, tiny_geom, lam)
    want = brute_force_objective(f, y, tiny_geom, lam)
    assert got == pytest.approx(want, rel=1e-10)


def test_data_gradient_matches_finite_differences(tiny_geom):
    rng = np.random.default_rng(1)
    f0 = Volume3D(8, 8, 8, 16.0, None, rng.random((8, 8, 8)))
    y = forward_project(Volume3D(8, 8, 8, 16.0, None, rng.random((8, 8, 8))), tiny_geom)
    from conedbp.mbir import _data_grad

    grad = _data_grad(f0, y, tiny_geom)
    rng2 = np.random.default_rng(2)
    idxs = [(int(a), int(b), int(c)) for a, b, c in rng2.integers(0, 8, (10, 3))]
    h = 1e-4
    worst = 0.0
    for k, j, i in idxs:
        fp = np.array(f0.data)
        fm = np.array(f0.data)
        fp[k, j, i] += h
        fm[k, j, i] -= h
        op = mbir_objective(f0.with_data(fp), y, tiny_geom, 0.0)
        om = mbir_objective(f0.with_data(fm), y, tiny_geom, 0.0)
        fd = (op - om) / (2 * h)
        scale = max(abs(fd), abs(grad[k, j, i]), 1e-12)
        worst = max(worst, abs(fd - grad[k, j, i]) / scale)
    assert worst <= 1e-4


def test_objective_monotone_under_backtracking(tiny_geom):
    rng = np.random.default_rng(3)
    truth = Volume3D(8, 8, 8, 16.0, None, (rng.random((8, 8, 8)) > 0.7).astype(float))
    y = forward_project(truth, tiny_geom)
    f0 = Volume3D(8, 8, 8, 16.0)
    cfg = MbirConfig(lambda_tv=0.5, n_iter=20)
    objs = []
    f = np.array(f0.data)
    from conedbp.mbir import _data_grad, _power_step
    from conedbp._tv import tv_prox

    # replicate the solver loop to record objective values
    step = _power_step(y, tiny_geom, f0)
    obj = mbir_objective(f0.with_data(f), y, tiny_geom, cfg.lambda_tv)
    objs.append(obj)
    rec = mbir_reconstruct(y, tiny_geom, cfg, f0)
    final = mbir_objective(rec, y, tiny_geom, cfg.lambda_tv)
    assert final <= objs[0] * (1 + 1e-9)
    # monotonicity asserted directly over a short manual run
    cur = f0
    prev_obj = objs[0]
    for _ in range(8):
        cur = mbir_reconstruct(y, tiny_geom, MbirConfig(lambda_tv=0.5, n_iter=1), cur)
        o = mbir_objective(cur, y, tiny_geom, 0.5)
        assert o <= prev_obj * (1 + 1e-9)
        prev_obj = o


def test_lambda_zero_converges_toward_least_squares(tiny_geom):
    # exhaustive 16^3 comparison lives in the acceptance suite; here a
    # small instance checks the solver heads to the same point as CG
    rng = np.random.default_rng(4)
    truth = Volume3D(8, 8, 8, 12.0, None, rng.random((8, 8, 8)))
    geom = ScanGeometry(R=500.0, D=1000.0, nu=24, nv=24, pitch=12.0, n_views=24)
    y = forward_project(truth, geom)
    f0 = Volume3D(8, 8, 8, 12.0)
    ref = cg_least_squares(y, geom, f0, n_iter=200)
    rec = mbir_reconstruct(y, geom, MbirConfig(lambda_tv=0.0, n_iter=150), f0)
    err = np.linalg.norm(rec.data - ref.data) / np.linalg.norm(ref.data)
    assert err <= 0.02
    # residual decreases monotonically in the solver (checked via objective)
    o0 = mbir_objective(f0, y, geom, 0.0)
    o1 = mbir_objective(rec, y, geom, 0.0)
    assert o1 < o0


def test_large_lambda_drives_to_near_constant(tiny_geom):
    rng = np.random.default_rng(5)
    truth = Volume3D(8, 8, 8, 16.0, None, np.full((8, 8, 8), 0.5) + 0.01 * rng.random((8, 8, 8)))
    y = forward_project(truth, tiny_geom)
    f0 = Volume3D(8, 8, 8, 16.0, None, np.array(truth.data))
    rec = mbir_reconstruct(y, tiny_geom, MbirConfig(lambda_tv=1e6, n_iter=30), f0)
    assert tv_value(rec.data) < 0.5 * tv_value(truth.data)


def test_tv_helpers_adjoint():
    rng = np.random.default_rng(6)
    u = rng.random((5, 6, 7))
    p = rng.random((5, 6, 7))
    for ax in range(3):
        lhs = float(np.sum(forward_diff(u, ax) * p))
        rhs = float(np.sum(u * forward_diff_adjoint(p, ax)))
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_mbir_config_validation():
    with pytest.raises(ConfigError):
        MbirConfig(lambda_tv=-1.0)
    with pytest.raises(ConfigError):
        MbirConfig(n_iter=0)
    with pytest.raises(ConfigError):
        MbirConfig(step_rule="fixed")  # needs step0
    with pytest.raises(ConfigError):
        MbirConfig(step_rule="nope")
