"""Command-line front end.

One subcommand per pipeline stage plus the end-to-end runners:

    conedbp phantom --preset desk-disk --out runs/a
    conedbp project --preset desk-disk --out runs/a
    conedbp fdk --preset desk-disk --out runs/a
    conedbp dbp --preset desk-disk --direction coronal --out runs/a
    conedbp deconv --preset desk-disk --direction coronal --out runs/a
    conedbp blend --cor a.raw --sag b.raw --out-volume fused.raw
    conedbp mbir --preset tiny-disk --out runs/m
    conedbp metrics --recon fused.raw --truth truth.raw
    conedbp pipeline --preset desk-disk --out runs/full
    conedbp sweep-angle --preset sweep-disk --angles 8,10,12,14.3 --out runs/sw
    conedbp sweep-noise --preset sweep-disk --i0 5e4,2e5,1e6 --out runs/ns

Experiments are archived as flat key = value config files; pass one with
--config instead of (or overriding) --preset.  Exit codes: 0 success,
2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import set_workers
from .blending import make_bowtie_mask
from .containers import extract_slice
from .deconv import DeconvConfig
from .errors import ConedbpError, ConfigError, NumericalError
from .fdk import FdkConfig, fdk_reconstruct
from .fileio import (
    read_projections,
    read_volume,
    write_dbp_plane,
    write_projections,
    write_slice_pgm,
    write_volume,
)
from .geometry import ScanGeometry, geometry_preset, planes_for_volume
from .mbir import MbirConfig, mbir_reconstruct
from .metrics import volume_report
from .phantoms import DiskPhantomSpec
from .pipeline import (
    PipelineConfig,
    pipeline_preset,
    run_cone_angle_sweep,
    run_noise_sweep,
    run_pipeline,
)
from .projector import NoiseSpec, add_poisson_noise, forward_project

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _load_config_file(path: str) -> PipelineConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")

    def section(name):
        return parser[name] if parser.has_section(name) else {}

    geo = section("geometry")
    if "preset" in geo:
        geom = geometry_preset(geo["preset"])
    else:
        try:
            geom = ScanGeometry(
                R=float(geo["r"]), D=float(geo["d"]),
                nu=int(geo["nu"]), nv=int(geo["nv"]),
                pitch=float(geo["pitch"]), n_views=int(geo["n_views"]),
            )
        except KeyError as exc:
            raise ConfigError(f"geometry section missing key {exc}") from exc
    vol = section("volume")
    ph = section("phantom")
    disk = DiskPhantomSpec(
        disk_radius=float(ph.get("radius_mm", 80.0)),
        thickness=float(ph.get("thickness_mm", 16.0)),
        spacing=float(ph.get("spacing_mm", 16.0)),
        n_disks=int(ph.get("n_disks", 7)),
        inside_value=float(ph.get("inside_value", 1.0)),
        outside_value=float(ph.get("outside_value", 0.0)),
    )
    dc = section("deconv")
    deconv = DeconvConfig(
        regularizer=dc.get("regularizer", "tikhonov"),
        reg_weight=float(dc.get("reg_weight", 1e-3)),
        max_iter=int(dc.get("max_iter", 150)),
        cg_tol=float(dc.get("cg_tol", 1e-8)),
    )
    noise = None
    if parser.has_section("noise"):
        ns = parser["noise"]
        noise = NoiseSpec(
            I0=float(ns["i0"]),
            seed=int(ns.get("seed", section("run").get("seed", 0))),
            realizations=int(ns.get("realizations", 1)),
        )
    run = section("run")
    return PipelineConfig(
        geometry=geom,
        n=int(vol.get("n", 128)),
        spacing=float(vol.get("spacing_mm", 2.0)),
        phantom_kind=ph.get("kind", "disk"),
        disk=disk,
        deconv=deconv,
        transition_deg=float(section("blend").get("transition_deg", 10.0)),
        noise=noise,
        seed=int(run.get("seed", 0)),
    )


def _resolve_config(args) -> PipelineConfig:
    if getattr(args, "config", None):
        cfg = _load_config_file(args.config)
    elif getattr(args, "preset", None):
        cfg = pipeline_preset(args.preset)
    else:
        raise ConfigError("pass --preset or --config")
    overrides = {}
    if getattr(args, "out", None):
        overrides["out"] = args.out
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "noise_i0", None):
        overrides["noise"] = NoiseSpec(I0=args.noise_i0, seed=args.seed or cfg.seed)
    if getattr(args, "regularizer", None):
        overrides["deconv"] = replace(cfg.deconv, regularizer=args.regularizer)
    if getattr(args, "reg_weight", None):
        overrides["deconv"] = replace(
            overrides.get("deconv", cfg.deconv), reg_weight=args.reg_weight
        )
    if getattr(args, "max_iter", None):
        overrides["deconv"] = replace(
            overrides.get("deconv", cfg.deconv), max_iter=args.max_iter
        )
    if getattr(args, "operator_cmd", None):
        overrides["operator_cmd"] = args.operator_cmd
    if getattr(args, "transition_deg", None) is not None:
        overrides["transition_deg"] = args.transition_deg
    overrides["verbose"] = not getattr(args, "quiet", False)
    return replace(cfg, **overrides)


def _require_out(cfg: PipelineConfig) -> Path:
    if cfg.out is None:
        raise ConfigError("this subcommand needs --out")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_phantom(args):
    cfg = _resolve_config(args)
    out = _require_out(cfg)
    truth = cfg.make_truth()
    write_volume(truth, out / "truth.raw")
    if args.export_slice is not None:
        img = extract_slice(truth, "coronal", args.export_slice)
        write_slice_pgm(img, out / f"truth_coronal_{args.export_slice:04d}.pgm",
                        window=args.window, level=args.level)
    print(out / "truth.raw")


def _cmd_project(args):
    cfg = _resolve_config(args)
    out = _require_out(cfg)
    truth = cfg.make_truth()
    write_volume(truth, out / "truth.raw")
    proj = forward_project(truth, cfg.geometry)
    if cfg.noise is not None:
        write_projections(proj, out / "projections_clean.raw")
        proj = add_poisson_noise(proj, cfg.noise)
    write_projections(proj, out / "projections.raw")
    print(out / "projections.raw")


def _cmd_fdk(args):
    cfg = _resolve_config(args)
    out = _require_out(cfg)
    proj_path = out / "projections.raw"
    if proj_path.exists():
        proj = read_projections(proj_path)
    else:
        proj = forward_project(cfg.make_truth(), cfg.geometry)
        write_projections(proj, proj_path)
    vol = fdk_reconstruct(proj, cfg.geometry, FdkConfig(filter=args.filter,
                                                        filter_cutoff=args.cutoff),
                          cfg.grid())
    write_volume(vol, out / "fdk.raw")
    print(out / "fdk.raw")


def _iter_requested_planes(cfg, args, template):
    entries = planes_for_volume(cfg.geometry, args.direction, template)
    if args.plane_range:
        lo, hi = (int(v) for v in args.plane_range.split(":"))
        entries = entries[lo:hi]
    return entries


def _cmd_dbp(args):
    from .dbp import compute_dbp, plane_grid_for_volume

    cfg = _resolve_config(args)
    out = _require_out(cfg)
    proj_path = out / "projections.raw"
    if proj_path.exists():
        proj = read_projections(proj_path)
    else:
        proj = forward_project(cfg.make_truth(), cfg.geometry)
        write_projections(proj, proj_path)
    template = cfg.grid()
    kinds = ("short", "complement") if args.arc == "both" else (args.arc,)
    for row, plane in _iter_requested_planes(cfg, args, template):
        grid = plane_grid_for_volume(plane, template)
        for kind in kinds:
            dbp = compute_dbp(proj, cfg.geometry, plane, plane.arc(kind), grid)
            write_dbp_plane(dbp, out / f"dbp_{args.direction}_{kind}_{row:04d}.raw")
    print(out)


def _cmd_deconv(args):
    from .dbp import compute_dbp, plane_grid_for_volume
    from .pipeline import reconstruct_dbp_volumes

    cfg = _resolve_config(args)
    out = _require_out(cfg)
    proj_path = out / "projections.raw"
    if proj_path.exists():
        proj = read_projections(proj_path)
    else:
        proj = forward_project(cfg.make_truth(), cfg.geometry)
        write_projections(proj, proj_path)
    recons = reconstruct_dbp_volumes(proj, cfg.geometry, cfg.grid(), cfg.deconv, cfg,
                                     out_dir=out)
    for direction, vol in recons.items():
        write_volume(vol, out / f"recon_{direction}.raw")
        print(out / f"recon_{direction}.raw")


def _cmd_blend(args):
    from .blending import blend_volume

    cor = read_volume(args.cor)
    sag = read_volume(args.sag)
    mask = make_bowtie_mask(cor.ny, cor.nx, args.transition_deg)
    fused = blend_volume(cor, sag, mask)
    write_volume(fused, args.out_volume)
    print(args.out_volume)


def _cmd_mbir(args):
    cfg = _resolve_config(args)
    out = _require_out(cfg)
    proj_path = out / "projections.raw"
    if proj_path.exists():
        proj = read_projections(proj_path)
    else:
        proj = forward_project(cfg.make_truth(), cfg.geometry)
        write_projections(proj, proj_path)
    lam = args.lam
    if lam is None:
        # scale heuristic relative to the backprojected data magnitude
        from .projector import back_project

        bp = back_project(proj, cfg.geometry, cfg.grid(), weights="none")
        lam = 1e-2 * float(np.max(np.abs(bp.data)))
    rec = mbir_reconstruct(proj, cfg.geometry,
                           MbirConfig(lambda_tv=lam, n_iter=args.iterations),
                           cfg.grid())
    write_volume(rec, out / "mbir.raw")
    print(out / "mbir.raw")


def _cmd_metrics(args):
    recon = read_volume(args.recon)
    truth = read_volume(args.truth)
    rep = volume_report(recon, truth)
    print(str(rep))
    if args.csv:
        zs, prof = rep.per_slice
        lines = ["z_mm,nmse"] + [f"{z!r},{v!r}" for z, v in zip(zs, prof)]
        Path(args.csv).write_text("\n".join(lines) + "\n")


def _cmd_pipeline(args):
    cfg = _resolve_config(args)
    if cfg.out is None:
        raise ConfigError("pipeline needs --out")
    result = run_pipeline(cfg)
    print(result.report_text(), end="")


def _cmd_sweep_angle(args):
    cfg = _resolve_config(args)
    angles = [float(v) for v in args.angles.split(",")]
    rows = run_cone_angle_sweep(cfg, angles)
    lines = ["half_angle_deg,nv,fdk_nmse,blended_nmse"]
    for r in rows:
        lines.append(f"{r['half_angle_deg']!r},{r['nv']},{r['fdk_nmse']!r},{r['blended_nmse']!r}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if cfg.out:
        out = _require_out(cfg)
        (out / "sweep_angle.csv").write_text(text)


def _cmd_sweep_noise(args):
    cfg = _resolve_config(args)
    i0s = [float(v) for v in args.i0.split(",")]
    rows = run_noise_sweep(cfg, i0s, realizations=args.realizations)
    lines = ["i0,snr_db,fdk_psnr_db,blended_psnr_db,fdk_nmse,blended_nmse"]
    for r in rows:
        lines.append(
            f"{r['i0']!r},{r['snr_db']!r},{r['fdk'].psnr_db!r},"
            f"{r['blended'].psnr_db!r},{r['fdk'].nmse!r},{r['blended'].nmse!r}"
        )
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if cfg.out:
        out = _require_out(cfg)
        (out / "sweep_noise.csv").write_text(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conedbp", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--workers", type=int, default=None,
                        help="compute threads (results identical for any count)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_preset=True):
        if needs_preset:
            p.add_argument("--preset", help="pipeline preset name")
            p.add_argument("--config", help="key = value config file")
            p.add_argument("--seed", type=int, default=None)
            p.add_argument("--quiet", action="store_true")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("phantom", help="emit the phantom volume")
    common(p)
    p.add_argument("--export-slice", type=int, default=None)
    p.add_argument("--window", type=float, default=1.2)
    p.add_argument("--level", type=float, default=0.5)
    p.set_defaults(func=_cmd_phantom)

    p = sub.add_parser("project", help="forward-project the phantom")
    common(p)
    p.add_argument("--noise-i0", type=float, default=None)
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("fdk", help="filtered backprojection reconstruction")
    common(p)
    p.add_argument("--filter", choices=["ram-lak", "shepp-logan"], default="ram-lak")
    p.add_argument("--cutoff", type=float, default=1.0)
    p.set_defaults(func=_cmd_fdk)

    p = sub.add_parser("dbp", help="differentiated backprojection planes")
    common(p)
    p.add_argument("--direction", choices=["coronal", "sagittal"], required=True)
    p.add_argument("--arc", choices=["short", "complement", "both"], default="both")
    p.add_argument("--plane-range", default=None, help="lo:hi row slice")
    p.set_defaults(func=_cmd_dbp)

    p = sub.add_parser("deconv", help="per-plane inversion to volumes")
    common(p)
    p.add_argument("--direction", choices=["coronal", "sagittal", "both"], default="both")
    p.add_argument("--regularizer", choices=["tikhonov", "tv"], default=None)
    p.add_argument("--reg-weight", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--operator-cmd", default=None,
                   help="external per-plane operator: cmd <dbp...> <image_out>")
    p.set_defaults(func=_cmd_deconv)

    p = sub.add_parser("blend", help="fuse coronal/sagittal volumes")
    p.add_argument("--cor", required=True)
    p.add_argument("--sag", required=True)
    p.add_argument("--out-volume", required=True)
    p.add_argument("--transition-deg", type=float, default=10.0)
    p.set_defaults(func=_cmd_blend)

    p = sub.add_parser("mbir", help="TV-penalized iterative reconstruction")
    common(p)
    p.add_argument("--lam", type=float, default=None, help="TV weight")
    p.add_argument("--iterations", type=int, default=30)
    p.set_defaults(func=_cmd_mbir)

    p = sub.add_parser("metrics", help="fidelity report for two volumes")
    p.add_argument("--recon", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--csv", default=None, help="write the per-slice profile here")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("pipeline", help="full study end to end")
    common(p)
    p.add_argument("--regularizer", choices=["tikhonov", "tv"], default=None)
    p.add_argument("--reg-weight", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--noise-i0", type=float, default=None)
    p.add_argument("--operator-cmd", default=None)
    p.add_argument("--transition-deg", type=float, default=None)
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("sweep-angle", help="cone-angle study")
    common(p)
    p.add_argument("--angles", required=True, help="comma list of half angles (deg)")
    p.set_defaults(func=_cmd_sweep_angle)

    p = sub.add_parser("sweep-noise", help="noise robustness study")
    common(p)
    p.add_argument("--i0", required=True, help="comma list of intensities")
    p.add_argument("--realizations", type=int, default=5)
    p.set_defaults(func=_cmd_sweep_noise)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.workers is not None:
            set_workers(args.workers)
        args.func(args)
    except ConfigError as exc:
        print(f"conedbp: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"conedbp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ConedbpError as exc:
        print(f"conedbp: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
