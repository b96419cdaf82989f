"""Command-line front end: ``python -m sensorpose <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import demo, formats
from .camera import CameraMatrices, Intrinsics
from .evaluation import compare_baseline, evaluate
from .formats import FormatError
from .gdopt import HyperParams, optimize_multirun
from .ipopt import SOLVERS, BudgetExceeded, StopCriterion, build_candidates, build_vismatrix
from .raster import PointCloud, render_frame, reproject
from .scene import CanonicalPose, PlacementError, rail_to_canonical

log = logging.getLogger("sensorpose")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_PRECONDITION = 4
EXIT_BUDGET = 5
EXIT_IO = 6


def _intrinsics(args) -> Intrinsics:
    return Intrinsics(args.width, args.height, np.radians(args.hfov_deg), args.near, args.far)


def _scenario(args):
    return formats.load_scenario(args.scenario) if args.scenario else demo.demo_scenario()


def _out(args, name: str) -> Path:
    path = Path(args.out) if getattr(args, "out", None) else Path(name)
    return path if path.is_absolute() else Path(args.out_dir) / path


def _pose_dict(p: CanonicalPose, intr: Intrinsics) -> dict:
    cams = CameraMatrices.from_pose(p, intr)
    return {"position": list(p.position), "yaw": p.yaw, "pitch": p.pitch,
            "extrinsic": cams.extrinsic.tolist(), "intrinsic": cams.intrinsic.tolist()}


def _hyper(args) -> HyperParams:
    return HyperParams(lr=args.lr, epochs=args.epochs, runs=args.runs, points_per_object=args.points,
                       gamma=args.gamma, kappa=args.kappa, occlusion=not args.no_occlusion,
                       use_focus=not args.no_focus)


# -- subcommands ------------------------------------------------------------------

def cmd_generate_frames(args) -> int:
    cfg = formats.load_json(args.gen_config) if args.gen_config else demo.demo_config()
    try:
        sc = demo.scenario_from_config(cfg, args.seed, args.frames)
    except (KeyError, TypeError) as exc:
        raise FormatError(args.gen_config or "demo config", f"invalid generator config: {exc!r}") from None
    out = _out(args, "scenario.json")
    formats.save_scenario(out, sc)
    log.info("wrote %d frames (%d objects) to %s", len(sc.frames), sc.n_objects, out)
    return EXIT_OK


def _pitches(text: str):
    vals = [float(x) for x in text.split(",") if x]
    return vals


def cmd_build_vismatrix(args) -> int:
    sc = _scenario(args)
    intr = _intrinsics(args)
    grid = build_candidates(sc.rails, args.positions, args.yaws, _pitches(args.pitches))
    t0 = time.perf_counter()
    vm = build_vismatrix(grid, sc, intr, checkpoint=args.checkpoint, threads=args.threads)
    out = _out(args, "vismatrix.bin")
    formats.write_vismatrix(out, vm)
    log.info("visibility matrix %s built in %.1fs -> %s", vm.shape, time.perf_counter() - t0, out)
    return EXIT_OK


def cmd_optimize_ip(args) -> int:
    vm = formats.read_vismatrix(args.vismatrix)
    stop = StopCriterion(args.stop_seconds, args.stop_iters)
    if args.solver == "exhaustive":
        sol = SOLVERS["exhaustive"](vm.counts, args.sensors)
    else:
        sol = SOLVERS[args.solver](vm.counts, args.sensors, stop, args.seed)
    cands = vm.header.get("candidates", [])
    poses = [CanonicalPose(cands[i]["position"], cands[i]["yaw"], cands[i]["pitch"]) for i in sol.chosen]
    report = {"solver": sol.solver, "sensors": args.sensors, "seed": args.seed, "z": sol.z,
              "chosen": list(sol.chosen), "iterations": sol.iterations,
              "candidates": [cands[i] for i in sol.chosen] if cands else []}
    out = _out(args, "ip_solution.json")
    formats.dump_json(out, report)
    formats.dump_json(out.with_name(out.stem + "_poses.json"), formats.poses_to_dict(canonical=poses))
    log.info("%s: z=%d after %d iterations in %.2fs", sol.solver, sol.z, sol.iterations, sol.elapsed)
    return EXIT_OK


def cmd_optimize_gd(args) -> int:
    sc = _scenario(args)
    intr = _intrinsics(args)
    hyper = _hyper(args)
    t0 = time.perf_counter()
    best, runs = optimize_multirun(sc, args.sensors, args.runs, args.epochs, hyper, args.seed, intr, args.threads)
    canon = [rail_to_canonical(sc.rails[p.rail_index], p) for p in best.best_poses]
    report = {"sensors": args.sensors, "master_seed": args.seed, "hyper": vars(hyper),
              "best": best.to_dict(), "best_canonical": [_pose_dict(p, intr) for p in canon],
              "runs": [r.to_dict() for r in runs]}
    out = _out(args, "gd_report.json")
    formats.dump_json(out, report)
    formats.dump_json(out.with_name(out.stem + "_poses.json"), formats.poses_to_dict(best.best_poses))
    if args.dump_clouds:
        frame = sc.frames[0]
        clouds = [reproject(*render_frame(frame, sc.environment, p, intr), CameraMatrices.from_pose(p, intr), k)
                  for k, p in enumerate(canon)]
        formats.write_ply(Path(args.out_dir) / "best_cloud_frame0.ply", PointCloud.concat(clouds))
    log.info("best min visibility %d (seed %d) in %.1fs", best.best_min_visibility, best.seed,
             time.perf_counter() - t0)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    sc = _scenario(args)
    intr = _intrinsics(args)
    poses = formats.load_poses(args.poses, sc.rails)
    if not poses:
        raise ValueError("pose file contains no poses")
    rep = evaluate(poses, sc, intr, args.threads)
    out = _out(args, "report.csv")
    formats.write_csv(out, ["object_id", "frame_id", "visibility"], [(o, f, v) for f, o, v in rep.rows])
    formats.write_csv(out.with_name("ecdf.csv"), ["visibility", "cum_fraction"], rep.ecdf)
    formats.dump_json(out.with_name("summary.json"), {
        "min_visibility": rep.min_visibility, "mean_visibility": rep.mean_visibility,
        "n_objects": len(rep.rows), "config_hash": rep.config_hash,
        "poses": [_pose_dict(p, intr) for p in poses]})
    log.info("min visibility %d over %d objects", rep.min_visibility, len(rep.rows))
    return EXIT_OK


def cmd_compare_baseline(args) -> int:
    sc = _scenario(args)
    intr = _intrinsics(args)
    grid_spec = {"positions": args.positions, "yaws": args.yaws, "pitches": _pitches(args.pitches)}
    rows = compare_baseline(sc, args.sensors, intr, grid_spec, _hyper(args), args.gd_runs, args.seed,
                            args.spacing, include_gd=args.gd_runs > 0)
    out = _out(args, "compare.csv")
    formats.write_csv(out, ["method", "N", "coverage_pct", "min_visibility"],
                      [(r.method, r.n, round(r.coverage_pct, 4), r.min_visibility) for r in rows])
    return EXIT_OK


def cmd_export_cloud(args) -> int:
    sc = _scenario(args)
    intr = _intrinsics(args)
    poses = formats.load_poses(args.poses, sc.rails)
    frames = [f for f in sc.frames if f.id == args.frame]
    if not frames:
        raise ValueError(f"no frame with id {args.frame}")
    clouds = []
    for k, p in enumerate(poses):
        db, fb = render_frame(frames[0], sc.environment, p, intr)
        clouds.append(reproject(db, fb, CameraMatrices.from_pose(p, intr), k))
        if args.dump_buffers:
            formats.dump_buffers(Path(args.out_dir) / f"buffers_frame{args.frame}_sensor{k}.bin", db, fb)
    formats.write_ply(_out(args, "cloud.ply"), PointCloud.concat(clouds))
    return EXIT_OK


def cmd_ablate_visibility(args) -> int:
    sc = _scenario(args)
    intr = _intrinsics(args)
    rows = []
    for k in range(args.pairs):
        seed = args.seed + 1000 * k
        for occ in (True, False):
            hyper = _hyper(args)
            hyper.occlusion = occ
            best, _ = optimize_multirun(sc, args.sensors, args.runs, args.epochs, hyper, seed, intr, args.threads)
            rows.append((seed, "occlusion-aware" if occ else "frustum-only", best.best_min_visibility))
            log.info("seed %d %s: %d", seed, rows[-1][1], rows[-1][2])
    formats.write_csv(_out(args, "ablation.csv"), ["seed", "model", "min_visibility"], rows)
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option defaults")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out-dir", default=".")
    common.add_argument("--out", help="output file (relative paths resolve under --out-dir)")
    common.add_argument("--width", type=int, default=200)
    common.add_argument("--height", type=int, default=200)
    common.add_argument("--hfov-deg", type=float, default=90.0)
    common.add_argument("--near", type=float, default=1.0)
    common.add_argument("--far", type=float, default=100.0)
    common.add_argument("-v", "--verbose", action="store_true")

    scen = argparse.ArgumentParser(add_help=False)
    scen.add_argument("--scenario", help="scenario JSON (default: bundled demo)")

    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--positions", type=int, default=3)
    grid.add_argument("--yaws", type=int, default=4)
    grid.add_argument("--pitches", default="54", help="comma-separated pitch angles in degrees")

    gd = argparse.ArgumentParser(add_help=False)
    gd.add_argument("--sensors", type=int, default=3)
    gd.add_argument("--epochs", type=int, default=20)
    gd.add_argument("--runs", type=int, default=10)
    gd.add_argument("--lr", type=float, default=0.1)
    gd.add_argument("--gamma", type=float, default=1.0)
    gd.add_argument("--kappa", type=float, default=0.5)
    gd.add_argument("--points", type=int, default=400, help="target points per object")
    gd.add_argument("--no-occlusion", action="store_true")
    gd.add_argument("--no-focus", action="store_true")

    p = argparse.ArgumentParser(prog="sensorpose", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("generate-frames", parents=[common])
    s.add_argument("--gen-config")
    s.add_argument("--frames", type=int)
    s.set_defaults(func=cmd_generate_frames)

    s = sub.add_parser("build-vismatrix", parents=[common, scen, grid])
    s.add_argument("--checkpoint")
    s.set_defaults(func=cmd_build_vismatrix)

    s = sub.add_parser("optimize-ip", parents=[common])
    s.add_argument("--vismatrix", required=True)
    s.add_argument("--solver", choices=sorted(SOLVERS), default="mcmc")
    s.add_argument("--sensors", type=int, default=2)
    s.add_argument("--stop-seconds", type=float, default=60.0)
    s.add_argument("--stop-iters", type=int, default=100_000)
    s.set_defaults(func=cmd_optimize_ip)

    s = sub.add_parser("optimize-gd", parents=[common, scen, gd])
    s.add_argument("--dump-clouds", action="store_true")
    s.set_defaults(func=cmd_optimize_gd)

    s = sub.add_parser("evaluate", parents=[common, scen])
    s.add_argument("--poses", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("compare-baseline", parents=[common, scen, grid, gd])
    s.add_argument("--gd-runs", type=int, default=3)
    s.add_argument("--spacing", type=float, default=1.0)
    s.set_defaults(func=cmd_compare_baseline, sensors=2)

    s = sub.add_parser("export-cloud", parents=[common, scen])
    s.add_argument("--poses", required=True)
    s.add_argument("--frame", type=int, default=0)
    s.add_argument("--dump-buffers", action="store_true")
    s.set_defaults(func=cmd_export_cloud)

    s = sub.add_parser("ablate-visibility", parents=[common, scen, gd])
    s.add_argument("--pairs", type=int, default=5)
    s.set_defaults(func=cmd_ablate_visibility, sensors=6, runs=1)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cfg = formats.load_json(known.config)
    if not isinstance(cfg, dict):
        raise FormatError(known.config, "config must be a JSON object", 1)
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            valid = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in cfg.items() if k in valid})


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ValueError, PlacementError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
