"""Command-line entry point: ``lhcalib <command> [options]``.

Commands
--------
simulate     synthesise master/slave pulse captures and the ground truth
decode       pulse CSV -> per-slot sweep angles (JSON)
reconstruct  pulse CSV -> angle frames with both axes (JSON)
calibrate    master + slave pulse CSVs -> slave pose (JSON + summary)
evaluate     result files + truth -> MAE/SD table (CSV + text)

Exit codes: 0 ok, 2 invalid input, 3 scenario coverage, 4 pipeline stage
failure.  Angles in every file are degrees.
"""

from __future__ import annotations

import argparse
import csv
import glob
import io
import json
import logging
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import pulses as sig
from .errors import CoverageError, LhcalibError, StageError, ValidationError
from .forward_model import StationIntrinsics, load_intrinsics
from .geometry import Pose6DoF, default_board, load_geometry
from .optimize import NmOptions
from .pipeline import REPORT_COLUMNS, CalibrationConfig, CalibrationResult, calibrate, evaluate, frames_from_stream
from .reconstruct import STRATEGIES
from .simulator import (
    NOISELESS,
    QUANTIZATION_ONLY,
    load_scenario,
    random_setup,
    scenario_for_setup,
    simulate_capture,
)

log = logging.getLogger("lhcalib")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_COVERAGE = 3
EXIT_STAGE = 4
POSE_KEYS = ("x_m", "y_m", "z_m", "alpha_deg", "beta_deg", "gamma_deg")


# -- shared options ---------------------------------------------------------------


def _common_parser(suppress: bool = False) -> argparse.ArgumentParser:
    # Subcommands share the options; their copy suppresses defaults so a
    # value given before the subcommand name is not overwritten.
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS if suppress else None)

    def dflt(v):
        return argparse.SUPPRESS if suppress else v

    g = p.add_argument_group("common options")
    g.add_argument("--geometry", type=Path, help="board geometry JSON (default: 4x8 grid, 20 mm pitch)")
    g.add_argument(
        "--intrinsics",
        type=Path,
        action="append",
        help="station intrinsics JSON; give once for both stations or twice (master, slave)",
    )
    g.add_argument("--reconstruct", choices=STRATEGIES, default=dflt("full"), help="angle reconstruction strategy")
    g.add_argument("--seed", type=int, default=dflt(0))
    g.add_argument("--out", type=Path, default=dflt(Path(".")), help="output directory")
    g.add_argument("--deterministic", action="store_true", help="omit wall-clock fields from outputs")
    g.add_argument("--nm-tol-f", type=float, default=dflt(None), help="simplex objective-spread tolerance")
    g.add_argument("--nm-tol-x", type=float, default=dflt(None), help="simplex size tolerance")
    g.add_argument("--nm-max-iter", type=int, default=dflt(None), help="simplex iteration cap")
    g.add_argument("--emit-plots", action="store_true", help="also write path point dumps (CSV + SVG)")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lhcalib", description=__doc__.split("\n")[0], parents=[_common_parser()])
    common = _common_parser(suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="synthesise a capture pair and its ground truth")
    p.add_argument("--scenario", type=Path, help="scenario JSON; a random scenario is drawn from --seed otherwise")
    p.add_argument("--kind", choices=["static", "line", "half_circle", "lissajous"], help="motion of a random scenario")
    p.add_argument("--speed", type=float, help="maximum board speed of a random scenario (m/s)")
    p.add_argument("--noiseless", action="store_true", help="disable tick quantization for a random scenario")

    p = sub.add_parser("decode", parents=[common], help="decode a pulse capture into sweep angles")
    p.add_argument("stream", type=Path)

    p = sub.add_parser("reconstruct", parents=[common], help="decode and reconstruct angle frames")
    p.add_argument("stream", type=Path)

    p = sub.add_parser("calibrate", parents=[common], help="estimate the slave pose from two captures")
    p.add_argument("master", type=Path)
    p.add_argument("slave", type=Path)

    p = sub.add_parser("evaluate", parents=[common], help="tabulate MAE and SD against a ground truth")
    p.add_argument("results", nargs="+", help="result JSON files or glob patterns")
    p.add_argument("--truth", type=Path, required=True, help="truth JSON written by 'simulate'")
    return parser


def _geometry(args):
    if args.geometry is None:
        return default_board()
    return load_geometry(args.geometry)


def _intrinsics(args) -> tuple[StationIntrinsics, StationIntrinsics] | None:
    if not args.intrinsics:
        return None
    if len(args.intrinsics) > 2:
        raise ValidationError("--intrinsics may be given at most twice (master, slave)")
    master = load_intrinsics(args.intrinsics[0])
    slave = load_intrinsics(args.intrinsics[-1])
    return master, slave


def _nm_options(args) -> NmOptions:
    base = NmOptions()
    kw = {}
    if args.nm_tol_f is not None:
        kw["tolerance_f"] = args.nm_tol_f
    if args.nm_tol_x is not None:
        kw["tolerance_x"] = args.nm_tol_x
    if args.nm_max_iter is not None:
        kw["max_iterations"] = args.nm_max_iter
    if not kw:
        return base
    return replace(base, **kw)


def _out_dir(args) -> Path:
    out = args.out
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n", newline="\n")


# -- commands ----------------------------------------------------------------------


def cmd_simulate(args) -> int:
    geometry = _geometry(args)
    intr = _intrinsics(args)
    if args.scenario is not None:
        scenario = load_scenario(args.scenario, geometry=geometry if args.geometry else None)
    else:
        rng = np.random.default_rng(args.seed)
        scenario = scenario_for_setup(
            random_setup(rng),
            rng,
            kind=args.kind,
            speed=args.speed,
            noise=NOISELESS if args.noiseless else QUANTIZATION_ONLY,
            geometry=geometry,
        )
    if intr is not None:
        scenario = replace(scenario, master_intrinsics=intr[0], slave_intrinsics=intr[1])
    master, slave, truth = simulate_capture(scenario, seed=args.seed)
    out = _out_dir(args)
    sig.write_pulse_csv(master, out / "master.csv")
    sig.write_pulse_csv(slave, out / "slave.csv")
    _write_json(out / "truth.json", truth.to_dict())
    print(f"wrote {out / 'master.csv'}, {out / 'slave.csv'}, {out / 'truth.json'}")
    return EXIT_OK


def _records_json(records) -> list[dict]:
    return [
        {
            "slot_index": r.slot_index,
            "slot_time_ticks": r.slot_time,
            "station": r.station,
            "axis": r.axis,
            "angles_deg": {str(d): math.degrees(a) for d, a in sorted(r.angles.items())},
        }
        for r in records
    ]


def cmd_decode(args) -> int:
    stream = sig.read_pulse_csv(args.stream)
    diag: dict = {}
    try:
        records = sig.decode_stream(stream, diagnostics=diag)
    except LhcalibError as exc:
        raise StageError("decode", exc) from exc
    out = _out_dir(args)
    path = out / (args.stream.stem + ".records.json")
    _write_json(path, {"schema": "lhcalib-records v1", "diagnostics": diag, "records": _records_json(records)})
    print(f"{sum(1 for r in records if r.angles)} sweep records -> {path}")
    return EXIT_OK


def _frames_json(frames) -> list[dict]:
    return [
        {
            "t_s": f.t,
            "station": f.station,
            "anchor_axis": f.anchor_axis,
            "angles_deg": {str(d): [math.degrees(a), math.degrees(b)] for d, (a, b) in sorted(f.angles.items())},
            "provenance": {str(d): list(p) for d, p in sorted(f.provenance.items())},
        }
        for f in frames
    ]


def cmd_reconstruct(args) -> int:
    stream = sig.read_pulse_csv(args.stream)
    diag: dict = {}
    try:
        frames = frames_from_stream(stream, args.reconstruct, diag)
    except LhcalibError as exc:
        raise StageError("reconstruct", exc) from exc
    out = _out_dir(args)
    path = out / (args.stream.stem + ".frames.json")
    _write_json(
        path,
        {"schema": "lhcalib-frames v1", "strategy": args.reconstruct, "diagnostics": diag, "frames": _frames_json(frames)},
    )
    print(f"{len(frames)} frames ({args.reconstruct}) -> {path}")
    return EXIT_OK


def _pose_line(name: str, pose: Pose6DoF) -> str:
    d = pose.to_dict()
    return (
        f"{name:<20s} x={d['x_m']:+.4f} m  y={d['y_m']:+.4f} m  z={d['z_m']:+.4f} m  "
        f"alpha={d['alpha_deg']:+.3f}  beta={d['beta_deg']:+.3f}  gamma={d['gamma_deg']:+.3f} deg"
    )


def calibration_summary(result: CalibrationResult, deterministic: bool = False) -> str:
    d = result.diagnostics
    lines = [
        "slave station pose in the master frame",
        _pose_line("initial (Kabsch)", result.initial_slave_pose),
        _pose_line("final", result.slave_pose),
        f"epsilon_final        {result.epsilon_final:.6g}",
        f"converged            {result.converged}",
        f"strategy             {d.get('strategy')}",
    ]
    for name in ("master_path", "slave_path"):
        st = d.get(name, {})
        lines.append(
            f"{name:<20s} frames={st.get('frames')} dropped={st.get('dropped_frames')} "
            f"mirror_switches={st.get('mirror_switches')} median_residual={st.get('median_residual')}"
        )
    lines.append(f"aligned points       {d.get('aligned_points')}")
    lines.append(f"initial method       {d.get('initial_method')}")
    if "kabsch_weighted_rmsd_m" in d:
        lines.append(f"kabsch rmsd          {d['kabsch_weighted_rmsd_m'] * 1000:.3f} mm")
    lines.append(
        f"refinement delta     {d.get('delta_position_m', float('nan')) * 1000:.3f} mm, "
        f"{d.get('delta_rotation_deg', float('nan')):.4f} deg"
    )
    if "view_angle_deg" in d:
        v = d["view_angle_deg"]
        lines.append(f"view angle           master {v['master']:.1f} deg, slave {v['slave']:.1f} deg")
    for key in ("view_warning", "warning"):
        if key in d:
            lines.append(f"warning              {d[key]}")
    if not deterministic and "wall_time_s" in d:
        lines.append(f"wall time            {d['wall_time_s']:.2f} s")
    return "\n".join(lines) + "\n"


def _emit_paths(result: CalibrationResult, out: Path) -> None:
    for name, path in result.paths.items():
        with open(out / f"path_{name}.csv", "w", newline="\n") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_s", "x_m", "y_m", "z_m", "alpha_deg", "beta_deg", "gamma_deg", "residual"])
            for p in path:
                d = p.pose.to_dict()
                w.writerow([f"{p.t:.9f}"] + [f"{d[k]:.9g}" for k in POSE_KEYS] + [f"{p.residual:.6g}"])
    _write_svg(result, out / "paths.svg")


def _write_svg(result: CalibrationResult, path: Path) -> None:
    """Top view (x, y) of the master path and the superposed slave path."""
    m = np.array([p.pose.position for p in result.paths.get("master", [])])
    s = np.array([p.pose.position for p in result.paths.get("slave", [])])
    if m.size == 0 or s.size == 0:
        return
    L = result.slave_pose
    s_in_master = s @ L.rotation().T + L.position
    pts = np.vstack([m[:, :2], s_in_master[:, :2]])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = float(max(hi - lo)) or 1.0
    size, pad = 480.0, 20.0

    def poly(xy, colour):
        q = (xy - lo) / span * (size - 2 * pad) + pad
        coords = " ".join(f"{x:.2f},{size - y:.2f}" for x, y in q)
        return f'<polyline fill="none" stroke="{colour}" stroke-width="1" points="{coords}"/>'

    svg = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0f}" height="{size:.0f}">\n'
        f"{poly(m[:, :2], '#1f77b4')}\n{poly(s_in_master[:, :2], '#d62728')}\n</svg>\n"
    )
    path.write_text(svg, newline="\n")


def cmd_calibrate(args) -> int:
    geometry = _geometry(args)
    intr = _intrinsics(args) or (StationIntrinsics(), StationIntrinsics())
    config = CalibrationConfig(
        geometry=geometry,
        master_intrinsics=intr[0],
        slave_intrinsics=intr[1],
        strategy=args.reconstruct,
        nm=_nm_options(args),
    )
    master = sig.read_pulse_csv(args.master)
    slave = sig.read_pulse_csv(args.slave)
    t0 = time.perf_counter()
    result = calibrate(master, slave, config)
    wall = time.perf_counter() - t0
    out = _out_dir(args)
    _write_json(out / "result.json", result.to_dict(deterministic=args.deterministic))
    summary = calibration_summary(result, deterministic=args.deterministic)
    (out / "summary.txt").write_text(summary, newline="\n")
    if args.emit_plots:
        _emit_paths(result, out)
    sys.stdout.write(summary)
    if not args.deterministic:
        log.info("calibration finished in %.2f s", wall)
    return EXIT_OK


def evaluation_table(mae: np.ndarray, sd: np.ndarray) -> tuple[str, str]:
    """The (csv, aligned text) renderings of an MAE/SD table."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", *REPORT_COLUMNS])
    for name, row in (("MAE", mae), ("SD", sd)):
        w.writerow([name, *(f"{v:.4f}" for v in row)])
    width = max(len(c) for c in REPORT_COLUMNS) + 2
    lines = ["metric".ljust(8) + "".join(c.rjust(width) for c in REPORT_COLUMNS)]
    for name, row in (("MAE", mae), ("SD", sd)):
        lines.append(name.ljust(8) + "".join(f"{v:.4f}".rjust(width) for v in row))
    return buf.getvalue(), "\n".join(lines) + "\n"


def _expand(patterns) -> list[Path]:
    paths: list[Path] = []
    for pat in patterns:
        hits = sorted(glob.glob(pat))
        if not hits:
            raise ValidationError(f"no result file matches {pat}")
        paths.extend(Path(h) for h in hits)
    return paths


def _load_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ValidationError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from exc


def cmd_evaluate(args) -> int:
    truth_doc = _load_json(args.truth)
    try:
        truth = Pose6DoF.from_dict(truth_doc["relative_slave_pose"])
    except KeyError as exc:
        raise ValidationError(f"{args.truth} has no relative_slave_pose") from exc
    estimates = [CalibrationResult.from_dict(_load_json(p)).slave_pose for p in _expand(args.results)]
    mae, sd = evaluate(estimates, truth)
    table_csv, table_txt = evaluation_table(mae, sd)
    out = _out_dir(args)
    (out / "evaluation.csv").write_text(table_csv, newline="\n")
    (out / "evaluation.txt").write_text(table_txt, newline="\n")
    sys.stdout.write(table_txt)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "decode": cmd_decode,
    "reconstruct": cmd_reconstruct,
    "calibrate": cmd_calibrate,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CoverageError as exc:
        print(f"error: coverage: {exc}", file=sys.stderr)
        return EXIT_COVERAGE
    except ValidationError as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except StageError as exc:
        print(f"error: stage '{exc.stage}' failed: {exc.cause}", file=sys.stderr)
        return EXIT_STAGE
    except LhcalibError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
