"""Automatic calibration of the slave station relative to the master.

Steps:

1. decode both pulse streams and reconstruct full angle frames;
2. fit the board pose of every frame with each station placed at the
   origin, giving one measurement path per station;
3. resample both paths onto a common set of instants;
4. superpose the slave path onto the master path (weighted Kabsch), which
   places the slave station at the resulting rigid transform;
5. refine that pose against every slave frame, using the master-frame
   board poses.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from . import pulses as sig
from .errors import (
    AlignmentError,
    DegenerateConfigurationError,
    InsufficientDataError,
    LhcalibError,
    PathQualityError,
    StageError,
    ValidationError,
)
from .forward_model import StationIntrinsics
from .geometry import (
    BoardGeometry,
    Pose6DoF,
    compose,
    default_board,
    facing_rotation,
    geodesic_angle,
    rot_z,
    wrap_angle,
)
from .kabsch import RigidFit, residual_weights, weighted_kabsch
from .optimize import (
    NmOptions,
    ObjectiveReport,
    estimate_board_pose,
    estimate_station_pose,
    initial_board_guess,
    station_loss_fast,
)
from .reconstruct import AngleFrame, reconstruct

log = logging.getLogger(__name__)

RESULT_SCHEMA = "lhcalib-result v1"
# Below this median angle between the board normal and the line of sight the
# board tilt is only seen to second order and the station pose drifts freely.
WEAK_VIEW_DEG = 10.0


@dataclass(frozen=True)
class PathPose:
    t: float
    pose: Pose6DoF
    residual: float


@dataclass(frozen=True)
class CalibrationConfig:
    """Knobs of the calibration run.

    ``warm_start`` seeds each frame fit with the previous solution;
    ``mirror_check`` also tries the tilt-mirrored board orientation and keeps
    the better fit.  Turning both off gives one plain fit per frame from the
    mean-angle guess.
    """

    geometry: BoardGeometry = field(default_factory=default_board)
    master_intrinsics: StationIntrinsics = field(default_factory=StationIntrinsics)
    slave_intrinsics: StationIntrinsics = field(default_factory=StationIntrinsics)
    strategy: str = "full"
    nm: NmOptions = field(default_factory=NmOptions)
    warm_start: bool = True
    mirror_check: bool = True
    min_frames: int = 10
    max_drop_fraction: float = 0.5
    min_path_spread_m: float = 0.02
    weight_floor_fraction: float = 0.01


@dataclass
class CalibrationResult:
    slave_pose: Pose6DoF
    initial_slave_pose: Pose6DoF
    epsilon_final: float
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)
    # in-memory only: master/slave paths and their time-aligned versions
    paths: dict = field(default_factory=dict, repr=False, compare=False)

    def to_dict(self, deterministic: bool = True) -> dict:
        out = {
            "schema": RESULT_SCHEMA,
            "slave_pose": self.slave_pose.to_dict(),
            "initial_slave_pose": self.initial_slave_pose.to_dict(),
            "epsilon_final": self.epsilon_final,
            "converged": self.converged,
            "diagnostics": _jsonable(self.diagnostics),
        }
        if deterministic:
            out["diagnostics"].pop("wall_time_s", None)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationResult":
        if d.get("schema") != RESULT_SCHEMA:
            raise ValidationError(f"unsupported result schema {d.get('schema')!r}")
        return cls(
            Pose6DoF.from_dict(d["slave_pose"]),
            Pose6DoF.from_dict(d["initial_slave_pose"]),
            float(d["epsilon_final"]),
            bool(d.get("converged", True)),
            dict(d.get("diagnostics", {})),
        )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Pose6DoF):
        return obj.to_dict()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _report_summary(rep: ObjectiveReport) -> dict:
    return {
        "residual": rep.residual,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "restarts_used": rep.restarts_used,
    }


# -- per-station paths ---------------------------------------------------------


def mirror_candidate(board_pose: Pose6DoF, station_pose: Pose6DoF) -> Pose6DoF:
    """The tilt-mirrored twin of a planar board pose.

    Rotating by pi about the line of sight reflects the board normal about
    that line; the extra pi turn about the normal restores the in-plane
    layout, so both poses project to nearly the same angles.
    """
    v = board_pose.position - station_pose.position
    v = v / np.linalg.norm(v)
    flip = Rotation.from_rotvec(math.pi * v).as_matrix()
    return Pose6DoF.from_matrix(flip @ board_pose.rotation() @ rot_z(math.pi), board_pose.position)


def _cold_start_seeds(frame, geometry, station_pose) -> list[Pose6DoF]:
    guess = initial_board_guess(frame, geometry)
    seeds = [guess]
    toward = station_pose.position - guess.position
    for k in range(4):
        seeds.append(Pose6DoF.from_matrix(facing_rotation(toward, roll=k * math.pi / 2), guess.position))
    return seeds


def frame_candidates(
    frame: AngleFrame,
    station_pose: Pose6DoF,
    intrinsics: StationIntrinsics,
    geometry: BoardGeometry,
    previous: Pose6DoF | None = None,
    opts: NmOptions | None = None,
    mirror_check: bool = True,
    multi_start: bool = True,
) -> list[ObjectiveReport]:
    """Candidate board poses for one frame, best residual first.

    The start point is ``previous`` when given, otherwise the mean-angle
    guess plus board-facing seeds (or the guess alone without
    ``multi_start``).  With ``mirror_check`` the tilt-mirrored twin of the
    best fit is refined as well and returned as a second candidate.
    """
    if previous is not None:
        best = estimate_board_pose(station_pose, intrinsics, geometry, frame, x0=previous, opts=opts)
    elif multi_start:
        best = None
        for seed in _cold_start_seeds(frame, geometry, station_pose):
            rep = estimate_board_pose(station_pose, intrinsics, geometry, frame, x0=seed, opts=opts)
            if best is None or (rep.converged, -rep.residual) > (best.converged, -best.residual):
                best = rep
    else:
        best = estimate_board_pose(station_pose, intrinsics, geometry, frame, opts=opts)
    out = [best]
    if mirror_check:
        twin = estimate_board_pose(
            station_pose, intrinsics, geometry, frame, x0=mirror_candidate(best.solution, station_pose), opts=opts
        )
        twin.diagnostics["mirrored"] = True
        if twin.converged and geodesic_angle(twin.solution.rotation(), best.solution.rotation()) > 1e-6:
            out.append(twin)
    return sorted(out, key=lambda r: (not r.converged, r.residual))


def fit_frame(*args, **kwargs) -> ObjectiveReport:
    """Lowest-residual board pose among :func:`frame_candidates`."""
    return frame_candidates(*args, **kwargs)[0]


def select_consistent(
    candidates: Sequence[Sequence[ObjectiveReport]],
    n_angles: Sequence[int],
    min_step_sd: float = math.radians(0.5),
) -> list[int]:
    """Index of the chosen candidate per frame (Viterbi).

    Each choice costs its residual in log-likelihood units, with the angle
    noise variance estimated from the median best residual; each transition
    costs the squared rotation step over a robust step scale.  A mirrored
    twin therefore only wins when the residuals or the continuity of the
    orientation favour it.
    """
    n = len(candidates)
    if n == 0:
        return []
    floor = float(np.median([c[0].residual / k for c, k in zip(candidates, n_angles)]))
    floor = max(floor, 1e-30)
    rots = [[r.solution.rotation() for r in c] for c in candidates]
    steps = [geodesic_angle(rots[i][0], rots[i + 1][0]) for i in range(n - 1)]
    sd = max(min_step_sd, 1.4826 * float(np.median(steps))) if steps else min_step_sd
    unary = [np.array([r.residual / (2.0 * floor) for r in c]) for c in candidates]
    cost = unary[0]
    back = []
    for i in range(1, n):
        trans = np.array([[geodesic_angle(a, b) for a in rots[i - 1]] for b in rots[i]])
        total = cost[None, :] + 0.5 * (trans / sd) ** 2
        arg = np.argmin(total, axis=1)
        back.append(arg)
        cost = total[np.arange(len(arg)), arg] + unary[i]
    choice = [int(np.argmin(cost))]
    for arg in reversed(back):
        choice.append(int(arg[choice[-1]]))
    return choice[::-1]


def estimate_path(
    frames: Sequence[AngleFrame],
    intrinsics: StationIntrinsics,
    geometry: BoardGeometry,
    config: CalibrationConfig | None = None,
    stats: dict | None = None,
) -> list[PathPose]:
    """Board pose of every frame with the station at the origin."""
    cfg = config or CalibrationConfig(geometry=geometry)
    if len(frames) < cfg.min_frames:
        raise InsufficientDataError(f"path estimation needs >= {cfg.min_frames} frames, got {len(frames)}")
    origin = Pose6DoF()
    kept: list[tuple[AngleFrame, list[ObjectiveReport]]] = []
    dropped = iterations = 0
    previous = None
    for fr in frames:
        cands = frame_candidates(
            fr,
            origin,
            intrinsics,
            geometry,
            previous=previous if cfg.warm_start else None,
            opts=cfg.nm,
            mirror_check=cfg.mirror_check,
            multi_start=cfg.warm_start or cfg.mirror_check,
        )
        iterations += sum(c.iterations for c in cands)
        best = cands[0]
        if not best.converged or best.diagnostics.get("behind_station"):
            dropped += 1
            previous = None
            continue
        kept.append((fr, cands))
        previous = best.solution
    choice = select_consistent([c for _, c in kept], [2 * len(f) for f, _ in kept])
    path = [PathPose(fr.t, cands[k].solution, cands[k].residual) for (fr, cands), k in zip(kept, choice)]
    if stats is not None:
        stats.update(
            frames=len(frames),
            dropped_frames=dropped,
            mirror_switches=int(sum(bool(c[k].diagnostics.get("mirrored")) for (_, c), k in zip(kept, choice))),
            non_best_choices=int(sum(k != 0 for k in choice)),
            iterations=iterations,
            median_residual=float(np.median([p.residual for p in path])) if path else None,
        )
    if dropped > cfg.max_drop_fraction * len(frames):
        raise PathQualityError(f"{dropped} of {len(frames)} frame fits failed to converge")
    return path


# -- time alignment --------------------------------------------------------------


def _interpolate_path(path: Sequence[PathPose], times: np.ndarray) -> list[PathPose]:
    t = np.array([p.t for p in path])
    pos = np.array([p.pose.position for p in path])
    res = np.array([p.residual for p in path])
    P = np.column_stack([np.interp(times, t, pos[:, k]) for k in range(3)])
    eps = np.interp(times, t, res)
    if len(path) > 1:
        rots = Slerp(t, Rotation.from_matrix(np.stack([p.pose.rotation() for p in path])))(times).as_matrix()
    else:
        rots = np.repeat(path[0].pose.rotation()[None], len(times), axis=0)
    return [PathPose(float(ti), Pose6DoF.from_matrix(R, p), float(e)) for ti, R, p, e in zip(times, rots, P, eps)]


def interpolate_poses(path: Sequence[PathPose], times) -> list[PathPose]:
    """Path poses at arbitrary instants inside the path's time span."""
    times = np.asarray(times, dtype=float)
    if len(path) == 0:
        raise AlignmentError("empty path")
    if times.size and (times.min() < path[0].t or times.max() > path[-1].t):
        raise AlignmentError("interpolation instants outside the path's time span")
    return _interpolate_path(path, times)


def align_paths_in_time(
    master_path: Sequence[PathPose], slave_path: Sequence[PathPose]
) -> tuple[list[PathPose], list[PathPose]]:
    """Both paths resampled at the union of their instants within the
    common time span; positions per coordinate linearly, orientations by
    spherical interpolation, residuals linearly."""
    if not master_path or not slave_path:
        raise AlignmentError("cannot align an empty path")
    lo = max(master_path[0].t, slave_path[0].t)
    hi = min(master_path[-1].t, slave_path[-1].t)
    if lo > hi:
        raise AlignmentError(f"paths do not overlap in time ({lo:.4f} s > {hi:.4f} s)")
    times = np.union1d([p.t for p in master_path], [p.t for p in slave_path])
    times = times[(times >= lo) & (times <= hi)]
    return _interpolate_path(master_path, times), _interpolate_path(slave_path, times)


# -- slave pose ------------------------------------------------------------------


def pair_weights(master_aligned, slave_aligned, floor_fraction: float = 0.01) -> np.ndarray:
    eps = np.array([m.residual + s.residual for m, s in zip(master_aligned, slave_aligned)])
    return residual_weights(eps, floor_fraction)


def initial_slave_pose(
    master_aligned: Sequence[PathPose],
    slave_aligned: Sequence[PathPose],
    floor_fraction: float = 0.01,
) -> tuple[Pose6DoF, RigidFit]:
    """Slave pose from superposing the slave path onto the master path."""
    if len(master_aligned) != len(slave_aligned):
        raise ValidationError("aligned paths must have equal length")
    if len(master_aligned) < 3:
        raise InsufficientDataError("at least 3 aligned path points are required")
    src = np.array([p.pose.position for p in slave_aligned])
    dst = np.array([p.pose.position for p in master_aligned])
    fit = weighted_kabsch(src, dst, pair_weights(master_aligned, slave_aligned, floor_fraction))
    # the slave station sits at the slave-frame origin with identity rotation
    return Pose6DoF.from_matrix(fit.rotation, fit.translation), fit


def path_spread(path: Sequence[PathPose]) -> float:
    """RMS extent of the path positions along their second principal axis."""
    pos = np.array([p.pose.position for p in path])
    if len(pos) < 3:
        return 0.0
    sv = np.linalg.svd(pos - pos.mean(axis=0), compute_uv=False)
    return float(sv[1] / math.sqrt(len(pos)))


def view_angle(path: Sequence[PathPose]) -> float:
    """Median angle (degrees) between the board normal and the line of sight
    of the station at the path frame's origin."""
    ang = []
    for p in path:
        pos = p.pose.position
        n = p.pose.rotation()[:, 2]
        ang.append(math.degrees(math.acos(min(1.0, abs(float(n @ pos)) / max(np.linalg.norm(pos), 1e-12)))))
    return float(np.median(ang)) if ang else float("nan")


def pose_based_slave_pose(master_aligned, slave_aligned, floor_fraction: float = 0.01) -> Pose6DoF:
    """Slave pose from matched board poses: each pair gives
    ``P_master o P_slave^-1``; rotations are averaged with residual weights."""
    w = pair_weights(master_aligned, slave_aligned, floor_fraction)
    Rs, Ts = [], []
    for m, s in zip(master_aligned, slave_aligned):
        L = compose(m.pose, s.pose.inverse())
        Rs.append(L.rotation())
        Ts.append(L.position)
    R = Rotation.from_matrix(np.stack(Rs)).mean(weights=w).as_matrix()
    T = np.average(np.array(Ts), axis=0, weights=w)
    return Pose6DoF.from_matrix(R, T)


def final_slave_pose(
    master_path: Sequence[PathPose],
    slave_frames: Sequence[AngleFrame],
    L0: Pose6DoF,
    intrinsics: StationIntrinsics,
    geometry: BoardGeometry,
    opts: NmOptions | None = None,
) -> CalibrationResult:
    """Refine the slave pose against the slave frames, with the board poses
    taken from the master path at the slave frame instants."""
    lo, hi = master_path[0].t, master_path[-1].t
    frames = [f for f in slave_frames if lo <= f.t <= hi]
    if not frames:
        raise AlignmentError("no slave frames inside the master path's time span")
    boards = interpolate_poses(master_path, [f.t for f in frames])
    rep = estimate_station_pose([b.pose for b in boards], frames, L0, intrinsics, geometry, opts)
    k2_start = station_loss_fast(L0, intrinsics, geometry, frames, [b.pose for b in boards])
    solution, residual = rep.solution, rep.residual
    if k2_start <= residual:
        # the search never ends above its start; guard against round-off
        solution, residual = L0, k2_start
    diag = {
        "refinement": _report_summary(rep),
        "k2_initial": k2_start,
        "refined_frames": len(frames),
        "delta_position_m": float(np.linalg.norm(solution.position - L0.position)),
        "delta_rotation_deg": math.degrees(geodesic_angle(solution.rotation(), L0.rotation())),
    }
    if not rep.converged:
        diag["warning"] = "final refinement did not converge"
    return CalibrationResult(solution, L0, residual, rep.converged, diag)


# -- end to end -----------------------------------------------------------------


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except LhcalibError as exc:
        raise StageError(name, exc) from exc


def frames_from_stream(stream, strategy: str = "full", diagnostics: dict | None = None) -> list[AngleFrame]:
    """Decode a pulse stream and reconstruct angle frames of the station
    whose sweeps it contains."""
    dec: dict = {}
    records = sig.decode_stream(stream, diagnostics=dec)
    rec_stats: dict = {}
    frames = reconstruct([r for r in records if r.angles], strategy, rec_stats)
    if diagnostics is not None:
        diagnostics["decode"] = dec
        diagnostics["reconstruct"] = dict(rec_stats, frames=len(frames), records=sum(1 for r in records if r.angles))
    return frames


def calibrate_frames(
    master_frames: Sequence[AngleFrame],
    slave_frames: Sequence[AngleFrame],
    config: CalibrationConfig | None = None,
    diagnostics: dict | None = None,
) -> CalibrationResult:
    cfg = config or CalibrationConfig()
    diag = {} if diagnostics is None else diagnostics
    m_stats: dict = {}
    s_stats: dict = {}
    master_path = _stage("master_path", estimate_path, master_frames, cfg.master_intrinsics, cfg.geometry, cfg, m_stats)
    slave_path = _stage("slave_path", estimate_path, slave_frames, cfg.slave_intrinsics, cfg.geometry, cfg, s_stats)
    diag["master_path"] = m_stats
    diag["slave_path"] = s_stats
    m_al, s_al = _stage("align", align_paths_in_time, master_path, slave_path)
    diag["aligned_points"] = len(m_al)
    views = {"master": view_angle(master_path), "slave": view_angle(slave_path)}
    diag["view_angle_deg"] = views
    weak = [k for k, v in views.items() if v < WEAK_VIEW_DEG]
    if weak:
        msg = f"board seen nearly face-on by {', '.join(weak)} (median {min(views.values()):.1f} deg); pose weakly constrained"
        log.warning(msg)
        diag["view_warning"] = msg
    spread = min(path_spread(m_al), path_spread(s_al))
    diag["path_spread_m"] = spread
    try:
        if spread < cfg.min_path_spread_m:
            raise DegenerateConfigurationError(
                f"calibration path spans only {spread * 1000:.1f} mm across its main direction"
            )
        L0, fit = initial_slave_pose(m_al, s_al, cfg.weight_floor_fraction)
        diag["kabsch_weighted_rmsd_m"] = fit.weighted_rmsd
        diag["initial_method"] = "kabsch"
    except DegenerateConfigurationError as exc:
        log.warning("path superposition degenerate (%s); using matched board poses", exc)
        L0 = _stage("initial_pose", pose_based_slave_pose, m_al, s_al, cfg.weight_floor_fraction)
        diag["initial_method"] = "board_poses"
        diag["kabsch_degenerate"] = str(exc)
    except LhcalibError as exc:
        raise StageError("initial_pose", exc) from exc
    result = _stage("final_pose", final_slave_pose, master_path, slave_frames, L0, cfg.slave_intrinsics, cfg.geometry, cfg.nm)
    result.diagnostics = {**diag, **result.diagnostics}
    result.paths = {"master": master_path, "slave": slave_path, "master_aligned": m_al, "slave_aligned": s_al}
    return result


def calibrate(master_pulses, slave_pulses, config: CalibrationConfig | None = None) -> CalibrationResult:
    """Slave station pose in the master frame from the two pulse captures."""
    cfg = config or CalibrationConfig()
    t0 = time.perf_counter()
    diag: dict = {"strategy": cfg.strategy}
    m_diag: dict = {}
    s_diag: dict = {}
    master_frames = _stage("master_decode", frames_from_stream, master_pulses, cfg.strategy, m_diag)
    slave_frames = _stage("slave_decode", frames_from_stream, slave_pulses, cfg.strategy, s_diag)
    diag["master_signal"] = m_diag
    diag["slave_signal"] = s_diag
    result = calibrate_frames(master_frames, slave_frames, cfg, diag)
    result.diagnostics["wall_time_s"] = time.perf_counter() - t0
    return result


# -- evaluation -------------------------------------------------------------------

REPORT_COLUMNS = ("X (mm)", "Y (mm)", "Z (mm)", "alpha (deg)", "beta (deg)", "gamma (deg)")


def pose_errors(estimates: Sequence[Pose6DoF], truth: Pose6DoF) -> np.ndarray:
    """Per-axis signed errors (N, 6) in mm and degrees, angles wrapped."""
    est = np.array([p.as_vector() for p in estimates])
    diff = est - truth.as_vector()
    diff[:, 3:] = np.degrees(wrap_angle(diff[:, 3:]))
    diff[:, :3] *= 1000.0
    return diff


def evaluate(estimates: Sequence[Pose6DoF], truth: Pose6DoF) -> tuple[np.ndarray, np.ndarray]:
    """Mean absolute error and sample standard deviation per pose axis.

    Units are mm for X, Y, Z and degrees for alpha, beta, gamma.  The SD of
    a single estimate is NaN.
    """
    if len(estimates) == 0:
        raise InsufficientDataError("no estimates to evaluate")
    err = pose_errors(estimates, truth)
    mae = np.mean(np.abs(err), axis=0)
    if len(estimates) < 2:
        sd = np.full(6, np.nan)
    else:
        sd = np.std(err, axis=0, ddof=1)
    return mae, sd
