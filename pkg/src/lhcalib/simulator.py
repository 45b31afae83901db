"""Synthetic two-station captures with exact ground truth.

A :class:`Scenario` places two stations and a moving calibration board in a
world frame.  :func:`simulate_capture` plays the 4-slot sweep schedule over
the capture, solves for the instant each laser crosses each diode and emits
the pulses the board would record, split into one stream per station.  Both
streams carry the full sync train so they share one time base.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from . import pulses as sig
from .errors import CoverageError, ValidationError
from .forward_model import StationIntrinsics
from .geometry import (
    BoardGeometry,
    Pose6DoF,
    default_board,
    euler_to_rotation,
    facing_rotation,
    look_at_rotation,
    relative_pose,
    rot_x,
    rot_y,
    rot_z,
)
from .pulses import PulseStream

TRAJECTORY_KINDS = ("static", "line", "half_circle", "lissajous")

SWEEP_PULSE_TICKS = 20  # 10 us
MASTER_SYNC_TICKS = 140  # 70 us
SLAVE_SYNC_TICKS = 200  # 100 us
SLAVE_SYNC_DELAY_TICKS = 800  # 400 us after the master flash
CROSSING_ITERATIONS = 5
CROSSING_TOL_S = 1e-9


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValidationError("zero-length direction vector")
    return v / n


@dataclass(frozen=True)
class TrajectorySpec:
    """Board motion in the world frame.

    ``speed`` is the maximum centroid speed (m/s).  For ``half_circle`` a
    missing speed means one constant-rate sweep of the arc over
    ``duration``; otherwise the board swings smoothly back and forth along
    the arc.  ``axis_u``/``axis_v`` span the plane of the motion (``axis_u``
    alone gives the line direction).
    """

    kind: str = "half_circle"
    center: tuple = (3.0, 0.0, 0.0)
    speed: float | None = None
    radius: float = 0.3
    axis_u: tuple = (0.0, 1.0, 0.0)
    axis_v: tuple = (0.0, 0.0, 1.0)
    base_orientation: tuple = (0.0, -math.pi / 2, 0.0)
    wobble_amplitude: float = 0.1
    wobble_frequency: float = 0.15
    duration: float = 8.0

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise ValidationError(f"unknown trajectory kind {self.kind!r}; expected one of {TRAJECTORY_KINDS}")
        if self.speed is not None and self.speed < 0:
            raise ValidationError("speed must be >= 0")
        if self.radius <= 0 or self.duration <= 0:
            raise ValidationError("radius and duration must be positive")
        if self.wobble_amplitude < 0:
            raise ValidationError("wobble amplitude must be >= 0")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "center_m": list(map(float, self.center)),
            "speed_mps": self.speed,
            "radius_m": self.radius,
            "axis_u": list(map(float, self.axis_u)),
            "axis_v": list(map(float, self.axis_v)),
            "base_orientation_deg": [math.degrees(a) for a in self.base_orientation],
            "wobble_amplitude_deg": math.degrees(self.wobble_amplitude),
            "wobble_frequency_hz": self.wobble_frequency,
            "duration_s": self.duration,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrajectorySpec":
        kw = {"kind": d.get("kind", "half_circle")}
        if "center_m" in d:
            kw["center"] = tuple(d["center_m"])
        if "speed_mps" in d:
            kw["speed"] = d["speed_mps"]
        if "radius_m" in d:
            kw["radius"] = float(d["radius_m"])
        for key in ("axis_u", "axis_v"):
            if key in d:
                kw[key] = tuple(d[key])
        if "base_orientation_deg" in d:
            kw["base_orientation"] = tuple(math.radians(a) for a in d["base_orientation_deg"])
        if "wobble_amplitude_deg" in d:
            kw["wobble_amplitude"] = math.radians(d["wobble_amplitude_deg"])
        if "wobble_frequency_hz" in d:
            kw["wobble_frequency"] = float(d["wobble_frequency_hz"])
        if "duration_s" in d:
            kw["duration"] = float(d["duration_s"])
        return cls(**kw)


class Trajectory:
    """Pose sampler built from a :class:`TrajectorySpec`.

    Calling the object with a time gives a :class:`Pose6DoF`; the
    ``positions``/``rotations`` methods evaluate many times at once.
    """

    def __init__(self, spec: TrajectorySpec):
        self.spec = spec
        self.center = np.asarray(spec.center, dtype=float)
        self.u = _unit(spec.axis_u)
        v = np.asarray(spec.axis_v, dtype=float)
        v = v - np.dot(v, self.u) * self.u
        self.v = _unit(v) if spec.kind in ("half_circle", "lissajous") else v
        self.base_rotation = euler_to_rotation(*spec.base_orientation)

    def positions(self, t) -> np.ndarray:
        s = self.spec
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if s.kind == "static" or (s.speed == 0 and s.kind != "half_circle"):
            return np.broadcast_to(self.center, (len(t), 3)).copy()
        if s.kind == "line":
            return self.center + np.outer(s.speed * (t - s.duration / 2.0), self.u)
        if s.kind == "half_circle":
            if s.speed is None:
                ang = math.pi * t / s.duration
            elif s.speed == 0:
                ang = np.zeros_like(t)
            else:
                rate = 2.0 * s.speed / (math.pi * s.radius)
                ang = 0.5 * math.pi * (1.0 - np.cos(rate * t))
            return self.center + s.radius * (np.outer(np.cos(ang), self.u) + np.outer(np.sin(ang), self.v))
        # lissajous 1:2, peak speed at t = 0
        w = s.speed / (s.radius * math.sqrt(5.0))
        return self.center + s.radius * (np.outer(np.sin(w * t), self.u) + np.outer(np.sin(2.0 * w * t), self.v))

    def wobble(self, t) -> np.ndarray:
        """Euler angle perturbations (N, 3) applied after the base orientation."""
        s = self.spec
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if s.kind == "static":
            return np.zeros((len(t), 3))
        w = 2.0 * math.pi * s.wobble_frequency
        a = s.wobble_amplitude
        return np.column_stack(
            [a * np.sin(w * t), a * np.sin(0.7 * w * t + 1.0), 0.5 * a * np.sin(1.3 * w * t + 2.0)]
        )

    def rotations(self, t) -> np.ndarray:
        e = self.wobble(t)
        ca, sa = np.cos(e[:, 0]), np.sin(e[:, 0])
        cb, sb = np.cos(e[:, 1]), np.sin(e[:, 1])
        cg, sg = np.cos(e[:, 2]), np.sin(e[:, 2])
        W = np.empty((len(e), 3, 3))
        W[:, 0, 0] = ca * cb
        W[:, 0, 1] = ca * sb * sg - sa * cg
        W[:, 0, 2] = ca * sb * cg + sa * sg
        W[:, 1, 0] = sa * cb
        W[:, 1, 1] = sa * sb * sg + ca * cg
        W[:, 1, 2] = sa * sb * cg - ca * sg
        W[:, 2, 0] = -sb
        W[:, 2, 1] = cb * sg
        W[:, 2, 2] = cb * cg
        return self.base_rotation @ W

    def __call__(self, t: float) -> Pose6DoF:
        return Pose6DoF.from_matrix(self.rotations(t)[0], self.positions(t)[0])

    @property
    def max_speed(self) -> float:
        s = self.spec
        if s.kind == "static":
            return 0.0
        if s.kind == "half_circle" and s.speed is None:
            return math.pi * s.radius / s.duration
        return float(s.speed or 0.0)


def generate_trajectory(spec: TrajectorySpec) -> Trajectory:
    return Trajectory(spec)


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement error model.

    ``dropout_prob`` is either one probability for every diode or a mapping
    ``{diode_id: probability}``; a dropped diode emits nothing in that slot.
    """

    quantization: bool = True
    timing_jitter_sd: float = 0.0
    dropout_prob: float | Mapping[int, float] = 0.0

    def __post_init__(self):
        if self.timing_jitter_sd < 0:
            raise ValidationError("timing jitter sd must be >= 0")
        probs = self.dropout_prob.values() if isinstance(self.dropout_prob, Mapping) else [self.dropout_prob]
        for p in probs:
            if not 0.0 <= float(p) <= 1.0:
                raise ValidationError("dropout probabilities must lie in [0, 1]")

    def dropout_vector(self, n_diodes: int) -> np.ndarray:
        if isinstance(self.dropout_prob, Mapping):
            p = np.zeros(n_diodes)
            for k, v in self.dropout_prob.items():
                p[int(k)] = float(v)
            return p
        return np.full(n_diodes, float(self.dropout_prob))

    def to_dict(self) -> dict:
        dp = self.dropout_prob
        if isinstance(dp, Mapping):
            dp = {str(k): float(v) for k, v in sorted(dp.items(), key=lambda kv: int(kv[0]))}
        return {"quantization": self.quantization, "timing_jitter_sd_s": self.timing_jitter_sd, "dropout_prob": dp}

    @classmethod
    def from_dict(cls, d: Mapping) -> "NoiseSpec":
        dp = d.get("dropout_prob", 0.0)
        if isinstance(dp, Mapping):
            dp = {int(k): float(v) for k, v in dp.items()}
        return cls(bool(d.get("quantization", True)), float(d.get("timing_jitter_sd_s", 0.0)), dp)


QUANTIZATION_ONLY = NoiseSpec()
NOISELESS = NoiseSpec(quantization=False)


@dataclass(frozen=True)
class Scenario:
    master_pose: Pose6DoF
    slave_pose: Pose6DoF
    trajectory: TrajectorySpec
    geometry: BoardGeometry = field(default_factory=default_board)
    master_intrinsics: StationIntrinsics = field(default_factory=StationIntrinsics)
    slave_intrinsics: StationIntrinsics = field(default_factory=StationIntrinsics)
    duration: float = 8.0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    fov_deg: float = 60.0
    backface_culling: bool = True

    def __post_init__(self):
        if self.duration <= 0:
            raise ValidationError("duration must be positive")
        if not 0 < self.fov_deg < 90:
            raise ValidationError("fov_deg must lie in (0, 90)")

    @property
    def relative_slave_pose(self) -> Pose6DoF:
        return relative_pose(self.master_pose, self.slave_pose)

    def station(self, name: str) -> tuple[Pose6DoF, StationIntrinsics]:
        if name == sig.MASTER:
            return self.master_pose, self.master_intrinsics
        return self.slave_pose, self.slave_intrinsics

    def to_dict(self) -> dict:
        return {
            "schema": "lhcalib-scenario v1",
            "master_pose": self.master_pose.to_dict(),
            "slave_pose": self.slave_pose.to_dict(),
            "trajectory": self.trajectory.to_dict(),
            "geometry": self.geometry.to_dict(),
            "master_intrinsics": self.master_intrinsics.to_dict(),
            "slave_intrinsics": self.slave_intrinsics.to_dict(),
            "duration_s": self.duration,
            "noise": self.noise.to_dict(),
            "fov_deg": self.fov_deg,
            "backface_culling": self.backface_culling,
        }

    @classmethod
    def from_dict(cls, d: Mapping, geometry: BoardGeometry | None = None) -> "Scenario":
        try:
            kw = dict(
                master_pose=Pose6DoF.from_dict(d.get("master_pose", Pose6DoF().to_dict())),
                slave_pose=Pose6DoF.from_dict(d["slave_pose"]),
                trajectory=TrajectorySpec.from_dict(d.get("trajectory", {})),
                duration=float(d.get("duration_s", 8.0)),
                noise=NoiseSpec.from_dict(d.get("noise", {})),
                fov_deg=float(d.get("fov_deg", 60.0)),
                backface_culling=bool(d.get("backface_culling", True)),
            )
        except KeyError as exc:
            raise ValidationError(f"scenario is missing field {exc}") from exc
        if geometry is not None:
            kw["geometry"] = geometry
        elif "geometry" in d:
            g = d["geometry"]
            kw["geometry"] = BoardGeometry(np.asarray(g["diodes_m"], dtype=float), board_id=str(g.get("board_id", "board")))
        for key in ("master_intrinsics", "slave_intrinsics"):
            if key in d:
                kw[key] = StationIntrinsics.from_dict(d[key])
        return cls(**kw)


def load_scenario(path, geometry: BoardGeometry | None = None) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ValidationError(f"scenario file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"scenario file {path} is not valid JSON: {exc}") from exc
    return Scenario.from_dict(data, geometry=geometry)


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=2) + "\n")


@dataclass(frozen=True)
class GroundTruth:
    scenario: Scenario
    seed: int
    n_slots: int
    relative_slave_pose: Pose6DoF

    def board_pose(self, t: float, frame: str = "master") -> Pose6DoF:
        """Board pose at time ``t`` in the world or a station frame."""
        pose = Trajectory(self.scenario.trajectory)(t)
        if frame == "world":
            return pose
        station_pose, _ = self.scenario.station(frame)
        return relative_pose(station_pose, pose)

    def to_dict(self) -> dict:
        return {
            "schema": "lhcalib-truth v1",
            "seed": self.seed,
            "n_slots": self.n_slots,
            "relative_slave_pose": self.relative_slave_pose.to_dict(),
            "scenario": self.scenario.to_dict(),
        }


def _station_coords(station_pose: Pose6DoF, pts: np.ndarray) -> np.ndarray:
    return (pts - station_pose.position) @ station_pose.rotation()


def _visible_in_fov(q, intrinsics: StationIntrinsics, fov: float) -> np.ndarray:
    qa = q - intrinsics.azimuth_laser_offset
    qe = q - intrinsics.elevation_laser_offset
    front = (qa[..., 0] > 1e-9) & (qe[..., 0] > 1e-9)
    with np.errstate(invalid="ignore", divide="ignore"):
        th = np.arctan2(qa[..., 1], qa[..., 0])
        ph = np.arctan2(qe[..., 2], qe[..., 0])
    return front & (np.abs(th) <= fov) & (np.abs(ph) <= fov)


def coverage_fraction(scenario: Scenario, n_samples: int = 200) -> float:
    """Fraction of the capture during which the board centroid is outside
    the common field of view of the two stations."""
    traj = Trajectory(scenario.trajectory)
    t = np.linspace(0.0, scenario.duration, n_samples)
    c = traj.positions(t)
    fov = math.radians(scenario.fov_deg)
    ok = np.ones(len(t), dtype=bool)
    for name in (sig.MASTER, sig.SLAVE):
        pose, intr = scenario.station(name)
        ok &= _visible_in_fov(_station_coords(pose, c), intr, fov)
    return float(np.mean(~ok))


def validate_coverage(scenario: Scenario, max_outside: float = 0.2) -> None:
    frac = coverage_fraction(scenario)
    if frac > max_outside:
        raise CoverageError(f"board outside the common field of view for {frac:.0%} of the capture")


def _diode_world(traj: Trajectory, geometry: BoardGeometry, t: np.ndarray) -> np.ndarray:
    """World position of diode i at time t[i] (len(t) == n_diodes)."""
    R = traj.rotations(t)
    return np.einsum("nij,nj->ni", R, geometry.diode_positions) + traj.positions(t)


def _diode_sees(traj, geometry, station_pose, intrinsics, t, fov, culling) -> np.ndarray:
    """Visibility mask of every diode from a station at per-diode times."""
    world = _diode_world(traj, geometry, t)
    q = _station_coords(station_pose, world)
    vis = _visible_in_fov(q, intrinsics, fov)
    if culling:
        normals = traj.rotations(t)[:, :, 2]
        vis &= np.einsum("ni,ni->n", normals, station_pose.position - world) > 0.0
    return vis


def sweep_crossings(
    traj: Trajectory,
    geometry: BoardGeometry,
    station_pose: Pose6DoF,
    intrinsics: StationIntrinsics,
    axis: str,
    slot_start: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Crossing instants (s) and true angles (rad) of one sweep, per diode.

    The laser angle at a crossing depends on where the board is at that
    instant, so the crossing time is found by fixed-point iteration on
    ``t = slot_start + dt(angle(t))``.
    """
    n = geometry.n_diodes
    t = np.full(n, slot_start + float(sig.angle_to_delta_t(0.0)))
    angle = np.zeros(n)
    for _ in range(CROSSING_ITERATIONS):
        q = _station_coords(station_pose, _diode_world(traj, geometry, t))
        if axis == sig.AZIMUTH:
            qa = q - intrinsics.azimuth_laser_offset
            angle = np.arctan2(qa[:, 1], qa[:, 0])
        else:
            qe = q - intrinsics.elevation_laser_offset
            angle = np.arctan2(qe[:, 2], qe[:, 0])
        t_new = slot_start + sig.angle_to_delta_t(angle)
        done = np.max(np.abs(t_new - t)) < CROSSING_TOL_S
        t = t_new
        if done:
            break
    return t, angle


def slot_start_ticks(k) -> np.ndarray:
    """Tick of the master sync opening slot ``k`` (on the sampling grid)."""
    return np.round(np.asarray(k, dtype=float) * sig.SLOT_TICKS)


def simulate_capture(scenario: Scenario, seed: int = 0) -> tuple[PulseStream, PulseStream, GroundTruth]:
    """Master pulse stream, slave pulse stream and the ground truth."""
    validate_coverage(scenario)
    rng = np.random.default_rng(seed)
    traj = Trajectory(scenario.trajectory)
    geom = scenario.geometry
    n = geom.n_diodes
    fov = math.radians(scenario.fov_deg)
    noise = scenario.noise
    p_drop = noise.dropout_vector(n)
    jitter = noise.timing_jitter_sd * sig.TICK_HZ
    n_slots = int(round(scenario.duration / sig.SLOT_S))
    ids = np.arange(n)

    syncs: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    sweeps = {sig.MASTER: [], sig.SLAVE: []}

    def edge_noise(size):
        return rng.normal(0.0, jitter, size) if jitter > 0 else np.zeros(size)

    def quantize(x):
        return np.round(x) if noise.quantization else x

    for k in range(n_slots):
        t0_ticks = float(slot_start_ticks(k))
        t0 = t0_ticks / sig.TICK_HZ
        station, axis = sig.SCHEDULE[k % 4]
        alive = rng.random(n) >= p_drop
        t_sync = np.full(n, t0)
        for name, delay, width in (
            (sig.MASTER, 0, MASTER_SYNC_TICKS),
            (sig.SLAVE, SLAVE_SYNC_DELAY_TICKS, SLAVE_SYNC_TICKS),
        ):
            pose, intr = scenario.station(name)
            sees = alive & _diode_sees(traj, geom, pose, intr, t_sync, fov, scenario.backface_culling)
            start = quantize(t0_ticks + delay + edge_noise(n))[sees]
            syncs.append((ids[sees], start, start + width))
        pose, intr = scenario.station(station)
        t_cross, _ = sweep_crossings(traj, geom, pose, intr, axis, t0)
        sees = alive & _diode_sees(traj, geom, pose, intr, t_cross, fov, scenario.backface_culling)
        centre = quantize(t_cross * sig.TICK_HZ + edge_noise(n))[sees]
        half = SWEEP_PULSE_TICKS // 2
        sweeps[station].append((ids[sees], centre - half, centre + half))

    def build(name):
        parts = syncs + sweeps[name]
        return PulseStream(
            np.concatenate([p[0] for p in parts]),
            np.concatenate([p[1] for p in parts]),
            np.concatenate([p[2] for p in parts]),
        )

    truth = GroundTruth(scenario, seed, n_slots, scenario.relative_slave_pose)
    return build(sig.MASTER), build(sig.SLAVE), truth


@dataclass(frozen=True)
class Setup:
    """Fixed station placement shared by several captures."""

    master_pose: Pose6DoF
    slave_pose: Pose6DoF
    target: np.ndarray  # workspace centre, world frame


def random_setup(rng: np.random.Generator, separation=(1.0, 4.0), distance=(2.5, 5.0)) -> Setup:
    """Random master/slave placement looking at a common workspace.

    The master gets an arbitrary world pose; the slave sits ``separation``
    meters away and is aimed at the workspace with a few degrees of error.
    """
    for _ in range(1000):
        m_R = rot_z(rng.uniform(-math.pi, math.pi)) @ rot_y(rng.uniform(-0.15, 0.15)) @ rot_x(rng.uniform(-0.1, 0.1))
        m_t = rng.uniform(-2.0, 2.0, 3)
        master = Pose6DoF.from_matrix(m_R, m_t)
        d_m = rng.uniform(*distance)
        az, el = rng.uniform(-0.3, 0.3), rng.uniform(-0.2, 0.2)
        target = d_m * np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])
        sep = rng.uniform(*separation)
        offset = _unit([rng.uniform(-0.6, 0.2), rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.0), rng.uniform(-0.3, 0.3)])
        s_pos = sep * offset
        d_s = np.linalg.norm(target - s_pos)
        if not 2.0 <= d_s <= 6.0:
            continue
        s_R = look_at_rotation(target - s_pos, roll=rng.uniform(-0.2, 0.2))
        s_R = s_R @ rot_z(rng.uniform(-0.15, 0.15)) @ rot_y(rng.uniform(-0.15, 0.15))
        slave_rel = Pose6DoF.from_matrix(s_R, s_pos)
        master_to_world = master
        slave = Pose6DoF.from_matrix(m_R @ slave_rel.rotation(), m_R @ slave_rel.position + m_t)
        return Setup(master_to_world, slave, m_R @ target + m_t)
    raise RuntimeError("could not draw a valid setup")


def scenario_for_setup(
    setup: Setup,
    rng: np.random.Generator,
    kind: str | None = None,
    speed: float | None = None,
    radius: float | None = None,
    noise: NoiseSpec = QUANTIZATION_ONLY,
    duration: float = 8.0,
    geometry: BoardGeometry | None = None,
) -> Scenario:
    """Random capture (motion pattern, speed, size, offset) for a setup."""
    geometry = geometry or default_board()
    for _ in range(1000):
        k = kind or str(rng.choice(["half_circle", "lissajous"]))
        sp = speed if speed is not None else float(rng.uniform(0.1, 1.0))
        r = radius if radius is not None else float(rng.uniform(0.2, 0.5))
        centre = setup.target + rng.normal(0.0, 0.15, 3)
        mid = 0.5 * (setup.master_pose.position + setup.slave_pose.position)
        R_board = facing_rotation(mid - centre, roll=rng.uniform(-math.pi, math.pi))
        R_board = R_board @ rot_x(rng.uniform(-0.3, 0.3)) @ rot_y(rng.uniform(-0.3, 0.3))
        base = Pose6DoF.from_matrix(R_board, centre)
        spec = TrajectorySpec(
            kind=k,
            center=tuple(centre),
            speed=sp,
            radius=r,
            axis_u=tuple(R_board[:, 0]),
            axis_v=tuple(R_board[:, 1]),
            base_orientation=(base.alpha, base.beta, base.gamma),
            wobble_amplitude=float(rng.uniform(0.05, 0.2)),
            wobble_frequency=float(rng.uniform(0.05, 0.3)),
            duration=duration,
        )
        sc = Scenario(setup.master_pose, setup.slave_pose, spec, geometry=geometry, duration=duration, noise=noise)
        if coverage_fraction(sc) == 0.0 and _board_faces_both(sc):
            return sc
    raise RuntimeError("could not draw a scenario covered by both stations")


def _board_faces_both(sc: Scenario, n_samples: int = 50) -> bool:
    traj = Trajectory(sc.trajectory)
    t = np.linspace(0.0, sc.duration, n_samples)
    c, n = traj.positions(t), traj.rotations(t)[:, :, 2]
    for name in (sig.MASTER, sig.SLAVE):
        pose, _ = sc.station(name)
        to_station = pose.position - c
        cosang = np.einsum("ni,ni->n", n, to_station) / np.linalg.norm(to_station, axis=1)
        if np.any(cosang < math.cos(math.radians(70.0))):
            return False
    return True


def with_noise(scenario: Scenario, noise: NoiseSpec) -> Scenario:
    return replace(scenario, noise=noise)
