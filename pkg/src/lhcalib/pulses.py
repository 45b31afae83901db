"""Decoding of photodiode pulse streams into per-sweep angle records.

Timing model
------------
The board samples every diode at 2 MHz, so timestamps are integer ticks of
0.5 us.  The stations run a cyclic schedule of 8.333 ms slots::

    slot 0: master azimuth   slot 1: master elevation
    slot 2: slave azimuth    slot 3: slave elevation

Every slot opens with a master sync flash (60-80 us) followed by a slave
sync flash (90-110 us); one laser then sweeps and each diode it crosses
sees a short pulse (4-40 us).  The time from the master sync start to the
middle of the sweep pulse maps linearly to an angle through the 60 Hz rotor
rate::

    angle = dt * 2*pi*60 - pi/2

so a diode straight ahead (angle 0) is crossed 4.1667 ms into the slot.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import EmptyCaptureError, RangeError, ValidationError

log = logging.getLogger(__name__)

TICK_HZ = 2_000_000
ROTOR_HZ = 60.0
OMEGA = 2.0 * math.pi * ROTOR_HZ  # rad/s, 21600 deg/s
SLOT_S = 1.0 / (2.0 * ROTOR_HZ)  # 8.333 ms
SLOT_TICKS = SLOT_S * TICK_HZ  # 16666.67 ticks
ANGLE_PER_TICK = OMEGA / TICK_HZ  # 0.0108 deg

# Pulse width classes in microseconds (inclusive bounds).
SYNC_MASTER_US = (60.0, 80.0)
SYNC_SLAVE_US = (90.0, 110.0)
SWEEP_US = (4.0, 40.0)

SYNC_MASTER = "sync_master"
SYNC_SLAVE = "sync_slave"
SWEEP = "sweep"
UNKNOWN = "unknown"

MASTER = "master"
SLAVE = "slave"
AZIMUTH = "azimuth"
ELEVATION = "elevation"
SCHEDULE = ((MASTER, AZIMUTH), (MASTER, ELEVATION), (SLAVE, AZIMUTH), (SLAVE, ELEVATION))

CSV_HEADER = "# lhcalib-pulses v1; tick_hz=2000000; widths=60-80/90-110/4-40us"


def delta_t_to_angle(dt: float) -> float:
    """Sweep angle (rad) for a delay ``dt`` (s) after the sync start."""
    if not (0.0 < dt < SLOT_S):
        raise RangeError(f"dt = {dt!r} s outside (0, {SLOT_S:.6g}) s")
    return dt * OMEGA - math.pi / 2.0


def angle_to_delta_t(angle):
    """Inverse of :func:`delta_t_to_angle` (no range check)."""
    return (np.asarray(angle, dtype=float) + math.pi / 2.0) / OMEGA


def classify_width(ticks: float) -> str:
    us = ticks * 1e6 / TICK_HZ
    if SYNC_MASTER_US[0] <= us <= SYNC_MASTER_US[1]:
        return SYNC_MASTER
    if SYNC_SLAVE_US[0] <= us <= SYNC_SLAVE_US[1]:
        return SYNC_SLAVE
    if SWEEP_US[0] <= us <= SWEEP_US[1]:
        return SWEEP
    return UNKNOWN


@dataclass(frozen=True)
class PulseEvent:
    diode_id: int
    t_start: float
    t_end: float

    def __post_init__(self):
        if self.diode_id < 0:
            raise ValidationError(f"negative diode id {self.diode_id}")
        if not self.t_end > self.t_start:
            raise ValidationError(f"pulse on diode {self.diode_id} has t_end <= t_start")

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


def classify_pulse(event: PulseEvent) -> str:
    """``sync_master``, ``sync_slave``, ``sweep`` or ``unknown`` by pulse width."""
    return classify_width(event.duration)


@dataclass(frozen=True)
class PulseStream:
    """Column-oriented pulse capture (ticks)."""

    diode_id: np.ndarray
    t_start: np.ndarray
    t_end: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diode_id, dtype=np.int64)
        s = np.asarray(self.t_start, dtype=float)
        e = np.asarray(self.t_end, dtype=float)
        if not (d.shape == s.shape == e.shape) or d.ndim != 1:
            raise ValidationError("pulse columns must be equal-length 1-D arrays")
        if np.any(e <= s):
            i = int(np.flatnonzero(e <= s)[0])
            raise ValidationError(f"pulse {i} has t_end <= t_start")
        order = np.lexsort((d, s))
        for name, arr in (("diode_id", d[order]), ("t_start", s[order]), ("t_end", e[order])):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_events(cls, events: Iterable[PulseEvent]) -> "PulseStream":
        ev = list(events)
        return cls(
            np.array([e.diode_id for e in ev], dtype=np.int64),
            np.array([e.t_start for e in ev], dtype=float),
            np.array([e.t_end for e in ev], dtype=float),
        )

    @classmethod
    def empty(cls) -> "PulseStream":
        return cls(np.zeros(0, np.int64), np.zeros(0), np.zeros(0))

    def __len__(self) -> int:
        return len(self.diode_id)

    def __iter__(self) -> Iterator[PulseEvent]:
        for d, s, e in zip(self.diode_id, self.t_start, self.t_end):
            yield PulseEvent(int(d), float(s), float(e))

    @property
    def is_integral(self) -> bool:
        return bool(np.all(self.t_start == np.round(self.t_start)) and np.all(self.t_end == np.round(self.t_end)))

    def without_diode(self, diode: int) -> "PulseStream":
        keep = self.diode_id != diode
        return PulseStream(self.diode_id[keep], self.t_start[keep], self.t_end[keep])


def write_pulse_csv(stream: PulseStream, path) -> None:
    """Write the integer-tick CSV format; fractional ticks are rounded."""
    s, e = stream.t_start, stream.t_end
    if not stream.is_integral:
        log.warning("pulse stream has fractional ticks; rounding to the 2 MHz grid for %s", path)
        s, e = np.round(s), np.round(e)
        e = np.maximum(e, s + 1)
    rows = np.column_stack([stream.diode_id, s.astype(np.int64), e.astype(np.int64)])
    body = "\n".join(f"{d},{a},{b}" for d, a, b in rows.tolist())
    with open(path, "w", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        if body:
            fh.write(body + "\n")


def read_pulse_csv(path) -> PulseStream:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise ValidationError(f"pulse file not found: {path}") from exc
    lines = text.split("\n")
    if not lines or lines[0].strip() != CSV_HEADER:
        raise ValidationError(f"{path}:1: missing or unsupported header (expected '{CSV_HEADER}')")
    d, s, e = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        try:
            if len(parts) != 3:
                raise ValueError("expected 3 fields")
            a, b, c = (int(p) for p in parts)
            if a < 0 or c <= b:
                raise ValueError("negative diode id or t_end <= t_start")
        except ValueError as exc:
            raise ValidationError(f"{path}:{lineno}: bad pulse row {line!r} ({exc})") from exc
        d.append(a)
        s.append(b)
        e.append(c)
    return PulseStream(np.array(d, dtype=np.int64), np.array(s, dtype=float), np.array(e, dtype=float))


@dataclass(frozen=True)
class DecodeConfig:
    tick_hz: int = TICK_HZ
    lock_tolerance_ticks: float = 4.0
    sync_cluster_ticks: float = 40.0
    fov_deg: float = 60.0
    fov_guard_deg: float = 1.0
    dt_window_s: tuple[float, float] = (1.2e-3, 6.7e-3)
    dt_guard_s: float = 0.3e-3


@dataclass(frozen=True)
class SweepRecord:
    """Angles of one sweep slot.

    ``slot_time`` is the master sync start in ticks; ``raw_dt`` holds the
    per-diode delay in seconds so that the crossing instant of diode ``d``
    is ``slot_time / TICK_HZ + raw_dt[d]``.
    """

    slot_time: float
    station: str
    axis: str
    angles: dict = field(default_factory=dict)
    raw_dt: dict = field(default_factory=dict)
    slot_index: int = 0

    @property
    def t(self) -> float:
        return self.slot_time / TICK_HZ

    def sample_time(self, diode: int) -> float:
        return self.slot_time / TICK_HZ + self.raw_dt[diode]


def _midpoint(start: np.ndarray, end: np.ndarray) -> np.ndarray:
    total = start + end
    if np.all(total == np.round(total)):
        # integer ticks: round half up
        return np.floor(total / 2.0 + 0.5)
    return total / 2.0


def _as_stream(events) -> PulseStream:
    if isinstance(events, PulseStream):
        return events
    return PulseStream.from_events(events)


def decode_stream(
    events: PulseStream | Sequence[PulseEvent],
    config: DecodeConfig | None = None,
    diagnostics: dict | None = None,
) -> list[SweepRecord]:
    """Turn a pulse capture into one :class:`SweepRecord` per locked slot.

    Station and axis come from the slot position in the 4-slot schedule,
    assuming the first locked slot is master azimuth.  Pass a dict as
    ``diagnostics`` to receive decode counters.
    """
    cfg = config or DecodeConfig()
    stream = _as_stream(events)
    diag = {
        "unknown_pulses": 0,
        "master_syncs": 0,
        "slave_syncs": 0,
        "sweeps": 0,
        "orphan_sweeps": 0,
        "dropped_out_of_window": 0,
        "dropped_out_of_fov": 0,
        "duplicate_sweeps": 0,
        "discontinuities": 0,
        "axis_phase_assumed": True,
    }
    if len(stream) == 0:
        raise EmptyCaptureError("empty pulse capture")

    slot_ticks = SLOT_S * cfg.tick_hz
    width_us = (stream.t_end - stream.t_start) * 1e6 / cfg.tick_hz
    is_master = (width_us >= SYNC_MASTER_US[0]) & (width_us <= SYNC_MASTER_US[1])
    is_slave = (width_us >= SYNC_SLAVE_US[0]) & (width_us <= SYNC_SLAVE_US[1])
    is_sweep = (width_us >= SWEEP_US[0]) & (width_us <= SWEEP_US[1])
    diag["unknown_pulses"] = int(np.count_nonzero(~(is_master | is_slave | is_sweep)))
    diag["slave_syncs"] = int(np.count_nonzero(is_slave))
    diag["sweeps"] = int(np.count_nonzero(is_sweep))

    # one master flash is seen by many diodes: cluster by start time
    starts = stream.t_start[is_master]
    if starts.size == 0:
        raise EmptyCaptureError("no master sync pulses in capture")
    clusters: list[list[float]] = [[starts[0]]]
    for s in starts[1:]:
        if s - clusters[-1][0] <= cfg.sync_cluster_ticks:
            clusters[-1].append(s)
        else:
            clusters.append([s])
    sync_times = np.array([float(np.median(c)) for c in clusters])
    diag["master_syncs"] = len(sync_times)

    # schedule lock and slot numbering
    lock = None
    for i in range(len(sync_times) - 1):
        if abs(sync_times[i + 1] - sync_times[i] - slot_ticks) <= cfg.lock_tolerance_ticks:
            lock = i
            break
    if lock is None:
        if len(sync_times) == 1:
            lock = 0
        else:
            raise EmptyCaptureError("could not lock onto the sync schedule")
    sync_times = sync_times[lock:]
    slot_idx = [0]
    for i in range(1, len(sync_times)):
        gap = sync_times[i] - sync_times[i - 1]
        k = int(round(gap / slot_ticks))
        if k < 1 or abs(gap - k * slot_ticks) > cfg.lock_tolerance_ticks:
            diag["discontinuities"] += 1
            k = max(1, k)
        slot_idx.append(slot_idx[-1] + k)

    sw_d = stream.diode_id[is_sweep]
    sw_mid = _midpoint(stream.t_start[is_sweep], stream.t_end[is_sweep])
    cycle = np.searchsorted(sync_times, sw_mid, side="right") - 1
    diag["orphan_sweeps"] = int(np.count_nonzero(cycle < 0))

    dt_lo = cfg.dt_window_s[0] - cfg.dt_guard_s
    dt_hi = cfg.dt_window_s[1] + cfg.dt_guard_s
    max_angle = math.radians(cfg.fov_deg + cfg.fov_guard_deg)

    per_cycle_angles: list[dict] = [dict() for _ in sync_times]
    per_cycle_dt: list[dict] = [dict() for _ in sync_times]
    for d, mid, c in zip(sw_d.tolist(), sw_mid.tolist(), cycle.tolist()):
        if c < 0:
            continue
        dt = (mid - sync_times[c]) / cfg.tick_hz
        if not (dt_lo <= dt <= dt_hi) or not (0.0 < dt < SLOT_S):
            diag["dropped_out_of_window"] += 1
            continue
        angle = delta_t_to_angle(dt)
        if abs(angle) > max_angle:
            diag["dropped_out_of_fov"] += 1
            continue
        if d in per_cycle_angles[c]:
            diag["duplicate_sweeps"] += 1
            continue
        per_cycle_angles[c][d] = angle
        per_cycle_dt[c][d] = dt

    records = []
    for c, (t0, k) in enumerate(zip(sync_times, slot_idx)):
        station, axis = SCHEDULE[k % 4]
        records.append(
            SweepRecord(
                slot_time=float(t0),
                station=station,
                axis=axis,
                angles=per_cycle_angles[c],
                raw_dt=per_cycle_dt[c],
                slot_index=k,
            )
        )
    if diagnostics is not None:
        diagnostics.update(diag)
    return records
