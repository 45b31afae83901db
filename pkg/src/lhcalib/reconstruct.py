"""Pairing interleaved azimuth and elevation sweeps into full angle frames.

Each sweep record of one station carries a single axis.  A pose fit needs
both, so the missing axis is reconstructed in one of three ways:

``full``
    every record becomes a frame; the other axis is linearly interpolated
    per diode between the nearest records of that axis before and after.
``dominant``
    like ``full`` but only frames anchored on the axis whose angles vary
    most over the capture are kept (about half as many frames).
``merge``
    consecutive azimuth/elevation records are merged without interpolation.

Interpolation uses each diode's own crossing instant and never
extrapolates; a diode missing from a bracketing record is left out.
"""

from __future__ import annotations

import logging
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InsufficientDataError, ValidationError
from .pulses import AZIMUTH, ELEVATION, SweepRecord

log = logging.getLogger(__name__)

MIN_DIODES = 4
MEASURED = "measured"
INTERP = "interp"
STRATEGIES = ("full", "dominant", "merge")


@dataclass(frozen=True)
class AngleFrame:
    """Azimuth and elevation of the visible diodes at time ``t`` (s)."""

    t: float
    station: str
    angles: dict
    provenance: dict = field(default_factory=dict)
    anchor_axis: str | None = None

    @property
    def diode_ids(self) -> np.ndarray:
        return np.array(sorted(self.angles), dtype=np.int64)

    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """Sorted diode ids and the matching (k, 2) angle matrix."""
        ids = self.diode_ids
        return ids, np.array([self.angles[i] for i in ids], dtype=float).reshape(len(ids), 2)

    def __len__(self) -> int:
        return len(self.angles)


def _split(records: Sequence[SweepRecord]):
    recs = sorted((r for r in records if r.angles), key=lambda r: r.slot_time)
    az = [r for r in recs if r.axis == AZIMUTH]
    el = [r for r in recs if r.axis == ELEVATION]
    if len(az) < 2 or len(el) < 2:
        raise InsufficientDataError(f"need >= 2 records per axis, got {len(az)} azimuth / {len(el)} elevation")
    stations = {r.station for r in recs}
    return recs, az, el, (stations.pop() if len(stations) == 1 else "mixed")


def _frame(t, station, angles, prov, anchor, stats) -> AngleFrame | None:
    if len(angles) < MIN_DIODES:
        stats["dropped_frames"] = stats.get("dropped_frames", 0) + 1
        return None
    return AngleFrame(t, station, angles, prov, anchor)


def _interpolated_frames(recs, az, el, station, anchor_axes, stats) -> list[AngleFrame]:
    times = {AZIMUTH: [r.slot_time for r in az], ELEVATION: [r.slot_time for r in el]}
    by_axis = {AZIMUTH: az, ELEVATION: el}
    frames = []
    for rec in recs:
        if rec.axis not in anchor_axes:
            continue
        other = ELEVATION if rec.axis == AZIMUTH else AZIMUTH
        ot = times[other]
        i = bisect_left(ot, rec.slot_time)
        if i == 0 or i >= len(ot):
            stats["edge_records"] = stats.get("edge_records", 0) + 1
            continue
        before, after = by_axis[other][i - 1], by_axis[other][i]
        angles, prov, tsum = {}, {}, 0.0
        for d, a in rec.angles.items():
            if d not in before.angles or d not in after.angles:
                continue
            td = rec.sample_time(d)
            t0, t1 = before.sample_time(d), after.sample_time(d)
            v0, v1 = before.angles[d], after.angles[d]
            w = (td - t0) / (t1 - t0)
            b = v0 + (v1 - v0) * w
            if rec.axis == AZIMUTH:
                angles[d] = (a, b)
                prov[d] = (MEASURED, INTERP)
            else:
                angles[d] = (b, a)
                prov[d] = (INTERP, MEASURED)
            tsum += td
        f = _frame(tsum / max(len(angles), 1), station, angles, prov, rec.axis, stats)
        if f is not None:
            frames.append(f)
    return frames


def axis_variation(records: Sequence[SweepRecord]) -> dict:
    """Sum over diodes of the sample variance of each axis' angle series."""
    out = {}
    for axis in (AZIMUTH, ELEVATION):
        series: dict[int, list[float]] = {}
        for r in records:
            if r.axis == axis:
                for d, a in r.angles.items():
                    series.setdefault(d, []).append(a)
        out[axis] = float(sum(np.var(v, ddof=1) for v in series.values() if len(v) > 1))
    return out


def reconstruct_full(records: Sequence[SweepRecord], stats: dict | None = None) -> list[AngleFrame]:
    stats = {} if stats is None else stats
    recs, az, el, station = _split(records)
    return _interpolated_frames(recs, az, el, station, (AZIMUTH, ELEVATION), stats)


def reconstruct_dominant_axis(records: Sequence[SweepRecord], stats: dict | None = None) -> list[AngleFrame]:
    stats = {} if stats is None else stats
    recs, az, el, station = _split(records)
    var = axis_variation(recs)
    dominant = AZIMUTH if var[AZIMUTH] >= var[ELEVATION] else ELEVATION
    stats["dominant_axis"] = dominant
    return _interpolated_frames(recs, az, el, station, (dominant,), stats)


def reconstruct_pair_merge(records: Sequence[SweepRecord], stats: dict | None = None) -> list[AngleFrame]:
    stats = {} if stats is None else stats
    recs, _, _, station = _split(records)
    frames = []
    i = 0
    while i < len(recs) - 1:
        a, b = recs[i], recs[i + 1]
        if a.axis != AZIMUTH or b.axis != ELEVATION:
            i += 1
            continue
        common = [d for d in a.angles if d in b.angles]
        angles = {d: (a.angles[d], b.angles[d]) for d in common}
        prov = {d: (MEASURED, MEASURED) for d in common}
        if common:
            t = float(np.mean([a.sample_time(d) for d in common] + [b.sample_time(d) for d in common]))
        else:
            t = 0.5 * (a.t + b.t)
        f = _frame(t, station, angles, prov, None, stats)
        if f is not None:
            frames.append(f)
        i += 2
    return frames


_DISPATCH = {
    "full": reconstruct_full,
    "dominant": reconstruct_dominant_axis,
    "merge": reconstruct_pair_merge,
}


def reconstruct(records: Sequence[SweepRecord], strategy: str = "full", stats: dict | None = None) -> list[AngleFrame]:
    try:
        fn = _DISPATCH[strategy]
    except KeyError:
        raise ValidationError(f"unknown reconstruction strategy {strategy!r}; expected one of {STRATEGIES}") from None
    return fn(records, stats)
