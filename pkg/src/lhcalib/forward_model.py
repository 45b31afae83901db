"""Predicted azimuth/elevation angles of every diode seen from a station.

The station looks along its local +x axis.  For each laser, the diode
position is expressed in the station frame, the laser origin offset is
subtracted, and

    azimuth   theta = atan2(y, x)
    elevation phi   = atan2(z, x)

where ``phi`` is the elevation of the diode projected onto the station's
XZ-plane, not a true spherical elevation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BehindStationError, ValidationError
from .geometry import BoardGeometry, Pose6DoF, board_diodes_world

MIN_FORWARD_M = 1e-9
MAX_OFFSET_M = 0.1


def _vec3(v) -> np.ndarray:
    a = np.array(v, dtype=float).reshape(3)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StationIntrinsics:
    """Origins of the two lasers in the station frame (meters)."""

    azimuth_laser_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    elevation_laser_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("azimuth_laser_offset", "elevation_laser_offset"):
            v = _vec3(getattr(self, name))
            if not np.all(np.isfinite(v)) or np.linalg.norm(v) >= MAX_OFFSET_M:
                raise ValidationError(f"{name} must be finite with magnitude < {MAX_OFFSET_M} m")
            object.__setattr__(self, name, v)

    def to_dict(self) -> dict:
        return {
            "azimuth_laser_offset_m": self.azimuth_laser_offset.tolist(),
            "elevation_laser_offset_m": self.elevation_laser_offset.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StationIntrinsics":
        try:
            return cls(d["azimuth_laser_offset_m"], d["elevation_laser_offset_m"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed intrinsics object: {exc}") from exc


# Plausible non-zero configuration: the two rotors sit a few cm apart.
EXAMPLE_INTRINSICS = StationIntrinsics((0.0, -0.02, 0.01), (0.0, 0.02, -0.01))


def load_intrinsics(path) -> StationIntrinsics:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ValidationError(f"intrinsics file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"intrinsics file {path} is not valid JSON: {exc}") from exc
    return StationIntrinsics.from_dict(data)


def save_intrinsics(intrinsics: StationIntrinsics, path) -> None:
    Path(path).write_text(json.dumps(intrinsics.to_dict(), indent=2) + "\n")


def station_frame(station_pose: Pose6DoF, world_points) -> np.ndarray:
    """World points expressed in the station frame."""
    R = station_pose.rotation()
    return (np.asarray(world_points, dtype=float) - station_pose.position) @ R


def angles_from_station_points(q: np.ndarray, intrinsics: StationIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """(theta, phi) for station-frame points ``q`` of shape (..., 3).

    Does not check that points are in front of the lasers.
    """
    qa = q - intrinsics.azimuth_laser_offset
    qe = q - intrinsics.elevation_laser_offset
    return np.arctan2(qa[..., 1], qa[..., 0]), np.arctan2(qe[..., 2], qe[..., 0])


def project_points(
    station_pose: Pose6DoF,
    intrinsics: StationIntrinsics,
    world_points,
    ids=None,
) -> np.ndarray:
    """Angle matrix (N, 2) for arbitrary world points."""
    q = station_frame(station_pose, world_points)
    fwd = np.minimum(q[:, 0] - intrinsics.azimuth_laser_offset[0], q[:, 0] - intrinsics.elevation_laser_offset[0])
    bad = np.flatnonzero(fwd <= MIN_FORWARD_M)
    if bad.size:
        diode = int(bad[0]) if ids is None else int(np.asarray(ids)[bad[0]])
        raise BehindStationError(diode, f"diode {diode} is behind a laser plane (x = {fwd[bad[0]]:.3g} m)")
    theta, phi = angles_from_station_points(q, intrinsics)
    return np.column_stack([theta, phi])


def project_angles(
    station_pose: Pose6DoF,
    intrinsics: StationIntrinsics,
    geometry: BoardGeometry,
    board_pose: Pose6DoF,
) -> np.ndarray:
    """The angle matrix C(L, P): one (theta, phi) row per diode, radians."""
    return project_points(station_pose, intrinsics, board_diodes_world(geometry, board_pose))
