"""Poses, rotation conventions and the calibration board layout.

Rotations use intrinsic Z-Y-X Euler angles: ``alpha`` about z, then
``beta`` about the new y, then ``gamma`` about the newest x, so that
``R = Rz(alpha) @ Ry(beta) @ Rx(gamma)``.  A pose maps local points into
the parent frame as ``p' = R @ p + t``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError

ORTHONORMAL_TOL = 1e-6
GIMBAL_TOL = 1e-12


def wrap_angle(a):
    """Wrap angles (scalar or array) into (-pi, pi]."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_to_rotation(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Rotation matrix for intrinsic Z-Y-X angles (radians)."""
    for v in (alpha, beta, gamma):
        if not math.isfinite(v):
            raise ValidationError("Euler angles must be finite")
    ca, sa = math.cos(alpha), math.sin(alpha)
    cb, sb = math.cos(beta), math.sin(beta)
    cg, sg = math.cos(gamma), math.sin(gamma)
    return np.array(
        [
            [ca * cb, ca * sb * sg - sa * cg, ca * sb * cg + sa * sg],
            [sa * cb, sa * sb * sg + ca * cg, sa * sb * cg - ca * sg],
            [-sb, cb * sg, cb * cg],
        ]
    )


def orthonormality_error(R: np.ndarray) -> float:
    R = np.asarray(R, dtype=float)
    return float(np.linalg.norm(R.T @ R - np.eye(3)))


def check_rotation(R) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise ValidationError("rotation must be a finite 3x3 matrix")
    if orthonormality_error(R) > ORTHONORMAL_TOL:
        raise ValidationError("matrix is not orthonormal")
    if np.linalg.det(R) < 0.0:
        raise ValidationError("matrix is a reflection (det = -1)")
    return R


def rotation_to_euler(R) -> tuple[float, float, float]:
    """Inverse of :func:`euler_to_rotation`.

    At gimbal lock (``|beta| = pi/2``) alpha is pinned to 0 and the whole
    remaining rotation is carried by gamma.
    """
    R = check_rotation(R)
    sb = -R[2, 0]
    cb = math.hypot(R[0, 0], R[1, 0])
    beta = math.atan2(sb, cb)
    if cb < GIMBAL_TOL:
        beta = math.copysign(math.pi / 2.0, sb)
        return 0.0, beta, wrap_angle(math.atan2(-R[1, 2], R[1, 1]))
    alpha = math.atan2(R[1, 0], R[0, 0])
    gamma = math.atan2(R[2, 1], R[2, 2])
    return wrap_angle(alpha), beta, wrap_angle(gamma)


def rotvec_to_matrix(v) -> np.ndarray:
    """Rodrigues formula; ``v`` is axis * angle."""
    v = np.asarray(v, dtype=float)
    th = float(np.linalg.norm(v))
    K = np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])
    if th < 1e-8:
        return np.eye(3) + K + 0.5 * K @ K
    return np.eye(3) + (math.sin(th) / th) * K + ((1.0 - math.cos(th)) / th**2) * K @ K


def matrix_to_rotvec(R) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    cos_th = min(1.0, max(-1.0, (np.trace(R) - 1.0) / 2.0))
    th = math.acos(cos_th)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if th < 1e-8:
        return 0.5 * w
    if math.pi - th < 1e-6:
        # near pi the antisymmetric part vanishes; use the symmetric part
        B = (R + np.eye(3)) / 2.0
        axis = np.sqrt(np.clip(np.diag(B), 0.0, None))
        k = int(np.argmax(axis))
        axis = B[k] / axis[k]
        axis /= np.linalg.norm(axis)
        if np.dot(w, axis) < 0:
            axis = -axis
        return th * axis
    return th / (2.0 * math.sin(th)) * w


def geodesic_angle(R1, R2) -> float:
    """Angle (rad) of the relative rotation between two matrices."""
    R = np.asarray(R1).T @ np.asarray(R2)
    return math.acos(min(1.0, max(-1.0, (np.trace(R) - 1.0) / 2.0)))


def _unit_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValidationError("zero-length direction vector")
    return v / n


def look_at_rotation(direction, roll: float = 0.0) -> np.ndarray:
    """Station rotation whose +x axis points along ``direction``."""
    d = _unit_vector(direction)
    yaw = math.atan2(d[1], d[0])
    pitch = -math.asin(max(-1.0, min(1.0, d[2])))
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def facing_rotation(normal, roll: float = 0.0) -> np.ndarray:
    """Board rotation whose local +z (board normal) points along ``normal``."""
    n = _unit_vector(normal)
    up = np.array([0.0, 0.0, 1.0])
    x = np.cross(up, n)
    if np.linalg.norm(x) < 1e-6:
        x = np.cross(np.array([0.0, 1.0, 0.0]), n)
    x = _unit_vector(x)
    y = np.cross(n, x)
    return np.column_stack([x, y, n]) @ rot_z(roll)


@dataclass(frozen=True)
class Pose6DoF:
    """Position in meters plus intrinsic Z-Y-X Euler angles in radians."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "z", "alpha", "beta", "gamma"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValidationError(f"pose field {name} is not finite")
            if name in ("alpha", "beta", "gamma"):
                v = wrap_angle(v)
            object.__setattr__(self, name, v)

    @classmethod
    def identity(cls) -> "Pose6DoF":
        return cls()

    @classmethod
    def from_vector(cls, v: Sequence[float]) -> "Pose6DoF":
        return cls(*(float(c) for c in v))

    @classmethod
    def from_matrix(cls, R, t) -> "Pose6DoF":
        a, b, g = rotation_to_euler(R)
        t = np.asarray(t, dtype=float)
        return cls(t[0], t[1], t[2], a, b, g)

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def angles(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma])

    def rotation(self) -> np.ndarray:
        return euler_to_rotation(self.alpha, self.beta, self.gamma)

    def as_vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.alpha, self.beta, self.gamma])

    def as_matrix(self) -> np.ndarray:
        """4x4 homogeneous transform."""
        T = np.eye(4)
        T[:3, :3] = self.rotation()
        T[:3, 3] = self.position
        return T

    def inverse(self) -> "Pose6DoF":
        R = self.rotation()
        return Pose6DoF.from_matrix(R.T, -R.T @ self.position)

    def to_dict(self) -> dict:
        """File representation; angles in degrees."""
        return {
            "x_m": self.x,
            "y_m": self.y,
            "z_m": self.z,
            "alpha_deg": math.degrees(self.alpha),
            "beta_deg": math.degrees(self.beta),
            "gamma_deg": math.degrees(self.gamma),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Pose6DoF":
        try:
            return cls(
                d["x_m"],
                d["y_m"],
                d["z_m"],
                math.radians(d["alpha_deg"]),
                math.radians(d["beta_deg"]),
                math.radians(d["gamma_deg"]),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed pose object: {exc}") from exc


def compose(outer: Pose6DoF, inner: Pose6DoF) -> Pose6DoF:
    """Pose equivalent to applying ``inner`` first, then ``outer``."""
    Ro = outer.rotation()
    return Pose6DoF.from_matrix(Ro @ inner.rotation(), Ro @ inner.position + outer.position)


def relative_pose(reference: Pose6DoF, other: Pose6DoF) -> Pose6DoF:
    """Pose of ``other`` expressed in the frame of ``reference``."""
    return compose(reference.inverse(), other)


def transform_points(pose: Pose6DoF, points) -> np.ndarray:
    """Apply ``p' = R p + t`` to an (N, 3) array (or a single 3-vector)."""
    pts = np.asarray(points, dtype=float)
    return pts @ pose.rotation().T + pose.position


@dataclass(frozen=True)
class BoardGeometry:
    """Diode positions (meters) in the board frame.

    The positions are recentered so that their centroid is the origin; the
    applied shift is kept in ``recenter_offset``.
    """

    diode_positions: np.ndarray
    board_id: str = "board"
    recenter_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        pts = np.array(self.diode_positions, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 1:
            raise ValidationError("diode positions must be an (N, 3) array")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("diode positions must be finite")
        if len(pts) > 1:
            d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
            d[np.diag_indices(len(pts))] = np.inf
            if d.min() <= 1e-6:
                i, j = np.unravel_index(np.argmin(d), d.shape)
                raise ValidationError(f"diodes {i} and {j} coincide")
        centroid = pts.mean(axis=0)
        # skip round-off shifts so that save/load of a centred board is exact
        if np.abs(centroid).max() <= 1e-12 * max(1.0, np.abs(pts).max()):
            centroid = np.zeros(3)
        pts = pts - centroid
        pts.setflags(write=False)
        offset = np.asarray(self.recenter_offset, dtype=float) - centroid
        offset.setflags(write=False)
        object.__setattr__(self, "diode_positions", pts)
        object.__setattr__(self, "recenter_offset", offset)

    def __len__(self) -> int:
        return len(self.diode_positions)

    @property
    def n_diodes(self) -> int:
        return len(self.diode_positions)

    def diameter(self, ids=None) -> float:
        """Largest distance between two diodes (optionally a subset)."""
        pts = self.diode_positions if ids is None else self.diode_positions[np.asarray(ids)]
        d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        return float(d.max())

    def to_dict(self) -> dict:
        return {"board_id": self.board_id, "diodes_m": self.diode_positions.tolist()}


def default_board(rows: int = 4, cols: int = 8, pitch: float = 0.02) -> BoardGeometry:
    """Planar grid in the board's xy-plane, row-major, z is the board normal."""
    pts = [(c * pitch, r * pitch, 0.0) for r in range(rows) for c in range(cols)]
    return BoardGeometry(np.array(pts), board_id=f"grid{rows}x{cols}-{pitch * 1000:g}mm")


def load_geometry(path) -> BoardGeometry:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ValidationError(f"geometry file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"geometry file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict) or "diodes_m" not in data:
        raise ValidationError(f"geometry file {path} lacks 'diodes_m'")
    return BoardGeometry(np.asarray(data["diodes_m"], dtype=float), board_id=str(data.get("board_id", path.stem)))


def save_geometry(geometry: BoardGeometry, path) -> None:
    Path(path).write_text(json.dumps(geometry.to_dict(), indent=2) + "\n")


def board_diodes_world(geometry: BoardGeometry, board_pose: Pose6DoF) -> np.ndarray:
    """World coordinates of every diode, in geometry order."""
    return transform_points(board_pose, geometry.diode_positions)
