"""Nelder-Mead simplex search and the two pose problems solved with it.

* :func:`estimate_board_pose` fits the board pose to one angle frame for a
  known station pose (loss K1, squared Frobenius norm of the mismatch).
* :func:`estimate_station_pose` fits a station pose to many frames whose
  board poses are known (loss K2, K1 summed over frames).

The simplex loop is written once in plain Python.  The public
:func:`nelder_mead` runs it on any Python callable; the pose problems run a
numba-compiled copy of the same code on the compiled losses in
:mod:`lhcalib._kernels`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np

from . import _kernels
from .errors import InsufficientDataError, UnderdeterminedError, ValidationError
from .forward_model import StationIntrinsics, project_points
from .geometry import BoardGeometry, Pose6DoF, board_diodes_world
from .reconstruct import MIN_DIODES, AngleFrame

REFLECT, EXPAND, CONTRACT, SHRINK = 1.0, 2.0, 0.5, 0.5
DEGENERATE_SPREAD = 1e-4
FALLBACK_RANGE_M = 2.0


@dataclass(frozen=True)
class NmOptions:
    tolerance_f: float = 1e-12
    tolerance_x: float = 1e-9
    max_iterations: int = 10_000
    scale: tuple = (0.1, 0.1, 0.1, 0.05, 0.05, 0.05)
    restarts: int = 1

    def __post_init__(self):
        if self.tolerance_f <= 0 or self.tolerance_x <= 0:
            raise ValidationError("optimizer tolerances must be positive")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")
        if any(s <= 0 for s in self.scale):
            raise ValidationError("simplex scale entries must be positive")


@dataclass
class ObjectiveReport:
    """Outcome of one minimisation.

    ``solution`` is the minimiser as a pose (``None`` for objectives that are
    not 6-dimensional); ``x`` is the raw parameter vector and ``residual``
    the final loss value.
    """

    solution: Pose6DoF | None
    residual: float
    iterations: int
    converged: bool
    restarts_used: int = 0
    x: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


def _simplex_search(f, args, x0, scale, tol_f, tol_x, max_iter):
    n = x0.shape[0]
    simplex = np.empty((n + 1, n))
    fvals = np.empty(n + 1)
    simplex[0] = x0
    fvals[0] = f(x0, args)
    for i in range(n):
        v = x0.copy()
        v[i] += scale[i]
        simplex[i + 1] = v
        fvals[i + 1] = f(v, args)
    it = 0
    converged = False
    while True:
        order = np.argsort(fvals)
        simplex = simplex[order]
        fvals = fvals[order]
        spread_f = fvals[n] - fvals[0]
        spread_x = 0.0
        for i in range(1, n + 1):
            for j in range(n):
                d = abs(simplex[i, j] - simplex[0, j])
                if d > spread_x:
                    spread_x = d
        if spread_f < tol_f and spread_x < tol_x:
            converged = True
            break
        if it >= max_iter:
            break
        it += 1
        centroid = np.zeros(n)
        for i in range(n):
            centroid += simplex[i]
        centroid /= n
        worst = simplex[n]
        xr = centroid + REFLECT * (centroid - worst)
        fr = f(xr, args)
        if fr < fvals[0]:
            xe = centroid + EXPAND * (centroid - worst)
            fe = f(xe, args)
            if fe < fr:
                simplex[n] = xe
                fvals[n] = fe
            else:
                simplex[n] = xr
                fvals[n] = fr
            continue
        if fr < fvals[n - 1]:
            simplex[n] = xr
            fvals[n] = fr
            continue
        if fr < fvals[n]:
            xc = centroid + CONTRACT * (xr - centroid)
            fc = f(xc, args)
            if fc <= fr:
                simplex[n] = xc
                fvals[n] = fc
                continue
        else:
            xc = centroid + CONTRACT * (worst - centroid)
            fc = f(xc, args)
            if fc < fvals[n]:
                simplex[n] = xc
                fvals[n] = fc
                continue
        for i in range(1, n + 1):
            simplex[i] = simplex[0] + SHRINK * (simplex[i] - simplex[0])
            fvals[i] = f(simplex[i], args)
    return simplex[0].copy(), fvals[0], it, converged


# Not cached on disk: numba pickles the loss-function argument type through a
# weak reference, and saving the cache can fail once that reference is gone.
_simplex_search_jit = numba.njit(_simplex_search)


def _run(search, f, args, x0, opts: NmOptions, recenter=None):
    """Simplex search plus the restart policy (restart from the best vertex
    with a tenfold smaller simplex after hitting the iteration cap)."""
    scale = np.asarray(opts.scale, dtype=float)
    if len(scale) != len(x0):
        scale = np.resize(scale, len(x0))
    x, fx, iters, conv = search(f, args, x0, scale, opts.tolerance_f, opts.tolerance_x, opts.max_iterations)
    total, restarts = iters, 0
    while not conv and restarts < opts.restarts:
        restarts += 1
        scale = scale / 10.0
        if recenter is not None:
            x, args = recenter(x, args)
        x, fx, iters, conv = search(f, args, x, scale, opts.tolerance_f, opts.tolerance_x, opts.max_iterations)
        total += iters
    return x, float(fx), total, bool(conv), restarts, args


def nelder_mead(f: Callable[[np.ndarray], float], x0, opts: NmOptions | None = None) -> ObjectiveReport:
    """Minimise ``f`` from ``x0`` with the Nelder-Mead simplex method."""
    opts = opts or NmOptions()
    x0 = np.array(x0, dtype=float)
    f0 = f(x0)
    if not math.isfinite(f0):
        raise ValidationError("objective is not finite at the starting point")

    def wrapped(x, _args):
        return float(f(x))

    x, fx, iters, conv, restarts, _ = _run(_simplex_search, wrapped, (), x0, opts)
    diag = {} if conv else {"reason": "iteration limit reached", "max_iterations": opts.max_iterations}
    solution = Pose6DoF.from_vector(x) if len(x) == 6 else None
    return ObjectiveReport(solution, fx, iters, conv, restarts, x, diag)


# -- pose problems -----------------------------------------------------------


def _pose_from_x(x, R0) -> Pose6DoF:
    return Pose6DoF.from_matrix(R0 @ _kernels.rotvec_matrix(np.asarray(x[3:], dtype=float)), x[:3])


def _recenter_board(x, args):
    R0 = args[0] @ _kernels.rotvec_matrix(x[3:])
    x = x.copy()
    x[3:] = 0.0
    return x, (R0,) + tuple(args[1:])


def _frame_arrays(frame: AngleFrame, geometry: BoardGeometry):
    ids, meas = frame.matrix()
    if len(ids) < MIN_DIODES:
        raise UnderdeterminedError(f"frame has {len(ids)} diodes; at least {MIN_DIODES} are required")
    if ids.max() >= geometry.n_diodes:
        raise ValidationError(f"diode id {ids.max()} exceeds geometry size {geometry.n_diodes}")
    return ids, meas


def _unit_rays(meas: np.ndarray) -> np.ndarray:
    rays = np.column_stack([np.ones(len(meas)), np.tan(meas[:, 0]), np.tan(meas[:, 1])])
    return rays / np.linalg.norm(rays, axis=1, keepdims=True)


def initial_board_guess(frame: AngleFrame, geometry: BoardGeometry, diagnostics: dict | None = None) -> Pose6DoF:
    """Starting pose for a board fit.

    Direction from the mean azimuth/elevation; range from the ratio of the
    board's largest diode spacing to the largest angular separation of the
    diodes in the frame; orientation is the identity.
    """
    ids, meas = _frame_arrays(frame, geometry)
    th, ph = meas[:, 0].mean(), meas[:, 1].mean()
    ray = np.array([1.0, math.tan(th), math.tan(ph)])
    ray /= np.linalg.norm(ray)
    u = _unit_rays(meas)
    chord = np.linalg.norm(u[:, None, :] - u[None, :, :], axis=-1).max()
    spread = 2.0 * math.asin(min(1.0, chord / 2.0))
    if spread < DEGENERATE_SPREAD:
        d0 = FALLBACK_RANGE_M
        if diagnostics is not None:
            diagnostics["range_fallback"] = True
    else:
        d0 = geometry.diameter(ids) / spread
    p = d0 * ray
    return Pose6DoF(p[0], p[1], p[2])


def board_loss(
    station_pose: Pose6DoF,
    intrinsics: StationIntrinsics,
    geometry: BoardGeometry,
    frame: AngleFrame,
    board_pose: Pose6DoF,
) -> float:
    """K1 evaluated directly with the forward model (no penalty handling)."""
    ids, meas = _frame_arrays(frame, geometry)
    pts = board_diodes_world(geometry, board_pose)[ids]
    C = project_points(station_pose, intrinsics, pts, ids)
    return float(np.sum((C - meas) ** 2))


def station_loss(
    station_pose: Pose6DoF,
    intrinsics: StationIntrinsics,
    geometry: BoardGeometry,
    frames: Sequence[AngleFrame],
    board_poses: Sequence[Pose6DoF],
) -> float:
    """K2 evaluated directly with the forward model."""
    return float(sum(board_loss(station_pose, intrinsics, geometry, fr, P) for fr, P in zip(frames, board_poses)))


def _board_args(station_pose, intrinsics, geometry, ids, meas, R0):
    return (
        np.ascontiguousarray(R0, dtype=float),
        np.ascontiguousarray(station_pose.rotation()),
        np.ascontiguousarray(station_pose.position),
        np.array(intrinsics.azimuth_laser_offset),
        np.array(intrinsics.elevation_laser_offset),
        np.ascontiguousarray(geometry.diode_positions[ids]),
        np.ascontiguousarray(meas),
    )


def estimate_board_pose(
    station_pose: Pose6DoF,
    intrinsics: StationIntrinsics,
    geometry: BoardGeometry,
    frame: AngleFrame,
    x0: Pose6DoF | None = None,
    opts: NmOptions | None = None,
) -> ObjectiveReport:
    """Board pose minimising K1 for one frame, starting from ``x0`` (or the
    mean-angle guess)."""
    opts = opts or NmOptions()
    ids, meas = _frame_arrays(frame, geometry)
    diag: dict = {}
    start = x0 if x0 is not None else initial_board_guess(frame, geometry, diag)
    args = _board_args(station_pose, intrinsics, geometry, ids, meas, start.rotation())
    xs = np.concatenate([start.position, np.zeros(3)])
    x, fx, iters, conv, restarts, args = _run(
        _simplex_search_jit, _kernels.board_loss, args, xs, opts, recenter=_recenter_board
    )
    if not conv:
        diag["reason"] = "iteration limit reached after restarts"
    if fx >= _kernels.BEHIND_PENALTY:
        diag["behind_station"] = True
    diag["n_diodes"] = len(ids)
    return ObjectiveReport(_pose_from_x(x, args[0]), fx, iters, conv, restarts, x, diag)


def _station_arrays(board_poses, frames, geometry):
    n_d = geometry.n_diodes
    N = len(frames)
    meas = np.zeros((N, n_d, 2))
    mask = np.zeros((N, n_d), dtype=np.bool_)
    for k, fr in enumerate(frames):
        ids, m = fr.matrix()
        if len(ids) and ids.max() >= n_d:
            raise ValidationError(f"diode id {ids.max()} exceeds geometry size {n_d}")
        meas[k, ids] = m
        mask[k, ids] = True
    board_R = np.stack([P.rotation() for P in board_poses])
    board_t = np.stack([P.position for P in board_poses])
    return board_R, board_t, meas, mask


def estimate_station_pose(
    board_poses: Sequence[Pose6DoF],
    frames: Sequence[AngleFrame],
    L0: Pose6DoF,
    intrinsics: StationIntrinsics,
    geometry: BoardGeometry,
    opts: NmOptions | None = None,
) -> ObjectiveReport:
    """Station pose minimising K2 over matched board poses and frames."""
    opts = opts or NmOptions()
    if len(board_poses) == 0 or len(frames) == 0:
        raise InsufficientDataError("station fit needs at least one frame")
    if len(board_poses) != len(frames):
        raise ValidationError("board poses and frames must have equal length")
    board_R, board_t, meas, mask = _station_arrays(board_poses, frames, geometry)
    args = (
        L0.rotation(),
        board_R,
        board_t,
        np.array(intrinsics.azimuth_laser_offset),
        np.array(intrinsics.elevation_laser_offset),
        np.ascontiguousarray(geometry.diode_positions),
        meas,
        mask,
    )
    xs = np.concatenate([L0.position, np.zeros(3)])
    if not math.isfinite(_kernels.station_loss(xs, args)):
        raise ValidationError("station loss is not finite at L0")
    x, fx, iters, conv, restarts, args = _run(
        _simplex_search_jit, _kernels.station_loss, args, xs, opts, recenter=_recenter_board
    )
    diag = {"n_frames": len(frames)}
    if not conv:
        diag["reason"] = "iteration limit reached after restarts"
    if fx >= _kernels.BEHIND_PENALTY:
        diag["behind_station"] = True
    return ObjectiveReport(_pose_from_x(x, args[0]), fx, iters, conv, restarts, x, diag)


def station_loss_fast(
    station_pose: Pose6DoF,
    intrinsics: StationIntrinsics,
    geometry: BoardGeometry,
    frames: Sequence[AngleFrame],
    board_poses: Sequence[Pose6DoF],
) -> float:
    """K2 through the compiled kernel (penalised for poses behind a laser)."""
    board_R, board_t, meas, mask = _station_arrays(board_poses, frames, geometry)
    args = (
        station_pose.rotation(),
        board_R,
        board_t,
        np.array(intrinsics.azimuth_laser_offset),
        np.array(intrinsics.elevation_laser_offset),
        np.ascontiguousarray(geometry.diode_positions),
        meas,
        mask,
    )
    return float(_kernels.station_loss(np.concatenate([station_pose.position, np.zeros(3)]), args))
