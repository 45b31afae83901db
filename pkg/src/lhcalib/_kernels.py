"""Compiled loss functions for the pose fits.

Both losses take a 6-vector ``x = (tx, ty, tz, rx, ry, rz)``: a position and
a rotation vector applied on the right of a reference rotation ``R0``, so
the pose is ``(R0 @ exp(r), t)``.  Parametrising around a reference keeps
the simplex away from Euler-angle gimbal lock.

Poses placing a diode on or behind a laser plane score
``BEHIND_PENALTY + total distance behind``.
"""

import math

import numba
import numpy as np

BEHIND_PENALTY = 1e6
MIN_FORWARD = 1e-9


@numba.njit(cache=True)
def rotvec_matrix(r):
    th = math.sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2])
    K = np.zeros((3, 3))
    K[0, 1] = -r[2]
    K[0, 2] = r[1]
    K[1, 0] = r[2]
    K[1, 2] = -r[0]
    K[2, 0] = -r[1]
    K[2, 1] = r[0]
    if th < 1e-8:
        a = 1.0
        b = 0.5
    else:
        a = math.sin(th) / th
        b = (1.0 - math.cos(th)) / (th * th)
    return np.eye(3) + a * K + b * (K @ K)


@numba.njit(cache=True)
def _diode_residual(px, py, pz, S, s, off_a, off_e, th_meas, ph_meas, out):
    # out[0] accumulates squared residuals, out[1] distance behind
    dx = px - s[0]
    dy = py - s[1]
    dz = pz - s[2]
    qx = S[0, 0] * dx + S[1, 0] * dy + S[2, 0] * dz
    qy = S[0, 1] * dx + S[1, 1] * dy + S[2, 1] * dz
    qz = S[0, 2] * dx + S[1, 2] * dy + S[2, 2] * dz
    ax = qx - off_a[0]
    ex = qx - off_e[0]
    if ax <= MIN_FORWARD or ex <= MIN_FORWARD:
        out[1] += MIN_FORWARD - min(ax, ex) + 1e-12
        return
    rt = math.atan2(qy - off_a[1], ax) - th_meas
    rp = math.atan2(qz - off_e[2], ex) - ph_meas
    out[0] += rt * rt + rp * rp


@numba.njit(cache=True)
def board_loss(x, args):
    """Squared Frobenius mismatch of one frame for a candidate board pose.

    args = (R0, S, s, off_a, off_e, local, meas): reference rotation, station
    rotation and position, laser offsets, (k, 3) diode positions of the
    visible diodes and their (k, 2) measured angles.
    """
    R0, S, s, off_a, off_e, local, meas = args
    R = R0 @ rotvec_matrix(x[3:])
    out = np.zeros(2)
    for i in range(local.shape[0]):
        lx, ly, lz = local[i, 0], local[i, 1], local[i, 2]
        px = R[0, 0] * lx + R[0, 1] * ly + R[0, 2] * lz + x[0]
        py = R[1, 0] * lx + R[1, 1] * ly + R[1, 2] * lz + x[1]
        pz = R[2, 0] * lx + R[2, 1] * ly + R[2, 2] * lz + x[2]
        _diode_residual(px, py, pz, S, s, off_a, off_e, meas[i, 0], meas[i, 1], out)
    if out[1] > 0.0:
        return BEHIND_PENALTY + out[1]
    return out[0]


@numba.njit(cache=True)
def station_loss(x, args):
    """Summed squared mismatch over many frames for a candidate station pose.

    args = (R0, board_R, board_t, off_a, off_e, local, meas, mask) with
    board_R (N, 3, 3), board_t (N, 3), meas (N, n, 2) and mask (N, n).
    """
    R0, board_R, board_t, off_a, off_e, local, meas, mask = args
    S = R0 @ rotvec_matrix(x[3:])
    s = x[:3]
    out = np.zeros(2)
    for n in range(board_R.shape[0]):
        B = board_R[n]
        b = board_t[n]
        for i in range(local.shape[0]):
            if not mask[n, i]:
                continue
            lx, ly, lz = local[i, 0], local[i, 1], local[i, 2]
            px = B[0, 0] * lx + B[0, 1] * ly + B[0, 2] * lz + b[0]
            py = B[1, 0] * lx + B[1, 1] * ly + B[1, 2] * lz + b[1]
            pz = B[2, 0] * lx + B[2, 1] * ly + B[2, 2] * lz + b[2]
            _diode_residual(px, py, pz, S, s, off_a, off_e, meas[n, i, 0], meas[n, i, 1], out)
    if out[1] > 0.0:
        return BEHIND_PENALTY + out[1]
    return out[0]
