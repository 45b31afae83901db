"""Weighted rigid superposition of matched point sets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfigurationError, ValidationError

RANK_TOL = 1e-12


@dataclass(frozen=True)
class RigidFit:
    rotation: np.ndarray
    translation: np.ndarray
    weighted_rmsd: float

    def apply(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation


def weighted_rmsd(R, T, source, target, weights) -> float:
    r = np.asarray(source) @ np.asarray(R).T + T - np.asarray(target)
    w = np.asarray(weights, dtype=float)
    return math.sqrt(float(np.sum(w * np.einsum("ij,ij->i", r, r)) / np.sum(w)))


def weighted_kabsch(source, target, weights=None) -> RigidFit:
    """Rotation R and translation T minimising sum w_n |R s_n + T - t_n|^2.

    Reflections are excluded by flipping the least significant singular
    direction.  Planar point sets are fine; collinear ones are rejected.
    """
    s = np.asarray(source, dtype=float)
    t = np.asarray(target, dtype=float)
    if s.ndim != 2 or s.shape[1] != 3 or s.shape != t.shape:
        raise ValidationError("source and target must be matching (N, 3) arrays")
    w = np.ones(len(s)) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (len(s),):
        raise ValidationError("one weight per point is required")
    if len(s) < 3:
        raise ValidationError("at least 3 point pairs are required")
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise ValidationError("weights must be finite and non-negative")
    if np.count_nonzero(w > 0) < 3:
        raise ValidationError("at least 3 strictly positive weights are required")

    w = w / w.max()
    wsum = w.sum()
    mu_s = w @ s / wsum
    mu_t = w @ t / wsum
    sw = np.sqrt(w)[:, None]
    for pts, mu in ((s, mu_s), (t, mu_t)):
        # planar sets are fine; only a rank below 2 leaves the rotation free
        sv = np.linalg.svd((pts - mu) * sw, compute_uv=False)
        if sv[0] == 0.0 or sv[1] <= RANK_TOL * sv[0]:
            raise DegenerateConfigurationError(
                "point paths are collinear or coincident; a rotation cannot be resolved "
                "(use a calibration motion that spans a plane, e.g. a circle)"
            )
    H = (s - mu_s).T @ ((t - mu_t) * w[:, None])
    U, S, Vt = np.linalg.svd(H)
    d = 1.0 if np.linalg.det(Vt.T @ U.T) > 0 else -1.0
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    T = mu_t - R @ mu_s
    return RigidFit(R, T, weighted_rmsd(R, T, s, t, w))


def residual_weights(residuals, floor_fraction: float = 0.01) -> np.ndarray:
    """Inverse-residual weights ``1 / (eps + floor_fraction * median(eps))``."""
    eps = np.asarray(residuals, dtype=float)
    if np.any(eps < 0) or not np.all(np.isfinite(eps)):
        raise ValidationError("residuals must be finite and non-negative")
    floor = floor_fraction * float(np.median(eps))
    if floor <= 0.0:
        floor = np.finfo(float).tiny
    w = 1.0 / (eps + floor)
    return w / w.max()
