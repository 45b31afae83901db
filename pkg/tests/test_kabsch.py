import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial.transform import Rotation

from lhcalib.errors import DegenerateConfigurationError, ValidationError
from lhcalib.geometry import euler_to_rotation, rotvec_to_matrix
from lhcalib.kabsch import residual_weights, weighted_kabsch, weighted_rmsd

points = arrays(np.float64, (8, 3), elements=st.floats(-2, 2, allow_nan=False))
weights = arrays(np.float64, (8,), elements=st.floats(0.05, 5, allow_nan=False))
angle = st.floats(-math.pi, math.pi, allow_nan=False)


def well_spread(p):
    c = p - p.mean(axis=0)
    s = np.linalg.svd(c, compute_uv=False)
    return s[1] > 0.2


def unique_optimum(s, t, w):
    """The weighted problem has a single minimiser (well separated spectrum)."""
    mu_s, mu_t = w @ s / w.sum(), w @ t / w.sum()
    U, S, Vt = np.linalg.svd((s - mu_s).T @ ((t - mu_t) * w[:, None]))
    flip = np.linalg.det(U @ Vt) < 0
    gap = S[1] - S[2] if flip else S[1] + S[2]
    return S[0] > 0 and S[1] > 1e-3 * S[0] and gap > 1e-3 * S[0]


def objective(R, T, s, t, w):
    r = s @ R.T + T - t
    return float(np.sum(w * np.sum(r * r, axis=1)))


@pytest.fixture
def cloud(rng):
    return rng.normal(size=(20, 3))


class TestExamples:
    def test_identity(self, cloud):
        fit = weighted_kabsch(cloud, cloud)
        np.testing.assert_allclose(fit.rotation, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(fit.translation, 0.0, atol=1e-12)
        assert fit.weighted_rmsd == pytest.approx(0.0, abs=1e-12)

    def test_quarter_turn_and_shift(self, cloud):
        R = euler_to_rotation(math.pi / 2, 0, 0)
        target = cloud @ R.T + [1.0, 0, 0]
        fit = weighted_kabsch(cloud, target)
        np.testing.assert_allclose(fit.rotation, R, atol=1e-12)
        np.testing.assert_allclose(fit.translation, [1, 0, 0], atol=1e-12)
        assert fit.weighted_rmsd < 1e-12

    def test_zero_weight_outlier(self, cloud, rng):
        R = rotvec_to_matrix([0.2, -0.4, 0.1])
        target = cloud @ R.T + [0.3, 0.1, -2] + rng.normal(0, 0.01, cloud.shape)
        target[5] += [1.0, 0, 0]
        w = np.ones(len(cloud))
        w[5] = 0.0
        fit = weighted_kabsch(cloud, target, w)
        keep = np.arange(len(cloud)) != 5
        sub = weighted_kabsch(cloud[keep], target[keep])
        np.testing.assert_allclose(fit.rotation, sub.rotation, atol=1e-12)
        np.testing.assert_allclose(fit.translation, sub.translation, atol=1e-12)
        assert fit.weighted_rmsd == pytest.approx(sub.weighted_rmsd, rel=1e-12)

    def test_planar_points_accepted(self):
        s = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0.0]])
        R = rotvec_to_matrix([0.3, 0.2, 1.0])
        fit = weighted_kabsch(s, s @ R.T)
        np.testing.assert_allclose(fit.rotation, R, atol=1e-12)

    def test_collinear_rejected(self):
        s = np.outer(np.arange(5.0), [1, 2, 3])
        with pytest.raises(DegenerateConfigurationError):
            weighted_kabsch(s, s + 1)

    def test_collinear_target_rejected(self, cloud):
        with pytest.raises(DegenerateConfigurationError):
            weighted_kabsch(cloud, np.outer(cloud[:, 0], [1.0, 0, 0]))

    def test_ambiguous_cross_covariance_still_proper(self):
        # both sets span planes, but their covariance is rank one
        s = np.array([[0, 1, 1], [1, 1, 1], [1, 0, 1], [1, 1, 1.0]])
        t = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 0.0]])
        R = weighted_kabsch(s, t).rotation
        assert np.linalg.det(R) == pytest.approx(1.0)
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)

    def test_negative_weight(self, cloud):
        w = np.ones(len(cloud))
        w[0] = -1
        with pytest.raises(ValidationError):
            weighted_kabsch(cloud, cloud, w)

    def test_too_few_positive_weights(self, cloud):
        w = np.zeros(len(cloud))
        w[:2] = 1
        with pytest.raises(ValidationError):
            weighted_kabsch(cloud, cloud, w)

    def test_shape_mismatch(self, cloud):
        with pytest.raises(ValidationError):
            weighted_kabsch(cloud, cloud[:-1])


class TestProperties:
    @settings(max_examples=150, deadline=None)
    @given(points, points, weights)
    def test_proper_rotation(self, s, t, w):
        if not (well_spread(s) and well_spread(t)):
            return
        R = weighted_kabsch(s, t, w).rotation
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)

    def test_near_reflection(self, cloud):
        # mirrored target: best proper rotation still has det +1
        fit = weighted_kabsch(cloud, cloud * [1, 1, -1])
        assert np.linalg.det(fit.rotation) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(points, points, weights, st.floats(1e-3, 1e3))
    def test_weight_scaling(self, s, t, w, c):
        if not (well_spread(s) and well_spread(t) and unique_optimum(s, t, w)):
            return
        a, b = weighted_kabsch(s, t, w), weighted_kabsch(s, t, c * w)
        np.testing.assert_allclose(a.rotation, b.rotation, atol=1e-9)
        np.testing.assert_allclose(a.translation, b.translation, atol=1e-9)
        assert a.weighted_rmsd == pytest.approx(b.weighted_rmsd, rel=1e-9, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(points, points, weights)
    def test_rmsd_self_consistent(self, s, t, w):
        if not (well_spread(s) and well_spread(t)):
            return
        fit = weighted_kabsch(s, t, w)
        assert weighted_rmsd(fit.rotation, fit.translation, s, t, w) == pytest.approx(fit.weighted_rmsd, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(points, weights, angle, angle, angle)
    def test_matches_scipy_align_vectors(self, s, w, a, b, g):
        if not well_spread(s):
            return
        rng = np.random.default_rng(abs(hash((a, b, g))) % 2**32)
        R = euler_to_rotation(a, b, g)
        t = s @ R.T + [0.5, -1, 2] + rng.normal(0, 0.05, s.shape)
        fit = weighted_kabsch(s, t, w)
        mu_s = w @ s / w.sum()
        mu_t = w @ t / w.sum()
        ref, _ = Rotation.align_vectors(t - mu_t, s - mu_s, weights=w)
        np.testing.assert_allclose(fit.rotation, ref.as_matrix(), atol=1e-8)

    def test_optimality_spot_check(self, rng):
        s = rng.normal(size=(30, 3))
        R = rotvec_to_matrix([0.5, -0.2, 0.8])
        t = s @ R.T + [1, 2, 3] + rng.normal(0, 0.1, s.shape)
        w = rng.uniform(0.1, 2, 30)
        fit = weighted_kabsch(s, t, w)
        best = objective(fit.rotation, fit.translation, s, t, w)
        for _ in range(1000):
            v = rng.normal(size=3)
            v *= rng.uniform(0, 1e-3) / np.linalg.norm(v)
            Rp = rotvec_to_matrix(v) @ fit.rotation
            mu_s, mu_t = w @ s / w.sum(), w @ t / w.sum()
            assert objective(Rp, mu_t - Rp @ mu_s, s, t, w) >= best - 1e-12


class TestResidualWeights:
    def test_inverse_with_floor(self):
        eps = np.array([1.0, 2.0, 4.0])
        w = residual_weights(eps)
        raw = 1.0 / (eps + 0.01 * 2.0)
        np.testing.assert_allclose(w, raw / raw.max())

    def test_zero_residuals_are_finite(self):
        w = residual_weights(np.zeros(4))
        assert np.all(np.isfinite(w)) and np.all(w == 1.0)

    def test_negative_rejected(self):
        with pytest.raises(ValidationError):
            residual_weights([1.0, -1.0])
