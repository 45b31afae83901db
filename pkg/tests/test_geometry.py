import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from lhcalib.errors import ValidationError
from lhcalib.geometry import (
    BoardGeometry,
    Pose6DoF,
    board_diodes_world,
    check_rotation,
    compose,
    default_board,
    euler_to_rotation,
    geodesic_angle,
    load_geometry,
    matrix_to_rotvec,
    relative_pose,
    rotation_to_euler,
    rotvec_to_matrix,
    save_geometry,
    transform_points,
    wrap_angle,
)

angle = st.floats(-math.pi, math.pi, allow_nan=False)
inner_beta = st.floats(-math.pi / 2 + 0.01, math.pi / 2 - 0.01, allow_nan=False)
coord = st.floats(-10, 10, allow_nan=False)
poses = st.builds(Pose6DoF, coord, coord, coord, angle, angle, angle)


class TestEuler:
    def test_zero_is_identity(self):
        np.testing.assert_array_equal(euler_to_rotation(0, 0, 0), np.eye(3))

    def test_quarter_turn_about_z(self):
        R = euler_to_rotation(math.pi / 2, 0, 0)
        np.testing.assert_allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-15)

    def test_matches_scipy_intrinsic_zyx(self):
        # independent oracle for the convention
        a, b, g = 0.7, -0.4, 2.1
        ref = Rotation.from_euler("ZYX", [a, b, g]).as_matrix()
        np.testing.assert_allclose(euler_to_rotation(a, b, g), ref, atol=1e-14)

    def test_identity_to_angles(self):
        assert rotation_to_euler(np.eye(3)) == (0.0, 0.0, 0.0)

    def test_round_trip_example(self):
        got = rotation_to_euler(euler_to_rotation(0.3, -0.2, 1.1))
        np.testing.assert_allclose(got, (0.3, -0.2, 1.1), atol=1e-12)

    @pytest.mark.parametrize("beta", [math.pi / 2, -math.pi / 2])
    def test_gimbal_lock_returns_alpha_zero(self, beta):
        R = euler_to_rotation(0.8, beta, -0.3)
        a, b, g = rotation_to_euler(R)
        assert a == 0.0
        assert b == pytest.approx(beta)
        np.testing.assert_allclose(euler_to_rotation(a, b, g), R, atol=1e-12)

    def test_rejects_non_orthonormal(self):
        R = np.eye(3)
        R[0, 1] = 1e-3
        with pytest.raises(ValidationError):
            rotation_to_euler(R)

    def test_rejects_reflection(self):
        with pytest.raises(ValidationError):
            check_rotation(np.diag([1.0, 1.0, -1.0]))

    @settings(max_examples=300, deadline=None)
    @given(angle, angle, angle)
    def test_proper_rotation(self, a, b, g):
        R = euler_to_rotation(a, b, g)
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=300, deadline=None)
    @given(angle, inner_beta, angle)
    def test_round_trip_property(self, a, b, g):
        R = euler_to_rotation(a, b, g)
        np.testing.assert_allclose(euler_to_rotation(*rotation_to_euler(R)), R, atol=1e-9)

    def test_round_trip_10000_samples(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(-math.pi, math.pi, 10_000)
        b = rng.uniform(-math.pi / 2 + 0.01, math.pi / 2 - 0.01, 10_000)
        g = rng.uniform(-math.pi, math.pi, 10_000)
        worst = 0.0
        for ai, bi, gi in zip(a, b, g):
            R = euler_to_rotation(ai, bi, gi)
            worst = max(worst, np.abs(euler_to_rotation(*rotation_to_euler(R)) - R).max())
        assert worst < 1e-9


class TestWrapAndRotvec:
    def test_wrap_interval_is_half_open(self):
        assert wrap_angle(math.pi) == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)
        assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)

    def test_pose_angles_are_wrapped(self):
        p = Pose6DoF(0, 0, 0, 3 * math.pi, -3 * math.pi / 2, 0.5)
        assert p.alpha == pytest.approx(math.pi)
        assert p.beta == pytest.approx(math.pi / 2)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=3, max_size=3))
    def test_rotvec_matches_scipy(self, v):
        np.testing.assert_allclose(rotvec_to_matrix(v), Rotation.from_rotvec(v).as_matrix(), atol=1e-12)

    def test_rotvec_round_trip_near_pi(self):
        v = np.array([0.0, math.pi - 1e-9, 0.0])
        R = rotvec_to_matrix(v)
        np.testing.assert_allclose(rotvec_to_matrix(matrix_to_rotvec(R)), R, atol=1e-9)

    def test_geodesic_angle(self):
        assert geodesic_angle(np.eye(3), euler_to_rotation(0.3, 0, 0)) == pytest.approx(0.3)


class TestTransforms:
    def test_identity_leaves_points(self):
        pts = np.random.default_rng(1).normal(size=(5, 3))
        np.testing.assert_array_equal(transform_points(Pose6DoF(), pts), pts)

    def test_pure_translation(self):
        np.testing.assert_allclose(transform_points(Pose6DoF(1, 0, 0), [0, 0, 0]), [1, 0, 0])

    def test_quarter_turn(self):
        got = transform_points(Pose6DoF(0, 0, 0, math.pi / 2, 0, 0), [1, 0, 0])
        np.testing.assert_allclose(got, [0, 1, 0], atol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(poses)
    def test_rigidity(self, pose):
        pts = np.random.default_rng(2).normal(size=(6, 3))
        out = transform_points(pose, pts)
        d_in = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        d_out = np.linalg.norm(out[:, None] - out[None], axis=-1)
        np.testing.assert_allclose(d_out, d_in, atol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(poses, poses)
    def test_composition(self, p2, p1):
        pts = np.random.default_rng(3).normal(size=(4, 3))
        np.testing.assert_allclose(
            transform_points(compose(p2, p1), pts), transform_points(p2, transform_points(p1, pts)), atol=1e-9
        )

    @settings(max_examples=100, deadline=None)
    @given(poses)
    def test_inverse(self, p):
        q = compose(p, p.inverse())
        np.testing.assert_allclose(q.as_matrix(), np.eye(4), atol=1e-9)

    def test_relative_pose(self):
        a = Pose6DoF(1, 2, 3, 0.1, 0.2, 0.3)
        b = Pose6DoF(-1, 0, 2, -0.5, 0.1, 1.0)
        np.testing.assert_allclose(compose(a, relative_pose(a, b)).as_matrix(), b.as_matrix(), atol=1e-12)

    def test_dict_round_trip_in_degrees(self):
        p = Pose6DoF(1, 2, 3, 0.1, -0.2, 0.3)
        d = p.to_dict()
        assert d["alpha_deg"] == pytest.approx(math.degrees(0.1))
        q = Pose6DoF.from_dict(d)
        np.testing.assert_allclose(q.as_vector(), p.as_vector(), atol=1e-15)

    def test_non_finite_pose_rejected(self):
        with pytest.raises(ValidationError):
            Pose6DoF(float("nan"))


class TestBoard:
    def test_default_layout(self):
        b = default_board()
        assert b.n_diodes == 32
        np.testing.assert_allclose(b.diode_positions.mean(axis=0), 0.0, atol=1e-15)
        np.testing.assert_allclose(b.diode_positions[1] - b.diode_positions[0], [0.02, 0, 0])
        np.testing.assert_allclose(b.diode_positions[8] - b.diode_positions[0], [0, 0.02, 0])
        assert np.all(b.diode_positions[:, 2] == 0)

    def test_recentering_records_offset(self):
        b = BoardGeometry(np.array([[1.0, 0, 0], [3.0, 0, 0], [2.0, 1.0, 0]]))
        np.testing.assert_allclose(b.diode_positions.mean(axis=0), 0.0, atol=1e-15)
        np.testing.assert_allclose(b.recenter_offset, [-2.0, -1 / 3, 0])

    def test_coincident_diodes_rejected(self):
        with pytest.raises(ValidationError):
            BoardGeometry(np.array([[0.0, 0, 0], [0.0, 0, 5e-7], [1.0, 0, 0]]))

    def test_positions_read_only(self):
        with pytest.raises(ValueError):
            default_board().diode_positions[0, 0] = 1.0

    def test_identity_pose_keeps_local_positions(self, board):
        np.testing.assert_array_equal(board_diodes_world(board, Pose6DoF()), board.diode_positions)

    def test_translation_shifts_every_diode(self, board):
        np.testing.assert_allclose(board_diodes_world(board, Pose6DoF(2, 0, 0)), board.diode_positions + [2, 0, 0])

    def test_matches_per_point_transform(self, board):
        pose = compose(Pose6DoF(0.5, -1, 2, 0.3, 0.2, -0.1), Pose6DoF(0, 1, 0, 1.0, 0, 0))
        world = board_diodes_world(board, pose)
        for i, p in enumerate(board.diode_positions):
            np.testing.assert_allclose(world[i], transform_points(pose, p), atol=1e-14)

    def test_file_round_trip(self, tmp_path, board):
        path = tmp_path / "board.json"
        save_geometry(board, path)
        data = json.loads(path.read_text())
        assert set(data) == {"board_id", "diodes_m"}
        again = load_geometry(path)
        np.testing.assert_array_equal(again.diode_positions, board.diode_positions)

    def test_missing_file_names_path(self, tmp_path):
        with pytest.raises(ValidationError, match="nope.json"):
            load_geometry(tmp_path / "nope.json")

    def test_loader_recenters(self, tmp_path):
        path = tmp_path / "b.json"
        path.write_text(json.dumps({"board_id": "tri", "diodes_m": [[1, 1, 1], [2, 1, 1], [1, 2, 1], [1, 1, 2]]}))
        b = load_geometry(path)
        np.testing.assert_allclose(b.diode_positions.mean(axis=0), 0.0, atol=1e-15)
        np.testing.assert_allclose(b.recenter_offset, [-1.25, -1.25, -1.25])
