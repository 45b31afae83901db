import math

import numpy as np
import pytest

from lhcalib.forward_model import StationIntrinsics, project_angles
from lhcalib.geometry import Pose6DoF, default_board, facing_rotation
from lhcalib.reconstruct import AngleFrame


@pytest.fixture(scope="session")
def board():
    return default_board()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def frame_from_pose(station, intrinsics, geometry, board_pose, t=0.0, ids=None, station_name="master"):
    """Exact angle frame of a board pose, optionally restricted to ``ids``."""
    C = project_angles(station, intrinsics, geometry, board_pose)
    ids = range(len(C)) if ids is None else ids
    return AngleFrame(t, station_name, {int(i): (float(C[i, 0]), float(C[i, 1])) for i in ids})


def board_facing(position, toward=(0.0, 0.0, 0.0), roll=0.0, tilt=(0.0, 0.0)):
    """Board pose at ``position`` whose normal points at ``toward``."""
    p = np.asarray(position, dtype=float)
    R = facing_rotation(np.asarray(toward, dtype=float) - p, roll=roll)
    tx, ty = tilt
    c, s = math.cos(tx), math.sin(tx)
    Rx = np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    c, s = math.cos(ty), math.sin(ty)
    Ry = np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    return Pose6DoF.from_matrix(R @ Rx @ Ry, p)


ZERO_INTRINSICS = StationIntrinsics()


def simple_scenario(kind="static", speed=None, noise=None, duration=2.0, radius=0.3, **kw):
    """Master at the origin, slave 1.5 m to the side, board 3 m ahead."""
    from lhcalib.geometry import look_at_rotation
    from lhcalib.simulator import NOISELESS, Scenario, TrajectorySpec

    target = np.array([3.0, 0.0, 0.0])
    slave_pos = np.array([0.3, 1.5, 0.2])
    slave = Pose6DoF.from_matrix(look_at_rotation(target - slave_pos, roll=0.05), slave_pos)
    normal = np.array([-1.0, 0.25, 0.03])
    R = facing_rotation(normal, roll=0.3)
    base = Pose6DoF.from_matrix(R, target)
    spec = TrajectorySpec(
        kind=kind,
        center=tuple(target),
        speed=speed,
        radius=radius,
        axis_u=tuple(R[:, 0]),
        axis_v=tuple(R[:, 1]),
        base_orientation=(base.alpha, base.beta, base.gamma),
        duration=duration,
    )
    return Scenario(Pose6DoF(), slave, spec, duration=duration, noise=noise or NOISELESS, **kw)


def setup_scenario(setup_seed, capture_seed, kind=None, speed=None, noise=None, **kw):
    """Randomized setup and capture as used by the accuracy studies."""
    from lhcalib.simulator import QUANTIZATION_ONLY, random_setup, scenario_for_setup

    setup = random_setup(np.random.default_rng(setup_seed))
    return scenario_for_setup(
        setup, np.random.default_rng(capture_seed), kind=kind, speed=speed, noise=noise or QUANTIZATION_ONLY, **kw
    )
