"""Extrinsic calibration of a pair of laser-sweep base stations.

A planar board carrying photodiodes is moved in front of both stations.
From the raw diode pulse timings the package recovers the pose of the
second (slave) station relative to the first (master).

Typical use::

    from lhcalib import calibrate, read_pulse_csv

    result = calibrate(read_pulse_csv("master.csv"), read_pulse_csv("slave.csv"))
    print(result.slave_pose)
"""

from .errors import (
    AlignmentError,
    BehindStationError,
    CoverageError,
    DegenerateConfigurationError,
    EmptyCaptureError,
    InsufficientDataError,
    LhcalibError,
    PathQualityError,
    RangeError,
    StageError,
    UnderdeterminedError,
    ValidationError,
)
from .forward_model import StationIntrinsics, load_intrinsics, project_angles, project_points, save_intrinsics
from .geometry import (
    BoardGeometry,
    Pose6DoF,
    board_diodes_world,
    compose,
    default_board,
    euler_to_rotation,
    load_geometry,
    relative_pose,
    rotation_to_euler,
    save_geometry,
    transform_points,
)
from .kabsch import RigidFit, weighted_kabsch
from .optimize import NmOptions, ObjectiveReport, estimate_board_pose, estimate_station_pose, nelder_mead
from .pipeline import (
    CalibrationConfig,
    CalibrationResult,
    PathPose,
    align_paths_in_time,
    calibrate,
    estimate_path,
    evaluate,
    final_slave_pose,
    initial_slave_pose,
)
from .pulses import PulseEvent, PulseStream, SweepRecord, decode_stream, delta_t_to_angle, read_pulse_csv, write_pulse_csv
from .reconstruct import AngleFrame, reconstruct, reconstruct_dominant_axis, reconstruct_full, reconstruct_pair_merge
from .simulator import NoiseSpec, Scenario, TrajectorySpec, generate_trajectory, simulate_capture

__version__ = "0.1.0"
