"""UWB Coop: cooperative UWB localization of a UAV from ground transceivers."""

from .config import CONFIGS_DIR, FRAME_RATE, K_NEIGHBORS, MAX_RADIUS, PACKAGE_DIR
from .geometry import (
    GeometryError, Pose, RigidOffset, TransceiverLayout, apply_pose, default_layout,
    square_anchor_layout,
)
from .ranging import NoiseModel, RangeMeasurement, RangingSchedule, group_sweeps, make_rng, sweep
from .estimator import (
    EstimationError, SolverConfig, SweepEstimator, oracle_pose, oracle_position,
    solve_pose, solve_position,
)
from .flightsim import FlightAbortedError, FlightConfig, FlightRecord, Trajectory, run_flight
from .groundtruth import PointCloudFrame, TrackLostError, TrackState, track_sequence, track_step
from .metrics import box_stats, navigation_errors, positioning_errors, summarize_record
from .data import (
    ESTIMATES_HEADER, TRACK_HEADER, DataFormatError, fmt, load_frames, read_flight_record,
    read_ranges_csv, write_csv, write_sidecar,
)
from .experiment import ConfigError, ExperimentConfig, load_experiment_config
from .campaign import build_report, plan_runs, run_campaign
