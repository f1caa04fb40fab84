"""Closed-loop flight simulation with truth or UWB position feedback."""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .config import (
    CONTROL_RATE, CRUISE_DWELL, CYCLE_RATE, FLIGHT_SPEED, FEEDBACK_SOURCES, KP,
    MAX_FAILED_SOLVES, MAX_SPEED, SQUARE_SIDE, TAU, VERTICAL_ALTITUDE,
)
from .estimator import SolverConfig, SweepEstimator
from .geometry import Pose, vec3
from .ranging import RangingSchedule, make_rng, sweep

logger = logging.getLogger(__name__)

TRAJECTORY_KINDS = ("vertical", "square")


class FlightAbortedError(RuntimeError):
    """The estimator diverged during a UWB-feedback flight."""


@dataclass(frozen=True)
class Trajectory:
    """Vertical climb to `target_altitude`, or an 8x8-style square at `altitude`.

    The square starts on the ground under its first corner, climbs to altitude,
    hovers for `dwell` seconds and then visits the remaining corners before
    returning to the first one.
    """

    kind: str = "vertical"
    target_altitude: float = VERTICAL_ALTITUDE
    side: float = SQUARE_SIDE
    altitude: float = 5.0
    speed: float = FLIGHT_SPEED
    round_trip: bool = False
    dwell: float = CRUISE_DWELL

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if not self.speed > 0:
            raise ValueError(f"speed must be positive, got {self.speed}")
        if self.kind == "vertical" and not self.target_altitude > 0:
            raise ValueError(f"target altitude must be positive, got {self.target_altitude}")
        if self.kind == "square" and not (self.side > 0 and self.altitude > 0):
            raise ValueError("square side and altitude must be positive")
        if self.dwell < 0:
            raise ValueError(f"dwell must be >= 0, got {self.dwell}")

    @property
    def name(self):
        if self.kind == "vertical":
            suffix = "_updown" if self.round_trip else ""
            return f"vertical_{self.target_altitude:g}m{suffix}"
        return f"square_{self.side:g}m_at_{self.altitude:g}m"

    def corners(self):
        h = self.side / 2.0
        return [vec3(-h, -h, self.altitude), vec3(h, -h, self.altitude),
                vec3(h, h, self.altitude), vec3(-h, h, self.altitude)]

    def waypoints(self):
        """Polyline vertices, including the start on the ground."""
        if self.kind == "vertical":
            points = [vec3(0, 0, 0), vec3(0, 0, self.target_altitude)]
            if self.round_trip:
                points.append(vec3(0, 0, 0))
            return points
        corners = self.corners()
        ground = corners[0].copy()
        ground[2] = 0.0
        return [ground] + corners + [corners[0]]

    def cruise_path(self):
        """The part of the polyline the navigation error is measured against."""
        if self.kind == "vertical":
            return self.waypoints()
        return self.waypoints()[1:]

    def cruise_start_time(self):
        if self.kind == "vertical":
            return 0.0
        return self.altitude / self.speed + self.dwell

    def to_dict(self):
        return {
            "kind": self.kind, "target_altitude": self.target_altitude, "side": self.side,
            "altitude": self.altitude, "speed": self.speed, "round_trip": self.round_trip,
            "dwell": self.dwell,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass(frozen=True)
class ControllerConfig:
    kp: float = KP
    max_speed: float = MAX_SPEED
    tau: float = TAU
    control_rate: float = CONTROL_RATE
    feedforward: bool = False

    def __post_init__(self):
        for name in ("kp", "max_speed", "tau", "control_rate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def dt(self):
        return 1.0 / self.control_rate


@dataclass(frozen=True)
class FlightConfig:
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    cycle_rate: float = CYCLE_RATE
    estimate: bool = True
    max_failed_solves: int = MAX_FAILED_SOLVES


@dataclass(frozen=True, eq=False)
class UavState:
    pose: Pose
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass(eq=False)
class FlightRecord:
    """Per-tick truth, estimate and setpoint, plus the raw ranges."""

    t: np.ndarray
    true_position: np.ndarray
    yaw: np.ndarray
    estimated_position: Optional[np.ndarray]
    setpoint: np.ndarray
    trajectory: Trajectory
    metadata: dict
    estimated_yaw: Optional[np.ndarray] = None
    measurements: List = field(default_factory=list)

    def __len__(self):
        return len(self.t)

    @property
    def has_estimates(self):
        return self.estimated_position is not None


def generate_setpoints(traj, dt):
    """Constant-speed interpolation along the trajectory polyline, sampled every dt."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    points = traj.waypoints()
    # (start time, end time, from, to) for each leg; the dwell is a zero-length leg.
    legs = []
    t0 = 0.0
    for k in range(len(points) - 1):
        a, b = points[k], points[k + 1]
        duration = float(np.linalg.norm(b - a)) / traj.speed
        legs.append((t0, t0 + duration, a, b))
        t0 += duration
        if traj.kind == "square" and k == 0 and traj.dwell > 0:
            legs.append((t0, t0 + traj.dwell, b, b))
            t0 += traj.dwell
    total = t0
    n = int(math.floor(total / dt + 1e-9))
    setpoints = []
    leg = 0
    for k in range(n + 1):
        t = k * dt
        while leg < len(legs) - 1 and t >= legs[leg][1]:
            leg += 1
        start, end, a, b = legs[leg]
        frac = 1.0 if end <= start else min(max((t - start) / (end - start), 0.0), 1.0)
        setpoints.append((t, a + frac * (b - a)))
    return setpoints


def _clamp(vector, limit):
    norm = float(np.linalg.norm(vector))
    if norm > limit:
        return vector * (limit / norm)
    return vector


def step_plant(state, velocity_command, dt, max_speed=MAX_SPEED, tau=TAU):
    """First-order velocity tracking of a clamped command, then position integration.

    The ground (z = 0) is solid: a step that would end below it stops there and
    drops any downward velocity.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    command = _clamp(np.asarray(velocity_command, dtype=float), max_speed)
    velocity = state.velocity + (command - state.velocity) * min(1.0, dt / tau)
    position = state.pose.position + velocity * dt
    if position[2] < 0.0:
        position[2] = 0.0
        velocity[2] = max(velocity[2], 0.0)
    return UavState(Pose(position, state.pose.yaw), velocity)


def _setpoint_velocities(setpoints, dt):
    points = np.array([p for _, p in setpoints])
    velocity = np.zeros_like(points)
    velocity[:-1] = (points[1:] - points[:-1]) / dt
    return velocity


def run_flight(traj, layout, noise, feedback, config=None, rng=None):
    """Fly `traj` with the chosen feedback source and record truth, estimate and setpoint.

    feedback is "truth" or "uwb". On square flights z feedback always comes from
    truth (altitude held constant); xy comes from the selected source.
    """
    config = config or FlightConfig()
    if feedback not in FEEDBACK_SOURCES:
        raise ValueError(f"feedback must be one of {FEEDBACK_SOURCES}, got {feedback!r}")
    if feedback == "uwb" and not config.estimate:
        raise ValueError("uwb feedback requires estimation")
    rng = rng if rng is not None else make_rng(noise.seed)
    ctrl = config.controller
    dt = ctrl.dt
    setpoints = generate_setpoints(traj, dt)
    ff = _setpoint_velocities(setpoints, dt) if ctrl.feedforward else None
    schedule = RangingSchedule.for_layout(layout, config.cycle_rate)
    estimator = SweepEstimator(layout, config.solver) if config.estimate else None

    state = UavState(Pose(setpoints[0][1]))
    n = len(setpoints)
    times = np.empty(n)
    truth = np.empty((n, 3))
    yaw = np.empty(n)
    sp = np.empty((n, 3))
    est = np.full((n, 3), np.nan) if estimator else None
    est_yaw = np.full(n, np.nan) if estimator and estimator.estimates_yaw else None
    measurements = []

    estimate = None
    failed = 0
    next_sweep = 0.0
    logger.info("flight %s feedback=%s seed=%s", traj.name, feedback, noise.seed)
    for k, (t, setpoint) in enumerate(setpoints):
        if estimator is not None and t >= next_sweep - 1e-9:
            ranges = sweep(layout, state.pose, noise, t, rng, schedule)
            measurements.extend(ranges)
            estimate = estimator.update(ranges)
            next_sweep += schedule.period
            failed = 0 if estimate.converged else failed + 1
            if failed > config.max_failed_solves:
                raise FlightAbortedError(
                    f"{traj.name}: {failed} consecutive non-converged solves at t={t:.2f} s "
                    f"(residual rms {estimate.residual_rms:.3f} m)"
                )

        times[k] = t
        truth[k] = state.pose.position
        yaw[k] = state.pose.yaw
        sp[k] = setpoint
        if estimate is not None:
            est[k] = estimate.position
            if est_yaw is not None:
                est_yaw[k] = estimate.pose.yaw

        if feedback == "truth":
            position = state.pose.position
        else:
            position = estimate.position.copy()
            if traj.kind == "square":
                position[2] = state.pose.position[2]
        command = ctrl.kp * (setpoint - position)
        if ff is not None:
            command = command + ff[k]
        state = step_plant(state, command, dt, ctrl.max_speed, ctrl.tau)

    metadata = {
        "trajectory": traj.to_dict(),
        "layout": layout.to_dict(),
        "noise": {"sigma": noise.sigma, "seed": noise.seed,
                  "outlier_probability": noise.outlier_probability,
                  "outlier_scale": noise.outlier_scale},
        "feedback": feedback,
        "control_rate": ctrl.control_rate,
        "cycle_rate": config.cycle_rate,
        "kp": ctrl.kp,
        "max_speed": ctrl.max_speed,
        "tau": ctrl.tau,
        "feedforward": ctrl.feedforward,
    }
    return FlightRecord(
        t=times, true_position=truth, yaw=yaw, estimated_position=est, setpoint=sp,
        trajectory=traj, metadata=metadata, estimated_yaw=est_yaw, measurements=measurements,
    )
