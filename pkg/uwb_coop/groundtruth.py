"""UAV ground truth from sequential lidar point clouds.

Each frame: build a KD-tree, predict the UAV position by dead reckoning,
gather the nearest points inside a radius gate around the prediction and take
their centroid as the new position.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .config import FRAME_RATE, K_NEIGHBORS, MAX_RADIUS
from .geometry import vec3

logger = logging.getLogger(__name__)

MAX_CLUTTER_DRAWS = 1000


class TrackLostError(RuntimeError):
    """No points inside the radius gate around the predicted position."""

    def __init__(self, predicted, frame_index=None):
        self.predicted = predicted
        self.frame_index = frame_index
        where = "" if frame_index is None else f" at frame {frame_index}"
        super().__init__(f"track lost{where}: no points near {np.round(predicted, 3).tolist()}")


@dataclass(frozen=True, eq=False)
class PointCloudFrame:
    points: np.ndarray
    frame_time: float = 0.0

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(points)):
            raise ValueError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", points)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True, eq=False)
class TrackState:
    position: np.ndarray
    velocity: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "position", vec3(self.position))
        velocity = np.zeros(3) if self.velocity is None else vec3(self.velocity)
        object.__setattr__(self, "velocity", velocity)


def track_step(frame, prev, frame_rate=FRAME_RATE, k_neighbors=K_NEIGHBORS, max_radius=MAX_RADIUS):
    """Advance the track by one frame."""
    if len(frame) == 0:
        raise ValueError("empty point cloud frame")
    tree = cKDTree(frame.points)
    predicted = prev.position + prev.velocity / frame_rate
    k = min(k_neighbors, len(frame))
    dist, idx = tree.query(predicted, k=k, distance_upper_bound=max_radius)
    dist, idx = np.atleast_1d(dist), np.atleast_1d(idx)
    gated = idx[np.isfinite(dist)]
    if len(gated) == 0:
        raise TrackLostError(predicted)
    position = frame.points[gated].mean(axis=0)
    velocity = (position - prev.position) * frame_rate
    return TrackState(position, velocity)


def track_sequence(frames, init, frame_rate=FRAME_RATE, k_neighbors=K_NEIGHBORS, max_radius=MAX_RADIUS):
    """Track through all frames; returns one TrackState per frame."""
    states = []
    state = init
    for index, frame in enumerate(frames):
        try:
            state = track_step(frame, state, frame_rate, k_neighbors, max_radius)
        except TrackLostError as exc:
            raise TrackLostError(exc.predicted, index) from None
        logger.debug("frame %d: %s", index, state.position)
        states.append(state)
    return states


def synth_cloud(uav_position, n_points, spread, clutter, bounds, rng, exclusion_radius=0.0, frame_time=0.0):
    """Gaussian blob around the UAV plus uniform clutter inside `bounds` ((lo xyz), (hi xyz)).

    Clutter closer than `exclusion_radius` to the UAV is redrawn, at most
    `MAX_CLUTTER_DRAWS` times.
    """
    if n_points < 1:
        raise ValueError(f"n_points must be >= 1, got {n_points}")
    center = vec3(uav_position)
    target = center + spread * rng.standard_normal((n_points, 3))
    lo, hi = np.asarray(bounds[0], dtype=float), np.asarray(bounds[1], dtype=float)
    kept = np.empty((0, 3))
    draws = 0
    while len(kept) < clutter:
        if draws == MAX_CLUTTER_DRAWS:
            raise ValueError(f"exclusion radius {exclusion_radius} leaves no room for clutter "
                             f"in bounds {lo.tolist()}..{hi.tolist()}")
        draws += 1
        draw = rng.uniform(lo, hi, size=(clutter - len(kept), 3))
        if exclusion_radius > 0:
            draw = draw[np.linalg.norm(draw - center, axis=1) >= exclusion_radius]
        kept = np.vstack([kept, draw])
    return PointCloudFrame(np.vstack([target, kept]), frame_time)


def synth_sequence(start, velocity, n_frames, rng, frame_rate=FRAME_RATE, n_points=60,
                   spread=0.1, clutter=0, bounds=((-20, -20, 0), (20, 20, 30)), exclusion_radius=1.0):
    """Constant-velocity target; returns (frames, true positions)."""
    start, velocity = vec3(start), vec3(velocity)
    frames, truth = [], []
    for k in range(n_frames):
        t = k / frame_rate
        position = start + velocity * t
        truth.append(position)
        frames.append(synth_cloud(position, n_points, spread, clutter, bounds, rng,
                                  exclusion_radius=exclusion_radius, frame_time=t))
    return frames, np.array(truth)
