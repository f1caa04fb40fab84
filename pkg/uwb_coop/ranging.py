"""Simulated UWB two-way ranging with a round-robin initiator/responder schedule."""

import logging
from dataclasses import dataclass
from itertools import groupby
from typing import Tuple

import numpy as np

from .config import CYCLE_RATE, OUTLIER_SCALE, SIGMA_UWB
from .geometry import apply_pose

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RangeMeasurement:
    initiator_id: int
    responder_id: int
    range: float
    timestamp: float


@dataclass(frozen=True)
class NoiseModel:
    """Additive Gaussian range noise, optionally mixed with positive NLOS outliers."""

    sigma: float = SIGMA_UWB
    seed: int = 0
    outlier_probability: float = 0.0
    outlier_scale: float = OUTLIER_SCALE

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"noise sigma must be >= 0, got {self.sigma}")
        if not 0.0 <= self.outlier_probability <= 1.0:
            raise ValueError(
                f"outlier probability must be in [0, 1], got {self.outlier_probability}"
            )
        if self.outlier_scale < 0:
            raise ValueError(f"outlier scale must be >= 0, got {self.outlier_scale}")


@dataclass(frozen=True)
class RangingSchedule:
    """Initiator-major order of (initiator, responder) pairs for one sweep."""

    pairs: Tuple[Tuple[int, int], ...]
    cycle_rate: float = CYCLE_RATE

    def __post_init__(self):
        if self.cycle_rate <= 0:
            raise ValueError(f"cycle rate must be positive, got {self.cycle_rate}")
        if len(set(self.pairs)) != len(self.pairs):
            raise ValueError("schedule repeats a pair within one cycle")
        if list(self.pairs) != sorted(self.pairs):
            raise ValueError("schedule pairs must be initiator-major")

    @classmethod
    def for_layout(cls, layout, cycle_rate=CYCLE_RATE):
        pairs = tuple(
            (i, j) for i in range(layout.n_initiators) for j in range(layout.n_responders)
        )
        return cls(pairs=pairs, cycle_rate=cycle_rate)

    @property
    def period(self):
        return 1.0 / self.cycle_rate


def make_rng(seed):
    """Independent, single-owner random stream for one run."""
    return np.random.default_rng(seed)


def measure_range(p_i, q_j, noise, rng):
    """Euclidean distance plus one Gaussian draw, clamped at zero."""
    distance = float(np.linalg.norm(np.asarray(p_i, dtype=float) - np.asarray(q_j, dtype=float)))
    value = distance + noise.sigma * rng.standard_normal()
    if noise.outlier_probability > 0.0 and rng.random() < noise.outlier_probability:
        value += rng.exponential(noise.outlier_scale)
    return max(value, 0.0)


def sweep(layout, true_pose, noise, t, rng, schedule=None):
    """One full round-robin cycle; every measurement uses the same pose and stamp."""
    if schedule is None:
        schedule = RangingSchedule.for_layout(layout)
    initiators = [apply_pose(true_pose, o) for o in layout.initiators]
    measurements = []
    for i, j in schedule.pairs:
        if i >= layout.n_initiators or j >= layout.n_responders:
            raise ValueError(f"schedule pair ({i}, {j}) is outside the layout")
        r = measure_range(initiators[i], layout.responders[j], noise, rng)
        measurements.append(RangeMeasurement(i, j, r, float(t)))
    return measurements


def group_sweeps(measurements):
    """Split a flat measurement stream into sweeps sharing a timestamp."""
    return [list(g) for _, g in groupby(measurements, key=lambda m: m.timestamp)]
