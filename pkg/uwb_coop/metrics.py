"""Positioning and navigation error series and box-plot statistics."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import ERROR_THRESHOLDS


@dataclass(frozen=True, eq=False)
class ErrorSeries:
    """Per-sample errors aligned with the source record.

    `valid` marks samples that count (the climb of a square flight does not
    count for navigation). `z` is None when the vertical error is not defined.
    """

    kind: str
    t: np.ndarray
    xy: np.ndarray
    z: Optional[np.ndarray]
    valid: np.ndarray

    def values(self, axis="xy"):
        data = self.xy if axis == "xy" else self.z
        if data is None:
            raise ValueError(f"{self.kind} series has no {axis} error")
        return data[self.valid]

    @property
    def axes(self):
        return ("xy",) if self.z is None else ("xy", "z")


@dataclass(frozen=True, eq=False)
class BoxStats:
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    mean: float
    max: float
    count: int
    _values: np.ndarray = field(repr=False)

    def fraction_above(self, threshold):
        return float(np.count_nonzero(self._values > threshold) / len(self._values))

    def to_dict(self, thresholds=ERROR_THRESHOLDS):
        out = {
            "median": self.median, "q1": self.q1, "q3": self.q3,
            "whisker_low": self.whisker_low, "whisker_high": self.whisker_high,
            "mean": self.mean, "max": self.max, "count": self.count,
        }
        out["fraction_above"] = {f"{t:g}": self.fraction_above(t) for t in thresholds}
        return out


def box_stats(values):
    """Linear-interpolation quartiles (type 7) and Tukey whiskers at 1.5 IQR."""
    data = np.sort(np.asarray(values, dtype=float).reshape(-1))
    if len(data) == 0:
        raise ValueError("box_stats needs at least one value")
    q1, median, q3 = np.percentile(data, [25.0, 50.0, 75.0])
    iqr = q3 - q1
    low_fence, high_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    whisker_low = float(data[data >= low_fence][0])
    whisker_high = float(data[data <= high_fence][-1])
    return BoxStats(
        median=float(median), q1=float(q1), q3=float(q3),
        whisker_low=min(whisker_low, float(q1)), whisker_high=max(whisker_high, float(q3)),
        mean=float(data.mean()), max=float(data[-1]), count=len(data), _values=data,
    )


def positioning_errors(record):
    """Estimate-vs-truth error: planar distance and absolute altitude difference."""
    if not record.has_estimates:
        raise ValueError("flight record has no position estimates")
    diff = record.estimated_position - record.true_position
    xy = np.hypot(diff[:, 0], diff[:, 1])
    z = np.abs(diff[:, 2])
    return ErrorSeries("positioning", record.t.copy(), xy, z, np.isfinite(xy) & np.isfinite(z))


def _planar_distance_to_polyline(points, vertices):
    """Planar distance of each point to the nearest segment of a polyline."""
    p = points[:, None, :2]
    a = vertices[None, :-1, :2]
    b = vertices[None, 1:, :2]
    ab = b - a
    length_sq = np.sum(ab * ab, axis=2)
    safe = np.where(length_sq > 0.0, length_sq, 1.0)
    u = np.clip(np.sum((p - a) * ab, axis=2) / safe, 0.0, 1.0)
    u = np.where(length_sq > 0.0, u, 0.0)
    closest = a + u[..., None] * ab
    return np.min(np.linalg.norm(p - closest, axis=2), axis=1)


def navigation_errors(record):
    """True position vs. commanded path; planar only (altitude is not scored)."""
    traj = record.trajectory
    truth = record.true_position
    if traj.kind == "vertical":
        line = np.array(traj.waypoints()[0][:2])
        xy = np.hypot(truth[:, 0] - line[0], truth[:, 1] - line[1])
        valid = np.ones(len(xy), dtype=bool)
    elif traj.kind == "square":
        xy = _planar_distance_to_polyline(truth, np.array(traj.cruise_path()))
        valid = record.t >= traj.cruise_start_time() - 1e-9
    else:
        raise ValueError(f"unknown trajectory kind {traj.kind!r}")
    return ErrorSeries("navigation", record.t.copy(), xy, None, valid)


def summarize_record(record, thresholds=ERROR_THRESHOLDS):
    """JSON-ready report: config echo plus BoxStats per error kind and axis."""
    report = {"config": record.metadata, "samples": len(record)}
    series = [navigation_errors(record)]
    if record.has_estimates:
        series.insert(0, positioning_errors(record))
    for s in series:
        report[s.kind] = {
            axis: box_stats(s.values(axis)).to_dict(thresholds) for axis in s.axes
            if len(s.values(axis))
        }
    return report


def long_form_rows(run_id, separation, series):
    """Rows of (run_id, separation_m, kind, axis, t, error_m) for valid samples."""
    rows = []
    for axis in series.axes:
        data = series.xy if axis == "xy" else series.z
        for t, value, ok in zip(series.t, data, series.valid):
            if ok:
                rows.append((run_id, separation, series.kind, axis, float(t), float(value)))
    return rows


def pooled_stats(grouped_values, thresholds=ERROR_THRESHOLDS):
    """BoxStats dicts for {key: [arrays...]} pooled over seeds."""
    return {
        key: box_stats(np.concatenate(arrays)).to_dict(thresholds)
        for key, arrays in grouped_values.items() if arrays
    }
