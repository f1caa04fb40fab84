"""Tests for uwb_coop.metrics: error series and box-plot statistics."""

import numpy as np
import pytest

from uwb_coop.flightsim import FlightRecord, Trajectory
from uwb_coop.metrics import (
    box_stats, long_form_rows, navigation_errors, pooled_stats, positioning_errors,
    summarize_record,
)


def _record(trajectory, truth, estimate=None, t=None):
    truth = np.asarray(truth, dtype=float)
    t = np.arange(len(truth)) * 0.1 if t is None else np.asarray(t, dtype=float)
    return FlightRecord(
        t=t, true_position=truth, yaw=np.zeros(len(truth)),
        estimated_position=None if estimate is None else np.asarray(estimate, dtype=float),
        setpoint=truth.copy(), trajectory=trajectory, metadata={"feedback": "truth"},
    )


class TestBoxStats:
    def test_quartiles(self):
        stats = box_stats([1, 2, 3, 4, 5])
        assert (stats.q1, stats.median, stats.q3) == (2.0, 3.0, 4.0)
        assert (stats.whisker_low, stats.whisker_high) == (1.0, 5.0)
        assert stats.count == 5

    def test_outlier_beyond_whisker(self):
        stats = box_stats([1, 2, 3, 4, 5, 100])
        assert stats.q1 == pytest.approx(2.25)
        assert stats.q3 == pytest.approx(4.75)
        assert stats.whisker_high == 5.0
        assert stats.max == 100.0

    def test_fraction_above(self):
        stats = box_stats([0.05, 0.2, 0.7, 1.5])
        assert stats.fraction_above(0.1) == 0.75
        assert stats.fraction_above(1.0) == 0.25

    def test_to_dict_thresholds(self):
        out = box_stats([0.05, 0.2, 0.7, 1.5]).to_dict((0.5,))
        assert out["fraction_above"] == {"0.5": 0.5}

    def test_empty(self):
        with pytest.raises(ValueError):
            box_stats([])


class TestPositioningErrors:
    def test_planar_and_vertical(self):
        truth = [[0, 0, 5], [1, 1, 6]]
        record = _record(Trajectory("vertical"), truth, np.array(truth) + [3, 4, -2])
        series = positioning_errors(record)
        assert series.values("xy").tolist() == [5.0, 5.0]
        assert series.values("z").tolist() == [2.0, 2.0]

    def test_nan_estimates_skipped(self):
        truth = [[0, 0, 5], [1, 1, 6]]
        record = _record(Trajectory("vertical"), truth, [[np.nan] * 3, [1, 1, 6]])
        assert positioning_errors(record).values("xy").tolist() == [0.0]

    def test_needs_estimates(self):
        with pytest.raises(ValueError):
            positioning_errors(_record(Trajectory("vertical"), [[0, 0, 1]]))


class TestNavigationErrors:
    def test_vertical_distance_to_line(self):
        record = _record(Trajectory("vertical"), [[0.3, 0.4, 2.0], [0.0, 0.0, 3.0]])
        series = navigation_errors(record)
        assert series.values().tolist() == pytest.approx([0.5, 0.0])
        assert series.axes == ("xy",)

    def test_square_distance_to_edges(self):
        traj = Trajectory("square", side=8.0, altitude=5.0)
        start = traj.cruise_start_time()
        truth = [[-4.0, -4.0, 2.0], [0.0, -4.0, 5.0], [0.0, -5.0, 5.0], [4.5, 0.0, 5.0], [0.0, 0.0, 5.0]]
        t = [1.0, start, start + 1, start + 2, start + 3]
        series = navigation_errors(_record(traj, truth, t=t))
        assert series.valid.tolist() == [False, True, True, True, True]
        assert series.values().tolist() == pytest.approx([0.0, 1.0, 0.5, 4.0])

    def test_no_vertical_axis(self):
        series = navigation_errors(_record(Trajectory("vertical"), [[0, 0, 1]]))
        with pytest.raises(ValueError):
            series.values("z")


class TestReports:
    def test_summarize_record(self):
        truth = [[0, 0, 5], [1, 1, 6]]
        report = summarize_record(_record(Trajectory("vertical"), truth, truth))
        assert report["samples"] == 2
        assert set(report["positioning"]) == {"xy", "z"}
        assert set(report["navigation"]) == {"xy"}

    def test_long_form_rows(self):
        truth = [[0, 0, 5], [1, 1, 6]]
        series = positioning_errors(_record(Trajectory("vertical"), truth, truth))
        rows = long_form_rows("run", "3.0", series)
        assert len(rows) == 4
        assert rows[0][:4] == ("run", "3.0", "positioning", "xy")

    def test_pooled_stats(self):
        stats = pooled_stats({"a": [np.array([1.0, 2.0]), np.array([3.0])], "b": []})
        assert stats["a"]["median"] == 2.0
        assert "b" not in stats
