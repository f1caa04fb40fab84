"""Tests for uwb_coop.campaign: run planning, campaign outputs, report rebuilding."""

import json
import os

import pytest

from uwb_coop import campaign
from uwb_coop.campaign import build_report, execute_run, load_summary, plan_runs, run_campaign
from uwb_coop.experiment import parse_experiment_config
from uwb_coop.geometry import GeometryError


def _read(path):
    with open(path, "rb") as f:
        return f.read()


class TestPlanRuns:
    def test_order_and_ids(self, tiny_experiment):
        specs = plan_runs(parse_experiment_config(tiny_experiment))
        assert [s.run_id for s in specs] == [
            "vertical_3m_sep12m_s0_truth", "vertical_3m_sep12m_s0_uwb",
            "square_2m_at_2m_sep12m_s0_truth", "square_2m_at_2m_sep12m_s0_uwb",
        ]
        assert [s.index for s in specs] == [0, 1, 2, 3]

    def test_counts(self):
        config = parse_experiment_config({"noise": {"seeds": [0, 1, 2]}})
        assert len(plan_runs(config)) == 6 * 4 * 3 * 2

    def test_each_run_has_own_seed(self, tiny_experiment):
        tiny_experiment["noise"]["seeds"] = [4, 5]
        specs = plan_runs(parse_experiment_config(tiny_experiment))
        assert [s.noise.seed for s in specs[:4]] == [4, 4, 5, 5]


class TestExecuteRun:
    def test_returns_record(self, tiny_experiment):
        spec = plan_runs(parse_experiment_config(tiny_experiment))[1]
        index, record, error = execute_run(spec)
        assert (index, error) == (1, None)
        assert record.metadata["feedback"] == "uwb"

    def test_failure_is_reported(self, tiny_experiment):
        tiny_experiment["solver"] = {"max_iterations": 1}
        tiny_experiment["flight"] = {"max_failed_solves": 0}
        spec = plan_runs(parse_experiment_config(tiny_experiment))[0]
        index, record, error = execute_run(spec)
        assert record is None
        assert "non-converged" in error

    def test_value_error_is_reported(self, tiny_experiment, monkeypatch):
        def broken_flight(*args, **kwargs):
            raise GeometryError("non-finite position")

        monkeypatch.setattr(campaign, "run_flight", broken_flight)
        spec = plan_runs(parse_experiment_config(tiny_experiment))[0]
        assert execute_run(spec) == (0, None, "non-finite position")


class TestRunCampaign:
    def test_outputs(self, tiny_experiment, tmp_path):
        result = run_campaign(parse_experiment_config(tiny_experiment), str(tmp_path), jobs=1)
        assert result.ok
        assert len(result.completed) == 4
        records = sorted(n for n in os.listdir(tmp_path / "records") if n.endswith(".csv"))
        assert len(records) == 4
        assert len(os.listdir(tmp_path / "reports")) == 4
        assert (tmp_path / "ranges" / "vertical_3m_sep12m_s0_uwb.csv").exists()
        assert (tmp_path / "errors.csv").exists()
        assert not (tmp_path / "failures.json").exists()

    def test_summary_groups(self, tiny_experiment, tmp_path):
        run_campaign(parse_experiment_config(tiny_experiment), str(tmp_path), jobs=1)
        summary = load_summary(str(tmp_path))
        assert len(summary["groups"]) == 4
        group = summary["groups"][1]
        assert (group["trajectory"], group["feedback"], group["separation"]) == \
            ("vertical_3m", "uwb", 12.0)
        assert set(group["positioning"]) == {"xy", "z"}
        assert set(group["navigation"]) == {"xy"}
        assert summary["experiment"]["name"] == "tiny"

    def test_deterministic_outputs(self, tiny_experiment, tmp_path):
        config = parse_experiment_config(tiny_experiment)
        run_campaign(config, str(tmp_path / "a"), jobs=1)
        run_campaign(config, str(tmp_path / "b"), jobs=1)
        for name in ("errors.csv", "summary.json", "records/square_2m_at_2m_sep12m_s0_uwb.csv"):
            assert _read(tmp_path / "a" / name) == _read(tmp_path / "b" / name)

    def test_failures_written(self, tiny_experiment, tmp_path):
        tiny_experiment["solver"] = {"max_iterations": 1}
        tiny_experiment["flight"] = {"max_failed_solves": 0}
        result = run_campaign(parse_experiment_config(tiny_experiment), str(tmp_path), jobs=1)
        assert not result.ok
        with open(tmp_path / "failures.json") as f:
            failures = json.load(f)["failures"]
        assert len(failures) == 4
        assert failures[0]["run_id"] == "vertical_3m_sep12m_s0_truth"

    def test_one_broken_run_keeps_the_rest(self, tiny_experiment, tmp_path, monkeypatch):
        real_flight = campaign.run_flight

        def flaky_flight(traj, layout, noise, feedback, config=None):
            if traj.kind == "square" and feedback == "uwb":
                raise GeometryError("non-finite position")
            return real_flight(traj, layout, noise, feedback, config)

        monkeypatch.setattr(campaign, "run_flight", flaky_flight)
        result = run_campaign(parse_experiment_config(tiny_experiment), str(tmp_path), jobs=1)
        assert len(result.completed) == 3
        assert len(result.failures) == 1
        records = sorted(n for n in os.listdir(tmp_path / "records") if n.endswith(".csv"))
        assert len(records) == 3
        assert (tmp_path / "summary.json").exists()
        with open(tmp_path / "failures.json") as f:
            assert json.load(f)["failures"][0]["run_id"] == "square_2m_at_2m_sep12m_s0_uwb"

    def test_build_report_matches(self, tiny_experiment, tmp_path):
        run_campaign(parse_experiment_config(tiny_experiment), str(tmp_path), jobs=1)
        before = _read(tmp_path / "errors.csv"), _read(tmp_path / "summary.json")
        os.unlink(tmp_path / "errors.csv")
        os.unlink(tmp_path / "summary.json")
        written = build_report(str(tmp_path))
        assert len(written) == 2
        assert (_read(tmp_path / "errors.csv"), _read(tmp_path / "summary.json")) == before

    def test_build_report_needs_records(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            build_report(str(tmp_path))

    @pytest.mark.slow
    def test_parallel_matches_serial(self, tiny_experiment, tmp_path):
        config = parse_experiment_config(tiny_experiment)
        run_campaign(config, str(tmp_path / "serial"), jobs=1)
        run_campaign(config, str(tmp_path / "parallel"), jobs=2)
        for name in ("errors.csv", "summary.json"):
            assert _read(tmp_path / "serial" / name) == _read(tmp_path / "parallel" / name)
