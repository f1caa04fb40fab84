"""Simulation campaigns: layouts x trajectories x seeds x feedback sources."""

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Optional

from .data import (
    ERRORS_HEADER, fmt, read_flight_record, sidecar_path, write_csv, write_flight_record,
    write_json, write_ranges_csv,
)
from .flightsim import FlightAbortedError, FlightConfig, Trajectory, run_flight
from .geometry import TransceiverLayout
from .metrics import (
    long_form_rows, navigation_errors, pooled_stats, positioning_errors, summarize_record,
)
from .ranging import NoiseModel

logger = logging.getLogger(__name__)

RECORDS_DIR = "records"
RANGES_DIR = "ranges"
REPORTS_DIR = "reports"


@dataclass(frozen=True, eq=False)
class RunSpec:
    index: int
    run_id: str
    layout_name: str
    separation: Optional[float]
    layout: TransceiverLayout
    trajectory: Trajectory
    noise: NoiseModel
    feedback: str
    flight: FlightConfig

    def info(self):
        return {
            "run_id": self.run_id,
            "layout_name": self.layout_name,
            "separation": self.separation,
            "trajectory_name": self.trajectory.name,
            "seed": self.noise.seed,
            "feedback": self.feedback,
        }


@dataclass
class CampaignResult:
    out_dir: str
    completed: list
    failures: list

    @property
    def ok(self):
        return not self.failures


def plan_runs(config):
    """Runs in a fixed order: layout, trajectory, seed, feedback."""
    specs = []
    for layout_spec in config.layouts:
        for traj in config.trajectories:
            for seed in config.seeds:
                for feedback in config.feedback:
                    run_id = f"{traj.name}_{layout_spec.name}_s{seed}_{feedback}"
                    specs.append(RunSpec(
                        index=len(specs), run_id=run_id, layout_name=layout_spec.name,
                        separation=layout_spec.separation, layout=layout_spec.layout,
                        trajectory=traj, noise=config.noise(seed), feedback=feedback,
                        flight=config.flight,
                    ))
    return specs


def execute_run(spec):
    """Run one flight; returns (index, record, error message)."""
    try:
        record = run_flight(spec.trajectory, spec.layout, spec.noise, spec.feedback, spec.flight)
    except (FlightAbortedError, ValueError) as exc:
        logger.warning("run %s failed: %s", spec.run_id, exc)
        return spec.index, None, str(exc)
    return spec.index, record, None


def _separation_text(separation):
    return "" if separation is None else fmt(separation)


def _series(record):
    series = [navigation_errors(record)]
    if record.has_estimates:
        series.insert(0, positioning_errors(record))
    return series


def aggregate(entries):
    """Long-form rows and pooled statistics for (info, record) pairs in plan order."""
    rows = []
    groups = {}
    for info, record in entries:
        key = (info["trajectory_name"], info["layout_name"], info["feedback"])
        group = groups.setdefault(key, {"separation": info["separation"], "values": {}})
        for series in _series(record):
            rows.extend(long_form_rows(info["run_id"], _separation_text(info["separation"]), series))
            for axis in series.axes:
                group["values"].setdefault(f"{series.kind}/{axis}", []).append(series.values(axis))
    summary = []
    for (traj_name, layout_name, feedback), group in groups.items():
        stats = pooled_stats(group["values"])
        entry = {"trajectory": traj_name, "layout": layout_name,
                 "separation": group["separation"], "feedback": feedback}
        for name, value in stats.items():
            kind, axis = name.split("/")
            entry.setdefault(kind, {})[axis] = value
        summary.append(entry)
    rows = [(r[0], r[1], r[2], r[3], fmt(r[4]), fmt(r[5])) for r in rows]
    return rows, summary


def write_reports(out_dir, entries, experiment, formats=("csv", "json")):
    rows, summary = aggregate(entries)
    written = []
    if "csv" in formats:
        path = os.path.join(out_dir, "errors.csv")
        write_csv(path, ERRORS_HEADER, rows)
        write_json(sidecar_path(path), {"experiment": experiment})
        written.append(path)
    if "json" in formats:
        path = os.path.join(out_dir, "summary.json")
        write_json(path, {"experiment": experiment, "groups": summary})
        written.append(path)
    return written


def run_campaign(config, out_dir=None, jobs=None, progress=None, formats=("csv", "json")):
    """Execute every planned run and write records, ranges and reports under out_dir.

    Files are written in plan order, so outputs do not depend on `jobs`.
    """
    out_dir = out_dir or config.output_dir
    jobs = jobs or os.cpu_count() or 1
    specs = plan_runs(config)
    experiment = config.to_dict()
    logger.info("campaign %s: %d runs with %d jobs", config.name, len(specs), jobs)

    results = {}
    if jobs == 1:
        for spec in specs:
            results[spec.index] = execute_run(spec)
            if progress:
                progress(spec, results[spec.index][2])
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(execute_run, spec): spec for spec in specs}
            for future in as_completed(futures):
                spec = futures[future]
                results[spec.index] = future.result()
                if progress:
                    progress(spec, results[spec.index][2])

    completed, failures, entries = [], [], []
    for spec in specs:
        _, record, error = results[spec.index]
        if record is None:
            failures.append({**spec.info(), "error": error})
            continue
        meta = {**spec.info(), "experiment": experiment}
        write_flight_record(os.path.join(out_dir, RECORDS_DIR, f"{spec.run_id}.csv"), record, meta)
        write_ranges_csv(os.path.join(out_dir, RANGES_DIR, f"{spec.run_id}.csv"),
                         record.measurements, {**record.metadata, **meta})
        report = summarize_record(record)
        report.update(spec.info())
        write_json(os.path.join(out_dir, REPORTS_DIR, f"{spec.run_id}.json"), report)
        entries.append((spec.info(), record))
        completed.append(spec.run_id)

    write_reports(out_dir, entries, experiment, formats)
    failures_path = os.path.join(out_dir, "failures.json")
    if failures:
        write_json(failures_path, {"experiment": experiment, "failures": failures})
    elif os.path.exists(failures_path):
        os.unlink(failures_path)
    return CampaignResult(out_dir=out_dir, completed=completed, failures=failures)


def build_report(out_dir, formats=("csv", "json")):
    """Recompute reports from the records written by a campaign."""
    records_dir = os.path.join(out_dir, RECORDS_DIR)
    if not os.path.isdir(records_dir):
        raise FileNotFoundError(f"no records directory in {out_dir}")
    names = sorted(n for n in os.listdir(records_dir) if n.endswith(".csv"))
    entries = []
    experiment = None
    for name in names:
        record = read_flight_record(os.path.join(records_dir, name))
        meta = record.metadata
        experiment = experiment or meta.get("experiment")
        info = {k: meta[k] for k in ("run_id", "layout_name", "separation",
                                     "trajectory_name", "seed", "feedback")}
        entries.append((info, record))
    # Plan order is layout, trajectory, seed, feedback; recover it from the sidecars.
    if experiment:
        layout_order = {l["name"]: k for k, l in enumerate(experiment["layouts"])}
        traj_order = {Trajectory.from_dict(t).name: k for k, t in enumerate(experiment["trajectories"])}
        seed_order = {s: k for k, s in enumerate(experiment["seeds"])}
        feedback_order = {f: k for k, f in enumerate(experiment["feedback"])}
        entries.sort(key=lambda e: (layout_order.get(e[0]["layout_name"], 0),
                                    traj_order.get(e[0]["trajectory_name"], 0),
                                    seed_order.get(e[0]["seed"], 0),
                                    feedback_order.get(e[0]["feedback"], 0)))
    return write_reports(out_dir, entries, experiment, formats)


def load_summary(out_dir):
    with open(os.path.join(out_dir, "summary.json")) as f:
        return json.load(f)
