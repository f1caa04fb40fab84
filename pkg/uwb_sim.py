#!/usr/bin/env python3
"""CLI for cooperative UWB UAV localization: campaigns, offline estimation, tracking, reports."""

import argparse
import logging
import math
import os
import sys
from dataclasses import asdict

from uwb_coop import (
    CONFIGS_DIR, ESTIMATES_HEADER, FRAME_RATE, K_NEIGHBORS, MAX_RADIUS, TRACK_HEADER,
    ConfigError, DataFormatError, EstimationError, SolverConfig, SweepEstimator, TrackLostError,
    TrackState,
    build_report, default_layout, fmt, group_sweeps, load_experiment_config, load_frames,
    read_ranges_csv, run_campaign, track_sequence, write_csv, write_sidecar,
)

DEFAULT_CONFIG = os.path.join(CONFIGS_DIR, "full.yaml")
FORMATS = ("csv", "json")


def _formats(value):
    return FORMATS if value is None else (value,)


def _error(message):
    print(f"Error: {message}", file=sys.stderr)


def cmd_simulate(args):
    """Run the campaign described by --config and write records and reports."""
    if args.jobs is not None and args.jobs < 1:
        _error(f"--jobs must be >= 1, got {args.jobs}")
        return 2
    try:
        config = load_experiment_config(args.config, out_dir=args.out, seed=args.seed)
    except ConfigError as exc:
        _error(exc)
        return 2

    out_dir = config.output_dir
    n_runs = len(config.layouts) * len(config.trajectories) * len(config.seeds) * len(config.feedback)
    print(f"Loading config: {args.config}")
    print(f"  {len(config.layouts)} layouts, {len(config.trajectories)} trajectories, "
          f"{len(config.seeds)} seeds, feedback {'/'.join(config.feedback)}")
    print(f"Running {n_runs} flights into {out_dir}/...")
    done = [0]

    def progress(spec, error):
        done[0] += 1
        status = "ok" if error is None else f"FAILED ({error})"
        print(f"  [{done[0]}/{n_runs}] {spec.run_id} {status}")

    result = run_campaign(config, out_dir, jobs=args.jobs, progress=progress,
                          formats=_formats(args.format))
    if result.failures:
        _error(f"{len(result.failures)} of {n_runs} runs failed; "
               f"see {os.path.join(out_dir, 'failures.json')}")
        return 1
    print(f"\nDone! {len(result.completed)} flights written to {out_dir}/")
    return 0


def _estimate_layout(args):
    if args.config:
        config = load_experiment_config(args.config)
        return config.layouts[0].layout, config.flight.solver
    if args.separation is None:
        raise ConfigError("estimate needs --config or --separation")
    try:
        return default_layout(args.separation), None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_estimate(args):
    """Solve every sweep of a ranges CSV offline."""
    if not os.path.exists(args.ranges):
        _error(f"File not found: {args.ranges}")
        return 2
    try:
        layout, solver = _estimate_layout(args)
        measurements = read_ranges_csv(args.ranges)
    except (ConfigError, DataFormatError) as exc:
        _error(exc)
        return 2
    for m in measurements:
        if m.initiator_id >= layout.n_initiators or m.responder_id >= layout.n_responders:
            _error(f"range ({m.initiator_id}, {m.responder_id}) at t={m.timestamp} is outside "
                   f"the layout ({layout.n_initiators} initiators, {layout.n_responders} responders)")
            return 2

    out_path = args.out or os.path.splitext(args.ranges)[0] + "_estimates.csv"
    estimator = SweepEstimator(layout, solver)
    sweeps = group_sweeps(measurements)
    print(f"Estimating {len(sweeps)} sweeps from {args.ranges}")
    rows = []
    try:
        for group in sweeps:
            estimate = estimator.update(group)
            yaw = estimate.pose.yaw if estimator.estimates_yaw else math.nan
            rows.append([fmt(group[0].timestamp), *(fmt(v) for v in estimate.position), fmt(yaw),
                         fmt(estimate.residual_rms), estimate.iterations, int(estimate.converged)])
    except EstimationError as exc:
        _error(f"sweep {len(rows)} (t={group[0].timestamp}): {exc}")
        return 1
    write_csv(out_path, ESTIMATES_HEADER, rows)
    write_sidecar(out_path, {
        "source": os.path.abspath(args.ranges),
        "config": os.path.abspath(args.config) if args.config else None,
        "separation": args.separation if not args.config else None,
        "layout": layout.to_dict(),
        "solver": asdict(solver or SolverConfig()),
        "sweeps": len(rows),
    })
    print(f"  {len(rows)} estimates written to {out_path}")
    return 0


def _parse_init(text):
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise ValueError(f"--init must be comma-separated numbers, got {text!r}") from None
    if len(values) not in (3, 6):
        raise ValueError("--init takes x,y,z or x,y,z,vx,vy,vz")
    return TrackState(values[:3], values[3:] or None)


def cmd_track(args):
    """Track the UAV through a directory of point-cloud frames."""
    if args.init is None:
        _error("--init x,y,z[,vx,vy,vz] is required")
        return 2
    if not os.path.isdir(args.frames):
        _error(f"Directory not found: {args.frames}")
        return 2
    try:
        init = _parse_init(args.init)
        frames, names = load_frames(args.frames, args.rate)
    except (ValueError, DataFormatError) as exc:
        _error(exc)
        return 2
    if not frames:
        _error(f"no frame files (*.csv, *.bin) in {args.frames}")
        return 2

    print(f"Tracking {len(frames)} frames from {args.frames}")
    try:
        states = track_sequence(frames, init, args.rate, args.k_neighbors, args.max_radius)
    except TrackLostError as exc:
        name = names[exc.frame_index] if exc.frame_index is not None else "?"
        _error(f"{exc} ({name})")
        return 1
    except ValueError as exc:
        _error(exc)
        return 1

    out_path = args.out or os.path.normpath(args.frames) + "_track.csv"
    rows = [[k, fmt(frame.frame_time), *(fmt(v) for v in s.position), *(fmt(v) for v in s.velocity)]
            for k, (frame, s) in enumerate(zip(frames, states))]
    write_csv(out_path, TRACK_HEADER, rows)
    write_sidecar(out_path, {
        "source": os.path.abspath(args.frames),
        "frames": names,
        "init": {"position": init.position.tolist(), "velocity": init.velocity.tolist()},
        "rate": args.rate,
        "k_neighbors": args.k_neighbors,
        "max_radius": args.max_radius,
    })
    print(f"  {len(rows)} track states written to {out_path}")
    return 0


def cmd_report(args):
    """Rebuild errors.csv / summary.json from the records of a finished campaign."""
    try:
        written = build_report(args.results, _formats(args.format))
    except FileNotFoundError as exc:
        _error(exc)
        return 2
    except (DataFormatError, KeyError) as exc:
        _error(f"cannot read records in {args.results}: {exc}")
        return 2
    for path in written:
        print(f"  wrote {path}")
    return 0


def parse_args(argv=None):
    """Parse command-line arguments."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log solver and tracker details")

    parser = argparse.ArgumentParser(
        description="Simulate and evaluate UWB-based localization of a UAV from ground transceivers.",
        epilog="Experiment files are YAML; see configs/full.yaml.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run a simulation campaign")
    p.add_argument("--config", default=DEFAULT_CONFIG,
                   help="experiment YAML (default: configs/full.yaml)")
    p.add_argument("-o", "--out", help="output directory (default: output_dir from the config)")
    p.add_argument("--seed", type=int, help="run a single seed instead of the config's list")
    p.add_argument("-j", "--jobs", type=int, help="worker processes (default: available processors)")
    p.add_argument("--format", choices=FORMATS, help="report format (default: both)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", parents=[common], help="estimate positions from a ranges CSV")
    p.add_argument("ranges", metavar="ranges.csv", help="t,initiator_id,responder_id,range_m")
    p.add_argument("--config", help="experiment YAML; its first layout and solver are used")
    p.add_argument("--separation", type=float, help="square responder layout with this side (m)")
    p.add_argument("-o", "--out", help="estimates CSV (default: <ranges>_estimates.csv)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("track", parents=[common], help="track the UAV in point-cloud frames")
    p.add_argument("frames", metavar="frames_dir", help="directory of *.csv / *.bin frames")
    p.add_argument("--init", metavar="x,y,z[,vx,vy,vz]", help="initial track state")
    p.add_argument("--rate", type=float, default=FRAME_RATE, help="frame rate in Hz (default: 10)")
    p.add_argument("--k-neighbors", type=int, default=K_NEIGHBORS,
                   help=f"neighbors per query (default: {K_NEIGHBORS})")
    p.add_argument("--max-radius", type=float, default=MAX_RADIUS,
                   help=f"gate radius in m (default: {MAX_RADIUS:g})")
    p.add_argument("-o", "--out", help="track CSV (default: <frames_dir>_track.csv)")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("report", parents=[common], help="rebuild reports from saved records")
    p.add_argument("results", metavar="results_dir", help="campaign output directory")
    p.add_argument("--format", choices=FORMATS, help="report format (default: both)")
    p.set_defaults(func=cmd_report)

    return parser.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.DEBUG, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
