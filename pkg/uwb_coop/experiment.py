"""YAML experiment configuration: parsing, defaults and validation."""

import os
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Tuple

import numpy as np
import yaml

from .config import (
    CYCLE_RATE, FEEDBACK_SOURCES, MAX_FAILED_SOLVES, OUTLIER_SCALE, RESPONDER_HEIGHT,
    SEPARATIONS, SIGMA_UWB, SINGLE_INITIATOR_OFFSETS, SQUARE_ALTITUDES, SQUARE_SIDE,
    TWO_INITIATOR_OFFSETS, VERTICAL_ALTITUDE,
)
from .estimator import SolverConfig
from .flightsim import ControllerConfig, FlightConfig, Trajectory
from .geometry import RigidOffset, TransceiverLayout, square_anchor_layout
from .ranging import NoiseModel


class ConfigError(ValueError):
    """Experiment configuration cannot be parsed or is invalid."""


# `layout.initiators` may name one of these instead of listing offsets.
INITIATOR_PRESETS = {"single": SINGLE_INITIATOR_OFFSETS, "pair": TWO_INITIATOR_OFFSETS}


@dataclass(frozen=True, eq=False)
class LayoutSpec:
    """A named responder layout; `separation` is None for explicit coordinates."""

    name: str
    layout: TransceiverLayout
    separation: Optional[float] = None


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    name: str
    layouts: Tuple[LayoutSpec, ...]
    seeds: Tuple[int, ...]
    trajectories: Tuple[Trajectory, ...]
    sigma: float = SIGMA_UWB
    outlier_probability: float = 0.0
    outlier_scale: float = OUTLIER_SCALE
    feedback: Tuple[str, ...] = FEEDBACK_SOURCES
    flight: FlightConfig = field(default_factory=FlightConfig)
    output_dir: str = "results"
    source_path: Optional[str] = None

    def noise(self, seed):
        return NoiseModel(self.sigma, seed, self.outlier_probability, self.outlier_scale)

    def to_dict(self):
        """Resolved configuration, echoed into every metadata sidecar."""
        flight = self.flight
        return {
            "name": self.name,
            "layouts": [{"name": s.name, "separation": s.separation, **s.layout.to_dict()}
                        for s in self.layouts],
            "seeds": list(self.seeds),
            "trajectories": [t.to_dict() for t in self.trajectories],
            "noise": {"sigma": self.sigma, "outlier_probability": self.outlier_probability,
                      "outlier_scale": self.outlier_scale},
            "feedback": list(self.feedback),
            "ranging": {"cycle_rate": flight.cycle_rate},
            "solver": asdict(flight.solver),
            "controller": asdict(flight.controller),
            "max_failed_solves": flight.max_failed_solves,
            "output_dir": self.output_dir,
        }


def _section(data, key):
    value = data.get(key) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"'{key}' must be a mapping")
    return value


def _build(cls, values, where):
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _read_points_file(path):
    try:
        points = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read responder file {path}: {exc}") from None
    if points.shape[1] != 3:
        raise ConfigError(f"responder file {path} must have 3 columns")
    return [tuple(p) for p in points]


def _layouts(section, base_dir):
    offsets = section.get("initiators", SINGLE_INITIATOR_OFFSETS)
    if isinstance(offsets, str):
        if offsets not in INITIATOR_PRESETS:
            raise ConfigError(f"layout: unknown initiator preset {offsets!r}, "
                              f"expected one of {sorted(INITIATOR_PRESETS)}")
        offsets = INITIATOR_PRESETS[offsets]
    height = float(section.get("height", RESPONDER_HEIGHT))
    try:
        initiators = tuple(RigidOffset(o) for o in offsets)
        specs = []
        for separation in section.get("separations", SEPARATIONS if "responders" not in section
                                      and "responders_file" not in section else []):
            responders = tuple(square_anchor_layout(float(separation), height))
            specs.append(LayoutSpec(f"sep{float(separation):g}m",
                                    TransceiverLayout(initiators, responders), float(separation)))
        explicit = section.get("responders")
        if "responders_file" in section:
            path = section["responders_file"]
            if not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            if not os.path.exists(path):
                raise ConfigError(f"responder file not found: {path}")
            explicit = _read_points_file(path)
        if explicit:
            specs.append(LayoutSpec(section.get("name", "explicit"),
                                    TransceiverLayout(initiators, tuple(explicit))))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"layout: {exc}") from None
    if not specs:
        raise ConfigError("at least one layout is required")
    return tuple(specs)


def _trajectories(items):
    if items is None:
        items = [{"kind": "vertical", "target_altitude": VERTICAL_ALTITUDE}] + [
            {"kind": "square", "side": SQUARE_SIDE, "altitude": a} for a in SQUARE_ALTITUDES
        ]
    if not isinstance(items, list) or not items:
        raise ConfigError("'trajectories' must be a non-empty list")
    return tuple(_build(Trajectory, dict(item), f"trajectory {k}") for k, item in enumerate(items))


def _seeds(noise):
    seeds = noise.get("seeds", [0])
    if isinstance(seeds, int):
        seeds = [seeds]
    if not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("'noise.seeds' must be a list of integers")
    if not seeds:
        raise ConfigError("at least one seed is required")
    return tuple(seeds)


def parse_experiment_config(data, base_dir=".", source_path=None):
    """Build an ExperimentConfig from an already-parsed mapping."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    noise = _section(data, "noise")
    ranging = _section(data, "ranging")
    flight_section = _section(data, "flight")
    feedback = tuple(data.get("feedback", FEEDBACK_SOURCES))
    unknown = [f for f in feedback if f not in FEEDBACK_SOURCES]
    if unknown or not feedback:
        raise ConfigError(f"'feedback' must list sources from {FEEDBACK_SOURCES}")

    solver = _build(SolverConfig, _section(data, "solver"), "solver")
    controller = _build(ControllerConfig, _section(data, "controller"), "controller")
    flight = _build(FlightConfig, {
        "controller": controller,
        "solver": solver,
        "cycle_rate": float(ranging.get("cycle_rate", CYCLE_RATE)),
        "max_failed_solves": int(flight_section.get("max_failed_solves", MAX_FAILED_SOLVES)),
    }, "flight")
    if flight.cycle_rate <= 0:
        raise ConfigError("ranging.cycle_rate must be positive")

    config = ExperimentConfig(
        name=str(data.get("name", "experiment")),
        layouts=_layouts(_section(data, "layout"), base_dir),
        seeds=_seeds(noise),
        trajectories=_trajectories(data.get("trajectories")),
        sigma=float(noise.get("sigma", SIGMA_UWB)),
        outlier_probability=float(noise.get("outlier_probability", 0.0)),
        outlier_scale=float(noise.get("outlier_scale", OUTLIER_SCALE)),
        feedback=feedback,
        flight=flight,
        output_dir=str(data.get("output_dir", "results")),
        source_path=source_path,
    )
    try:
        config.noise(config.seeds[0])
    except ValueError as exc:
        raise ConfigError(f"noise: {exc}") from None
    return config


def load_experiment_config(path, out_dir=None, seed=None):
    """Load and validate a YAML experiment file; `out_dir`/`seed` override the file."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    base_dir = os.path.dirname(os.path.abspath(path))
    config = parse_experiment_config(data or {}, base_dir, source_path=os.path.abspath(path))
    if out_dir is not None:
        config = replace(config, output_dir=out_dir)
    if seed is not None:
        config = replace(config, seeds=(int(seed),))
    return config
