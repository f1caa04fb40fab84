"""Shared fixtures for uwb_coop tests."""

import os

import numpy as np
import pytest
import yaml

from uwb_coop.geometry import TransceiverLayout, default_layout, square_anchor_layout
from uwb_coop.ranging import NoiseModel

# tests/ directory
TESTS_DIR = os.path.dirname(os.path.abspath(__file__))
PROJECT_ROOT = os.path.normpath(os.path.join(TESTS_DIR, os.pardir))


@pytest.fixture
def full_config_path():
    """Path to the shipped campaign config with the published settings."""
    return os.path.join(PROJECT_ROOT, "configs", "full.yaml")


@pytest.fixture
def layout_12m():
    """One initiator at the UAV origin, responders on a 12 m square."""
    return default_layout(12.0)


@pytest.fixture
def layout_3m():
    return default_layout(3.0)


@pytest.fixture
def two_initiator_layout():
    """Two initiators 1 m apart along body x, responders on a 12 m square."""
    return TransceiverLayout(
        initiators=((0.5, 0.0, 0.0), (-0.5, 0.0, 0.0)),
        responders=tuple(square_anchor_layout(12.0)),
    )


@pytest.fixture
def noiseless():
    return NoiseModel(sigma=0.0, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def write_config(tmp_path):
    """Factory: dump a mapping to a YAML file in tmp and return its path."""

    def _write(data, name="experiment.yaml"):
        path = tmp_path / name
        with open(path, "w") as f:
            yaml.safe_dump(data, f)
        return str(path)

    return _write


@pytest.fixture
def tiny_experiment():
    """A campaign small enough for unit tests: one layout, one seed, short flights."""
    return {
        "name": "tiny",
        "layout": {"separations": [12.0]},
        "noise": {"sigma": 0.1, "seeds": [0]},
        "trajectories": [
            {"kind": "vertical", "target_altitude": 3.0},
            {"kind": "square", "side": 2.0, "altitude": 2.0},
        ],
    }
