import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from convex_smp.checks import distance_field  # noqa: E402
from convex_smp.convex import Ball, HPolytope  # noqa: E402
from convex_smp.scenarios import load_scenario  # noqa: E402
from convex_smp.solver import run_scenario  # noqa: E402


@pytest.fixture
def unit_box():
    return HPolytope.box([0.0, 0.0], [1.0, 1.0])


@pytest.fixture
def unit_interval():
    return HPolytope.box([0.0], [1.0])


@pytest.fixture
def unit_ball():
    return Ball([0.0, 0.0], 1.0)


@pytest.fixture
def simplex():
    return HPolytope.from_halfspaces([[1, 0], [0, 1], [-1, -1]], [0, 0, -1])


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


_TRAJECTORIES = {}


def simulated(name, **overrides):
    """Integrate a built-in scenario once per test session and reuse the trajectory."""
    key = (name, tuple(sorted(overrides.items())))
    if key not in _TRAJECTORIES:
        scenario = load_scenario(name)
        traj = run_scenario(scenario, **overrides)
        _TRAJECTORIES[key] = (scenario, traj, distance_field(traj, scenario.convex_body))
    return _TRAJECTORIES[key]


@pytest.fixture
def heat_run():
    return simulated("heat-interval")


@pytest.fixture
def sink_run():
    return simulated("incompatible-sink")
