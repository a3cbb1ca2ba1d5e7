import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from drsynth.ambiguity import AmbiguitySet, UniformBox, child_rng, empirical_nominal, sample_many
from drsynth.dro_dual import SolverConfig
from drsynth.model import builtin_system
from drsynth.synthesis import REACH_AVOID, StateGrid, value_iteration

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# acceptance lines collected by tests/test_acceptance.py and printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def room():
    return builtin_system("room_temperature")


@pytest.fixture(scope="session")
def room_nominal(room):
    # five uniform draws, the same stream the study uses for group 2, repetition 0
    draws = sample_many(UniformBox(room.disturbance_box), child_rng(0, 1, 0), 5)
    return empirical_nominal(draws, room.disturbance_box)


@pytest.fixture(scope="session")
def room_grid(room):
    return StateGrid.from_resolution(room.working_box, 0.01)


@pytest.fixture(scope="session")
def room_dr(room, room_nominal, room_grid):
    """DR synthesis at radius 0.05 on the 0.01 grid, shared by several tests."""
    amb = AmbiguitySet(room_nominal, 0.05, 1.0)
    vg, policy = value_iteration(room, amb, room_grid, SolverConfig(), REACH_AVOID)
    return amb, vg, policy


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
