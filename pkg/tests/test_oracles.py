import numpy as np
import pytest

from drsynth.ambiguity import AmbiguitySet, NominalDistribution
from drsynth.model import eval_dynamics
from drsynth.oracles import (
    GAME_DISTURBANCES,
    GAME_INPUTS,
    GAME_SAFE_NARROW,
    GAME_STATES,
    duality_suite,
    finite_game_system,
    game_tree_value,
    random_duality_fixture,
)
from drsynth.synthesis import REACH_AVOID, SAFETY


def _point_mass(w, radius=0.0, order=1.0):
    return AmbiguitySet(NominalDistribution([[w]], [1.0]), radius, order)


def test_clamped_walk_polynomial_on_the_lattice():
    model = finite_game_system()
    for x in GAME_STATES:
        for u in GAME_INPUTS:
            for w in GAME_DISTURBANCES:
                got = eval_dynamics(model, [x], [u], [w])[0]
                assert got == pytest.approx(min(max(x + u + w, 0.0), 4.0), abs=1e-9)


def test_game_tree_reach_by_hand():
    # from 2, two +1 inputs reach 4 without noise; one step is not enough
    assert game_tree_value(finite_game_system(horizon=3), _point_mass(0.0), REACH_AVOID, 0, 2.0) == 1.0
    assert game_tree_value(finite_game_system(horizon=1), _point_mass(0.0), REACH_AVOID, 0, 2.0) == 0.0
    assert game_tree_value(finite_game_system(horizon=1), _point_mass(1.0), REACH_AVOID, 0, 2.0) == 1.0


def test_game_tree_safety_adversary_by_hand():
    # any input leaves one of the three outcomes outside [1.5, 3.5]; the
    # adversary moves radius worth of mass from w = 0 to that outcome at unit cost
    model = finite_game_system(horizon=1, target=None, safe=GAME_SAFE_NARROW)
    assert game_tree_value(model, _point_mass(0.0, 0.3), SAFETY, 0, 2.0) == pytest.approx(0.7, abs=1e-9)
    assert game_tree_value(model, _point_mass(0.0, 1.0), SAFETY, 0, 2.0) == pytest.approx(0.0, abs=1e-9)
    assert game_tree_value(model, _point_mass(0.0, 0.0), SAFETY, 0, 2.0) == 1.0


def test_random_fixture_sizes_respect_limits():
    rng = np.random.default_rng(0)
    for _ in range(50):
        fx = random_duality_fixture(rng)
        assert fx.grid.size <= 5 and fx.nominal.size <= 3
        assert 0.0 <= fx.radius <= 1.0


def test_duality_suite_is_seeded():
    a = duality_suite(5, seed=3)
    b = duality_suite(5, seed=3)
    assert a == b
    assert max(r["gap"] for r in a) <= 1e-6
