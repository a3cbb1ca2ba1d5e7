import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drsynth.ambiguity import AmbiguitySet, NominalDistribution, UniformBox, discretize
from drsynth.dro_dual import SolverConfig, dual_value
from drsynth.model import Box, FiniteInputs, ModelError, SystemModel, membership, parse_polynomial
from drsynth.oracles import (
    GAME_SAFE,
    finite_game_grid,
    finite_game_solver,
    finite_game_system,
    game_tree_values,
)
from drsynth.synthesis import (
    REACH_AVOID,
    SAFETY,
    PolicyTable,
    StateGrid,
    ValueGrid,
    evaluate_fixed_distribution,
    feasible_controls,
    initial_probes,
    min_over_initial,
    query_value,
    stage_evaluator,
    threshold_policy,
    value_iteration,
)


def _line_model(dynamics: str, safe, target=None, horizon=1, inputs=((0.0,),), w=(-1.0, 1.0)):
    return SystemModel(
        state_dim=1,
        input_set=FiniteInputs(inputs),
        disturbance_box=Box((w[0],), (w[1],)),
        dynamics=(parse_polynomial(dynamics, ["x", "u", "w"]),),
        horizon=horizon,
        init=Box((0.0,), (0.0,)),
        safe=safe,
        target=target,
        working_box=safe,
    )


# ---------------------------------------------------------------- grids


def test_grid_from_resolution():
    g = StateGrid.from_resolution(Box((23.0,), (26.0,)), 0.01)
    assert g.points == (301,) and g.size == 301
    assert g.widths[0] == pytest.approx(0.01)


def test_grid_validation():
    with pytest.raises(ValueError):
        StateGrid((0.0,), (1.0,), (1,))
    with pytest.raises(ValueError):
        StateGrid((1.0,), (1.0,), (3,))


def test_nearest_index():
    g = StateGrid((0.0, 0.0), (1.0, 2.0), (3, 5))
    assert g.nearest_index([[0.49, 1.6]])[0] == 1 * 5 + 3
    assert g.nearest_index([[-5.0, 9.0]])[0] == 4  # clipped to the box


# ---------------------------------------------------------------- queries


def _ramp_vg(model, spec, mode="multilinear"):
    g = StateGrid((0.0,), (4.0,), (5,))
    stages = np.array([[0.0, 0.25, 0.5, 0.75, 1.0]])
    return ValueGrid(g, stages, spec, model, mode)


def test_query_at_node_returns_nodal_value():
    model = _line_model("x", Box((0.0,), (4.0,)))
    vg = _ramp_vg(model, SAFETY)
    for k, x in enumerate(vg.grid.nodes()[:, 0]):
        assert query_value(vg, 0, [x]) == vg.stages[0, k]


def test_query_structure():
    model = _line_model("x", Box((0.0,), (4.0,)), target=Box((3.5,), (4.0,)))
    vg = _ramp_vg(model, REACH_AVOID)
    assert query_value(vg, 0, [3.6]) == 1.0  # in G
    assert query_value(vg, 0, [4.5]) == 0.0  # outside S
    assert query_value(vg, 0, [1.5]) == pytest.approx(0.375)


def test_pessimistic_never_exceeds_multilinear():
    model = _line_model("x", Box((0.0,), (4.0,)))
    lin = _ramp_vg(model, SAFETY)
    pes = _ramp_vg(model, SAFETY, "pessimistic")
    xs = np.linspace(0.0, 4.0, 37)[:, None]
    assert np.all(query_value(pes, 0, xs) <= query_value(lin, 0, xs) + 1e-15)
    assert query_value(pes, 0, [1.5]) == 0.25


def test_clamped_query_counter():
    # S extends beyond the grid: queries there are clamped to the nearest face and counted
    model = SystemModel(1, FiniteInputs(((0.0,),)), Box((0.0,), (0.0,)), (parse_polynomial("x", ["x", "u", "w"]),),
                        1, Box((0.0,), (0.0,)), Box((0.0,), (10.0,)))
    vg = ValueGrid(StateGrid((0.0,), (4.0,), (5,)), np.array([[0.0, 0.25, 0.5, 0.75, 1.0]]), SAFETY, model)
    assert query_value(vg, 0, [7.0]) == 1.0
    assert vg.diagnostics["clamped_queries"] == 1


# ---------------------------------------------------------------- value iteration


def test_one_step_certain_reach():
    model = _line_model("5 + 0.01 w", Box((0.0,), (10.0,)), target=Box((4.9,), (5.1,)))
    amb = AmbiguitySet(NominalDistribution([[0.0]], [1.0]), 0.3)
    vg, _ = value_iteration(model, amb, StateGrid((0.0,), (10.0,), (11,)), SolverConfig(), REACH_AVOID)
    assert np.all(vg.stages[0] == 1.0)


def test_inescapable_safe_set():
    model = _line_model("0.5 x + 0.4 w", Box((-1.0,), (1.0,)), horizon=4)
    amb = AmbiguitySet(NominalDistribution([[0.0], [0.5]], [0.5, 0.5]), 0.5)
    vg, _ = value_iteration(model, amb, StateGrid((-1.0,), (1.0,), (21,)), SolverConfig(), SAFETY)
    assert np.all(vg.stages == 1.0)


def test_terminal_stage_and_structure(room_dr):
    amb, vg, policy = room_dr
    nodes = vg.grid.nodes()
    in_g = np.atleast_1d(membership(vg.model.target, nodes))
    assert np.array_equal(vg.stages[-1], in_g.astype(float))
    assert np.all(vg.stages[:, in_g] == 1.0)
    assert np.all(policy.indices[:, in_g] == 0)
    assert vg.stages.min() >= 0.0 and vg.stages.max() <= 1.0


def test_policy_is_argmax_of_action_values(room_dr):
    _, vg, policy = room_dr
    q = vg.action_values
    assert np.array_equal(policy.indices, np.argmax(q, axis=2))
    assert np.array_equal(vg.stages[:-1], np.max(q, axis=2))


def test_policy_soundness_against_feasible_controls(room, room_dr):
    amb, vg, policy = room_dr
    alpha = 0.9
    rng = np.random.default_rng(3)
    nodes = vg.grid.nodes()
    hits = np.argwhere(vg.stages[:-1] >= alpha)
    for t, k in hits[rng.choice(len(hits), size=8, replace=False)]:
        feas = feasible_controls(room, amb, vg, int(t), nodes[k], alpha, SolverConfig())
        chosen = policy.inputs[policy.indices[t, k]]
        assert any(np.array_equal(chosen, u) for u in feas)


def test_feasible_controls_trivial_cases(room, room_dr):
    amb, vg, _ = room_dr
    all_inputs = [u.tolist() for u in vg.inputs]
    one = ValueGrid(vg.grid, np.ones_like(vg.stages), REACH_AVOID, room)
    assert [u.tolist() for u in feasible_controls(room, amb, one, 3, [24.0], 0.99, SolverConfig())] == all_inputs
    assert [u.tolist() for u in feasible_controls(room, amb, vg, 3, [23.5], 0.0, SolverConfig())] == all_inputs
    with pytest.raises(IndexError):
        feasible_controls(room, amb, vg, vg.horizon, [24.0], 0.5, SolverConfig())


def test_feasible_controls_near_cold_boundary(room, room_grid):
    fine = discretize(UniformBox(room.disturbance_box), 201)
    amb = AmbiguitySet(fine, 0.0)
    # staying in S: from 23.1 only heating avoids the cold boundary
    vg, _ = value_iteration(room, amb, room_grid, SolverConfig(), SAFETY)
    feas = [u.tolist() for u in feasible_controls(room, amb, vg, 6, [23.1], 0.9, SolverConfig())]
    assert [1.0] in feas and [0.0] not in feas


def test_threshold_policy_prefers_first_input_when_feasible(room_dr):
    _, vg, _ = room_dr
    pol = threshold_policy(vg, 0.9)
    q = vg.action_values
    assert np.all(pol.indices[q[:, :, 0] >= 0.9] == 0)
    other = q[:, :, 0] < 0.9
    assert np.all(pol.indices[other] == 1)


def test_theta_monotone_on_finite_game():
    model = finite_game_system(3, "small")
    nom = NominalDistribution([[0.0], [1.0]], [0.6, 0.4])
    prev = None
    for theta in (0.0, 0.1, 0.4, 1.0):
        vg, _ = value_iteration(model, AmbiguitySet(nom, theta), finite_game_grid(), finite_game_solver(), REACH_AVOID)
        if prev is not None:
            assert np.all(vg.stages[0] <= prev + 1e-8)
        prev = vg.stages[0]


@settings(max_examples=15)
@given(st.sampled_from([(0.0,), (1.0,), (-1.0,)]), st.floats(0.0, 1.0), st.integers(1, 3))
def test_target_enlargement_never_hurts(atom, theta, horizon):
    amb = AmbiguitySet(NominalDistribution([atom], [1.0]), round(theta, 3))
    small, _ = value_iteration(finite_game_system(horizon, "small"), amb, finite_game_grid(), finite_game_solver(), REACH_AVOID)
    large, _ = value_iteration(finite_game_system(horizon, "large"), amb, finite_game_grid(), finite_game_solver(), REACH_AVOID)
    assert np.all(large.stages[0] >= small.stages[0] - 1e-12)


@settings(max_examples=10)
@given(st.sampled_from([(0.0,), (1.0,), (-1.0,)]), st.floats(0.0, 1.0), st.sampled_from([1.0, 2.0]))
def test_brute_force_game_matches_value_iteration(atom, theta, order):
    amb = AmbiguitySet(NominalDistribution([atom], [1.0]), round(theta, 3), order)
    model = finite_game_system(2, "small", GAME_SAFE)
    vg, _ = value_iteration(model, amb, finite_game_grid(), finite_game_solver(), REACH_AVOID)
    assert np.max(np.abs(game_tree_values(model, amb, REACH_AVOID) - vg.stages[0])) <= 1e-6


def test_value_iteration_rejects_bad_arguments(room, room_grid, room_nominal):
    amb = AmbiguitySet(room_nominal, 0.0)
    with pytest.raises(ValueError):
        value_iteration(room, amb, room_grid, SolverConfig(), "liveness")
    with pytest.raises(ValueError):
        value_iteration(room, amb, room_grid, SolverConfig(), REACH_AVOID, interpolation="cubic")
    with pytest.raises(ModelError):
        value_iteration(room, amb, StateGrid((0.0, 0.0), (1.0, 1.0), (2, 2)), SolverConfig(), REACH_AVOID)


def test_repeated_synthesis_bit_identical(room, room_grid, room_nominal):
    amb = AmbiguitySet(room_nominal, 0.0)
    a, pa = value_iteration(room, amb, room_grid, SolverConfig(), REACH_AVOID)
    b, pb = value_iteration(room, amb, room_grid, SolverConfig(), REACH_AVOID)
    assert a.stages.tobytes() == b.stages.tobytes()
    assert pa.indices.tobytes() == pb.indices.tobytes()


# ---------------------------------------------------------------- fixed-distribution evaluation


def test_point_mass_safe_rollout():
    model = _line_model("0.5 x + u + w", Box((-1.0,), (1.0,)), horizon=5, inputs=((0.0,),))
    grid = StateGrid((-1.0,), (1.0,), (9,))
    policy = PolicyTable(grid, np.array([[0.0]]), np.zeros((5, 9), dtype=int))
    vg = evaluate_fixed_distribution(model, policy, NominalDistribution([[0.0]], [1.0]), grid, SAFETY)
    assert np.all(vg.stages[0] == 1.0)


def test_policy_leaving_safe_set():
    model = _line_model("x + u", Box((-1.0,), (1.0,)), horizon=2, inputs=((0.0,), (5.0,)))
    grid = StateGrid((-1.0,), (1.0,), (9,))
    policy = PolicyTable(grid, np.array([[0.0], [5.0]]), np.ones((2, 9), dtype=int))
    vg = evaluate_fixed_distribution(model, policy, NominalDistribution([[0.0]], [1.0]), grid, SAFETY)
    assert np.all(vg.stages[0] == 0.0)


def test_fixed_evaluation_matches_zero_radius_synthesis(room, room_grid):
    # with theta = 0 the optimal policy evaluated under the same atoms reproduces the optimal values
    fine = discretize(UniformBox(room.disturbance_box), 51)
    vg, policy = value_iteration(room, AmbiguitySet(fine, 0.0), room_grid, SolverConfig(), REACH_AVOID)
    ev = evaluate_fixed_distribution(room, policy, fine, room_grid, REACH_AVOID)
    assert np.max(np.abs(ev.stages - vg.stages)) <= 1e-12


def test_fixed_evaluation_grid_mismatch(room, room_grid):
    policy = PolicyTable(StateGrid((23.0,), (26.0,), (11,)), np.array([[0.0]]), np.zeros((12, 11), dtype=int))
    with pytest.raises(ModelError):
        evaluate_fixed_distribution(room, policy, NominalDistribution([[0.0]], [1.0]), room_grid, REACH_AVOID)


# ---------------------------------------------------------------- initial set


def test_initial_probe_count(room):
    probes = initial_probes(room, 0.01)
    assert len(probes) == 21
    assert probes[0, 0] == pytest.approx(23.6) and probes[-1, 0] == pytest.approx(23.8)


def test_min_over_initial_constant(room, room_grid):
    vg = ValueGrid(room_grid, np.full((13, room_grid.size), 0.8), REACH_AVOID, room)
    val, where = min_over_initial(vg, room, 0.01)
    assert val == pytest.approx(0.8) and where[0] == pytest.approx(23.6)


def test_min_over_initial_monotone(room, room_grid):
    nodes = room_grid.nodes()[:, 0]
    decreasing = np.clip((26.0 - nodes) / 3.0, 0, 1)
    vg = ValueGrid(room_grid, np.tile(decreasing, (13, 1)), REACH_AVOID, room)
    _, where = min_over_initial(vg, room, 0.01)
    assert where[0] == pytest.approx(23.8)


def test_stage_evaluator_range(room_dr):
    _, vg, _ = room_dr
    ev = stage_evaluator(vg, 0)
    vals = ev(np.linspace(22.0, 27.0, 101)[:, None])
    assert vals.min() >= 0.0 and vals.max() <= 1.0


def test_dual_value_consistent_with_stored_action_values(room, room_dr):
    amb, vg, _ = room_dr
    k = int(np.argmin(np.abs(vg.grid.nodes()[:, 0] - 23.7)))
    x = vg.grid.nodes()[k]
    for j, u in enumerate(vg.inputs):
        res = dual_value(stage_evaluator(vg, 5), room, x, u, amb, SolverConfig())
        assert res.value == pytest.approx(vg.action_values[4, k, j], abs=1e-12)


def test_feasible_controls_structural_states(room, room_dr):
    amb, vg, _ = room_dr
    assert len(feasible_controls(room, amb, vg, 2, [24.5], 0.99, SolverConfig())) == 2  # in G: already reached
    assert feasible_controls(room, amb, vg, 2, [26.5], 0.1, SolverConfig()) == []  # outside S
