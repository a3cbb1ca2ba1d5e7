import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drsynth.ambiguity import AmbiguitySet, NominalDistribution, empirical_nominal
from drsynth.dro_dual import (
    InfeasibleInputError,
    OracleSizeError,
    SolverConfig,
    ValueEvaluator,
    candidate_inputs,
    dual_value,
    inner_inf,
    primal_worst_case,
    robust_bellman,
)
from drsynth.model import Box, PolytopeInputs, SystemModel, builtin_system, membership, parse_polynomial
from drsynth.oracles import passthrough_model, random_duality_fixture, solve_fixture, table_evaluator

GRID3 = np.array([-1.0, 0.0, 1.0])
VALS3 = np.array([0.0, 1.0, 1.0])
FIXED3 = SolverConfig(lambda_tolerance=1e-10, disturbance_grid=((-1.0,), (0.0,), (1.0,)))


def _fixture_eval():
    return table_evaluator(GRID3, VALS3)


# ---------------------------------------------------------------- inner infimum


def test_inner_inf_constant_value_sits_at_atom():
    model = passthrough_model()
    l, w = inner_inf(ValueEvaluator.constant(0.4), model, [0.0], [0.0], 2.0, [0.3], SolverConfig())
    assert l == pytest.approx(0.4, abs=1e-15)
    assert w.tolist() == [0.3]


def test_inner_inf_three_point_fixture():
    l, w = inner_inf(_fixture_eval(), passthrough_model(), [0.0], [0.0], 1.0, [0.0], FIXED3)
    # min(0 + 1, 1 + 0, 1 + 1)
    assert l == 1.0


def test_inner_inf_zero_lambda_ignores_atom():
    for atom in (-1.0, 0.0, 1.0):
        l, w = inner_inf(_fixture_eval(), passthrough_model(), [0.0], [0.0], 0.0, [atom], FIXED3)
        assert l == 0.0 and w.tolist() == [-1.0]


def test_inner_inf_rejects_negative_lambda():
    with pytest.raises(ValueError):
        inner_inf(_fixture_eval(), passthrough_model(), [0.0], [0.0], -1.0, [0.0], FIXED3)


def test_inner_inf_refinement_finds_narrow_dip():
    # v(w) dips to 0 only near w = 0.2013, between initial grid points
    def fn(s):
        return np.clip(np.abs(s[:, 0] - 0.2013) * 50.0, 0.0, 1.0)

    v = ValueEvaluator(fn, "dip")
    coarse = SolverConfig(disturbance_grid_initial=9, refinement_rounds=0)
    fine = SolverConfig(disturbance_grid_initial=9, refinement_rounds=3)
    l0, _ = inner_inf(v, passthrough_model(), [0.0], [0.0], 0.0, [0.0], coarse)
    l3, w3 = inner_inf(v, passthrough_model(), [0.0], [0.0], 0.0, [0.0], fine)
    assert l3 < l0
    assert abs(w3[0] - 0.2013) < 0.05


# ---------------------------------------------------------------- dual value


def test_dual_constant_value():
    nom = NominalDistribution([[-0.5], [0.5]], [0.3, 0.7])
    for theta in (0.01, 0.3, 2.0):
        res = dual_value(ValueEvaluator.constant(0.7), passthrough_model(), [0.0], [0.0],
                         AmbiguitySet(nom, theta), SolverConfig())
        assert res.value == pytest.approx(0.7, abs=1e-12)
        assert res.lambda_star == 0.0


def test_dual_zero_radius_is_nominal_expectation():
    nom = NominalDistribution([[-1.0], [1.0]], [0.5, 0.5])
    res = dual_value(_fixture_eval(), passthrough_model(), [0.0], [0.0], AmbiguitySet(nom, 0.0), FIXED3)
    assert res.value == 0.5
    assert res.lambda_unbounded and res.lambda_star == np.inf
    assert res.refinement_levels == 0


def test_dual_half_fixture():
    nom = NominalDistribution([[0.0]], [1.0])
    res = dual_value(_fixture_eval(), passthrough_model(), [0.0], [0.0], AmbiguitySet(nom, 0.5, 1.0), FIXED3)
    assert res.value == pytest.approx(0.5, abs=1e-9)
    assert res.lambda_star == pytest.approx(1.0, abs=1e-8)


def test_dual_result_parts_consistent():
    model = builtin_system("room_temperature")
    nom = empirical_nominal([0.01, -0.05, 0.08], model.disturbance_box)
    amb = AmbiguitySet(nom, 0.05, 1.0)
    v = ValueEvaluator(lambda s: np.clip((s[:, 0] - 23.0) / 2.0, 0.0, 1.0), "ramp")
    res = dual_value(v, model, [23.7], [1.0], amb, SolverConfig())
    recomposed = -res.lambda_star * amb.budget + sum(p * l for p, (_, l) in zip(nom.probs, res.inner_minimizers))
    assert res.value == pytest.approx(recomposed, abs=1e-9)
    for w, _ in res.inner_minimizers:
        assert membership(model.disturbance_box, w)
    assert res.refinement_levels == 3


def test_dual_trace_records_lambda_iterates():
    trace = []
    nom = NominalDistribution([[0.0]], [1.0])
    dual_value(_fixture_eval(), passthrough_model(), [0.0], [0.0], AmbiguitySet(nom, 0.5), FIXED3, trace=trace)
    lam_steps = [t for t in trace if t["kind"] == "lambda"]
    assert lam_steps and all(t["a"] <= t["c"] <= t["d"] <= t["b"] for t in lam_steps)


def _g(v, model, amb, cfg, lam):
    ls = [inner_inf(v, model, [0.0], [0.0], lam, a, cfg, amb.order)[0] for a in amb.nominal.atoms]
    return -lam * amb.budget + float(np.dot(amb.nominal.probs, ls))


@given(st.integers(0, 10_000))
def test_lambda_interval_contains_maximizer(seed):
    fx = random_duality_fixture(np.random.default_rng(seed))
    if fx.radius == 0:
        return
    amb = AmbiguitySet(fx.nominal, fx.radius, fx.order)
    cfg = SolverConfig(lambda_tolerance=1e-10, disturbance_grid=tuple((w,) for w in fx.grid))
    v = table_evaluator(fx.grid, fx.values)
    res = dual_value(v, passthrough_model(), [0.0], [0.0], amb, cfg)
    hi = 1.0 / amb.budget
    assert _g(v, passthrough_model(), amb, cfg, 0.0) >= 0.0
    assert _g(v, passthrough_model(), amb, cfg, hi) <= res.value + 1e-12
    assert -1e-9 <= res.value <= 1.0 + 1e-9


@settings(max_examples=40)
@given(st.integers(0, 10_000))
def test_dual_concave_unimodal_and_search_matches_dense_max(seed):
    fx = random_duality_fixture(np.random.default_rng(seed))
    if fx.radius < 1e-3:
        return
    amb = AmbiguitySet(fx.nominal, fx.radius, fx.order)
    tol = 1e-8
    cfg = SolverConfig(lambda_tolerance=tol, disturbance_grid=tuple((w,) for w in fx.grid))
    v = table_evaluator(fx.grid, fx.values)
    model = passthrough_model()
    lams = np.linspace(0.0, 1.0 / amb.budget, 201)
    g = np.array([_g(v, model, amb, cfg, lam) for lam in lams])
    # unimodal: increments change sign at most once (from + to -)
    inc = np.diff(g)
    signs = np.sign(np.where(np.abs(inc) < 1e-12, 0.0, inc))
    nz = signs[signs != 0]
    assert np.all(np.diff(nz) <= 0)
    res = dual_value(v, model, [0.0], [0.0], amb, cfg)
    assert res.value >= g.max() - tol * (1 + abs(g.max()))


@given(st.integers(0, 10_000))
def test_dual_monotone_in_radius(seed):
    fx = random_duality_fixture(np.random.default_rng(seed))
    cfg = SolverConfig(lambda_tolerance=1e-10, disturbance_grid=tuple((w,) for w in fx.grid))
    v = table_evaluator(fx.grid, fx.values)
    vals = [dual_value(v, passthrough_model(), [0.0], [0.0], AmbiguitySet(fx.nominal, th, fx.order), cfg).value
            for th in (0.0, 0.01, 0.05, 0.1, 1.0)]
    assert all(b <= a + 1e-8 for a, b in zip(vals, vals[1:]))


# ---------------------------------------------------------------- robust Bellman


def test_bellman_singleton_input_equals_dual():
    nom = NominalDistribution([[0.0]], [1.0])
    amb = AmbiguitySet(nom, 0.5)
    a = robust_bellman(_fixture_eval(), passthrough_model(), [0.0], amb, FIXED3)
    b = dual_value(_fixture_eval(), passthrough_model(), [0.0], [0.0], amb, FIXED3)
    assert a.value == b.value and a.lambda_star == b.lambda_star and a.input_index == 0


def test_bellman_ties_go_to_first_input():
    model = builtin_system("room_temperature")
    amb = AmbiguitySet(empirical_nominal([0.0, 0.05], model.disturbance_box), 0.02)
    res = robust_bellman(ValueEvaluator.constant(1.0), model, [24.0], amb, SolverConfig())
    assert res.value == 1.0 and res.input_index == 0 and res.u_star.tolist() == [0.0]


def test_bellman_heats_near_cold_boundary():
    model = builtin_system("room_temperature")
    nom = empirical_nominal([-0.1, -0.03, 0.0, 0.04, 0.11], model.disturbance_box)
    amb = AmbiguitySet(nom, 0.0)
    v = ValueEvaluator(lambda s: np.atleast_1d(membership(model.safe, s)).astype(float), "safe indicator")
    q = [dual_value(v, model, [23.1], [u], amb, SolverConfig()).value for u in (0.0, 1.0)]
    assert q[1] > q[0]
    res = robust_bellman(v, model, [23.1], amb, SolverConfig())
    assert res.u_star.tolist() == [1.0]


def test_polytope_inputs_are_gridded():
    model = builtin_system("safety_1d")
    U = candidate_inputs(model, SolverConfig(input_grid=5))
    assert U.ravel().tolist() == [0.0, 0.5, 1.0, 1.5, 2.0]


def test_infeasible_input_grid():
    # thin rotated band: 1 <= u1 + u2 <= 1.02, |u1 - u2| <= 0.5; no corner of its bounding box is inside
    thin = PolytopeInputs(((1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)), (1.0, -1.02, -0.5, -0.5))
    model = SystemModel(1, thin, Box((0.0,), (0.0,)), (parse_polynomial("x + u1 + u2 + w", ["x", "u1", "u2", "w"]),),
                        1, Box((0.0,), (0.0,)), Box((-5.0,), (5.0,)))
    with pytest.raises(InfeasibleInputError):
        candidate_inputs(model, SolverConfig(input_grid=2))


def test_value_evaluator_range_guard():
    bad = ValueEvaluator(lambda s: np.full(s.shape[0], 1.5), "too big")
    with pytest.raises(ValueError):
        bad(np.zeros((2, 1)))
    assert ValueEvaluator(lambda s: np.full(s.shape[0], 1.5), "free", bounds=None)(np.zeros((1, 1)))[0] == 1.5


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(refinement_shrink=1.0)
    with pytest.raises(ValueError):
        SolverConfig(lambda_tolerance=0.0)
    assert SolverConfig(disturbance_grid=((0.0,),)).refinement_levels == 0


# ---------------------------------------------------------------- primal oracle


def test_primal_zero_radius_is_nominal():
    nom = NominalDistribution([[-1.0], [1.0]], [0.25, 0.75])
    value, mu = primal_worst_case(list(zip(((w,) for w in GRID3), VALS3)), nom, 0.0)
    assert value == pytest.approx(0.75)
    assert mu == nom


def test_primal_half_fixture():
    value, mu = primal_worst_case(list(zip(((w,) for w in GRID3), VALS3)), NominalDistribution([[0.0]], [1.0]), 0.5)
    assert value == pytest.approx(0.5, abs=1e-12)
    assert mu.atoms[:, 0].tolist() == [-1.0, 0.0]
    assert mu.probs.tolist() == pytest.approx([0.5, 0.5], abs=1e-12)


def test_primal_large_radius_is_grid_minimum():
    vals = np.array([0.3, 0.9, 0.6])
    nom = NominalDistribution([[0.0], [1.0]], [0.5, 0.5])
    value, _ = primal_worst_case(list(zip(((w,) for w in GRID3), vals)), nom, 2.0)
    assert value == pytest.approx(0.3)


def test_primal_size_limit():
    grid = [((w,), 0.5) for w in np.linspace(-1, 1, 11)]
    nom = NominalDistribution([[-1.0], [0.0], [1.0], [0.2]], [0.25] * 4)
    with pytest.raises(OracleSizeError):
        primal_worst_case(grid, nom, 0.1)


@given(st.integers(0, 10_000))
def test_strong_duality_property(seed):
    dual, primal = solve_fixture(random_duality_fixture(np.random.default_rng(seed)))
    assert abs(dual - primal) <= 1e-6
