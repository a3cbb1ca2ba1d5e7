"""Independent reference computations used to cross-check the solvers.

Nothing here shares code paths with the dual solver beyond model
evaluation: worst cases come from ``primal_worst_case`` (basis enumeration
of the transport LP) and values from plain recursion.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .ambiguity import AmbiguitySet, NominalDistribution
from .dro_dual import SolverConfig, ValueEvaluator, dual_value, primal_worst_case
from .model import Box, FiniteInputs, Polynomial, SystemModel, lagrange_table_polynomial, membership
from .synthesis import REACH_AVOID, SAFETY, StateGrid

GAME_STATES = (0.0, 1.0, 2.0, 3.0, 4.0)
GAME_INPUTS = (-1.0, 0.0, 1.0)
GAME_DISTURBANCES = (-1.0, 0.0, 1.0)
GAME_SAFE = Box((0.5,), (4.5,))
# safety instances use a narrower set; with GAME_SAFE some input always compensates
GAME_SAFE_NARROW = Box((1.5,), (3.5,))
GAME_TARGETS = {"small": Box((3.5,), (4.5,)), "large": Box((2.5,), (4.5,))}


def clamped_walk_polynomial() -> Polynomial:
    """Polynomial in (x, u, w) equal to clip(x + u + w, 0, 4) on the integer lattice."""
    table = {
        (x, u, w): float(min(max(x + u + w, 0.0), 4.0))
        for x in GAME_STATES
        for u in GAME_INPUTS
        for w in GAME_DISTURBANCES
    }
    return lagrange_table_polynomial(table, (GAME_STATES, GAME_INPUTS, GAME_DISTURBANCES))


def finite_game_system(horizon: int = 3, target: str | None = "small", safe: Box = GAME_SAFE) -> SystemModel:
    """Five-state clamped random walk with three inputs and three disturbance values."""
    return SystemModel(
        state_dim=1,
        input_set=FiniteInputs(tuple((u,) for u in GAME_INPUTS)),
        disturbance_box=Box((-1.0,), (1.0,)),
        dynamics=(clamped_walk_polynomial(),),
        horizon=horizon,
        init=Box((2.0,), (2.0,)),
        safe=safe,
        target=None if target is None else GAME_TARGETS[target],
        working_box=Box((0.0,), (4.0,)),
        name=f"finite_game_{target}",
    )


def finite_game_grid() -> StateGrid:
    return StateGrid((0.0,), (4.0,), (5,))


def finite_game_solver(lambda_tolerance: float = 1e-10) -> SolverConfig:
    return SolverConfig(lambda_tolerance=lambda_tolerance, disturbance_grid=tuple((w,) for w in GAME_DISTURBANCES))


def _step(x: float, u: float, w: float) -> float:
    return float(min(max(x + u + w, 0.0), 4.0))


def game_tree_value(model: SystemModel, amb: AmbiguitySet, spec_kind: str, t: int, x: float) -> float:
    """Optimal robust value by exhaustive recursion over inputs and disturbance outcomes.

    The adversary at each node is the exact transport LP over the
    disturbance grid. No memoization: every branch is expanded.
    """
    pt = np.array([x])
    in_s = bool(membership(model.safe, pt))
    if spec_kind == REACH_AVOID:
        if bool(membership(model.target, pt)):
            return 1.0
        if t == model.horizon or not in_s:
            return 0.0
    else:
        if not in_s:
            return 0.0
        if t == model.horizon:
            return 1.0
    best = -np.inf
    for u in GAME_INPUTS:
        grid_vals = [((w,), game_tree_value(model, amb, spec_kind, t + 1, _step(x, u, w))) for w in GAME_DISTURBANCES]
        val, _ = primal_worst_case(grid_vals, amb.nominal, amb.radius, amb.order)
        best = max(best, val)
    return float(best)


def game_tree_values(model: SystemModel, amb: AmbiguitySet, spec_kind: str) -> np.ndarray:
    """Stage-0 values at every lattice state."""
    return np.array([game_tree_value(model, amb, spec_kind, 0, x) for x in GAME_STATES])


# --------------------------------------------------------------------------
# Duality fixtures
# --------------------------------------------------------------------------


def passthrough_model(lower: float = -1.0, upper: float = 1.0) -> SystemModel:
    """One-dimensional model with f(x, u, w) = w, so v(f) is a function of w alone."""
    return SystemModel(
        state_dim=1,
        input_set=FiniteInputs(((0.0,),)),
        disturbance_box=Box((lower,), (upper,)),
        dynamics=(Polynomial.variable(2, 3),),
        horizon=1,
        init=Box((0.0,), (0.0,)),
        safe=Box((lower,), (upper,)),
        working_box=Box((lower,), (upper,)),
        name="passthrough",
    )


def table_evaluator(points: np.ndarray, values: np.ndarray) -> ValueEvaluator:
    """Evaluator returning ``values[j]`` at the grid point nearest to the queried state."""
    pts = np.asarray(points, dtype=float).ravel()
    vals = np.asarray(values, dtype=float)

    def fn(states):
        idx = np.argmin(np.abs(states[:, 0][:, None] - pts[None, :]), axis=1)
        return vals[idx]

    return ValueEvaluator(fn, "grid table")


@dataclass
class DualityFixture:
    grid: np.ndarray  # (K,)
    values: np.ndarray  # (K,)
    nominal: NominalDistribution
    radius: float
    order: float


def random_duality_fixture(rng: np.random.Generator, max_grid: int = 5, max_atoms: int = 3) -> DualityFixture:
    k = int(rng.integers(1, max_grid + 1))
    grid = np.sort(rng.choice(np.linspace(-1.0, 1.0, 21), size=k, replace=False))
    values = rng.random(k)
    m = int(rng.integers(1, min(max_atoms, k) + 1))
    atoms = rng.choice(grid, size=m, replace=False)
    probs = rng.dirichlet(np.ones(m))
    probs = probs / probs.sum()
    # repair rounding so the weights sum to one within 1e-12
    probs[-1] = 1.0 - probs[:-1].sum()
    if np.any(probs <= 0):
        probs = np.full(m, 1.0 / m)
    radius = float(rng.random())
    order = float(rng.choice([1.0, 2.0]))
    return DualityFixture(grid, values, NominalDistribution(atoms[:, None], probs), radius, order)


def solve_fixture(fx: DualityFixture, lambda_tolerance: float = 1e-10) -> tuple[float, float]:
    """(dual value, primal value) for one fixture on its own grid."""
    model = passthrough_model()
    cfg = SolverConfig(lambda_tolerance=lambda_tolerance, disturbance_grid=tuple((w,) for w in fx.grid))
    amb = AmbiguitySet(fx.nominal, fx.radius, fx.order)
    v = table_evaluator(fx.grid, fx.values)
    dual = dual_value(v, model, [0.0], [0.0], amb, cfg).value
    primal, _ = primal_worst_case(list(zip(((w,) for w in fx.grid), fx.values)), fx.nominal, fx.radius, fx.order)
    return dual, primal


def duality_suite(count: int = 100, seed: int = 0, lambda_tolerance: float = 1e-10) -> list[dict]:
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        fx = random_duality_fixture(rng)
        dual, primal = solve_fixture(fx, lambda_tolerance)
        out.append({"fixture": k, "grid_points": fx.grid.size, "atoms": fx.nominal.size, "radius": fx.radius,
                    "order": fx.order, "dual": dual, "primal": primal, "gap": abs(dual - primal)})
    return out


def game_cases(random_cases: int = 6, seed: int = 0) -> list[tuple]:
    """(atoms, probs, radius, order, horizon) instances: hand-picked plus seeded random ones."""
    cases = [
        (((0.0,),), (1.0,), 0.0, 1.0, 3),
        (((0.0,), (1.0,)), (0.6, 0.4), 0.3, 1.0, 3),
        (((-1.0,), (1.0,)), (0.5, 0.5), 0.5, 2.0, 2),
        (((1.0,),), (1.0,), 0.8, 1.0, 3),
    ]
    rng = np.random.default_rng(seed)
    for _ in range(random_cases):
        m = int(rng.integers(1, 3))
        atoms = tuple((float(a),) for a in rng.choice(GAME_DISTURBANCES, size=m, replace=False))
        if m == 1:
            probs = (1.0,)
        else:
            p = round(float(rng.uniform(0.1, 0.9)), 3)
            probs = (p, 1.0 - p)
        radius = round(float(rng.uniform(0.0, 1.0)), 3)
        cases.append((atoms, probs, radius, float(rng.choice([1.0, 2.0])), int(rng.integers(1, 4))))
    return cases


def game_suite(lambda_tolerance: float = 1e-10, random_cases: int = 6, seed: int = 0) -> list[dict]:
    """Brute-force versus value iteration on the finite game."""
    from .synthesis import value_iteration

    out = []
    runs = [(REACH_AVOID, "small"), (REACH_AVOID, "large"), (SAFETY, None)]
    for (atoms, probs, radius, order, horizon), (spec, target) in itertools.product(game_cases(random_cases, seed), runs):
        safe = GAME_SAFE if spec == REACH_AVOID else GAME_SAFE_NARROW
        model = finite_game_system(horizon, target, safe)
        amb = AmbiguitySet(NominalDistribution(atoms, probs), radius, order)
        brute = game_tree_values(model, amb, spec)
        vg, _ = value_iteration(model, amb, finite_game_grid(), finite_game_solver(lambda_tolerance), spec)
        out.append({"spec": spec, "target": target, "radius": radius, "order": order, "horizon": horizon,
                    "atoms": atoms, "probs": probs, "brute": brute, "dp": vg.stages[0].copy(),
                    "gap": float(np.max(np.abs(brute - vg.stages[0])))})
    return out


# --------------------------------------------------------------------------
# Event re-scoring
# --------------------------------------------------------------------------


def rescore_sum_multiplicative(model: SystemModel, traj: np.ndarray, spec_kind: str) -> np.ndarray:
    """Success labels from the sum-of-products form of the events.

    Safety: prod_t 1_S(x_t). Reach-avoid:
    1_G(x_0) + sum_{t>=1} (prod_{s<t} 1_{S\\G}(x_s)) * 1_G(x_t).
    """
    K, steps, n = traj.shape
    labels = np.zeros(K, dtype=bool)
    for k in range(K):
        xs = traj[k]
        s = [bool(membership(model.safe, x)) for x in xs]
        if spec_kind == SAFETY:
            total = 1
            for flag in s:
                total *= int(flag)
        else:
            g = [bool(membership(model.target, x)) for x in xs]
            total = int(g[0])
            for t in range(1, steps):
                prod = 1
                for r in range(t):
                    prod *= int(s[r] and not g[r])
                total += prod * int(g[t])
        labels[k] = total >= 1
    return labels
