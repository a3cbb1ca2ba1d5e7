"""Robust dynamic programming on a rectilinear state grid.

Reach-avoid values satisfy ``v_T = 1_G`` and
``v_t(x) = 1_G(x) + 1_{S\\G}(x) * max_u inf_mu E[v_{t+1}(f(x, u, w))]``;
safety values use ``1_S`` at the terminal stage and the backup on all of S.
Off-grid values are interpolated (multilinear, or the pessimistic minimum
over the enclosing cell). Neither mode restores exactness across the
discontinuities that indicator-driven value functions can have; they are
numerical approximations whose grid dependence should be checked.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ambiguity import AmbiguitySet, NominalDistribution
from .dro_dual import (
    SolverConfig,
    ValueEvaluator,
    bellman_batch,
    candidate_inputs,
    dual_value,
)
from .model import Box, ModelError, SystemModel, eval_dynamics, membership, probe_grid, region_bounds
from .parallel import chunk_count, parallel_map, split_indices

REACH_AVOID = "reach_avoid"
SAFETY = "safety"
SPEC_KINDS = (REACH_AVOID, SAFETY)
INTERPOLATION_MODES = ("multilinear", "pessimistic")


class ValueRangeError(RuntimeError):
    """A backed-up value left [0, 1] beyond round-off."""


@dataclass(frozen=True)
class StateGrid:
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    points: tuple[int, ...]

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        points = tuple(int(v) for v in np.atleast_1d(self.points))
        if len(points) == 1 and len(lower) > 1:
            points = points * len(lower)
        if not (len(lower) == len(upper) == len(points)):
            raise ValueError("grid bounds and point counts must share one dimension")
        if any(p < 2 for p in points):
            raise ValueError("need at least 2 points per dimension")
        if any(lo >= hi for lo, hi in zip(lower, upper)):
            raise ValueError("grid lower bounds must be below upper bounds")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "points", points)

    @classmethod
    def from_resolution(cls, box: Box, resolution: float | Sequence[float]) -> "StateGrid":
        """Finest grid on ``box`` whose spacing does not exceed ``resolution``."""
        res = np.broadcast_to(np.asarray(resolution, dtype=float), (box.arity,))
        pts = [int(np.ceil(round(w / r, 9))) + 1 for w, r in zip(box.widths, res)]
        return cls(box.lower, box.upper, tuple(pts))

    @property
    def dim(self) -> int:
        return len(self.points)

    @property
    def box(self) -> Box:
        return Box(self.lower, self.upper)

    @property
    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, p) for lo, hi, p in zip(self.lower, self.upper, self.points)]

    @property
    def widths(self) -> np.ndarray:
        return (np.array(self.upper) - np.array(self.lower)) / (np.array(self.points) - 1)

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def nearest_index(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        x = np.nan_to_num(x, nan=0.0, posinf=np.finfo(float).max, neginf=-np.finfo(float).max)
        lo = np.array(self.lower)
        idx = np.rint((x - lo) / self.widths)
        idx = np.clip(idx, 0, np.array(self.points) - 1).astype(int)
        return np.ravel_multi_index(tuple(idx.T), self.points)


@dataclass
class ValueGrid:
    grid: StateGrid
    stages: np.ndarray  # (T + 1, N)
    spec_kind: str
    model: SystemModel
    interpolation: str = "multilinear"
    # (T, N, n_inputs) worst-case values of every candidate input, when synthesized
    action_values: np.ndarray | None = None
    inputs: np.ndarray | None = None
    diagnostics: dict = field(default_factory=lambda: {"clamped_queries": 0})

    @property
    def horizon(self) -> int:
        return self.stages.shape[0] - 1


@dataclass
class PolicyTable:
    grid: StateGrid
    inputs: np.ndarray  # (n_inputs, m) candidate inputs
    indices: np.ndarray  # (T, N) chosen input per stage and node

    @property
    def horizon(self) -> int:
        return self.indices.shape[0]

    def stage_inputs(self, t: int) -> np.ndarray:
        return self.inputs[self.indices[t]]

    def lookup(self, t: int, x) -> np.ndarray:
        """Input at the grid node nearest to each state (shape (K, m))."""
        return self.inputs[self.indices[t][self.grid.nearest_index(x)]]


# --------------------------------------------------------------------------
# Interpolation
# --------------------------------------------------------------------------


def _interpolate(grid: StateGrid, values: np.ndarray, x: np.ndarray, mode: str) -> tuple[np.ndarray, np.ndarray]:
    """Grid interpolation with nearest-face clamping; returns values and a clamp mask."""
    lo, hi = np.array(grid.lower), np.array(grid.upper)
    outside = np.any((x < lo) | (x > hi), axis=1)
    xc = np.clip(x, lo, hi)
    table = values.reshape(grid.points)
    base, frac = [], []
    for d, axis in enumerate(grid.axes):
        i0 = np.searchsorted(axis, xc[:, d], side="right") - 1
        i0 = np.clip(i0, 0, axis.size - 2)
        t = (xc[:, d] - axis[i0]) / (axis[i0 + 1] - axis[i0])
        base.append(i0)
        frac.append(np.clip(t, 0.0, 1.0))
    n = grid.dim
    if mode == "multilinear":
        out = np.zeros(x.shape[0])
    elif mode == "pessimistic":
        out = np.full(x.shape[0], np.inf)
    else:
        raise ValueError(f"unknown interpolation mode {mode!r}")
    for corner in range(1 << n):
        weight = np.ones(x.shape[0])
        idx = []
        for d in range(n):
            bit = (corner >> d) & 1
            weight = weight * (frac[d] if bit else 1.0 - frac[d])
            idx.append(base[d] + bit)
        vals = table[tuple(idx)]
        if mode == "multilinear":
            out = out + weight * vals
        else:
            out = np.where(weight > 0, np.minimum(out, vals), out)
    return out, outside


def _structural_query(
    model: SystemModel, spec_kind: str, grid: StateGrid, values: np.ndarray, x, mode: str
) -> tuple[np.ndarray, int]:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    finite = np.all(np.isfinite(x), axis=1)
    in_s = np.atleast_1d(membership(model.safe, x)) & finite
    out = np.zeros(x.shape[0])
    clamped = 0
    if in_s.any():
        xs = x[in_s]
        vals, outside = _interpolate(grid, values, xs, mode)
        out[in_s] = np.clip(vals, 0.0, 1.0)
        clamped = int(outside.sum())
    if spec_kind == REACH_AVOID and model.target is not None:
        in_g = np.atleast_1d(membership(model.target, x)) & finite
        out[in_g] = 1.0
    return out, clamped


def query_value(vg: ValueGrid, t: int, x):
    """Value of stage ``t`` at arbitrary states; scalar for a single state."""
    if not 0 <= t <= vg.horizon:
        raise IndexError(f"stage {t} outside [0, {vg.horizon}]")
    arr = np.asarray(x, dtype=float)
    out, clamped = _structural_query(vg.model, vg.spec_kind, vg.grid, vg.stages[t], arr, vg.interpolation)
    vg.diagnostics["clamped_queries"] = vg.diagnostics.get("clamped_queries", 0) + clamped
    if arr.ndim <= 1:
        return float(out[0])
    return out


def stage_evaluator(vg: ValueGrid, t: int) -> ValueEvaluator:
    return ValueEvaluator(lambda s: query_value(vg, t, s), f"{vg.spec_kind} stage {t}")


def terminal_values(model: SystemModel, nodes: np.ndarray, spec_kind: str) -> np.ndarray:
    if spec_kind == REACH_AVOID:
        if model.target is None:
            raise ModelError("reach-avoid needs a target region")
        return np.atleast_1d(membership(model.target, nodes)).astype(float)
    if spec_kind == SAFETY:
        return np.atleast_1d(membership(model.safe, nodes)).astype(float)
    raise ValueError(f"unknown specification kind {spec_kind!r}")


def _backup_mask(model: SystemModel, nodes: np.ndarray, spec_kind: str) -> np.ndarray:
    in_s = np.atleast_1d(membership(model.safe, nodes))
    if spec_kind == REACH_AVOID:
        return in_s & ~np.atleast_1d(membership(model.target, nodes))
    return in_s


def _structural_values(model: SystemModel, nodes: np.ndarray, spec_kind: str) -> np.ndarray:
    """Values of nodes that need no backup: 1 in G (reach-avoid), 0 outside S."""
    out = np.zeros(nodes.shape[0])
    if spec_kind == REACH_AVOID:
        out[np.atleast_1d(membership(model.target, nodes))] = 1.0
    return out


def _stage_task(args):
    model, amb, cfg, spec_kind, grid, next_values, mode, X = args
    counter = [0]

    def fn(states):
        vals, clamped = _structural_query(model, spec_kind, grid, next_values, states, mode)
        counter[0] += clamped
        return vals

    bb = bellman_batch(ValueEvaluator(fn, "next stage"), model, X, amb, cfg)
    return bb.q, counter[0]


def value_iteration(
    model: SystemModel,
    amb: AmbiguitySet,
    grid: StateGrid,
    cfg: SolverConfig,
    spec_kind: str,
    interpolation: str = "multilinear",
    workers: int = 1,
) -> tuple[ValueGrid, PolicyTable]:
    """Backward robust value iteration with argmax policy extraction.

    Ties between inputs go to the lowest enumeration index; structural
    nodes (in G, or outside S) store the first input.
    """
    if spec_kind not in SPEC_KINDS:
        raise ValueError(f"unknown specification kind {spec_kind!r}")
    if interpolation not in INTERPOLATION_MODES:
        raise ValueError(f"unknown interpolation mode {interpolation!r}")
    if grid.dim != model.state_dim:
        raise ModelError("state grid dimension does not match the model")
    T = model.horizon
    nodes = grid.nodes()
    inputs = candidate_inputs(model, cfg)
    stages = np.zeros((T + 1, nodes.shape[0]))
    stages[T] = terminal_values(model, nodes, spec_kind)
    active = np.flatnonzero(_backup_mask(model, nodes, spec_kind))
    fixed = _structural_values(model, nodes, spec_kind)
    q_all = np.repeat(fixed[None, :, None], inputs.shape[0], axis=2).repeat(T, axis=0)
    indices = np.zeros((T, nodes.shape[0]), dtype=int)
    vg = ValueGrid(grid, stages, spec_kind, model, interpolation, q_all, inputs)
    chunks = split_indices(active.size, chunk_count(workers, active.size))
    for t in range(T - 1, -1, -1):
        stages[t] = fixed
        if active.size:
            tasks = [
                (model, amb, cfg, spec_kind, grid, stages[t + 1], interpolation, nodes[active[c]])
                for c in chunks
            ]
            results = parallel_map(_stage_task, tasks, workers)
            q = np.concatenate([r[0] for r in results], axis=0)
            vg.diagnostics["clamped_queries"] += sum(r[1] for r in results)
            lo, hi = q.min(), q.max()
            if lo < -1e-9 or hi > 1 + 1e-9:
                raise ValueRangeError(f"stage {t} values left [0, 1]: [{lo}, {hi}]")
            q = np.clip(q, 0.0, 1.0)
            best = np.argmax(q, axis=1)
            q_all[t, active] = q
            indices[t, active] = best
            stages[t, active] = q[np.arange(active.size), best]
    return vg, PolicyTable(grid, inputs, indices)


def feasible_controls(
    model: SystemModel,
    amb: AmbiguitySet,
    vg: ValueGrid,
    t: int,
    x,
    alpha: float,
    cfg: SolverConfig,
) -> list[np.ndarray]:
    """Inputs whose worst-case expected next value is at least ``alpha``.

    States whose value is fixed by structure (in G for reach-avoid, outside
    S) have the same value under every input, so all inputs or none qualify.
    """
    if not 0 <= t < vg.horizon:
        raise IndexError(f"stage {t} outside [0, {vg.horizon - 1}]")
    inputs = candidate_inputs(model, cfg)
    x = np.asarray(x, dtype=float)
    if not _backup_mask(model, x[None, :], vg.spec_kind)[0]:
        fixed = _structural_values(model, x[None, :], vg.spec_kind)[0]
        return list(inputs) if fixed >= alpha else []
    v = stage_evaluator(vg, t + 1)
    out = []
    for u in inputs:
        if dual_value(v, model, x, u, amb, cfg).value >= alpha:
            out.append(u)
    return out


def threshold_policy(vg: ValueGrid, alpha: float, preferred: int = 0) -> PolicyTable:
    """Use the ``preferred`` input wherever it meets ``alpha``, else the best other input.

    "Best" is the largest stored worst-case value among the remaining inputs,
    ties to the lowest index. For U = {0, 1} with 0 preferred this reads:
    do not heat whenever not heating is threshold-feasible, otherwise heat.
    """
    if vg.action_values is None or vg.inputs is None:
        raise ValueError("value grid carries no per-input values; synthesize it first")
    q = vg.action_values
    n_inputs = q.shape[2]
    if not 0 <= preferred < n_inputs:
        raise IndexError("preferred input index out of range")
    if n_inputs == 1:
        return PolicyTable(vg.grid, vg.inputs, np.zeros(q.shape[:2], dtype=int))
    others = np.array([k for k in range(n_inputs) if k != preferred])
    best_other = others[np.argmax(q[:, :, others], axis=2)]
    indices = np.where(q[:, :, preferred] >= alpha, preferred, best_other)
    return PolicyTable(vg.grid, vg.inputs, indices)


def evaluate_fixed_distribution(
    model: SystemModel,
    policy: PolicyTable,
    dist: NominalDistribution,
    grid: StateGrid,
    spec_kind: str,
    interpolation: str = "multilinear",
) -> ValueGrid:
    """Exact expectations over a finite-support disturbance for a fixed policy."""
    if policy.grid != grid:
        raise ModelError("policy and evaluation grids differ")
    if dist.dim != model.disturbance_dim:
        raise ModelError("disturbance dimension mismatch")
    T = model.horizon
    if policy.horizon < T:
        raise ModelError("policy is shorter than the horizon")
    nodes = grid.nodes()
    stages = np.zeros((T + 1, nodes.shape[0]))
    stages[T] = terminal_values(model, nodes, spec_kind)
    active = np.flatnonzero(_backup_mask(model, nodes, spec_kind))
    fixed = _structural_values(model, nodes, spec_kind)
    vg = ValueGrid(grid, stages, spec_kind, model, interpolation)
    X = nodes[active]
    for t in range(T - 1, -1, -1):
        stages[t] = fixed
        U = policy.stage_inputs(t)[active]
        nxt = eval_dynamics(model, X[:, None, :], U[:, None, :], dist.atoms[None, :, :])
        vals, clamped = _structural_query(
            model, spec_kind, grid, stages[t + 1], nxt.reshape(-1, model.state_dim), interpolation
        )
        vg.diagnostics["clamped_queries"] += clamped
        vals = vals.reshape(X.shape[0], dist.size)
        total = np.zeros(X.shape[0])
        for i in range(dist.size):
            total = total + dist.probs[i] * vals[:, i]
        stages[t, active] = np.clip(total, 0.0, 1.0)
    return vg


def initial_probes(model: SystemModel, resolution: float) -> np.ndarray:
    box = region_bounds(model.init)
    if box is None:
        raise ModelError("initial region must be bounded")
    pts = [int(round(w / resolution)) + 1 if w > 0 else 1 for w in box.widths]
    probes = probe_grid(box, pts)
    return probes[np.atleast_1d(membership(model.init, probes))]


def min_over_initial(vg: ValueGrid, model: SystemModel, resolution: float = 0.01) -> tuple[float, np.ndarray]:
    """Smallest stage-0 value over a grid of X0 with the given spacing; ties keep the first probe."""
    probes = initial_probes(model, resolution)
    vals = np.atleast_1d(query_value(vg, 0, probes if probes.ndim == 2 else probes[None]))
    k = int(np.argmin(vals))
    return float(vals[k]), probes[k]
