"""Monte Carlo evaluation and the repeated synthesis study."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np

from .ambiguity import (
    AmbiguitySet,
    TrueDistribution,
    UniformBox,
    child_rng,
    discretize,
    empirical_nominal,
    sample_many,
)
from .certificates import CertificateCandidate
from .dro_dual import SolverConfig
from .model import ModelError, SystemModel, builtin_system, eval_dynamics, membership, region_bounds
from .parallel import chunk_count, parallel_map, split_indices
from .synthesis import (
    REACH_AVOID,
    SAFETY,
    PolicyTable,
    StateGrid,
    evaluate_fixed_distribution,
    initial_probes,
    min_over_initial,
    threshold_policy,
    value_iteration,
)

PolicySource = Union[PolicyTable, CertificateCandidate]
Z95 = 1.959963984540054

DEFAULT_GROUPS = ((1, 0.1), (5, 0.05), (10, 0.025), (20, 0.01), (40, 0.005))
DESK_REPETITIONS, FULL_REPETITIONS = 20, 100
DESK_TRIALS, FULL_TRIALS = 2000, 10000


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, min(p, center - half)), min(1.0, max(p, center + half))


@dataclass(frozen=True)
class SimulationConfig:
    trials: int
    seed: int
    true_distribution: TrueDistribution
    spec_kind: str = SAFETY
    initial: str = "uniform"  # uniform | grid | fixed
    x0: tuple[float, ...] | None = None
    grid_resolution: float = 0.01
    record_trajectories: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.initial not in ("uniform", "grid", "fixed"):
            raise ValueError(f"unknown initial-state mode {self.initial!r}")
        if self.initial == "fixed" and self.x0 is None:
            raise ValueError("fixed initial mode needs x0")
        if self.spec_kind not in (SAFETY, REACH_AVOID):
            raise ValueError(f"unknown specification kind {self.spec_kind!r}")


@dataclass
class SimulationReport:
    successes: int
    trials: int
    wilson_interval_95: tuple[float, float]
    overflowed: int = 0
    trajectories: np.ndarray | None = None  # (trials, T + 1, n) when recorded
    success_flags: np.ndarray | None = None
    log_path: str | None = None

    @property
    def rate(self) -> float:
        return self.successes / self.trials

    @property
    def half_width(self) -> float:
        lo, hi = self.wilson_interval_95
        return 0.5 * (hi - lo)


def _sample_initial(model: SystemModel, sim: SimulationConfig, rng: np.random.Generator, trial: int, probes):
    if sim.initial == "fixed":
        return np.asarray(sim.x0, dtype=float)
    if sim.initial == "grid":
        return probes[trial % probes.shape[0]]
    box = region_bounds(model.init)
    if box is None:
        raise ModelError("uniform initial sampling needs a bounded initial set")
    lo, hi = np.array(box.lower), np.array(box.upper)
    for _ in range(100_000):
        x = lo + (hi - lo) * rng.random(lo.size)
        if membership(model.init, x):
            return x
    raise ModelError("could not sample the initial set by rejection")


def _apply_policy(model: SystemModel, policy: PolicySource, t: int, X: np.ndarray) -> np.ndarray:
    if isinstance(policy, PolicyTable):
        return policy.lookup(t, X)
    safe_x = np.nan_to_num(X)
    return model.input_set.project(policy.control_at(safe_x))


def _draw_trials(model: SystemModel, sim: SimulationConfig, trials: np.ndarray, probes):
    T, l = model.horizon, model.disturbance_dim
    X0 = np.empty((trials.size, model.state_dim))
    W = np.empty((trials.size, T, l))
    for k, trial in enumerate(trials):
        rng = child_rng(sim.seed, int(trial))
        X0[k] = _sample_initial(model, sim, rng, int(trial), probes)
        W[k] = sample_many(sim.true_distribution, rng, T)
    return X0, W


def rollout(model: SystemModel, policy: PolicySource, X0: np.ndarray, W: np.ndarray):
    """Closed-loop trajectories (K, T + 1, n) and a per-trial overflow flag.

    A trajectory whose next state is not finite stays at its last finite
    state from then on.
    """
    K, T = X0.shape[0], W.shape[1]
    traj = np.empty((K, T + 1, model.state_dim))
    traj[:, 0] = X0
    overflow = np.zeros(K, dtype=bool)
    X = X0.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T):
            U = _apply_policy(model, policy, t, X)
            nxt = eval_dynamics(model, X, U, W[:, t])
            bad = ~np.all(np.isfinite(nxt), axis=1)
            overflow |= bad
            X = np.where(bad[:, None], X, nxt)
            traj[:, t + 1] = X
    return traj, overflow


def score_trajectories(model: SystemModel, traj: np.ndarray, spec_kind: str) -> np.ndarray:
    """Success labels scanning each trajectory forward in time."""
    K, steps, n = traj.shape
    in_s = np.atleast_1d(membership(model.safe, traj.reshape(-1, n))).reshape(K, steps)
    if spec_kind == SAFETY:
        return in_s.all(axis=1)
    if model.target is None:
        raise ModelError("reach-avoid needs a target region")
    in_g = np.atleast_1d(membership(model.target, traj.reshape(-1, n))).reshape(K, steps)
    success = np.zeros(K, dtype=bool)
    alive = np.ones(K, dtype=bool)
    for t in range(steps):
        hit = alive & in_g[:, t]
        success |= hit
        alive &= in_s[:, t] & ~in_g[:, t]
    return success


def _mc_task(args):
    model, policy, sim, trials, probes = args
    X0, W = _draw_trials(model, sim, trials, probes)
    traj, overflow = rollout(model, policy, X0, W)
    return score_trajectories(model, traj, sim.spec_kind), overflow, traj if sim.record_trajectories else None


def monte_carlo(model: SystemModel, policy: PolicySource, sim: SimulationConfig) -> SimulationReport:
    """Estimate the satisfaction probability of a closed loop by simulation.

    Trial ``k`` draws its initial state and then its disturbances from a
    stream derived from ``(seed, k)``, so results do not depend on how
    trials are split across workers.
    """
    if isinstance(policy, CertificateCandidate) and len(policy.control) != model.input_dim:
        raise ModelError("certificate control dimension does not match the input set")
    probes = initial_probes(model, sim.grid_resolution) if sim.initial == "grid" else None
    trials = np.arange(sim.trials)
    chunks = split_indices(sim.trials, chunk_count(sim.workers, sim.trials))
    parts = parallel_map(_mc_task, [(model, policy, sim, trials[c], probes) for c in chunks], sim.workers)
    flags = np.concatenate([p[0] for p in parts])
    overflow = np.concatenate([p[1] for p in parts])
    traj = np.concatenate([p[2] for p in parts]) if sim.record_trajectories else None
    successes = int(flags.sum())
    return SimulationReport(
        successes=successes,
        trials=sim.trials,
        wilson_interval_95=wilson_interval(successes, sim.trials),
        overflowed=int(overflow.sum()),
        trajectories=traj,
        success_flags=flags,
    )


# --------------------------------------------------------------------------
# Repeated synthesis study
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StudyConfig:
    groups: tuple[tuple[int, float], ...] = DEFAULT_GROUPS
    repetitions: int = DESK_REPETITIONS
    system: str = "room_temperature"
    state_resolution: float = 0.01
    order: float = 1.0
    alpha: float = 0.9
    evaluation_atoms: int = 201
    x0_resolution: float = 0.01
    policy_rule: str = "threshold"  # threshold | argmax
    preferred_input: int = 0
    interpolation: str = "multilinear"
    solver: SolverConfig = field(default_factory=SolverConfig)
    seed: int = 0
    workers: int = 1
    include_baseline: bool = True
    # 1-based labels of the groups; seeds follow the label so a subset run
    # reproduces the same samples as the full study
    group_labels: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if self.policy_rule not in ("threshold", "argmax"):
            raise ValueError(f"unknown policy rule {self.policy_rule!r}")
        object.__setattr__(self, "groups", tuple((int(n), float(th)) for n, th in self.groups))
        labels = tuple(range(1, len(self.groups) + 1)) if self.group_labels is None else tuple(self.group_labels)
        if len(labels) != len(self.groups):
            raise ValueError("group_labels must match groups")
        object.__setattr__(self, "group_labels", labels)

    def subset(self, labels) -> "StudyConfig":
        pick = [self.group_labels.index(int(k)) for k in labels]
        return replace(self, groups=tuple(self.groups[i] for i in pick),
                       group_labels=tuple(self.group_labels[i] for i in pick))

    def full_scale(self) -> "StudyConfig":
        return replace(self, repetitions=FULL_REPETITIONS)


@dataclass
class StudyReport:
    rows: list[dict]
    aggregates: list[dict]

    ROW_COLUMNS = ("group", "samples", "radius", "repetition", "method", "min_probability",
                   "argmin_x0", "success", "sample_mean", "error")
    AGGREGATE_COLUMNS = ("group", "samples", "radius", "method", "repetitions", "failed_runs",
                         "success_rate", "average_min_probability", "average_min_probability_successes")


def _policy_for(vg, study: StudyConfig, argmax_policy: PolicyTable) -> PolicyTable:
    if study.policy_rule == "argmax":
        return argmax_policy
    return threshold_policy(vg, study.alpha, study.preferred_input)


def _study_task(args):
    study, gi, rep = args
    n_samples, radius = study.groups[gi]
    label = study.group_labels[gi]
    model = builtin_system(study.system)
    truth = UniformBox(model.disturbance_box)
    fine = discretize(truth, study.evaluation_atoms)
    grid = StateGrid.from_resolution(model.working_box, study.state_resolution)
    draws = sample_many(truth, child_rng(study.seed, label - 1, rep), n_samples)
    nominal = empirical_nominal(draws, model.disturbance_box)
    mean = float(nominal.mean()[0]) if nominal.dim == 1 else float(np.linalg.norm(nominal.mean()))
    methods = [("dr", radius)] + ([("baseline", 0.0)] if study.include_baseline else [])
    rows = []
    for method, theta in methods:
        row = {"group": label, "samples": n_samples, "radius": radius, "repetition": rep, "method": method,
               "min_probability": float("nan"), "argmin_x0": "", "success": False, "sample_mean": mean, "error": ""}
        try:
            amb = AmbiguitySet(nominal, theta, study.order)
            vg, argmax_policy = value_iteration(model, amb, grid, study.solver, REACH_AVOID, study.interpolation)
            policy = _policy_for(vg, study, argmax_policy)
            ev = evaluate_fixed_distribution(model, policy, fine, grid, REACH_AVOID, study.interpolation)
            pmin, where = min_over_initial(ev, model, study.x0_resolution)
            row.update(min_probability=pmin, argmin_x0=" ".join(f"{v:.6g}" for v in where),
                       success=bool(pmin >= study.alpha))
        except Exception as exc:  # recorded, the study continues
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows


def aggregate_rows(rows: Sequence[dict]) -> list[dict]:
    out = []
    keys = []
    for r in rows:
        k = (r["group"], r["method"])
        if k not in keys:
            keys.append(k)
    for group, method in keys:
        sel = [r for r in rows if r["group"] == group and r["method"] == method]
        ok = [r for r in sel if not r["error"]]
        succ = [r for r in ok if r["success"]]
        probs = [r["min_probability"] for r in ok]
        out.append({
            "group": group,
            "samples": sel[0]["samples"],
            "radius": sel[0]["radius"] if method == "dr" else 0.0,
            "method": method,
            "repetitions": len(sel),
            "failed_runs": len(sel) - len(ok),
            "success_rate": len(succ) / len(sel),
            "average_min_probability": float(np.mean(probs)) if probs else float("nan"),
            "average_min_probability_successes": float(np.mean([r["min_probability"] for r in succ])) if succ else float("nan"),
        })
    return out


def run_group_study(study: StudyConfig) -> StudyReport:
    """Synthesize and exactly evaluate DR and baseline policies for every group and repetition."""
    tasks = [(study, gi, rep) for gi in range(len(study.groups)) for rep in range(study.repetitions)]
    results = parallel_map(_study_task, tasks, study.workers)
    rows = [row for part in results for row in part]
    return StudyReport(rows, aggregate_rows(rows))
