"""Worst-case expectation over a Wasserstein ball via its scalar dual.

For a fixed state and input the inner problem

    inf_{mu in D} E_mu[ v(f(x, u, w)) ]

equals ``max_{lam >= 0} -lam * theta**p + sum_i p_i * inf_w [v(f(x,u,w)) + lam * d(w, w_i)**p]``.
The infimum over ``w`` is taken on an adaptively refined grid of the
disturbance box and the concave outer problem in ``lam`` is maximized by
golden-section search. Everything is vectorized over a batch of states so
the dynamic program can solve a whole grid stage at once.

``primal_worst_case`` solves the primal transport LP on a finite grid by
enumerating basic feasible solutions and serves as an independent check.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ambiguity import AmbiguitySet, NominalDistribution, cost
from .model import Box, ModelError, SystemModel, eval_dynamics, probe_grid

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class InfeasibleInputError(ModelError):
    """No input grid point satisfies the input constraints."""


class OracleSizeError(ValueError):
    """Instance too large for exhaustive basis enumeration."""


@dataclass(frozen=True)
class SolverConfig:
    lambda_tolerance: float = 1e-7
    disturbance_grid_initial: int = 65
    refinement_rounds: int = 3
    refinement_shrink: float = 0.25
    input_grid: int = 11
    # points per dimension in each refinement window; None reuses the initial count
    refinement_points: int | None = 9
    # explicit finite disturbance grid (shape (J, l)); disables refinement
    disturbance_grid: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if self.lambda_tolerance <= 0:
            raise ValueError("lambda_tolerance must be positive")
        if self.disturbance_grid_initial < 1 or self.input_grid < 1:
            raise ValueError("grid sizes must be positive")
        if self.refinement_rounds < 0:
            raise ValueError("refinement_rounds must be non-negative")
        if not 0.0 < self.refinement_shrink < 1.0:
            raise ValueError("refinement_shrink must lie in (0, 1)")
        if self.disturbance_grid is not None:
            grid = tuple(tuple(float(c) for c in np.atleast_1d(p)) for p in self.disturbance_grid)
            object.__setattr__(self, "disturbance_grid", grid)

    @property
    def refinement_levels(self) -> int:
        return 0 if self.disturbance_grid is not None else self.refinement_rounds


class ValueEvaluator:
    """Batch value function ``states (N, n) -> values (N,)`` with a range guard."""

    def __init__(
        self,
        fn: Callable[[np.ndarray], np.ndarray],
        description: str = "",
        bounds: tuple[float, float] | None = (0.0, 1.0),
    ):
        self.fn = fn
        self.description = description
        self.bounds = bounds

    def __call__(self, states: np.ndarray) -> np.ndarray:
        vals = np.asarray(self.fn(np.asarray(states, dtype=float)), dtype=float)
        if __debug__ and self.bounds is not None and vals.size:
            lo, hi = self.bounds
            if vals.min() < lo - 1e-9 or vals.max() > hi + 1e-9:
                raise ValueError(
                    f"value evaluator {self.description!r} left [{lo}, {hi}]: "
                    f"range [{vals.min()}, {vals.max()}]"
                )
        return vals

    @classmethod
    def constant(cls, c: float) -> "ValueEvaluator":
        return cls(lambda s: np.full(s.shape[0], float(c)), f"constant {c}")


@dataclass
class DualSolveResult:
    value: float
    lambda_star: float
    u_star: np.ndarray
    inner_minimizers: list[tuple[np.ndarray, float]]
    refinement_levels: int
    lambda_unbounded: bool = False
    input_index: int = 0


@dataclass
class DualBatch:
    """Dual solutions for K states: values (K,), lam (K,), l (K, M), w_star (K, M, l)."""

    values: np.ndarray
    lam: np.ndarray
    l: np.ndarray
    w_star: np.ndarray
    unbounded: bool = False


def disturbance_grid(box: Box, cfg: SolverConfig) -> np.ndarray:
    if cfg.disturbance_grid is not None:
        return np.array(cfg.disturbance_grid, dtype=float)
    return probe_grid(box, cfg.disturbance_grid_initial)


def _eval_next(v, model: SystemModel, X: np.ndarray, U: np.ndarray, W: np.ndarray) -> np.ndarray:
    """``v(f(X[k], U[k], W[k, ...]))`` where W has shape (K, ..., l)."""
    K = X.shape[0]
    extra = W.ndim - 2
    Xb = X.reshape((K,) + (1,) * extra + (X.shape[1],))
    Ub = U.reshape((K,) + (1,) * extra + (U.shape[1],))
    nxt = eval_dynamics(model, Xb, Ub, W)
    vals = v(nxt.reshape(-1, model.state_dim))
    return vals.reshape(W.shape[:-1])


class _InnerSolver:
    """Vectorized ``inf_w v(f(x_k, u_k, w)) + lam_k * d(w, atom_i)**p`` for all k, i."""

    def __init__(self, v, model, X, U, atoms, order, cfg: SolverConfig, trace=None):
        self.v, self.model, self.cfg, self.order = v, model, cfg, order
        self.X, self.U = X, U
        self.atoms = np.asarray(atoms, dtype=float)
        self.box = model.disturbance_box
        self.grid = disturbance_grid(self.box, cfg)
        K = X.shape[0]
        W0 = np.broadcast_to(self.grid, (K,) + self.grid.shape)
        self.V0 = _eval_next(v, model, X, U, W0)  # (K, J)
        self.D0 = np.stack([cost(self.grid, a, order) for a in self.atoms])  # (M, J)
        self.trace = trace
        self.adaptive = cfg.refinement_levels > 0
        if self.adaptive:
            # the atom itself is always a candidate; it wins ties
            Wa = np.broadcast_to(self.atoms, (K,) + self.atoms.shape)
            self.Va = _eval_next(v, model, X, U, Wa)  # (K, M)
        rp = cfg.refinement_points or cfg.disturbance_grid_initial
        self.unit = probe_grid(Box((0.0,) * self.box.arity, (1.0,) * self.box.arity), rp)

    def solve(self, lam: np.ndarray, idx: np.ndarray | None = None):
        if idx is None:
            idx = np.arange(self.X.shape[0])
        lam = np.asarray(lam, dtype=float)
        V0 = self.V0[idx]
        obj = V0[:, None, :] + lam[:, None, None] * self.D0[None, :, :]
        j = np.argmin(obj, axis=2)
        best = np.take_along_axis(obj, j[..., None], axis=2)[..., 0]
        bw = self.grid[j]  # (k, M, l)
        if not self.adaptive:
            return best, bw
        va = self.Va[idx]
        at_atom = va <= best
        best = np.where(at_atom, va, best)
        bw = np.where(at_atom[..., None], self.atoms[None], bw)
        lo_box = np.array(self.box.lower)
        hi_box = np.array(self.box.upper)
        side = hi_box - lo_box
        X, U = self.X[idx], self.U[idx]
        for r in range(1, self.cfg.refinement_rounds + 1):
            side = side * self.cfg.refinement_shrink
            start = np.minimum(np.maximum(bw - 0.5 * side, lo_box), hi_box - side)
            pts = start[:, :, None, :] + self.unit[None, None] * side  # (k, M, R, l)
            vals = _eval_next(self.v, self.model, X, U, pts)
            obj = vals + lam[:, None, None] * cost(pts, self.atoms[None, :, None, :], self.order)
            j = np.argmin(obj, axis=2)
            cand = np.take_along_axis(obj, j[..., None], axis=2)[..., 0]
            better = cand < best
            best = np.where(better, cand, best)
            bw = np.where(better[..., None], np.take_along_axis(pts, j[..., None, None], axis=2)[:, :, 0], bw)
            if self.trace is not None:
                for k in range(start.shape[0]):
                    for i in range(start.shape[1]):
                        self.trace.append(
                            {"kind": "refine", "round": r, "atom": i, "lam": float(lam[k]),
                             "lower": start[k, i].tolist(), "upper": (start[k, i] + side).tolist(),
                             "best": float(best[k, i])}
                        )
        return best, bw


def _objective(inner: _InnerSolver, probs, budget, lam, idx):
    l, w = inner.solve(lam, idx)
    total = np.zeros(l.shape[0])
    for i in range(l.shape[1]):
        total = total + probs[i] * l[:, i]
    return -lam * budget + total, l, w


def dual_values(
    v,
    model: SystemModel,
    X: np.ndarray,
    U: np.ndarray,
    amb: AmbiguitySet,
    cfg: SolverConfig,
    value_span: np.ndarray | float | None = None,
    trace: list | None = None,
) -> DualBatch:
    """Worst-case expectation of ``v(f(x_k, u_k, .))`` for every row k.

    ``value_span`` bounds max(v) - min(v) on the reachable set and sets the
    search interval ``[0, span / theta**p]``; it defaults to 1 for values in
    [0, 1].
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if U.shape[0] == 1 and X.shape[0] > 1:
        U = np.broadcast_to(U, (X.shape[0], U.shape[1]))
    K = X.shape[0]
    nominal = amb.nominal
    probs = nominal.probs
    if amb.radius == 0:
        W = np.broadcast_to(nominal.atoms, (K,) + nominal.atoms.shape)
        vals = _eval_next(v, model, X, U, W)  # (K, M)
        total = np.zeros(K)
        for i in range(nominal.size):
            total = total + probs[i] * vals[:, i]
        return DualBatch(total, np.full(K, np.inf), vals, np.array(W), unbounded=True)

    budget = amb.budget
    inner = _InnerSolver(v, model, X, U, nominal.atoms, amb.order, cfg, trace)
    span = np.ones(K) if value_span is None else np.broadcast_to(np.asarray(value_span, float), (K,)).copy()
    span = np.maximum(span, 0.0)
    hi = span / budget
    tol = cfg.lambda_tolerance

    everyone = np.arange(K)
    g0, _, _ = _objective(inner, probs, budget, np.zeros(K), everyone)
    ghi, _, _ = _objective(inner, probs, budget, hi, everyone)

    a = np.zeros(K)
    b = hi.copy()
    with np.errstate(divide="ignore"):
        n_iter = np.where(
            b > tol, np.ceil(np.log(tol / np.where(b > 0, b, 1.0)) / np.log(INV_PHI)), 0
        ).astype(int)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    gc, _, _ = _objective(inner, probs, budget, c, everyone)
    gd, _, _ = _objective(inner, probs, budget, d, everyone)
    for it in range(int(n_iter.max(initial=0))):
        act = np.flatnonzero(n_iter > it)
        keep_left = gc[act] >= gd[act]
        L, R = act[keep_left], act[~keep_left]
        # maximum lies in [a, d]
        b[L] = d[L]
        d[L] = c[L]
        gd[L] = gc[L]
        c[L] = b[L] - INV_PHI * (b[L] - a[L])
        # maximum lies in [c, b]
        a[R] = c[R]
        c[R] = d[R]
        gc[R] = gd[R]
        d[R] = a[R] + INV_PHI * (b[R] - a[R])
        probe = np.concatenate([c[L], d[R]])
        order_idx = np.concatenate([L, R])
        if order_idx.size:
            gp, _, _ = _objective(inner, probs, budget, probe, order_idx)
            gc[L] = gp[: L.size]
            gd[R] = gp[L.size:]
        if trace is not None and K == 1:
            trace.append({"kind": "lambda", "iteration": it, "a": float(a[0]), "b": float(b[0]),
                          "c": float(c[0]), "d": float(d[0]), "g_c": float(gc[0]), "g_d": float(gd[0])})

    # candidates in order of preference on ties: smallest lambda first
    cand_lam = np.stack([np.zeros(K), c, d, hi], axis=1)
    cand_val = np.stack([g0, gc, gd, ghi], axis=1)
    pick = np.argmax(cand_val, axis=1)
    lam_star = cand_lam[everyone, pick]
    values, l, w = _objective(inner, probs, budget, lam_star, everyone)
    return DualBatch(values, lam_star, l, w)


def inner_inf(
    v,
    model: SystemModel,
    x,
    u,
    lam: float,
    atom,
    cfg: SolverConfig,
    order: float = 1.0,
) -> tuple[float, np.ndarray]:
    """``min_w v(f(x, u, w)) + lam * d(w, atom)**order`` on the refined grid."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    X = np.atleast_2d(np.asarray(x, dtype=float))
    U = np.atleast_2d(np.asarray(u, dtype=float))
    atom = np.atleast_1d(np.asarray(atom, dtype=float))
    inner = _InnerSolver(v, model, X, U, atom[None, :], order, cfg)
    best, bw = inner.solve(np.array([float(lam)]))
    return float(best[0, 0]), bw[0, 0]


def _result_from_batch(batch: DualBatch, k: int, u, index: int, cfg: SolverConfig) -> DualSolveResult:
    minimizers = [(batch.w_star[k, i].copy(), float(batch.l[k, i])) for i in range(batch.l.shape[1])]
    return DualSolveResult(
        value=float(batch.values[k]),
        lambda_star=float(batch.lam[k]),
        u_star=np.atleast_1d(np.asarray(u, dtype=float)).copy(),
        inner_minimizers=minimizers,
        refinement_levels=0 if batch.unbounded else cfg.refinement_levels,
        lambda_unbounded=batch.unbounded,
        input_index=index,
    )


def dual_value(
    v,
    model: SystemModel,
    x,
    u,
    amb: AmbiguitySet,
    cfg: SolverConfig,
    value_span: float | None = None,
    trace: list | None = None,
) -> DualSolveResult:
    """Worst-case expected next value for one state and a fixed input."""
    batch = dual_values(v, model, np.atleast_2d(x), np.atleast_2d(u), amb, cfg, value_span, trace)
    return _result_from_batch(batch, 0, u, 0, cfg)


def candidate_inputs(model: SystemModel, cfg: SolverConfig) -> np.ndarray:
    try:
        return model.input_set.enumerate(cfg.input_grid)
    except ModelError as exc:
        raise InfeasibleInputError(str(exc)) from exc


@dataclass
class BellmanBatch:
    """Per-state robust backup: best value, chosen input index, and the value of every input."""

    values: np.ndarray
    best: np.ndarray
    q: np.ndarray
    inputs: np.ndarray
    batches: list[DualBatch] = field(default_factory=list)


def bellman_batch(v, model: SystemModel, X: np.ndarray, amb: AmbiguitySet, cfg: SolverConfig) -> BellmanBatch:
    """``max_u`` of the worst-case expectation for each row of X; ties go to the first input."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    inputs = candidate_inputs(model, cfg)
    batches = [dual_values(v, model, X, u[None, :], amb, cfg) for u in inputs]
    q = np.stack([b.values for b in batches], axis=1)
    best = np.argmax(q, axis=1)
    return BellmanBatch(q[np.arange(X.shape[0]), best], best, q, inputs, batches)


def robust_bellman(v, model: SystemModel, x, amb: AmbiguitySet, cfg: SolverConfig) -> DualSolveResult:
    """``sup_u inf_mu`` expected next value at one state."""
    bb = bellman_batch(v, model, np.atleast_2d(x), amb, cfg)
    k = int(bb.best[0])
    return _result_from_batch(bb.batches[k], 0, bb.inputs[k], k, cfg)


# --------------------------------------------------------------------------
# Primal oracle
# --------------------------------------------------------------------------


def primal_worst_case(
    values_on_grid,
    nominal: NominalDistribution,
    theta: float,
    p: float = 1.0,
    max_variables: int = 40,
) -> tuple[float, NominalDistribution]:
    """Exact worst-case expectation over distributions supported on a finite grid.

    Solves ``min sum_ij k_ij v_j`` subject to ``sum_j k_ij = p_i``,
    ``sum_ij k_ij d(w_j, w_i)**p <= theta**p`` and ``k >= 0`` by enumerating
    every basis of the standard-form LP (one slack on the budget row).
    """
    pts = np.array([np.atleast_1d(np.asarray(w, dtype=float)) for w, _ in values_on_grid])
    vals = np.array([float(val) for _, val in values_on_grid])
    if pts.size == 0:
        raise ValueError("empty value grid")
    M, J = nominal.size, pts.shape[0]
    if M * J > max_variables:
        raise OracleSizeError(f"{M}x{J} transport variables exceed the limit of {max_variables}")
    C = np.stack([cost(pts, a, p) for a in nominal.atoms])  # (M, J)
    budget = float(theta) ** float(p)

    n_var = M * J + 1
    A = np.zeros((M + 1, n_var))
    for i in range(M):
        A[i, i * J:(i + 1) * J] = 1.0
    A[M, : M * J] = C.ravel()
    A[M, -1] = 1.0
    rhs = np.concatenate([nominal.probs, [budget]])
    obj = np.concatenate([np.tile(vals, M), [0.0]])

    combos = np.array(list(itertools.combinations(range(n_var), M + 1)))
    B = A[:, combos].transpose(1, 0, 2)  # (n_combo, M+1, M+1)
    det = np.linalg.det(B)
    ok = np.abs(det) > 1e-12
    best_val, best_x = np.inf, None
    if ok.any():
        sol = np.linalg.solve(B[ok], np.broadcast_to(rhs, (int(ok.sum()), M + 1))[..., None])[..., 0]
        feasible = np.all(sol >= -1e-12, axis=1)
        resid = np.abs(np.einsum("kij,kj->ki", B[ok], sol) - rhs).max(axis=1)
        feasible &= resid <= 1e-9
        for basis, xs in zip(combos[ok][feasible], sol[feasible]):
            val = float(obj[basis] @ np.maximum(xs, 0.0))
            if val < best_val - 1e-15:
                best_val = val
                best_x = np.zeros(n_var)
                best_x[basis] = np.maximum(xs, 0.0)
    if best_x is None:
        raise ValueError("transport LP is infeasible on this grid (atoms unreachable within budget)")
    kappa = best_x[: M * J].reshape(M, J)
    mu = kappa.sum(axis=0)
    keep = mu > 1e-15
    worst = NominalDistribution(pts[keep], mu[keep] / mu[keep].sum())
    return best_val, worst
