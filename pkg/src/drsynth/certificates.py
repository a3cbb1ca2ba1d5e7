"""Grid verification of distributionally robust control barrier certificates.

A candidate is a polynomial ``v_bar`` with a state-feedback control ``u(x)``
and constants ``eta > 0``, ``beta <= 0``, ``delta``. The checks are

    C1a  v_bar(x) <= 0                                    on probes outside S
    C1b  v_bar(x) <= 1                                    on probes in S
    C2   inf_mu E[v_bar(f(x, u(x), w))] - v_bar(x)/eta >= beta   on probes in S
    C3   u(x) in U                                        on all probes
    C4   v_bar(x) >= delta                                on probes in X0

Grid checks are evidence, not proof: nothing is said between probes or
outside the verification box. Interval arithmetic or an SMT solver would be
the rigorous route.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .ambiguity import AmbiguitySet, NominalDistribution, TruncatedGaussian, child_rng, cost, empirical_nominal, sample_many
from .dro_dual import SolverConfig, ValueEvaluator, dual_values
from .model import (
    Box,
    FiniteInputs,
    ModelError,
    Polynomial,
    PolytopeInputs,
    SystemModel,
    builtin_system,
    eval_dynamics,
    eval_polynomial,
    membership,
    parse_polynomial,
    probe_grid,
    region_bounds,
)
from .parallel import chunk_count, parallel_map, split_indices

DEFAULT_MARGIN_TOLERANCE = 1e-4
C2_CHUNK = 512


class CertificateArgumentError(ValueError):
    """Missing or inconsistent certificate data."""


@dataclass(frozen=True)
class CertificateCandidate:
    v_bar: Polynomial
    control: tuple[Polynomial, ...]
    eta: float = 1.0
    beta: float = 0.0
    delta: float = 0.0
    name: str = "candidate"

    def __post_init__(self):
        object.__setattr__(self, "control", tuple(self.control))
        if self.eta <= 0:
            raise CertificateArgumentError("eta must be positive")
        if self.beta > 0:
            raise CertificateArgumentError("beta must be non-positive")
        for p in self.control:
            if p.arity != self.v_bar.arity:
                raise CertificateArgumentError("control polynomials must share the state arity of v_bar")

    def value(self, x) -> np.ndarray:
        return np.asarray(eval_polynomial(self.v_bar, np.atleast_2d(np.asarray(x, dtype=float))))

    def control_at(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.stack([np.asarray(eval_polynomial(p, x)) for p in self.control], axis=-1)


@dataclass
class ConditionResult:
    condition: str
    passed: bool
    worst_margin: float
    worst_point: tuple[float, ...] | None
    probes: int


@dataclass
class VerificationReport:
    conditions: list[ConditionResult]
    grids: dict = field(default_factory=dict)
    margin_tolerance: float = DEFAULT_MARGIN_TOLERANCE

    @property
    def overall(self) -> bool:
        return all(c.passed for c in self.conditions)

    def condition(self, cid: str) -> ConditionResult:
        for c in self.conditions:
            if c.condition == cid:
                return c
        raise KeyError(cid)

    def rows(self) -> list[dict]:
        return [
            {
                "condition": c.condition,
                "passed": c.passed,
                "worst_margin": c.worst_margin,
                "worst_point": " ".join(repr(v) for v in c.worst_point) if c.worst_point else "",
                "probes": c.probes,
            }
            for c in self.conditions
        ]

    def summary(self) -> str:
        lines = [f"overall: {'PASS' if self.overall else 'FAIL'} (margin tolerance {self.margin_tolerance:g})"]
        for c in self.conditions:
            where = "" if c.worst_point is None else " at (" + ", ".join(f"{v:.6g}" for v in c.worst_point) + ")"
            lines.append(
                f"  {c.condition:<6} {'pass' if c.passed else 'FAIL'}  worst margin {c.worst_margin:+.6g}{where}"
                f"  [{c.probes} probes]"
            )
        for k, v in self.grids.items():
            lines.append(f"  grid {k}: {v}")
        return "\n".join(lines)


def _record(cid: str, margins: np.ndarray, points: np.ndarray, tol: float) -> ConditionResult:
    if margins.size == 0:
        return ConditionResult(cid, True, float("inf"), None, 0)
    margins = np.where(np.isnan(margins), -np.inf, margins)
    k = int(np.argmin(margins))
    worst = float(margins[k])
    return ConditionResult(cid, worst >= -tol, worst, tuple(float(v) for v in points[k]), int(margins.size))


def _input_margin(model: SystemModel, u: np.ndarray) -> np.ndarray:
    """Signed membership margin of inputs (>= 0 inside U)."""
    iset = model.input_set
    if isinstance(iset, PolytopeInputs):
        A, b = np.asarray(iset.A), np.asarray(iset.b)
        return np.min(u @ A.T - b, axis=1)
    if isinstance(iset, FiniteInputs):
        pts = np.asarray(iset.points, dtype=float)
        dist = np.min(np.linalg.norm(u[:, None, :] - pts[None], axis=2), axis=1)
        return -dist
    raise TypeError(f"unknown input set {iset!r}")


def _default_points(n: int, state_points, disturbance_points) -> tuple[int, int]:
    if state_points is None:
        state_points = 401 if n == 1 else 17
    if disturbance_points is None:
        disturbance_points = 101 if n == 1 else 17
    return int(state_points), int(disturbance_points)


def _check_box(model: SystemModel, verify_box: Box) -> Box:
    if verify_box.arity != model.state_dim:
        raise ModelError("verification box dimension does not match the state")
    x0_box = region_bounds(model.init)
    if x0_box is None or not verify_box.contains_box(x0_box):
        raise ModelError("verification box must contain the initial set")
    return x0_box


def _c2_task(args):
    cand, model, amb, cfg, X = args
    v = ValueEvaluator(lambda s: cand.value(s), "v_bar", bounds=None)
    U = cand.control_at(X)
    # the search interval for lambda scales with the spread of v_bar over reachable states
    grid_w = probe_grid(model.disturbance_box, cfg.disturbance_grid_initial)
    W = np.concatenate([grid_w, amb.nominal.atoms], axis=0)
    nxt = eval_dynamics(model, X[:, None, :], U[:, None, :], W[None])
    reach = cand.value(nxt.reshape(-1, model.state_dim)).reshape(X.shape[0], -1)
    span = reach.max(axis=1) - reach.min(axis=1)
    batch = dual_values(v, model, X, U, amb, cfg, value_span=span)
    return batch.values - cand.value(X) / cand.eta - cand.beta


def check_drcbc(
    cand: CertificateCandidate,
    model: SystemModel,
    amb: AmbiguitySet,
    verify_box: Box,
    state_points: int | None = None,
    disturbance_points: int | None = None,
    cfg: SolverConfig | None = None,
    margin_tolerance: float = DEFAULT_MARGIN_TOLERANCE,
    workers: int = 1,
) -> VerificationReport:
    """Check C1a, C1b, C2, C3, C4 on probe grids over ``verify_box``.

    C2 fixes the control to ``u(x)`` and uses ``v_bar`` itself (not clipped)
    as the integrand of the worst-case expectation.
    """
    x0_box = _check_box(model, verify_box)
    n = model.state_dim
    sp, dp = _default_points(n, state_points, disturbance_points)
    if cfg is None:
        cfg = SolverConfig(disturbance_grid_initial=dp)
    else:
        cfg = SolverConfig(**{**cfg.__dict__, "disturbance_grid_initial": dp})
    X = probe_grid(verify_box, sp)
    in_s = np.atleast_1d(membership(model.safe, X))
    vb = cand.value(X)
    results = [
        _record("C1a", -vb[~in_s], X[~in_s], margin_tolerance),
        _record("C1b", 1.0 - vb[in_s], X[in_s], margin_tolerance),
    ]
    XS = X[in_s]
    # bounded chunks keep the per-node inner-solve arrays small in 4-D
    parts_n = max(chunk_count(workers, XS.shape[0]), -(-XS.shape[0] // C2_CHUNK))
    chunks = split_indices(XS.shape[0], parts_n)
    parts = parallel_map(_c2_task, [(cand, model, amb, cfg, XS[c]) for c in chunks], workers)
    c2 = np.concatenate(parts) if parts else np.zeros(0)
    results.append(_record("C2", c2, XS, margin_tolerance))
    results.append(_record("C3", _input_margin(model, cand.control_at(X)), X, margin_tolerance))
    X0 = probe_grid(x0_box, sp)
    X0 = X0[np.atleast_1d(membership(model.init, X0))]
    results.append(_record("C4", cand.value(X0) - cand.delta, X0, margin_tolerance))
    grids = {
        "verify_box": f"{list(verify_box.lower)} .. {list(verify_box.upper)}",
        "state_points_per_dim": sp,
        "disturbance_points_per_dim": dp,
        "refinement_rounds": cfg.refinement_rounds,
        "radius": amb.radius,
        "order": amb.order,
    }
    return VerificationReport(results, grids, margin_tolerance)


def check_sos_conditions(
    cand: CertificateCandidate,
    lam: Polynomial | None,
    l_polys: Sequence[Polynomial] | None,
    model: SystemModel,
    amb: AmbiguitySet,
    verify_box: Box,
    state_points: int | None = None,
    disturbance_points: int | None = None,
    margin_tolerance: float = DEFAULT_MARGIN_TOLERANCE,
) -> VerificationReport:
    """Pointwise checks of a full certificate bundle including the multiplier ``lam(x)``
    and one polynomial ``l_i(x)`` per nominal atom."""
    if lam is None or l_polys is None:
        raise CertificateArgumentError("lambda(x) and every l_i(x) must be supplied")
    l_polys = list(l_polys)
    if len(l_polys) != amb.nominal.size:
        raise CertificateArgumentError(f"expected {amb.nominal.size} l_i polynomials, got {len(l_polys)}")
    x0_box = _check_box(model, verify_box)
    n = model.state_dim
    sp, dp = _default_points(n, state_points, disturbance_points)
    X = probe_grid(verify_box, sp)
    in_s = np.atleast_1d(membership(model.safe, X))
    vb = cand.value(X)
    XS = X[in_s]
    lam_s = np.atleast_1d(eval_polynomial(lam, XS)) if XS.size else np.zeros(0)
    L = np.stack([np.atleast_1d(eval_polynomial(p, XS)) for p in l_polys], axis=1) if XS.size else np.zeros((0, amb.nominal.size))
    results = [
        _record("E29", -vb[~in_s], X[~in_s], margin_tolerance),
        _record("E30", 1.0 - vb[in_s], XS, margin_tolerance),
    ]
    X0 = probe_grid(x0_box, sp)
    X0 = X0[np.atleast_1d(membership(model.init, X0))]
    results.append(_record("E31", cand.value(X0) - cand.delta, X0, margin_tolerance))
    total = np.zeros(XS.shape[0])
    for i in range(amb.nominal.size):
        total = total + amb.nominal.probs[i] * L[:, i]
    e32 = -vb[in_s] / cand.eta - cand.beta - amb.budget * lam_s + total
    results.append(_record("E32", e32, XS, margin_tolerance))
    W = probe_grid(model.disturbance_box, dp)
    U = cand.control_at(XS)
    nxt = eval_dynamics(model, XS[:, None, :], U[:, None, :], W[None])
    vnext = cand.value(nxt.reshape(-1, n)).reshape(XS.shape[0], W.shape[0])
    worst = np.full(XS.shape[0], np.inf)
    for i, atom in enumerate(amb.nominal.atoms):
        slack = vnext + lam_s[:, None] * cost(W, atom, amb.order)[None] - L[:, i : i + 1]
        worst = np.minimum(worst, slack.min(axis=1))
    results.append(_record("E33", worst, XS, margin_tolerance))
    results.append(_record("E34", lam_s, XS, margin_tolerance))
    results.append(_record("E35", _input_margin(model, cand.control_at(X)), X, margin_tolerance))
    grids = {"state_points_per_dim": sp, "disturbance_points_per_dim": dp}
    return VerificationReport(results, grids, margin_tolerance)


def _exact(x) -> Fraction:
    return Fraction(repr(float(x)))


def safety_lower_bound(cand: CertificateCandidate, T: int, v0: float) -> float:
    """``eta**-T * v0 + (sum_{i<T} eta**-i) * beta``, evaluated in exact decimal arithmetic.

    The inputs are read as the shortest decimals that round-trip their
    floats, so printed parameters such as 0.96 and -0.0015 combine exactly.
    """
    if T < 0:
        raise ValueError("horizon must be non-negative")
    eta, beta, v = _exact(cand.eta), _exact(cand.beta), _exact(v0)
    if eta == 1:
        geometric = Fraction(T)
    else:
        inv = 1 / eta
        geometric = (1 - inv**T) / (1 - inv)
    return float(v / eta**T + geometric * beta)


# --------------------------------------------------------------------------
# Bundled certificates
# --------------------------------------------------------------------------

_V1 = "- 0.0002964x^4 + 0.0127x^3 - 0.1396x^2 - 0.02132x + 0.9917"
_U1 = "1.837e-6x^4 + 3.752e-6x^3 - 0.002694x^2 + 0.01221x + 1.888"
# the linear term is printed as "0.05924x1"; it reads as 0.05924 * x
_V2 = "- 1.691e-5x^4 + 0.003356x^3 - 0.1835x^2 - 0.05924x1 + 0.9851"
_U2 = "6.812e-8x^4 - 8.57e-6x^3 + 0.0007303x^2 - 0.0308x + 1.517"
_V4 = (
    "- 0.2498x1^4 - 0.4521x1^3x2 + 6.218e-16x1^3x3 - 2.981e-18x1^3x4 + 0.03694x1^3 - 0.3542x1^2x2^2"
    " + 6.744e-16x1^2x2x3 + 3.973e-17x1^2x2x4 + 0.08168x1^2x2 - 0.6311x1^2x3^2 - 5.627e-5 x1^2 x3 x4"
    " - 9.227e-16 x1^2 x3 - 0.233 x1^2 x4^2 + 2.663e-18 x1^2 x4 - 0.9242 x1^2 - 0.3872 x1 x2^3"
    " + 4.514e-16 x1 x2^2 x3 - 1.482e-17 x1 x2^2 x4 + 0.05211 x1 x2^2 - 0.2759 x1 x2 x3^2"
    " + 0.0001882 x1 x2 x3 x4 - 7.616e-16 x1 x2 x3 - 0.4317 x1 x2 x4^2 + 4.62e-17 x1 x2 x4 + 0.156 x1 x2"
    " + 1.353e-15 x1 x3^3 - 1.112e-16 x1 x3^2 x4 + 0.08263 x1 x3^2 + 4.98e-16 x1 x3 x4^2"
    " - 0.003198 x1 x3 x4 + 1.376e-16 x1 x3 - 1.151e-17 x1 x4^3 + 0.001856 x1 x4^2 + 1.674e-17 x1 x4"
    " - 0.0001112 x1 - 0.2656 x2^4 + 5.129e-16 x2^3 x3 + 6.286e-17 x2^3 x4 + 0.006773 x2^3"
    " - 0.6401 x2^2 x3^2 + 0.0004495 x2^2 x3 x4 + 2.007e-16 x2^2 x3 - 0.2745 x2^2 x4^2 + 3.15e-17 x2^2 x4"
    " - 0.9106 x2^2 + 6.695e-16 x2 x3^3 + 9.216e-17 x2 x3^2 x4 + 0.03181 x2 x3^2 + 5.334e-16 x2 x3 x4^2"
    " - 0.002691 x2 x3 x4 + 1.647e-16 x2 x3 + 6.922e-17 x2 x4^3 + 0.003741 x2 x4^2 - 2.836e-18 x2 x4"
    " - 0.0001082 x2 - 0.5929 x3^4 + 0.001256 x3^3 x4 - 2.266e-16 x3^3 - 0.5173 x3^2 x4^2"
    " - 1.794e-16 x3^2 x4 - 0.8271 x3^2 + 3.418e-5 x3 x4^3 - 2.969e-17 x3 x4^2 + 3.805e-5 x3 x4"
    " + 2.483e-18 x3 - 0.01936 x4^4 + 9.653e-18 x4^3 - 0.9872 x4^2 - 1.874e-19 x4 + 0.9999"
)
_U4 = (
    "0.01773 x1^4 - 0.0004027 x1^3 x2 + 3.374e-16 x1^3 x3 - 1.196e-16 x1^3 x4 + 0.0007027 x1^3"
    " - 0.0216 x1^2 x2^2 - 6.616e-17 x1^2 x2 x3 + 3.953e-17 x1^2 x2 x4 + 0.002888 x1^2 x2"
    " - 0.08656 x1^2 x3^2 - 3.015e-5 x1^2 x3 x4 - 2.731e-16 x1^2 x3 - 0.02166 x1^2 x4^2"
    " - 1.158e-16 x1^2 x4 - 0.03417 x1^2 + 0.003754 x1 x2^3 - 7.503e-16 x1 x2^2 x3"
    " - 1.241e-16 x1 x2^2 x4 + 0.00351 x1 x2^2 - 0.002516 x1 x2 x3^2 + 0.0009659 x1 x2 x3 x4"
    " - 3.586e-18 x1 x2 x3 - 0.0003268 x1 x2 x4^2 - 1.388e-16 x1 x2 x4 - 0.005415 x1 x2"
    " - 2.386e-16 x1 x3^3 - 1.456e-16 x1 x3^2 x4 + 0.005017 x1 x3^2 - 7.791e-16 x1 x3 x4^2"
    " - 0.006335 x1 x3 x4 - 1.291e-15 x1 x3 - 1.341e-16 x1 x4^3 + 0.002866 x1 x4^2 + 1.0e-16 x1 x4"
    " + 0.001509 x1 + 0.04643 x2^4 + 2.58e-17 x2^3 x3 - 2.009e-16 x2^3 x4 + 0.0003539 x2^3"
    " - 0.02193 x2^2 x3^2 + 0.000234 x2^2 x3 x4 - 2.226e-17 x2^2 x3 + 0.05167 x2^2 x4^2"
    " - 2.946e-17 x2^2 x4 - 0.07807 x2^2 + 5.043e-17 x2 x3^3 + 6.089e-17 x2 x3^2 x4"
    " + 0.0002895 x2 x3^2 - 1.03e-16 x2 x3 x4^2 - 0.001483 x2 x3 x4 - 3.494e-17 x2 x3"
    " - 3.811e-16 x2 x4^3 + 0.0006056 x2 x4^2 + 2.91e-16 x2 x4 - 0.0001431 x2 + 0.01818 x3^4"
    " + 0.0003328 x3^3 x4 - 6.936e-17 x3^3 - 0.02228 x3^2 x4^2 + 9.971e-17 x3^2 x4 - 0.03461 x3^2"
    " - 0.0001048 x3 x4^3 + 2.35e-17 x3 x4^2 - 1.252e-5 x3 x4 + 9.886e-17 x3 + 0.04612 x4^4"
    " + 1.458e-18 x4^3 - 0.07739 x4^2 - 1.024e-17 x4 + 0.9907"
)

# seed for the five nominal samples drawn for each bundled certificate
FIXTURE_SEED = 20240601


@dataclass(frozen=True)
class CertificateFixture:
    candidate: CertificateCandidate
    system: str
    radius: float
    order: float
    true_std: float
    verify_box: Box
    samples: int = 5

    def model(self) -> SystemModel:
        return builtin_system(self.system)

    def true_distribution(self, mean: float = 0.0) -> TruncatedGaussian:
        box = self.model().disturbance_box
        return TruncatedGaussian((mean,) * box.arity, (self.true_std,) * box.arity, box)

    def nominal(self, seed: int = FIXTURE_SEED, mean: float = 0.0) -> NominalDistribution:
        dist = self.true_distribution(mean)
        draws = sample_many(dist, child_rng(seed, 0), self.samples)
        return empirical_nominal(draws, dist.box)

    def ambiguity(self, seed: int = FIXTURE_SEED, mean: float = 0.0) -> AmbiguitySet:
        return AmbiguitySet(self.nominal(seed, mean), self.radius, self.order)


def _fixture(name: str) -> CertificateFixture:
    x = ["x"]
    xs = ["x1", "x2", "x3", "x4"]
    if name == "v_bar_1":
        cand = CertificateCandidate(parse_polynomial(_V1, x), (parse_polynomial(_U1, x),), 1.0, -0.0015, 0.96, name)
        return CertificateFixture(cand, "safety_1d", 0.1, 2.0, 2.0, Box((-2.0,), (4.0,)))
    if name == "v_bar_2":
        cand = CertificateCandidate(parse_polynomial(_V2, x), (parse_polynomial(_U2, x),), 1.0, -0.0015, 0.96, name)
        return CertificateFixture(cand, "safety_1d", 0.01, 2.0, 2.0, Box((-2.0,), (4.0,)))
    if name == "v_bar_4d":
        cand = CertificateCandidate(parse_polynomial(_V4, xs), (parse_polynomial(_U4, xs),), 1.0, -0.0004, 0.96, name)
        return CertificateFixture(cand, "safety_4d", 0.1, 2.0, 0.8, Box((-1.0,) * 4, (1.0,) * 4))
    raise KeyError(f"unknown certificate fixture {name!r}; choose from {FIXTURE_NAMES}")


FIXTURE_NAMES = ("v_bar_1", "v_bar_2", "v_bar_4d")


def load_fixture(name: str) -> CertificateFixture:
    return _fixture(name)


def certificate_from_text(
    v_bar_text: str,
    control_texts: Sequence[str],
    eta: float,
    beta: float,
    delta: float,
    name: str = "candidate",
) -> CertificateCandidate:
    """Build a candidate from the line format ``exponents coefficient``."""
    from .model import parse_polynomial_text

    v = parse_polynomial_text(v_bar_text)
    controls = tuple(parse_polynomial_text(t) for t in control_texts)
    return CertificateCandidate(v, controls, eta, beta, delta, name)
