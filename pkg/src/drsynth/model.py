"""Discrete-time stochastic control systems with polynomial dynamics.

A system is the tuple (X0, U, W, f, T) plus the safe set S and an optional
target set G. Dynamics are stored as one :class:`Polynomial` per state
coordinate over the stacked variable vector ``(x, u, w)``.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np


class DimensionError(ValueError):
    """Raised when a vector or polynomial has the wrong number of variables."""


class ModelError(ValueError):
    """Raised when a system definition violates its structural invariants."""


# --------------------------------------------------------------------------
# Polynomials
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Polynomial:
    """Sparse real polynomial, canonicalized on construction.

    ``terms`` is a tuple of ``(exponents, coefficient)`` pairs sorted by
    exponent vector with duplicate vectors merged and exact zeros dropped.
    """

    terms: tuple[tuple[tuple[int, ...], float], ...]
    arity: int

    def __post_init__(self):
        merged: dict[tuple[int, ...], float] = {}
        for exps, coeff in self.terms:
            exps = tuple(int(e) for e in exps)
            if len(exps) != self.arity:
                raise DimensionError(
                    f"exponent vector {exps} has length {len(exps)}, expected {self.arity}"
                )
            if any(e < 0 for e in exps):
                raise ValueError(f"negative exponent in {exps}")
            merged[exps] = merged.get(exps, 0.0) + float(coeff)
        canon = tuple(sorted((k, c) for k, c in merged.items() if c != 0.0))
        object.__setattr__(self, "terms", canon)

    @classmethod
    def constant(cls, value: float, arity: int) -> "Polynomial":
        return cls((((0,) * arity, value),), arity)

    @classmethod
    def variable(cls, index: int, arity: int, coeff: float = 1.0) -> "Polynomial":
        exps = [0] * arity
        exps[index] = 1
        return cls(((tuple(exps), coeff),), arity)

    @property
    def degree(self) -> int:
        return max((sum(e) for e, _ in self.terms), default=0)

    def __call__(self, points) -> np.ndarray:
        return eval_polynomial(self, points)

    def to_text(self) -> str:
        terms = self.terms or (((0,) * self.arity, 0.0),)  # keep the arity of the zero polynomial
        return "\n".join(" ".join(str(e) for e in exps) + f" {coeff!r}" for exps, coeff in terms)


def eval_polynomial(poly: Polynomial, point) -> np.ndarray | float:
    """Evaluate ``poly`` at one point or a batch of points (last axis = arity).

    Terms are summed in canonical order and powers are formed by repeated
    multiplication, so results do not depend on batch shape.
    """
    z = np.asarray(point, dtype=float)
    scalar = z.ndim == 1
    if z.ndim == 0 or z.shape[-1] != poly.arity:
        raise DimensionError(
            f"point has {z.shape[-1] if z.ndim else 0} coordinates, polynomial arity is {poly.arity}"
        )
    batch = z.reshape(-1, poly.arity)
    out = np.zeros(batch.shape[0])
    powers: dict[tuple[int, int], np.ndarray] = {}

    def power(var: int, e: int) -> np.ndarray:
        key = (var, e)
        if key not in powers:
            powers[key] = batch[:, var] if e == 1 else power(var, e - 1) * batch[:, var]
        return powers[key]

    with np.errstate(over="ignore", invalid="ignore"):
        for exps, coeff in poly.terms:
            term = np.full(batch.shape[0], coeff)
            for var, e in enumerate(exps):
                if e:
                    term = term * power(var, e)
            out = out + term
    if scalar:
        return float(out[0])
    return out.reshape(z.shape[:-1])


_NUMBER_RE = re.compile(r"^(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)")


def parse_polynomial(text: str, variables: Sequence[str]) -> Polynomial:
    """Parse an expression such as ``"-0.0003*x^4 + 0.0127 x^3 - 2.5e-16 x1 x3"``.

    Factors inside a term may be separated by ``*`` or whitespace, or be
    juxtaposed to the leading coefficient (``0.1x^2``).
    """
    index = {name: i for i, name in enumerate(variables)}
    # longest names first so x1 is not read as x followed by 1
    names = sorted(variables, key=len, reverse=True)
    arity = len(variables)
    src = text.replace("**", "^").replace("−", "-")
    terms = []
    for sign, body in _split_terms(src):
        coeff = -1.0 if sign == "-" else 1.0
        exps = [0] * arity
        for rest in body.replace("*", " ").split():
            while rest:
                m = _NUMBER_RE.match(rest)
                if m:
                    coeff *= float(m.group(1))
                    rest = rest[m.end():]
                    continue
                for name in names:
                    if rest.startswith(name):
                        rest = rest[len(name):]
                        e = 1
                        pm = re.match(r"^\^(\d+)", rest)
                        if pm:
                            e = int(pm.group(1))
                            rest = rest[pm.end():]
                        exps[index[name]] += e
                        break
                else:
                    raise ValueError(f"cannot parse factor {rest!r} in term {body!r}")
        terms.append((tuple(exps), coeff))
    return Polynomial(tuple(terms), arity)


def _split_terms(src: str) -> list[tuple[str, str]]:
    out = []
    sign, buf = "+", ""
    i = 0
    s = src.strip()
    while i < len(s):
        ch = s[i]
        # a sign that follows an exponent marker belongs to the number
        if ch in "+-" and buf.strip() and not re.search(r"\d[eE]$", buf.rstrip()):
            out.append((sign, buf))
            sign, buf = ch, ""
        elif ch in "+-" and not buf.strip():
            sign = "-" if (ch == "-") != (sign == "-") else "+"
        else:
            buf += ch
        i += 1
    if buf.strip():
        out.append((sign, buf))
    return out


def parse_polynomial_text(text: str) -> Polynomial:
    """Parse the line format: one term per line, exponents then coefficient.

    Blank lines and ``#`` comments are ignored. Separators may be spaces,
    commas, or parentheses, e.g. ``(2, 0) -0.5`` or ``2 0 -0.5``.
    """
    terms = []
    arity = None
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = re.sub(r"[(),:]", " ", line).split()
        exps = tuple(int(p) for p in parts[:-1])
        if arity is None:
            arity = len(exps)
        elif len(exps) != arity:
            raise DimensionError(f"inconsistent term length in line {raw!r}")
        terms.append((exps, float(parts[-1])))
    if arity is None:
        raise ValueError("empty polynomial text")
    return Polynomial(tuple(terms), arity)


# --------------------------------------------------------------------------
# Regions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi):
            raise DimensionError("box bounds have different lengths")
        if any(a > b for a, b in zip(lo, hi)):
            raise ModelError(f"box lower {lo} exceeds upper {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def arity(self) -> int:
        return len(self.lower)

    @property
    def bounds(self) -> "Box":
        return self

    @property
    def widths(self) -> np.ndarray:
        return np.array(self.upper) - np.array(self.lower)

    def contains_box(self, other: "Box", tol: float = 1e-12) -> bool:
        return all(a <= c + tol for a, c in zip(self.lower, other.lower)) and all(
            b >= d - tol for b, d in zip(self.upper, other.upper)
        )


@dataclass(frozen=True)
class SuperLevel:
    """``{x : s(x) >= 0}``; ``bounds`` optionally encloses the set for gridding and sampling."""

    poly: Polynomial
    bounds: Box | None = None

    @property
    def arity(self) -> int:
        return self.poly.arity


Region = Union[Box, SuperLevel]


def membership(region: Region, x) -> np.ndarray | bool:
    """Closed-set membership test, vectorized over leading axes of ``x``."""
    z = np.asarray(x, dtype=float)
    if z.ndim == 0 or z.shape[-1] != region.arity:
        raise DimensionError(f"point dimension does not match region arity {region.arity}")
    if isinstance(region, Box):
        lo = np.array(region.lower)
        hi = np.array(region.upper)
        inside = np.all((z >= lo) & (z <= hi), axis=-1)
    else:
        with np.errstate(invalid="ignore"):
            inside = np.asarray(eval_polynomial(region.poly, z)) >= 0.0
    if z.ndim == 1:
        return bool(inside)
    return inside


def probe_grid(box: Box, points: int | Sequence[int]) -> np.ndarray:
    """Cartesian grid over ``box`` as an array of shape (N, arity)."""
    if isinstance(points, int):
        points = [points] * box.arity
    axes = [
        np.linspace(lo, hi, k) if hi > lo else np.array([lo])
        for lo, hi, k in zip(box.lower, box.upper, points)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def region_bounds(region: Region) -> Box | None:
    return region if isinstance(region, Box) else region.bounds


# --------------------------------------------------------------------------
# Input sets
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteInputs:
    points: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        pts = tuple(tuple(float(v) for v in np.atleast_1d(p)) for p in self.points)
        if not pts:
            raise ModelError("finite input set is empty")
        if len({len(p) for p in pts}) != 1:
            raise DimensionError("finite inputs have mixed dimensions")
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return len(self.points[0])

    def enumerate(self, grid_points: int | None = None) -> np.ndarray:
        return np.array(self.points, dtype=float)

    def contains(self, u, tol: float = 1e-9) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        pts = np.array(self.points)
        return np.any(np.all(np.abs(u[:, None, :] - pts[None]) <= tol, axis=-1), axis=-1)

    def project(self, u) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        pts = np.array(self.points)
        d = np.sum((u[:, None, :] - pts[None]) ** 2, axis=-1)
        return pts[np.argmin(np.nan_to_num(d, nan=np.inf), axis=1)]


@dataclass(frozen=True)
class PolytopeInputs:
    """``{u : A u >= b}``; must be non-empty and bounded."""

    A: tuple[tuple[float, ...], ...]
    b: tuple[float, ...]
    _bounds: Box | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.shape[0] != b.shape[0]:
            raise DimensionError("A and b have different row counts")
        object.__setattr__(self, "A", tuple(map(tuple, A)))
        object.__setattr__(self, "b", tuple(b))
        object.__setattr__(self, "_bounds", _polytope_bounds(A, b))

    @classmethod
    def from_box(cls, lower: Sequence[float], upper: Sequence[float]) -> "PolytopeInputs":
        lo, hi = np.atleast_1d(lower).astype(float), np.atleast_1d(upper).astype(float)
        m = lo.size
        eye = np.eye(m)
        return cls(tuple(map(tuple, np.vstack([eye, -eye]))), tuple(np.concatenate([lo, -hi])))

    @property
    def dim(self) -> int:
        return len(self.A[0])

    @property
    def bounds(self) -> Box:
        return self._bounds

    @property
    def axis_aligned(self) -> bool:
        return all(sum(1 for a in row if a != 0.0) == 1 for row in self.A)

    def enumerate(self, grid_points: int | None = None) -> np.ndarray:
        pts = probe_grid(self.bounds, grid_points or 11)
        keep = self.contains(pts)
        if not keep.any():
            raise ModelError("input grid has no feasible point")
        return pts[keep]

    def contains(self, u, tol: float = 1e-9) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        return np.all(u @ np.array(self.A).T >= np.array(self.b) - tol, axis=-1)

    def project(self, u) -> np.ndarray:
        """Euclidean projection; exact clipping for axis-aligned polytopes."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        lo, hi = np.array(self.bounds.lower), np.array(self.bounds.upper)
        clipped = np.clip(np.nan_to_num(u, nan=0.0), lo, hi)
        if self.axis_aligned:
            return clipped
        from scipy.optimize import minimize

        A, b = np.array(self.A), np.array(self.b)
        out = clipped.copy()
        for k in np.flatnonzero(~self.contains(clipped)):
            target = clipped[k]
            res = minimize(
                lambda z: np.sum((z - target) ** 2),
                target,
                constraints=[{"type": "ineq", "fun": lambda z: A @ z - b}],
                method="SLSQP",
            )
            out[k] = res.x
        return out


def _polytope_bounds(A: np.ndarray, b: np.ndarray) -> Box:
    from scipy.optimize import linprog

    m = A.shape[1]
    lo, hi = [], []
    for j in range(m):
        c = np.zeros(m)
        c[j] = 1.0
        bnds = [(None, None)] * m
        r_min = linprog(c, A_ub=-A, b_ub=-b, bounds=bnds, method="highs")
        r_max = linprog(-c, A_ub=-A, b_ub=-b, bounds=bnds, method="highs")
        if r_min.status == 2 or r_max.status == 2:
            raise ModelError("input polytope is empty")
        if r_min.status == 3 or r_max.status == 3:
            raise ModelError("input polytope is unbounded")
        lo.append(r_min.x[j])
        hi.append(r_max.x[j])
    return Box(tuple(lo), tuple(hi))


InputSet = Union[FiniteInputs, PolytopeInputs]


# --------------------------------------------------------------------------
# System model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemModel:
    state_dim: int
    input_set: InputSet
    disturbance_box: Box
    dynamics: tuple[Polynomial, ...]
    horizon: int
    init: Region
    safe: Region
    target: Region | None = None
    working_box: Box | None = None
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "dynamics", tuple(self.dynamics))
        n, m, l = self.state_dim, self.input_set.dim, self.disturbance_box.arity
        if len(self.dynamics) != n:
            raise ModelError(f"expected {n} dynamics polynomials, got {len(self.dynamics)}")
        for p in self.dynamics:
            if p.arity != n + m + l:
                raise ModelError(f"dynamics arity {p.arity} != n + m + l = {n + m + l}")
        if self.horizon < 1:
            raise ModelError("horizon must be at least 1")
        for name in ("init", "safe", "target"):
            reg = getattr(self, name)
            if reg is not None and reg.arity != n:
                raise ModelError(f"region {name} has arity {reg.arity}, state dim is {n}")
        if self.working_box is not None and self.working_box.arity != n:
            raise ModelError("working box dimension mismatch")
        if self.target is not None:
            probes = _region_probes(self.target)
            if probes is not None and len(probes):
                inside = np.atleast_1d(membership(self.safe, probes))
                if not inside.all():
                    raise ModelError("target region is not contained in the safe region")

    @property
    def input_dim(self) -> int:
        return self.input_set.dim

    @property
    def disturbance_dim(self) -> int:
        return self.disturbance_box.arity

    def step(self, x, u, w) -> np.ndarray:
        return eval_dynamics(self, x, u, w)


def _region_probes(region: Region, points: int = 21) -> np.ndarray | None:
    box = region_bounds(region)
    if box is None:
        return None
    per_dim = max(3, min(points, int(round(20000 ** (1.0 / box.arity)))))
    pts = probe_grid(box, per_dim)
    return pts[np.atleast_1d(membership(region, pts))]


def eval_dynamics(model: SystemModel, x, u, w) -> np.ndarray:
    """Next state ``f(x, u, w)``; broadcasts over leading axes of the inputs."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    n, m, l = model.state_dim, model.input_dim, model.disturbance_dim
    for arr, k, what in ((x, n, "state"), (u, m, "input"), (w, l, "disturbance")):
        if arr.ndim == 0 or arr.shape[-1] != k:
            raise DimensionError(f"{what} must have {k} coordinates")
    lead = np.broadcast_shapes(x.shape[:-1], u.shape[:-1], w.shape[:-1])
    z = np.concatenate(
        [
            np.broadcast_to(x, lead + (n,)),
            np.broadcast_to(u, lead + (m,)),
            np.broadcast_to(w, lead + (l,)),
        ],
        axis=-1,
    )
    return np.stack([np.asarray(eval_polynomial(p, z)) for p in model.dynamics], axis=-1)


# --------------------------------------------------------------------------
# Built-in case studies
# --------------------------------------------------------------------------


def _room_temperature() -> SystemModel:
    t_e, t_h, a_e, a_h, tau = 15.0, 50.0, 8e-3, 3.6e-3, 5.0
    # x + tau*(a_e*(t_e - x) + a_h*(t_h - x)*u) + w over variables (x, u, w)
    f = Polynomial(
        (
            ((1, 0, 0), 1.0 - tau * a_e),
            ((0, 0, 0), tau * a_e * t_e),
            ((0, 1, 0), tau * a_h * t_h),
            ((1, 1, 0), -tau * a_h),
            ((0, 0, 1), 1.0),
        ),
        3,
    )
    return SystemModel(
        state_dim=1,
        input_set=FiniteInputs(((0.0,), (1.0,))),
        disturbance_box=Box((-0.12,), (0.12,)),
        dynamics=(f,),
        horizon=12,
        init=Box((23.6,), (23.8,)),
        safe=Box((23.0,), (26.0,)),
        target=Box((24.4,), (24.6,)),
        working_box=Box((23.0,), (26.0,)),
        name="room_temperature",
    )


def _safety_1d() -> SystemModel:
    f = parse_polynomial("x + 0.1*x^2 + u + w", ["x", "u", "w"])
    return SystemModel(
        state_dim=1,
        input_set=PolytopeInputs.from_box([0.0], [2.0]),
        disturbance_box=Box((-4.0,), (1.0,)),
        dynamics=(f,),
        horizon=40,
        init=Box((-0.5,), (0.0,)),
        safe=SuperLevel(parse_polynomial("x + 2", ["x"]), None),
        target=None,
        working_box=Box((-2.0,), (4.0,)),
        name="safety_1d",
    )


def _safety_4d() -> SystemModel:
    v = ["x1", "x2", "x3", "x4", "u", "w"]
    tau = 0.01
    exprs = [
        "x1 - t*x1 + t*x2^3 - 3*t*x3*x4 + t*u + t*w",
        "x2 - t*x1 - t*x2^3",
        "x3 + t*x1*x4 - t*x3",
        "x4 + t*x1*x3 - t*x4^3",
    ]
    dyn = tuple(parse_polynomial(e.replace("t*", f"{tau}*"), v) for e in exprs)
    xs = v[:4]
    ball = lambda r2: parse_polynomial(f"{r2} - x1^2 - x2^2 - x3^2 - x4^2", xs)
    return SystemModel(
        state_dim=4,
        input_set=PolytopeInputs.from_box([-1.0], [1.0]),
        disturbance_box=Box((-0.8,), (0.8,)),
        dynamics=dyn,
        horizon=100,
        init=SuperLevel(ball(0.09), Box((-0.3,) * 4, (0.3,) * 4)),
        safe=SuperLevel(ball(1.0), Box((-1.0,) * 4, (1.0,) * 4)),
        target=None,
        working_box=Box((-1.0,) * 4, (1.0,) * 4),
        name="safety_4d",
    )


BUILTIN_SYSTEMS = {
    "room_temperature": _room_temperature,
    "safety_1d": _safety_1d,
    "safety_4d": _safety_4d,
}


def builtin_system(name: str) -> SystemModel:
    try:
        return BUILTIN_SYSTEMS[name]()
    except KeyError:
        raise ValueError(
            f"unknown built-in system {name!r}; choose from {sorted(BUILTIN_SYSTEMS)}"
        ) from None


# --------------------------------------------------------------------------
# Config loading
# --------------------------------------------------------------------------


def _poly_from_config(spec, variables: Sequence[str]) -> Polynomial:
    if isinstance(spec, str):
        return parse_polynomial(spec, variables)
    terms = [(tuple(t["exponents"]), float(t["coefficient"])) for t in spec]
    return Polynomial(tuple(terms), len(variables))


def _region_from_config(spec, state_vars: Sequence[str]) -> Region:
    if "lower" in spec:
        return Box(tuple(spec["lower"]), tuple(spec["upper"]))
    bounds = spec.get("bounds")
    return SuperLevel(
        _poly_from_config(spec["superlevel"], state_vars),
        Box(tuple(bounds["lower"]), tuple(bounds["upper"])) if bounds else None,
    )


def model_from_config(section: dict) -> SystemModel:
    """Build a model from the ``[model]`` config section.

    Either ``builtin = "<name>"`` (optionally overriding ``horizon`` and
    ``working_box``) or a full definition with dimensions, dynamics,
    inputs, disturbance box, horizon and regions.
    """
    if "builtin" in section:
        model = builtin_system(section["builtin"])
        overrides = {}
        if "horizon" in section:
            overrides["horizon"] = int(section["horizon"])
        if "working_box" in section:
            wb = section["working_box"]
            overrides["working_box"] = Box(tuple(wb["lower"]), tuple(wb["upper"]))
        if overrides:
            from dataclasses import replace

            model = replace(model, **overrides)
        return model
    n = int(section["state_dim"])
    m = int(section["input_dim"])
    l = int(section["disturbance_dim"])
    state_vars = section.get("state_names") or ([f"x{i + 1}" for i in range(n)] if n > 1 else ["x"])
    input_vars = section.get("input_names") or ([f"u{i + 1}" for i in range(m)] if m > 1 else ["u"])
    dist_vars = section.get("disturbance_names") or ([f"w{i + 1}" for i in range(l)] if l > 1 else ["w"])
    all_vars = list(state_vars) + list(input_vars) + list(dist_vars)
    dynamics = tuple(_poly_from_config(d, all_vars) for d in section["dynamics"])
    inp = section["inputs"]
    if "points" in inp:
        input_set: InputSet = FiniteInputs(tuple(tuple(np.atleast_1d(p)) for p in inp["points"]))
    elif "A" in inp:
        input_set = PolytopeInputs(tuple(map(tuple, inp["A"])), tuple(inp["b"]))
    else:
        input_set = PolytopeInputs.from_box(inp["lower"], inp["upper"])
    wb = section.get("working_box")
    return SystemModel(
        state_dim=n,
        input_set=input_set,
        disturbance_box=Box(tuple(section["disturbance"]["lower"]), tuple(section["disturbance"]["upper"])),
        dynamics=dynamics,
        horizon=int(section["horizon"]),
        init=_region_from_config(section["init"], state_vars),
        safe=_region_from_config(section["safe"], state_vars),
        target=_region_from_config(section["target"], state_vars) if "target" in section else None,
        working_box=Box(tuple(wb["lower"]), tuple(wb["upper"])) if wb else None,
        name=section.get("name", "custom"),
    )


def lagrange_table_polynomial(
    table: dict[tuple[float, ...], float], axes: Sequence[Sequence[float]]
) -> Polynomial:
    """Tensor-product Lagrange interpolant through ``table`` on the grid ``axes``.

    Used to express finite (e.g. clamped integer) dynamics as a polynomial
    that agrees with the table at every grid point.
    """
    arity = len(axes)
    result: dict[tuple[int, ...], float] = {}
    for point in itertools.product(*axes):
        value = table[tuple(float(c) for c in point)]
        if value == 0.0:
            continue
        basis = {(0,) * arity: value}
        for var, (node, axis) in enumerate(zip(point, axes)):
            for other in axis:
                if other == node:
                    continue
                scale = 1.0 / (node - other)
                nxt: dict[tuple[int, ...], float] = {}
                for exps, c in basis.items():
                    up = list(exps)
                    up[var] += 1
                    nxt[tuple(up)] = nxt.get(tuple(up), 0.0) + c * scale
                    nxt[exps] = nxt.get(exps, 0.0) - c * scale * other
                basis = nxt
        for exps, c in basis.items():
            result[exps] = result.get(exps, 0.0) + c
    return Polynomial(tuple(result.items()), arity)


def as_points(x: Iterable[float] | np.ndarray, dim: int) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.shape[-1] != dim:
        raise DimensionError(f"expected last axis of length {dim}")
    return arr
