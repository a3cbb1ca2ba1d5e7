"""Nominal distributions, Wasserstein balls and disturbance samplers."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .model import Box, DimensionError, membership


class SamplingError(RuntimeError):
    """Rejection sampling exhausted its attempt budget."""


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class NominalDistribution:
    """Finite-support distribution ``sum_i p_i * delta(atom_i)``.

    ``atoms`` has shape (M, l) and ``probs`` shape (M,).
    """

    atoms: np.ndarray
    probs: np.ndarray
    box: Box | None = None

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        probs = np.asarray(self.probs, dtype=float).ravel()
        if atoms.shape[0] != probs.shape[0] or atoms.shape[0] == 0:
            raise ValueError("atoms and probabilities must be non-empty and of equal length")
        if np.any(probs <= 0) or np.any(probs > 1):
            raise ValueError("atom probabilities must lie in (0, 1]")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        if len({tuple(a) for a in atoms}) != len(atoms):
            raise ValueError("support points must be pairwise distinct")
        if self.box is not None and not np.all(membership(self.box, atoms)):
            raise ValueError("support point outside the disturbance box")
        object.__setattr__(self, "atoms", _frozen(atoms))
        object.__setattr__(self, "probs", _frozen(probs))

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def mean(self) -> np.ndarray:
        return self.probs @ self.atoms

    def __eq__(self, other):
        if not isinstance(other, NominalDistribution):
            return NotImplemented
        return np.array_equal(self.atoms, other.atoms) and np.array_equal(self.probs, other.probs)

    __hash__ = None


@dataclass(frozen=True)
class AmbiguitySet:
    """Wasserstein ball of ``radius`` around ``nominal`` (order ``order``, Euclidean ground metric)."""

    nominal: NominalDistribution
    radius: float
    order: float = 1.0
    metric: str = "euclidean"

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be non-negative")
        if self.order < 1:
            raise ValueError("order must be at least 1")
        if self.metric != "euclidean":
            raise ValueError("only the Euclidean ground metric is supported")

    @property
    def budget(self) -> float:
        """Transport budget radius**order."""
        return float(self.radius) ** float(self.order)


def cost(w: np.ndarray, atom: np.ndarray, order: float) -> np.ndarray:
    """Ground cost ``||w - atom||_2 ** order`` along the last axis."""
    diff = np.asarray(w, dtype=float) - np.asarray(atom, dtype=float)
    if diff.shape[-1] == 1:
        dist = np.abs(diff[..., 0])
    else:
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
    return _power(dist, order)


def _power(x: np.ndarray, order: float) -> np.ndarray:
    if float(order).is_integer():
        k = int(order)
        out = x
        for _ in range(k - 1):
            out = out * x
        return out
    return np.power(x, order)


def empirical_nominal(samples: Sequence, box: Box | None = None) -> NominalDistribution:
    """Empirical distribution of ``samples``; atoms keep first-occurrence order."""
    arr = np.asarray(samples, dtype=float)
    if arr.size == 0:
        raise ValueError("cannot build an empirical distribution from no samples")
    if arr.ndim == 1:
        arr = arr[:, None]
    if box is not None and not np.all(membership(box, arr)):
        raise ValueError("sample outside the disturbance box")
    counts: dict[tuple[float, ...], int] = {}
    for row in arr:
        key = tuple(row.tolist())
        counts[key] = counts.get(key, 0) + 1
    n = arr.shape[0]
    atoms = np.array(list(counts.keys()))
    probs = np.array([c / n for c in counts.values()])
    return NominalDistribution(atoms, probs, box)


# --------------------------------------------------------------------------
# True distributions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformBox:
    box: Box


@dataclass(frozen=True)
class TruncatedGaussian:
    mean: tuple[float, ...]
    std: tuple[float, ...]
    box: Box
    max_attempts: int = 1_000_000

    def __post_init__(self):
        mean = tuple(float(v) for v in np.atleast_1d(self.mean))
        std = tuple(float(v) for v in np.atleast_1d(self.std))
        if len(mean) != self.box.arity or len(std) != self.box.arity:
            raise DimensionError("mean/std dimension does not match the box")
        if any(s <= 0 for s in std):
            raise ValueError("standard deviations must be positive")
        if np.any(self.box.widths <= 0):
            raise ValueError("truncation box must have positive volume")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


@dataclass(frozen=True)
class FiniteSupport:
    nominal: NominalDistribution


TrueDistribution = Union[UniformBox, TruncatedGaussian, FiniteSupport]


def child_rng(seed: int, *path: int) -> np.random.Generator:
    """Independent counter-based stream for ``(seed, *path)``."""
    ss = np.random.SeedSequence([int(seed), *[int(p) for p in path]])
    return np.random.Generator(np.random.Philox(ss))


def sample_many(dist: TrueDistribution, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` disturbance vectors, shape (n, l)."""
    if isinstance(dist, UniformBox):
        lo, hi = np.array(dist.box.lower), np.array(dist.box.upper)
        return lo + (hi - lo) * rng.random((n, lo.size))
    if isinstance(dist, FiniteSupport):
        idx = rng.choice(dist.nominal.size, size=n, p=dist.nominal.probs)
        return dist.nominal.atoms[idx].copy()
    if isinstance(dist, TruncatedGaussian):
        mean, std = np.array(dist.mean), np.array(dist.std)
        lo, hi = np.array(dist.box.lower), np.array(dist.box.upper)
        out = np.empty((0, mean.size))
        attempts = 0
        while out.shape[0] < n:
            batch = max(2 * (n - out.shape[0]), 8)
            if attempts + batch > dist.max_attempts:
                batch = dist.max_attempts - attempts
                if batch <= 0:
                    raise SamplingError(
                        f"truncated Gaussian accepted {out.shape[0]} of {n} draws "
                        f"in {dist.max_attempts} attempts"
                    )
            draws = mean + std * rng.standard_normal((batch, mean.size))
            attempts += batch
            keep = np.all((draws >= lo) & (draws <= hi), axis=1)
            out = np.vstack([out, draws[keep]])
        return out[:n]
    raise TypeError(f"unknown distribution {dist!r}")


def sample(dist: TrueDistribution, rng: np.random.Generator) -> np.ndarray:
    return sample_many(dist, rng, 1)[0]


def discretize(dist: TrueDistribution, points: int) -> NominalDistribution:
    """Finite-support approximation on a per-dimension midpoint grid.

    Each cell of the box contributes one atom at its center, weighted by the
    cell's probability mass. Finite-support inputs are returned unchanged.
    """
    if isinstance(dist, FiniteSupport):
        return dist.nominal
    box = dist.box
    axes, weights = [], []
    for d, (lo, hi) in enumerate(zip(box.lower, box.upper)):
        edges = np.linspace(lo, hi, points + 1)
        mids = 0.5 * (edges[:-1] + edges[1:])
        if isinstance(dist, UniformBox):
            w = np.full(points, 1.0 / points)
        else:
            from scipy.stats import norm

            cdf = norm.cdf(edges, loc=dist.mean[d], scale=dist.std[d])
            w = np.diff(cdf)
            w = w / w.sum()
        axes.append(mids)
        weights.append(w)
    mesh = np.meshgrid(*axes, indexing="ij")
    atoms = np.stack([m.ravel() for m in mesh], axis=-1)
    wmesh = np.meshgrid(*weights, indexing="ij")
    probs = np.prod(np.stack([w.ravel() for w in wmesh], axis=-1), axis=-1)
    keep = probs > 0
    probs = probs[keep] / probs[keep].sum()
    return NominalDistribution(atoms[keep], probs, box)


# --------------------------------------------------------------------------
# Exact 1-D Wasserstein distance
# --------------------------------------------------------------------------


def wasserstein_1d(mu: NominalDistribution, nu: NominalDistribution, p: float = 1.0) -> float:
    """Order-``p`` Wasserstein distance via the quantile coupling."""
    if mu.dim != 1 or nu.dim != 1:
        raise DimensionError("wasserstein_1d needs one-dimensional distributions")
    a_order = np.argsort(mu.atoms[:, 0], kind="stable")
    b_order = np.argsort(nu.atoms[:, 0], kind="stable")
    xa, pa = mu.atoms[a_order, 0], mu.probs[a_order]
    xb, pb = nu.atoms[b_order, 0], nu.probs[b_order]
    ca, cb = np.cumsum(pa), np.cumsum(pb)
    ca[-1] = cb[-1] = 1.0
    levels = np.union1d(ca, cb)
    total = 0.0
    prev = 0.0
    for level in levels:
        mass = level - prev
        if mass > 0:
            mid = 0.5 * (prev + level)
            ia = min(np.searchsorted(ca, mid), len(xa) - 1)
            ib = min(np.searchsorted(cb, mid), len(xb) - 1)
            total += mass * abs(xa[ia] - xb[ib]) ** p
        prev = level
    return float(total ** (1.0 / p))
