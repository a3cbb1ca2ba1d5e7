"""Experiment configuration: TOML sections to library objects.

Sections and their keys (all optional unless a command needs them):

[model]       builtin = "room_temperature" | "safety_1d" | "safety_4d", or a full
              definition (see ``model_from_config``); optional horizon, working_box
[ambiguity]   radius, order (default 1), and either atoms = [[..], ..] with probs,
              or samples = N drawn from [ambiguity.sampler] (kind = "uniform" |
              "gaussian", mean, std) with sample_seed
[grid]        resolution (per-dimension spacing) or points; interpolation
[solver]      lambda_tolerance, disturbance_grid_initial, refinement_rounds,
              refinement_shrink, refinement_points, input_grid
[simulation]  trials, initial ("uniform" | "grid" | "fixed"), x0, spec,
              [simulation.distribution] kind/mean/std
[evaluation]  atoms (points per dimension of the discretized true distribution),
              policy ("argmax" | "threshold"), alpha, x0_resolution, distribution
[study]       groups, repetitions, alpha, evaluation_atoms, policy_rule, ...
[certificate] fixture, or v_bar/control expressions with variables, eta, beta,
              delta; verify_box; state_points; disturbance_points; margin_tolerance
"""
from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .ambiguity import (
    AmbiguitySet,
    FiniteSupport,
    NominalDistribution,
    TruncatedGaussian,
    TrueDistribution,
    UniformBox,
    child_rng,
    empirical_nominal,
    sample_many,
)
from .dro_dual import SolverConfig
from .model import Box, SystemModel, model_from_config, parse_polynomial
from .synthesis import REACH_AVOID, SAFETY, StateGrid


class ConfigError(ValueError):
    """Invalid or incomplete configuration."""


def load_config(path: str | Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc


def build_model(cfg: dict, default: str = "room_temperature") -> SystemModel:
    section = cfg.get("model") or {"builtin": default}
    try:
        return model_from_config(section)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad [model] section: {exc}") from exc


def build_distribution(section: dict | None, model: SystemModel) -> TrueDistribution:
    """True distribution over the disturbance box; uniform when unspecified."""
    box = model.disturbance_box
    section = section or {}
    kind = section.get("kind", "uniform")
    if kind == "uniform":
        return UniformBox(box)
    if kind == "gaussian":
        l = box.arity
        mean = np.broadcast_to(np.asarray(section.get("mean", 0.0), dtype=float), (l,))
        std = np.broadcast_to(np.asarray(section["std"], dtype=float), (l,))
        return TruncatedGaussian(tuple(mean), tuple(std), box, int(section.get("max_attempts", 1_000_000)))
    if kind == "finite":
        atoms = np.asarray(section["atoms"], dtype=float)
        return FiniteSupport(NominalDistribution(atoms.reshape(len(atoms), -1), section["probs"], box))
    raise ConfigError(f"unknown distribution kind {kind!r}")


def build_ambiguity(cfg: dict, model: SystemModel, seed: int) -> tuple[AmbiguitySet, np.ndarray | None]:
    """Ambiguity set and, when the nominal was sampled, the raw samples."""
    sec = cfg.get("ambiguity")
    if sec is None:
        raise ConfigError("missing [ambiguity] section")
    radius = float(sec.get("radius", 0.0))
    order = float(sec.get("order", 1.0))
    samples = None
    if "atoms" in sec:
        atoms = np.asarray(sec["atoms"], dtype=float)
        atoms = atoms.reshape(len(atoms), -1)
        probs = sec.get("probs") or [1.0 / len(atoms)] * len(atoms)
        nominal = NominalDistribution(atoms, probs, model.disturbance_box)
    elif "samples" in sec:
        dist = build_distribution(sec.get("sampler"), model)
        rng = child_rng(int(sec.get("sample_seed", seed)), 0)
        samples = sample_many(dist, rng, int(sec["samples"]))
        nominal = empirical_nominal(samples, model.disturbance_box)
    else:
        raise ConfigError("[ambiguity] needs either atoms or samples")
    return AmbiguitySet(nominal, radius, order), samples


def build_grid(cfg: dict, model: SystemModel) -> StateGrid:
    sec = cfg.get("grid", {})
    wb = sec.get("working_box")
    box = Box(tuple(wb["lower"]), tuple(wb["upper"])) if wb else model.working_box
    if box is None:
        raise ConfigError("a working box is required for the state grid ([grid] working_box or [model] working_box)")
    if "points" in sec:
        return StateGrid(box.lower, box.upper, tuple(np.atleast_1d(sec["points"]).astype(int)))
    return StateGrid.from_resolution(box, sec.get("resolution", 0.01))


def build_solver(cfg: dict) -> SolverConfig:
    sec = dict(cfg.get("solver", {}))
    allowed = set(SolverConfig.__dataclass_fields__)
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown [solver] keys: {sorted(unknown)}")
    return SolverConfig(**sec)


def spec_kind_for(model: SystemModel, requested: str | None) -> str:
    if requested:
        if requested not in (REACH_AVOID, SAFETY):
            raise ConfigError(f"unknown specification {requested!r}")
        return requested
    return REACH_AVOID if model.target is not None else SAFETY


def build_certificate(sec: dict):
    """Candidate and verification box from a [certificate] section (fixture or expressions)."""
    from .certificates import CertificateCandidate, load_fixture

    if "fixture" in sec:
        fx = load_fixture(sec["fixture"])
        return fx.candidate, fx
    variables = sec.get("variables", ["x"])
    v_bar = parse_polynomial(sec["v_bar"], variables)
    controls = tuple(parse_polynomial(c, variables) for c in sec["control"])
    cand = CertificateCandidate(v_bar, controls, float(sec.get("eta", 1.0)), float(sec.get("beta", 0.0)),
                                float(sec.get("delta", 0.0)), sec.get("name", "candidate"))
    return cand, None

