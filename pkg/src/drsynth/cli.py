"""Command-line entry point.

Exit codes: 0 success / all checks pass, 1 a check failed, 2 usage or
configuration error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .ambiguity import AmbiguitySet, discretize
from .config import (
    ConfigError,
    build_ambiguity,
    build_certificate,
    build_distribution,
    build_grid,
    build_model,
    build_solver,
    load_config,
    spec_kind_for,
)
from .io import config_hash, load_cache, policy_table, save_cache, value_grid_table, write_csv, write_manifest

log = logging.getLogger("drsynth")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment configuration")
    common.add_argument("--seed", type=int, default=None, help="master seed (default: config or 0)")
    common.add_argument("--workers", type=int, default=1, help="worker processes")
    common.add_argument("--output-dir", default="out", help="directory for CSV/JSON outputs")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = _Parser(prog="drsynth", description="Distributionally robust controller synthesis and verification")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="robust value iteration and policy extraction")
    s.add_argument("--spec", choices=["reach_avoid", "safety"])

    e = sub.add_parser("eval", parents=[common], help="exact evaluation of a synthesized policy")
    e.add_argument("--spec", choices=["reach_avoid", "safety"])
    e.add_argument("--policy", choices=["argmax", "threshold"], default=None)
    e.add_argument("--alpha", type=float, default=None)

    m = sub.add_parser("simulate", parents=[common], help="Monte Carlo evaluation")
    m.add_argument("--fixture", help="bundled certificate whose control is simulated")
    m.add_argument("--trials", type=int)
    m.add_argument("--paper-scale", action="store_true", help="10000 trials")
    m.add_argument("--log", action="store_true", help="write per-trial trajectories")

    c = sub.add_parser("check-cert", parents=[common], help="grid verification of a barrier certificate")
    c.add_argument("--fixture", help="bundled certificate: v_bar_1, v_bar_2, v_bar_4d")
    c.add_argument("--state-points", type=int)
    c.add_argument("--disturbance-points", type=int)
    c.add_argument("--margin-tolerance", type=float)

    st = sub.add_parser("study", parents=[common], help="repeated synthesis study over parameter groups")
    st.add_argument("--paper-scale", action="store_true", help="100 repetitions per group")
    st.add_argument("--repetitions", type=int)
    st.add_argument("--groups", help="comma-separated 1-based group indices to run")

    o = sub.add_parser("oracle", parents=[common], help="duality and brute-force cross-checks")
    o.add_argument("--fixtures", type=int, default=100)
    return p


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def _seed(args, cfg) -> int:
    if args.seed is not None:
        return args.seed
    return int(cfg.get("seed", 0))


def _synthesize(args, cfg, out: Path, seed: int):
    from .synthesis import value_iteration

    model = build_model(cfg)
    amb, samples = build_ambiguity(cfg, model, seed)
    grid = build_grid(cfg, model)
    solver = build_solver(cfg)
    spec = spec_kind_for(model, getattr(args, "spec", None) or cfg.get("spec"))
    interp = cfg.get("grid", {}).get("interpolation", "multilinear")
    key_cfg = {k: cfg.get(k) for k in ("model", "ambiguity", "grid", "solver")}
    key_cfg.update(seed=seed, spec=spec)
    key = config_hash(key_cfg)
    cache = out / f"synth-{key}.npz"
    cached = load_cache(cache, model, key)
    if cached is not None:
        log.info("reusing cached synthesis %s", cache.name)
        vg, policy = cached
    else:
        vg, policy = value_iteration(model, amb, grid, solver, spec, interp, args.workers)
        save_cache(cache, key, vg, policy)
    return model, amb, samples, grid, spec, vg, policy, key, cache


def cmd_synth(args, cfg) -> int:
    from .synthesis import min_over_initial

    out = Path(args.output_dir)
    seed = _seed(args, cfg)
    model, amb, samples, grid, spec, vg, policy, key, cache = _synthesize(args, cfg, out, seed)
    outputs = [cache]
    cols, rows = value_grid_table(vg)
    outputs.append(write_csv(out / "values.csv", cols, rows))
    cols, rows = policy_table(policy)
    outputs.append(write_csv(out / "policy.csv", cols, rows))
    if samples is not None:
        outputs.append(write_csv(out / "nominal_samples.csv", [f"w{i + 1}" for i in range(samples.shape[1])], samples))
    outputs.append(write_csv(out / "nominal.csv", ["atom", "probability"],
                             [[" ".join(repr(float(c)) for c in a), p] for a, p in zip(amb.nominal.atoms, amb.nominal.probs)]))
    vmin, where = min_over_initial(vg, model, cfg.get("evaluation", {}).get("x0_resolution", 0.01))
    summary = (f"{spec} synthesis for {model.name}: {grid.size} nodes, horizon {model.horizon}, "
               f"radius {amb.radius}, {amb.nominal.size} atoms\n"
               f"min over X0 of v0 = {vmin:.6f} at {where.tolist()}\n"
               f"clamped queries: {vg.diagnostics['clamped_queries']}\n")
    (out / "synth_summary.txt").write_text(summary)
    outputs.append(out / "synth_summary.txt")
    write_manifest(out / "synth_manifest.json", "synth", cfg, seed, outputs, {"cache_key": key})
    print(summary, end="")
    return EXIT_OK


def cmd_eval(args, cfg) -> int:
    from .synthesis import evaluate_fixed_distribution, min_over_initial, threshold_policy

    out = Path(args.output_dir)
    seed = _seed(args, cfg)
    model, amb, _, grid, spec, vg, policy, key, cache = _synthesize(args, cfg, out, seed)
    sec = cfg.get("evaluation", {})
    rule = args.policy or sec.get("policy", "argmax")
    alpha = args.alpha if args.alpha is not None else float(sec.get("alpha", 0.9))
    if rule == "threshold":
        policy = threshold_policy(vg, alpha, int(sec.get("preferred_input", 0)))
    truth = build_distribution(sec.get("distribution"), model)
    fine = discretize(truth, int(sec.get("atoms", 201)))
    interp = cfg.get("grid", {}).get("interpolation", "multilinear")
    ev = evaluate_fixed_distribution(model, policy, fine, grid, spec, interp)
    res = float(sec.get("x0_resolution", 0.01))
    pmin, where = min_over_initial(ev, model, res)
    from .synthesis import initial_probes, query_value

    probes = initial_probes(model, res)
    vals = np.atleast_1d(query_value(ev, 0, probes))
    outputs = [write_csv(out / "evaluation.csv", [f"x{d + 1}" for d in range(model.state_dim)] + ["probability"],
                         [[*p, v] for p, v in zip(probes, vals)])]
    cols, rows = value_grid_table(ev)
    outputs.append(write_csv(out / "evaluation_values.csv", cols, rows))
    summary = (f"policy rule {rule} (alpha {alpha}), true distribution {type(truth).__name__} with {fine.size} atoms\n"
               f"min over X0 = {pmin:.6f} at {where.tolist()}; success (>= alpha): {pmin >= alpha}\n")
    (out / "eval_summary.txt").write_text(summary)
    outputs.append(out / "eval_summary.txt")
    write_manifest(out / "eval_manifest.json", "eval", cfg, seed, outputs, {"cache_key": key})
    print(summary, end="")
    return EXIT_OK


def cmd_simulate(args, cfg) -> int:
    from .harness import DESK_TRIALS, FULL_TRIALS, SimulationConfig, monte_carlo

    out = Path(args.output_dir)
    seed = _seed(args, cfg)
    sec = cfg.get("simulation", {})
    trials = args.trials or (FULL_TRIALS if args.paper_scale else int(sec.get("trials", DESK_TRIALS)))
    fixture_name = args.fixture or cfg.get("certificate", {}).get("fixture")
    if fixture_name:
        from .certificates import load_fixture

        fx = load_fixture(fixture_name)
        model = fx.model() if "model" not in cfg else build_model(cfg)
        policy = fx.candidate
        dist_sec = sec.get("distribution") or {"kind": "gaussian", "mean": 0.0, "std": fx.true_std}
        spec = "safety"
    elif "certificate" in cfg:
        model = build_model(cfg)
        policy, _ = build_certificate(cfg["certificate"])
        dist_sec = sec.get("distribution")
        spec = sec.get("spec", "safety")
    else:
        model, _, _, _, spec, vg, policy, _, _ = _synthesize(args, cfg, out, seed)
        ev_sec = cfg.get("evaluation", {})
        if ev_sec.get("policy") == "threshold":
            from .synthesis import threshold_policy

            policy = threshold_policy(vg, float(ev_sec.get("alpha", 0.9)), int(ev_sec.get("preferred_input", 0)))
        dist_sec = sec.get("distribution")
        spec = sec.get("spec", spec)
    truth = build_distribution(dist_sec, model)
    x0 = sec.get("x0")
    sim = SimulationConfig(
        trials=trials, seed=seed, true_distribution=truth, spec_kind=spec,
        initial=sec.get("initial", "fixed" if x0 is not None else "uniform"),
        x0=tuple(np.atleast_1d(x0).astype(float)) if x0 is not None else None,
        grid_resolution=float(sec.get("grid_resolution", 0.01)),
        record_trajectories=bool(args.log), workers=args.workers,
    )
    rep = monte_carlo(model, policy, sim)
    lo, hi = rep.wilson_interval_95
    outputs = [write_csv(out / "simulation.csv",
                         ["trials", "successes", "rate", "wilson_lo", "wilson_hi", "overflowed"],
                         [[rep.trials, rep.successes, rep.rate, lo, hi, rep.overflowed]])]
    if args.log:
        n = model.state_dim
        cols = ["trial", "success"] + [f"t{t}_x{d + 1}" for t in range(model.horizon + 1) for d in range(n)]
        rows = ([k, bool(rep.success_flags[k]), *rep.trajectories[k].ravel()] for k in range(rep.trials))
        path = write_csv(out / "trajectories.csv", cols, rows)
        rep.log_path = str(path)
        outputs.append(path)
    write_manifest(out / "simulate_manifest.json", "simulate", cfg, seed, outputs,
                   {"trials": trials, "fixture": fixture_name})
    print(f"{spec} rate {rep.rate:.4f} ({rep.successes}/{rep.trials}), 95% Wilson [{lo:.4f}, {hi:.4f}]"
          + (f", {rep.overflowed} trajectories overflowed" if rep.overflowed else ""))
    return EXIT_OK


def cmd_check_cert(args, cfg) -> int:
    from .certificates import DEFAULT_MARGIN_TOLERANCE, FIXTURE_SEED, check_drcbc
    from .model import Box

    out = Path(args.output_dir)
    seed = _seed(args, cfg)
    sec = dict(cfg.get("certificate", {}))
    if args.fixture:
        sec["fixture"] = args.fixture
    if not sec:
        raise ConfigError("check-cert needs --fixture or a [certificate] section")
    cand, fx = build_certificate(sec)
    if fx is not None:
        model = fx.model() if "model" not in cfg else build_model(cfg)
        amb = fx.ambiguity(int(sec.get("nominal_seed", FIXTURE_SEED)))
        if "radius" in sec:
            amb = AmbiguitySet(amb.nominal, float(sec["radius"]), amb.order)
        box = fx.verify_box
    else:
        model = build_model(cfg)
        amb, _ = build_ambiguity(cfg, model, seed)
        box = None
    if "verify_box" in sec:
        box = Box(tuple(sec["verify_box"]["lower"]), tuple(sec["verify_box"]["upper"]))
    if box is None:
        box = model.working_box
    if box is None:
        raise ConfigError("a verification box is required")
    tol = args.margin_tolerance or float(sec.get("margin_tolerance", DEFAULT_MARGIN_TOLERANCE))
    report = check_drcbc(cand, model, amb, box,
                         args.state_points or sec.get("state_points"),
                         args.disturbance_points or sec.get("disturbance_points"),
                         build_solver(cfg), tol, args.workers)
    outputs = [write_csv(out / f"cert_{cand.name}.csv", ["condition", "passed", "worst_margin", "worst_point", "probes"],
                         report.rows())]
    text = f"certificate {cand.name} on {model.name}\n" + report.summary() + "\n"
    (out / f"cert_{cand.name}.txt").write_text(text)
    outputs.append(out / f"cert_{cand.name}.txt")
    write_manifest(out / f"cert_{cand.name}_manifest.json", "check-cert", cfg, seed, outputs,
                   {"nominal_atoms": amb.nominal.atoms.ravel().tolist()})
    print(text, end="")
    return EXIT_OK if report.overall else EXIT_FAIL


def cmd_study(args, cfg) -> int:
    from .harness import DEFAULT_GROUPS, StudyConfig, StudyReport, run_group_study

    out = Path(args.output_dir)
    seed = _seed(args, cfg)
    sec = dict(cfg.get("study", {}))
    groups = tuple(tuple(g) for g in sec.pop("groups", DEFAULT_GROUPS))
    study = StudyConfig(groups=groups, solver=build_solver(cfg), seed=seed, workers=args.workers, **sec)
    if args.groups:
        try:
            study = study.subset(s for s in args.groups.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad --groups {args.groups!r}") from exc
    if args.paper_scale:
        study = study.full_scale()
    if args.repetitions:
        study = replace(study, repetitions=args.repetitions)
    report = run_group_study(study)
    outputs = [
        write_csv(out / "study_repetitions.csv", StudyReport.ROW_COLUMNS, report.rows),
        write_csv(out / "study_groups.csv", StudyReport.AGGREGATE_COLUMNS, report.aggregates),
    ]
    study_dict = asdict(study)
    write_manifest(out / "study_manifest.json", "study", cfg, seed, outputs, {"study": study_dict})
    for a in report.aggregates:
        print(f"group {a['group']} (N={a['samples']}, radius={a['radius']}) {a['method']:>8}: "
              f"success {a['success_rate']:.0%}, avg min prob {a['average_min_probability']:.4f} "
              f"(successes only {a['average_min_probability_successes']:.4f}), failed runs {a['failed_runs']}")
    return EXIT_OK


def cmd_oracle(args, cfg) -> int:
    from .oracles import duality_suite, game_suite

    out = Path(args.output_dir)
    seed = _seed(args, cfg)
    duals = duality_suite(args.fixtures, seed)
    games = game_suite(seed=seed)
    outputs = [
        write_csv(out / "oracle_duality.csv", ["fixture", "grid_points", "atoms", "radius", "order", "dual", "primal", "gap"], duals),
        write_csv(out / "oracle_game.csv", ["spec", "target", "radius", "order", "horizon", "gap"], games),
    ]
    write_manifest(out / "oracle_manifest.json", "oracle", cfg, seed, outputs)
    dual_gap = max(d["gap"] for d in duals)
    game_gap = max(g["gap"] for g in games)
    ok = dual_gap <= 1e-6 and game_gap <= 1e-6
    print(f"duality: {len(duals)} fixtures, max gap {dual_gap:.3e}\n"
          f"game tree vs value iteration: {len(games)} instances, max gap {game_gap:.3e}\n"
          f"{'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "synth": cmd_synth,
    "eval": cmd_eval,
    "simulate": cmd_simulate,
    "check-cert": cmd_check_cert,
    "study": cmd_study,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, KeyError, TypeError, ValueError) as exc:
        print(f"drsynth: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
