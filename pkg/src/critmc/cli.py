"""``critmc`` command-line entry point.

Data goes to ``--out`` (or stdout); the one-line summary goes to stderr.
A run manifest is written next to ``--out`` as ``<out>.manifest.json``
(or to ``--manifest``); without an output file it is printed to stderr.

Exit codes: 0 success, 1 usage error, 2 failed acceptance check.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import math
import sys

import numpy as np

from . import coalescent, experiments, exploration, fluid, io
from .rules import RuleError, UnknownRuleError, load_rule
from .seeding import derive_seed

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2


class UsageError(Exception):
    pass


def _parser():
    p = argparse.ArgumentParser(prog="critmc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", metavar="command")

    def common(sp, config=True):
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")
        sp.add_argument("--seed", type=int, help="master seed")
        if config:
            sp.add_argument("--config", help="key = value configuration file")

    sp = sub.add_parser("tc", help="critical time and scaling constants")
    common(sp)
    sp.add_argument("--rule")
    sp.add_argument("--tol", type=float)
    sp.add_argument("--trajectory", help="also dump the fluid trajectory as CSV")

    sp = sub.add_parser("simulate", help="snapshots of one or more trajectories")
    common(sp)
    sp.add_argument("--rule")
    sp.add_argument("--n", type=int)
    sp.add_argument("--t", type=float, action="append", dest="times", required=True)
    sp.add_argument("--replicates", type=int)
    sp.add_argument("--top-k", type=int, dest="top_k")
    sp.add_argument("--jsonl", action="store_true", help="line-delimited JSON instead of CSV")

    sp = sub.add_parser("window", help="rescaled snapshots across the critical window")
    common(sp)
    sp.add_argument("--rule")
    sp.add_argument("--n", type=int)
    sp.add_argument("--lambda", type=float, action="append", dest="lambdas")
    sp.add_argument("--replicates", type=int)
    sp.add_argument("--top-k", type=int, dest="top_k")
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--jsonl", action="store_true")

    sp = sub.add_parser("limit", help="excursion/mark samples of the limit object")
    common(sp)
    sp.add_argument("--lambda", type=float, action="append", dest="lambdas")
    sp.add_argument("--step", type=float)
    sp.add_argument("--horizon", type=float)
    sp.add_argument("--replicates", type=int)
    sp.add_argument("--top-k", type=int, dest="top_k")

    sp = sub.add_parser("compare", help="compare window records with limit records")
    common(sp, config=False)
    sp.add_argument("empirical")
    sp.add_argument("reference")
    sp.add_argument("--level", type=float, default=0.01, help="KS rejection level")

    sp = sub.add_parser("amc", help="run the augmented multiplicative coalescent")
    common(sp, config=False)
    sp.add_argument("--state", required=True, help="CSV of mass,surplus lines")
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--replicates", type=int, default=1)
    sp.add_argument("--mode", choices=("gillespie", "graphical"), default="gillespie")

    sp = sub.add_parser("walk-check", help="exploration-walk consistency fuzz")
    common(sp, config=False)
    sp.add_argument("--instances", type=int, default=200)

    sp = sub.add_parser("check-subcritical", help="largest component below t_c")
    common(sp)
    sp.add_argument("--rule")
    sp.add_argument("--n", type=int)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--checkpoints", type=int)
    sp.add_argument("--seeds", type=int)
    sp.add_argument("--bound", type=float, help="fail (exit 2) if any ratio exceeds this")

    sp = sub.add_parser("check-susceptibility", help="susceptibility vs fluid limit")
    common(sp)
    sp.add_argument("--rule")
    sp.add_argument("--n", type=int, action="append", dest="ns")
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--grid-points", type=int, dest="grid_points")
    sp.add_argument("--seeds", type=int, help="seeds per trial (median taken)")
    sp.add_argument("--trials", type=int, default=10)
    sp.add_argument("--min-fraction", type=float, default=0.8,
                    help="with two --n values: required fraction of decreasing trials")
    return p


def _settings(args, defaults):
    """defaults < config file < flags."""
    cfg = dict(defaults)
    if getattr(args, "config", None):
        cfg.update(io.load_config(args.config))
    for key in defaults:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    if "seed" in defaults and args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


@contextlib.contextmanager
def _output(path):
    if path:
        with open(path, "w", newline="") as fh:
            yield fh
    else:
        yield sys.stdout


def _finish(args, manifest, summary):
    if args.out:
        manifest.add_output(args.out)
    if getattr(args, "trajectory", None):
        manifest.add_output(args.trajectory)
    text = manifest.to_json()
    path = args.manifest or (args.out + ".manifest.json" if args.out else None)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text, file=sys.stderr)
    print(summary, file=sys.stderr)


def _rule(name):
    if not name:
        raise UsageError("--rule is required")
    try:
        return load_rule(name)
    except (UnknownRuleError, RuleError) as e:
        raise UsageError(str(e)) from None


def cmd_tc(args, timer):
    cfg = _settings(args, {"rule": None, "tol": 1e-8, "seed": 0})
    rule = _rule(cfg["rule"])
    traj, c = fluid.integrate(rule, cfg["tol"])
    rec = c.to_dict()
    with _output(args.out) as fh:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")
    if args.trajectory:
        with open(args.trajectory, "w", newline="") as fh:
            io.write_csv(fh, traj.columns(), traj.to_rows())
    m = io.RunManifest("tc", cfg, cfg["seed"], timing={"seconds": timer.elapsed()})
    _finish(args, m, f"t_c = {c.t_c:.6f} alpha = {c.alpha:.6f} beta = {c.beta:.6f}")
    return EXIT_OK


def _constants_or_none(rule, tol=1e-8):
    try:
        return fluid.integrate(rule, tol)[1]
    except fluid.FluidError:
        return None


def cmd_simulate(args, timer):
    cfg = _settings(args, {"rule": None, "n": 1000, "replicates": 1, "top_k": 5, "seed": 0})
    rule = _rule(cfg["rule"])
    times = sorted(args.times)
    if times[0] < 0:
        raise UsageError("times must be nonnegative")
    consts = _constants_or_none(rule) or fluid.CriticalConstants(math.nan, 1.0, 1.0, 1.0)
    from .graph_engine import new_process, rescale

    records = []
    for r in range(cfg["replicates"]):
        proc = new_process(rule, cfg["n"], derive_seed(cfg["seed"], "simulate", r))
        for t in times:
            proc.advance_to(t)
            snap = proc.snapshot()
            rr = rescale(snap, consts, cfg["top_k"])
            records.append(experiments.SnapshotRecord(
                r, snap.t, rr.lam, rr.sizes, rr.surpluses, rr.mass_surplus_sum,
                snap.s2bar, snap.s3bar, snap.I))
    _write_window(args, records)
    m = io.RunManifest("simulate", {**cfg, "times": times}, cfg["seed"],
                       timing={"seconds": timer.elapsed()})
    _finish(args, m, f"simulate: {len(records)} snapshots")
    return EXIT_OK


def _write_window(args, records):
    with _output(args.out) as fh:
        if getattr(args, "jsonl", False):
            io.write_jsonl(fh, records)
        else:
            io.write_csv(fh, io.WINDOW_COLUMNS, io.window_rows(records))


def cmd_window(args, timer):
    cfg = _settings(args, {"rule": None, "n": 10 ** 5, "lambdas": [0.0], "replicates": 100,
                           "top_k": 5, "gamma": 0.18, "tol": 1e-8, "seed": 0})
    rule = _rule(cfg["rule"])
    consts = fluid.integrate(rule, cfg["tol"])[1]
    try:
        wc = experiments.WindowConfig(rule=rule, n=cfg["n"], lambdas=sorted(cfg["lambdas"]),
                                      replicates=cfg["replicates"], constants=consts,
                                      gamma=cfg["gamma"], top_k=cfg["top_k"], seed=cfg["seed"])
    except experiments.ConfigError as e:
        raise UsageError(str(e)) from None
    records = experiments.run_window(wc)
    _write_window(args, records)
    m = io.RunManifest("window", {**cfg, "constants": consts.to_dict()}, cfg["seed"],
                       timing={"seconds": timer.elapsed()})
    _finish(args, m, f"window: {len(records)} snapshots, t_c = {consts.t_c:.6f}")
    return EXIT_OK


def cmd_limit(args, timer):
    cfg = _settings(args, {"lambdas": [0.0], "step": 1e-3, "horizon": None, "replicates": 1000,
                           "top_k": 5, "seed": 0})
    try:
        records = experiments.run_limit_reference(cfg["lambdas"], cfg["replicates"], cfg["step"],
                                                  cfg["horizon"], cfg["seed"], cfg["top_k"])
    except ValueError as e:
        raise UsageError(str(e)) from None
    with _output(args.out) as fh:
        io.write_csv(fh, io.LIMIT_COLUMNS, io.limit_rows(records))
    m = io.RunManifest("limit", cfg, cfg["seed"], timing={"seconds": timer.elapsed()})
    _finish(args, m, f"limit: {len(records)} samples")
    return EXIT_OK


def cmd_compare(args, timer):
    with open(args.empirical) as fh:
        emp = io.read_records(fh)
    with open(args.reference) as fh:
        ref = io.read_records(fh)
    try:
        rep = experiments.compare(emp, ref)
    except ValueError as e:
        raise UsageError(str(e)) from None
    rep.meta = {"level": args.level, "seconds": timer.elapsed()}
    with _output(args.out) as fh:
        fh.write(json.dumps(rep.to_dict(), sort_keys=True, default=io._json_default) + "\n")
    ok = all(s.ks_pvalue >= args.level and abs(s.surplus_mean_z) <= 3 for s in rep.per_lambda)
    m = io.RunManifest("compare", {"empirical": args.empirical, "reference": args.reference,
                                   "level": args.level}, 0, timing={"seconds": timer.elapsed()})
    worst = min(s.ks_pvalue for s in rep.per_lambda)
    _finish(args, m, f"compare: {'PASS' if ok else 'FAIL'} (min KS p = {worst:.4g})")
    return EXIT_OK if ok else EXIT_FAILED


def _read_state(path):
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if lineno == 1 and parts[0].lower() == "mass":
                continue
            try:
                pairs.append((float(parts[0]), int(parts[1]) if len(parts) > 1 else 0))
            except (ValueError, IndexError):
                raise UsageError(f"{path}:{lineno}: expected mass,surplus") from None
    try:
        return coalescent.AugmentedState.from_pairs(pairs)
    except ValueError as e:
        raise UsageError(str(e)) from None


def cmd_amc(args, timer):
    z = _read_state(args.state)
    seed = args.seed or 0
    run = coalescent.amc_run if args.mode == "gillespie" else coalescent.graphical_construction
    finals = [run(z, args.t, derive_seed(seed, f"amc:{args.mode}", r))
              for r in range(args.replicates)]
    with _output(args.out) as fh:
        for k, s in enumerate(finals):
            if k:
                fh.write("\n")
            fh.write("mass,surplus\n")
            for m_, y in s.pairs():
                fh.write(f"{m_!r},{y}\n")
    blocks = np.array([len(s) for s in finals])
    summary = {"replicates": args.replicates, "mode": args.mode, "t": args.t,
               "mean_blocks": float(blocks.mean()) if len(blocks) else 0.0,
               "mean_total_surplus": float(np.mean([s.total_surplus for s in finals]))
               if finals else 0.0}
    m = io.RunManifest("amc", {"state": args.state, "t": args.t, "mode": args.mode,
                               "replicates": args.replicates}, seed,
                       timing={"seconds": timer.elapsed()})
    _finish(args, m, "amc: " + json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_walk_check(args, timer):
    seed = args.seed or 0
    failures = []
    for i in range(args.instances):
        masses, q = exploration.fuzz_instance(seed, i)
        res = exploration.bfs_walk_build(masses, q, derive_seed(seed, "walk", i))
        probs = exploration.consistency_problems(res)
        viol = exploration.rate_bound_violation(res)
        if viol > 1e-12:
            probs.append(f"mark-rate bound exceeded by {viol!r}")
        if probs:
            failures.append({"instance": i, "q": q, "masses": masses.tolist(), "problems": probs})
    with _output(args.out) as fh:
        fh.write(json.dumps({"instances": args.instances, "failures": failures}) + "\n")
    m = io.RunManifest("walk-check", {"instances": args.instances}, seed,
                       timing={"seconds": timer.elapsed()})
    status = "PASS" if not failures else f"FAIL ({len(failures)} instances)"
    _finish(args, m, f"walk-check: {status}")
    return EXIT_OK if not failures else EXIT_FAILED


def cmd_check_subcritical(args, timer):
    cfg = _settings(args, {"rule": None, "n": 10 ** 5, "gamma": 0.18, "checkpoints": 20,
                           "seeds": 10, "seed": 0})
    rule = _rule(cfg["rule"])
    consts = fluid.integrate(rule, 1e-8)[1]
    tn = consts.t_c - cfg["n"] ** (-cfg["gamma"])
    cps = np.linspace(0.0, tn, cfg["checkpoints"])
    maxima = [experiments.check_subcritical(rule, cfg["n"], cfg["gamma"], cps,
                                            derive_seed(cfg["seed"], "subcritical", s), consts)[0]
              for s in range(cfg["seeds"])]
    out = {"max_ratio": max(maxima), "per_seed": maxima, "bound": args.bound,
           "checkpoints": cps.tolist()}
    with _output(args.out) as fh:
        fh.write(json.dumps(out, default=io._json_default) + "\n")
    ok = args.bound is None or max(maxima) <= args.bound
    m = io.RunManifest("check-subcritical", cfg, cfg["seed"], timing={"seconds": timer.elapsed()})
    _finish(args, m, f"check-subcritical: max ratio = {max(maxima):.4g}"
            + ("" if args.bound is None else f" ({'PASS' if ok else 'FAIL'})"))
    return EXIT_OK if ok else EXIT_FAILED


def susceptibility_trials(rule, ns, gamma, grid_points, seeds, trials, master, trajectory=None):
    """Per n, per trial: medians over ``seeds`` runs of both sups."""
    if trajectory is None:
        trajectory = fluid.integrate(rule, 1e-8)[0]
    out = {}
    for n in ns:
        grid = experiments.default_checkpoints(trajectory.t_c, n, gamma, grid_points)
        rows = []
        for k in range(trials):
            vals = [experiments.check_susceptibility(
                rule, n, gamma, grid, derive_seed(master, f"susceptibility:{n}", k * seeds + j),
                trajectory) for j in range(seeds)]
            rows.append([float(np.median([v.sup_inv_s2 for v in vals])),
                         float(np.median([v.sup_s3_ratio for v in vals]))])
        out[n] = np.array(rows)
    return out


def cmd_check_susceptibility(args, timer):
    cfg = _settings(args, {"rule": None, "gamma": 0.18, "grid_points": 200, "seeds": 10,
                           "seed": 0})
    ns = args.ns or [10 ** 4, 10 ** 5]
    rule = _rule(cfg["rule"])
    res = susceptibility_trials(rule, ns, cfg["gamma"], cfg["grid_points"], cfg["seeds"],
                                args.trials, cfg["seed"])
    out = {"n": ns, "medians": {str(n): v.tolist() for n, v in res.items()}}
    ok = True
    if len(ns) == 2:
        a, b = res[ns[0]], res[ns[1]]
        frac = float(np.mean(np.all(b < a, axis=1)))
        out["decreasing_fraction"] = frac
        ok = frac >= args.min_fraction
    with _output(args.out) as fh:
        fh.write(json.dumps(out) + "\n")
    m = io.RunManifest("check-susceptibility", {**cfg, "n": ns, "trials": args.trials}, cfg["seed"],
                       timing={"seconds": timer.elapsed()})
    summary = "check-susceptibility: done"
    if len(ns) == 2:
        summary = (f"check-susceptibility: both sups decrease in {out['decreasing_fraction']:.0%}"
                   f" of trials ({'PASS' if ok else 'FAIL'})")
    _finish(args, m, summary)
    return EXIT_OK if ok else EXIT_FAILED


COMMANDS = {
    "tc": cmd_tc, "simulate": cmd_simulate, "window": cmd_window, "limit": cmd_limit,
    "compare": cmd_compare, "amc": cmd_amc, "walk-check": cmd_walk_check,
    "check-subcritical": cmd_check_subcritical,
    "check-susceptibility": cmd_check_susceptibility,
}


def main(argv=None) -> int:
    parser = _parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in COMMANDS:
        if argv and argv[0] in ("-h", "--help"):
            parser.print_help()
            return EXIT_OK
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    try:
        return COMMANDS[args.command](args, io.Timer())
    except (UsageError, io.ConfigFileError, fluid.FluidError) as e:
        print(f"critmc {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
