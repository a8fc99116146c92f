"""Command-line entry point: ``vrjpgw <command> [options]``.

Each command writes ``<command>.csv`` and ``<command>.json`` into ``--out``
(a directory), or prints the CSV to stdout when ``--out`` is omitted. The
JSON file is a deterministic function of the arguments; timestamp and wall
time go to ``<command>.timing.json``.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 insufficient data.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .branching import InsufficientData, barrier_exponent, estimate_survival, fit_decay_rate
from .experiments import (
    ConfigError,
    classify,
    emit_mu_curve,
    parse_config,
    run_null_recurrence_probe,
    run_phase_diagram,
)
from .rng import Draws, RngStream
from .sampling import m_infinity_cdf, sample_A_batch
from .scalar_math import critical_c, mu
from .stats import binomial_se, ks_distance, mean_se
from .summary import RunSummary, config_hash, csv_text
from .trees import OffspringDistribution, generate_gw, path_tree, percolate, regular_tree
from .vrjp import StopRule, StructuralError, new_state, run, trace_csv

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_DATA = 0, 2, 3, 4


def _floats(text: str) -> list[float]:
    return [float(s) for s in text.split(",") if s.strip()]


def _ints(text: str) -> list[int]:
    return [int(s) for s in text.split(",") if s.strip()]


def _nu(text: str) -> OffspringDistribution:
    """``"2"`` (regular), ``"1.5"`` (leafless law with that mean) or ``"0:0.2,2:0.5,3:0.3"``."""
    if ":" in text:
        pairs = [p.split(":") for p in text.split(",") if p.strip()]
        return OffspringDistribution(tuple((int(k), float(p)) for k, p in pairs))
    return OffspringDistribution.with_mean(float(text))


def _meta(cmd: str, seed: int, cfg: dict) -> dict:
    return {"command": cmd, "seed": seed, "config_hash": config_hash(cfg)}


def _config_of(args) -> dict:
    skip = {"func", "out", "config", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# --- commands -------------------------------------------------------------------


def cmd_mu(args):
    if args.c is not None:
        cfg = _config_of(args)
        summ = RunSummary("mu", cfg, args.seed)
        rows = []
        for c in args.c:
            v = mu(c, args.method)
            rows.append((c, v.mu, v.err_bound))
            summ.add(f"mu({c})", v.mu, 1, v.err_bound)
        return summ, csv_text(["c", "mu", "err_bound"], rows, _meta("mu", args.seed, cfg))
    summ, text = emit_mu_curve(args.c_min, args.c_max, args.steps, method=args.method, spacing=args.spacing)
    summ.seed = args.seed
    return summ, text


def cmd_critical_c(args):
    cfg = _config_of(args)
    summ = RunSummary("critical-c", cfg, args.seed)
    rows = []
    for b in args.b:
        c = critical_c(b, tol=args.tol, method=args.method)
        bm = b * mu(c, args.method).mu
        rows.append((b, c, bm))
        summ.add(f"critical_c({b})", c, 1, args.tol)
    return summ, csv_text(["b", "critical_c", "b_mu"], rows, _meta("critical-c", args.seed, cfg))


def cmd_sample(args):
    cfg = _config_of(args)
    rng = RngStream(args.seed)
    batch = sample_A_batch(args.c, args.t, rng.child("sample"), size=args.replicas, method=args.method)
    summ = RunSummary("sample", cfg, args.seed)
    n = args.replicas
    atom = float(batch.hit_atom.mean())
    summ.add("atom_fraction", atom, n, binomial_se(atom, n))
    summ.data["atom_exact"] = math.exp(-args.c * (args.t - args.c))
    m, se = mean_se(batch.values)
    summ.add("mean", m, n, se)
    summ.data["mean_exact"] = args.t
    summ.add("ks_scaled_vs_limit", ks_distance(batch.values / args.t, lambda s: m_infinity_cdf(args.c, s)), n)
    rows = zip(batch.values.tolist(), batch.jumps.tolist())
    return summ, csv_text(["value", "jumps"], rows, _meta("sample", args.seed, cfg))


def _tree(args, rng: RngStream, r: int):
    if args.tree == "path":
        tree = path_tree(args.depth)
    elif args.tree == "regular":
        tree = regular_tree(int(args.b), args.depth)
    else:
        tree = generate_gw(_nu(args.nu), args.depth, rng.child("tree", r if args.annealed else 0),
                           eager=False)
    if args.eta > 0:
        tree = percolate(tree, args.eta, rng.child("percolation", r if args.annealed else 0))
    return tree


def cmd_simulate(args):
    cfg = _config_of(args)
    rng = RngStream(args.seed)
    stop = StopRule(args.stop, args.value)
    summ = RunSummary("simulate", cfg, args.seed)
    rows = []
    trace_text = None
    for r in range(args.replicas):
        tree = _tree(args, rng, r)
        res = run(tree, args.c, stop, Draws(rng.child("walk", r)), max_events=args.max_events,
                  trace=args.trace and r == 0)
        st = res.state
        if res.trace is not None:
            trace_text = trace_csv(res)
        rows.append((r, res.reason, st.events, st.clock, args.c + st.occupation.get(tree.root, 0.0),
                     st.max_height, len(st.visit_counts)))
    done = sum(row[1] != "budget_exceeded" for row in rows)
    summ.add("completed_fraction", done / args.replicas, args.replicas)
    if done < args.replicas:
        summ.warnings.append(f"{args.replicas - done} replicas exhausted the event budget")
    for j, name in ((3, "clock"), (4, "root_local_time"), (5, "max_height")):
        m, se = mean_se(np.array([row[j] for row in rows], dtype=float))
        summ.add(name, m, args.replicas, se)
    if trace_text is not None:
        summ.data["trace_csv"] = trace_text
    header = ["replica", "reason", "events", "clock", "root_local_time", "max_height", "visited"]
    return summ, csv_text(header, rows, _meta("simulate", args.seed, cfg))


def cmd_survival(args):
    cfg = _config_of(args)
    nu = _nu(args.nu)
    if args.eta > 0:
        nu = nu.thinned(args.eta)
    est = estimate_survival(args.x0, nu, args.c, args.generations, args.replicas,
                            RngStream(args.seed).child("survival"), cap=args.cap, on_cap=args.on_cap)
    summ = RunSummary("survival", cfg, args.seed)
    summ.add("p_hat", est.p_hat, est.replicas, est.stderr)
    summ.data["offspring_mean"] = nu.mean
    summ.data["cap_hits"] = est.cap_hits
    if est.cap_hits:
        summ.warnings.append(f"{est.cap_hits} replicas hit the population cap ({args.on_cap})")
    if nu.mean > 1:
        summ.data["classification"] = classify(nu.mean, args.c).value
    return summ, est.to_csv(_meta("survival", args.seed, cfg))


def cmd_barrier(args):
    cfg = _config_of(args)
    fit = barrier_exponent(args.c, args.x, (args.n_min, args.n_max), args.replicas,
                           RngStream(args.seed).child("barrier"), chain=args.chain,
                           prefactor=args.prefactor, bootstrap=args.bootstrap)
    summ = RunSummary("barrier", cfg, args.seed)
    half = (fit.ci[1] - fit.ci[0]) / 3.92
    summ.add("rate", fit.rate, fit.replicas, half)
    summ.data["ci95"] = list(fit.ci)
    summ.data["power"] = fit.power
    ns = np.arange(args.n_min, args.n_max + 1)
    summ.data["rate_pure_slope"] = fit_decay_rate(ns, fit.survivors[args.n_min:], fit.replicas, "none")[0]
    summ.data["mu_c"] = mu(args.c).mu
    return summ, fit.to_csv(_meta("barrier", args.seed, cfg))


def _experiment_config(args, keys: Sequence[str]) -> dict:
    cfg = parse_config(open(args.config).read()) if args.config else {}
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    cfg["seed"] = args.seed
    return cfg


def cmd_phase_diagram(args):
    cfg = _experiment_config(args, ["b_values", "c_values", "x0", "generations", "replicas", "cap"])
    return run_phase_diagram(cfg)


def cmd_null_recurrence(args):
    cfg = _experiment_config(args, ["c", "t", "b", "budgets", "replicas", "generations"])
    return run_null_recurrence_probe(cfg)


# --- parser ---------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, replicas: Optional[int]):
    p.add_argument("--seed", type=int, default=1, help="master seed (64-bit)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--replicas", type=int, default=replicas)
    p.add_argument("--config", help="flat key = value file; keys are option names with underscores")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vrjpgw", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mu", help="tabulate mu(c)")
    _common(p, 1)
    p.add_argument("--c", type=_floats, help="comma-separated c values (overrides the grid)")
    p.add_argument("--c-min", type=float, default=0.05)
    p.add_argument("--c-max", type=float, default=5.0)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--spacing", choices=["linear", "log"], default="linear")
    p.add_argument("--method", choices=["direct", "gaussian", "bessel"], default="gaussian")
    p.set_defaults(func=cmd_mu)

    p = sub.add_parser("critical-c", help="solve b mu(c) = 1")
    _common(p, 1)
    p.add_argument("--b", type=_floats, default=[2.0])
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--method", choices=["direct", "gaussian", "bessel"], default="gaussian")
    p.set_defaults(func=cmd_critical_c)

    p = sub.add_parser("sample", help="draw A_c(t)")
    _common(p, 10000)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--t", type=float, default=2.0)
    p.add_argument("--method", choices=["mixture", "event"], default="mixture")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("simulate", help="run VRJP(c) on a tree")
    _common(p, 10)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--tree", choices=["regular", "gw", "path"], default="regular")
    p.add_argument("--b", type=float, default=2)
    p.add_argument("--nu", default="2", help="offspring law for --tree gw")
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--eta", type=float, default=0.0, help="percolation removal probability")
    p.add_argument("--annealed", action="store_true", help="fresh tree per replica")
    p.add_argument("--stop", choices=list(StopRule._KINDS), default="hit_height")
    p.add_argument("--value", type=float, default=10)
    p.add_argument("--max-events", type=int, default=10**6)
    p.add_argument("--trace", action="store_true", help="keep the event trace of replica 0")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("survival", help="survival probability of the branching chain F")
    _common(p, 1000)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--nu", default="2")
    p.add_argument("--x0", type=float, default=10.0)
    p.add_argument("--generations", type=int, default=25)
    p.add_argument("--eta", type=float, default=0.0, help="percolation removal probability")
    p.add_argument("--cap", type=int, default=1000)
    p.add_argument("--on-cap", choices=["survive", "subsample"], default="subsample")
    p.set_defaults(func=cmd_survival)

    p = sub.add_parser("barrier", help="decay rate of barrier survival for Y = log Z")
    _common(p, 10**6)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--x", type=float, default=0.0)
    p.add_argument("--chain", choices=["Y", "iid"], default="iid")
    p.add_argument("--n-min", type=int, default=10)
    p.add_argument("--n-max", type=int, default=30)
    p.add_argument("--prefactor", choices=["none", "fixed", "free"], default="fixed")
    p.add_argument("--bootstrap", type=int, default=200)
    p.set_defaults(func=cmd_barrier)

    p = sub.add_parser("phase-diagram", help="classification versus survival over a (b, c) grid")
    _common(p, None)
    p.add_argument("--b-values", type=_floats)
    p.add_argument("--c-values", type=_floats)
    p.add_argument("--x0", type=float)
    p.add_argument("--generations", type=int)
    p.add_argument("--cap", type=int)
    p.set_defaults(func=cmd_phase_diagram)

    p = sub.add_parser("null-recurrence", help="truncated means of the root hitting time xi(t)")
    _common(p, None)
    p.add_argument("--c", type=float)
    p.add_argument("--t", type=float)
    p.add_argument("--b", type=int)
    p.add_argument("--budgets", type=_ints)
    p.add_argument("--generations", type=int)
    p.set_defaults(func=cmd_null_recurrence)
    return ap


def _apply_config(args, parser_defaults: dict) -> None:
    """Fill options left at their defaults from ``--config`` (simple commands only)."""
    cfg = parse_config(open(args.config).read())
    for k, v in cfg.items():
        if k not in parser_defaults:
            raise ConfigError(f"unknown config key {k!r}")
        if getattr(args, k) == parser_defaults[k]:
            setattr(args, k, v)


def _validate(args) -> None:
    if args.replicas is not None and args.replicas < 1:
        raise ConfigError("--replicas must be positive")
    if not 0 <= args.seed < 2**64:
        raise ConfigError("--seed must be a 64-bit unsigned integer")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.perf_counter()
    try:
        if args.config and args.command not in ("phase-diagram", "null-recurrence"):
            sub = parser._subparsers._group_actions[0].choices[args.command]
            defaults = {a.dest: a.default for a in sub._actions if a.dest not in ("help", "config", "out")}
            _apply_config(args, defaults)
        _validate(args)
        summ, text = args.func(args)
    except InsufficientData as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ArithmeticError, StructuralError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    summ.wall_time_s = time.perf_counter() - started
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        base = os.path.join(args.out, args.command)
        with open(base + ".csv", "w", newline="") as fh:
            fh.write(text)
        with open(base + ".json", "w") as fh:
            fh.write(summ.to_json(volatile=False))
        with open(base + ".timing.json", "w") as fh:
            json.dump({"timestamp": summ.timestamp or time.strftime("%Y-%m-%dT%H:%M:%S%z"),
                       "wall_time_s": round(summ.wall_time_s, 3)}, fh, sort_keys=True)
            fh.write("\n")
    else:
        sys.stdout.write(text)
    for w in summ.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
