"""Batch harness: classification, mu-curve, phase diagram and null-recurrence probe.

Every experiment is a pure function of its config dict (master seed
included). Outputs are a :class:`~vrjpgw.summary.RunSummary` plus CSV text
whose leading comment lines carry the seed and config hash.
"""

from __future__ import annotations

import json
import math
import time
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Optional

import numpy as np

from .branching import estimate_survival, z_chain
from .rng import Draws, RngStream
from .scalar_math import Quadrature, mu
from .summary import RunSummary, config_hash, csv_text
from .trees import OffspringDistribution, generate_gw, path_tree, regular_tree
from .vrjp import StopRule, new_state, recurrence_diagnostic, run

__all__ = [
    "Phase",
    "classify",
    "emit_mu_curve",
    "run_phase_diagram",
    "run_null_recurrence_probe",
    "parse_config",
    "dump_config",
    "ConfigError",
    "DEFAULT_BAND",
]

DEFAULT_BAND = 1e-3


class ConfigError(ValueError):
    pass


class Phase(str, Enum):
    RECURRENT = "recurrent"
    TRANSIENT = "transient"
    CRITICAL = "critical"


def classify(b: float, c: float, tol: float = DEFAULT_BAND, method: str = "gaussian") -> Phase:
    """Phase of VRJP(c) on a Galton-Watson tree with mean b, from the sign of b mu(c) - 1.

    ``critical`` is only a numerical-indeterminacy band of half-width ``tol``;
    exact criticality b mu(c) = 1 belongs to the recurrent phase.
    """
    if not (math.isfinite(b) and math.isfinite(c)):
        raise ValueError("b and c must be finite")
    if b <= 1:
        raise ValueError(f"b must exceed 1, got {b}")
    bm = b * mu(c, method).mu
    if bm < 1 - tol:
        return Phase.RECURRENT
    if bm > 1 + tol:
        return Phase.TRANSIENT
    return Phase.CRITICAL


# --- config files -------------------------------------------------------------


def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines; values are JSON when they parse, strings otherwise."""
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError:
            out[key] = val
    return out


def dump_config(cfg: dict) -> str:
    return "".join(f"{k} = {json.dumps(cfg[k], sort_keys=True)}\n" for k in sorted(cfg))


def _meta(summary: RunSummary) -> dict:
    return {"command": summary.command, "seed": summary.seed, "config_hash": config_hash(summary.config)}


def _finish(summary: RunSummary, started: float) -> RunSummary:
    summary.wall_time_s = time.perf_counter() - started
    summary.timestamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return summary


# --- mu curve -----------------------------------------------------------------


def emit_mu_curve(c_min: float, c_max: float, steps: int, out: Optional[str] = None,
                  method: str = "gaussian", spacing: str = "linear",
                  q: Quadrature = Quadrature()) -> tuple[RunSummary, str]:
    """Tabulate mu on ``steps`` points of [c_min, c_max]; CSV columns c, mu, err_bound."""
    if not 0 < c_min < c_max or steps < 2:
        raise ConfigError("need 0 < c_min < c_max and steps >= 2")
    started = time.perf_counter()
    cs = np.geomspace(c_min, c_max, steps) if spacing == "log" else np.linspace(c_min, c_max, steps)
    rows = []
    for c in cs:
        v = mu(float(c), method, q)
        rows.append((float(c), v.mu, v.err_bound))
    cfg = {"c_min": c_min, "c_max": c_max, "steps": steps, "method": method, "spacing": spacing}
    summ = RunSummary("mu", cfg, 0)
    mus = [r[1] for r in rows]
    if any(b <= a for a, b in zip(mus, mus[1:])):
        summ.warnings.append("mu column is not strictly increasing")
    summ.data["mu_min"], summ.data["mu_max"] = mus[0], mus[-1]
    text = csv_text(["c", "mu", "err_bound"], rows, _meta(summ))
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    return _finish(summ, started), text


# --- phase diagram ------------------------------------------------------------

PHASE_DEFAULTS = {
    "b_values": [2.0],
    "c_values": [1.0],
    "x0": 10.0,
    "generations": 25,
    "replicas": 400,
    "cap": 1000,
    "on_cap": "subsample",
    "diag_replicas": 4,
    "diag_checkpoints": [1000, 4000, 16000],
    "band": DEFAULT_BAND,
    "transient_threshold": 0.5,
    "recurrent_threshold": 0.05,
    "seed": 1,
}


def _with_defaults(cfg: dict, defaults: dict) -> dict:
    unknown = set(cfg) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    out = dict(defaults)
    out.update(cfg)
    return out


def run_phase_diagram(config: dict) -> tuple[RunSummary, str]:
    """For each (b, c) cell: classify, estimate survival of F, and record a walk diagnostic.

    A cell agrees when a transient classification comes with survival
    >= ``transient_threshold``, or a recurrent one with survival <=
    ``recurrent_threshold``. Critical-band cells get no agreement flag.
    Failures are recorded per cell and the sweep continues.
    """
    cfg = _with_defaults(config, PHASE_DEFAULTS)
    started = time.perf_counter()
    root = RngStream(int(cfg["seed"]))
    summ = RunSummary("phase-diagram", cfg, int(cfg["seed"]))
    summ.data["note"] = "exact criticality b*mu(c) = 1 is recurrent; 'critical' is a numerical band"
    rows = []
    for i, b in enumerate(cfg["b_values"]):
        for j, c in enumerate(cfg["c_values"]):
            cell_rng = root.child("cell", i, j)
            row: dict[str, Any] = {"b": float(b), "c": float(c)}
            try:
                b_mu = b * mu(c).mu
                phase = classify(b, c, cfg["band"])
                nu = OffspringDistribution.with_mean(b)
                est = estimate_survival(cfg["x0"], nu, c, int(cfg["generations"]), int(cfg["replicas"]),
                                        cell_rng.child("survival"), cap=int(cfg["cap"]),
                                        on_cap=cfg["on_cap"])
                checkpoints = cfg["diag_checkpoints"]
                diag = recurrence_diagnostic(
                    lambda r: generate_gw(nu, None, cell_rng.child("tree", r)),
                    c, checkpoints, int(cfg["diag_replicas"]), cell_rng.child("diag"))
                prof = diag.data["profile"]
                if phase is Phase.TRANSIENT:
                    agree: Optional[bool] = est.p_hat >= cfg["transient_threshold"]
                elif phase is Phase.RECURRENT:
                    agree = est.p_hat <= cfg["recurrent_threshold"]
                else:
                    agree = None
                row.update(b_mu=b_mu, classification=phase.value, p_hat=est.p_hat,
                           stderr=est.stderr, cap_hits=est.cap_hits,
                           root_occupation_first=prof[0]["root_occupation_median"],
                           root_occupation_last=prof[-1]["root_occupation_median"],
                           max_height_last=prof[-1]["max_height_median"],
                           agreement="" if agree is None else str(agree).lower(), error="")
                summ.add(f"p_hat[b={b},c={c}]", est.p_hat, est.replicas, est.stderr)
                if est.cap_hits:
                    summ.warnings.append(f"cell b={b} c={c}: {est.cap_hits} population-cap hits")
            except Exception as exc:  # recorded per cell, sweep continues
                row.update(error=f"{type(exc).__name__}: {exc}")
                summ.warnings.append(f"cell b={b} c={c} failed: {exc}")
            rows.append(row)
    header = ["b", "c", "b_mu", "classification", "p_hat", "stderr", "cap_hits",
              "root_occupation_first", "root_occupation_last", "max_height_last", "agreement", "error"]
    summ.data["cells"] = rows
    text = csv_text(header, [[r.get(h, "") for h in header] for r in rows], _meta(summ))
    return _finish(summ, started), text


# --- null recurrence ------------------------------------------------------------

NULL_DEFAULTS = {
    "c": 1.0,
    "t": 2.0,
    "b": 1,
    "budgets": [100, 1000, 10000, 100000],
    "replicas": 200,
    "generations": 5,
    "z_replicas": 100000,
    "depths": [0, 1, 2, 5, 10, 20],
    "seed": 1,
}


def run_null_recurrence_probe(config: dict) -> tuple[RunSummary, str]:
    """Truncated means of xi(t), the time for the root local time to reach t.

    Each replica runs on a regular ``b``-ary tree (``b = 1``: the half line)
    until the root local time hits t or the event budget runs out; the
    truncated mean at budget M averages the clock at min(xi(t), event M).
    Growth with M is evidence (never proof) of E[xi(t)] = inf. The
    per-generation terms b^n (E[Z_n] - c) are estimated alongside.
    """
    cfg = _with_defaults(config, NULL_DEFAULTS)
    c, t, b = float(cfg["c"]), float(cfg["t"]), int(cfg["b"])
    if t < c:
        raise ConfigError("t must be >= c")
    started = time.perf_counter()
    root = RngStream(int(cfg["seed"]))
    budgets = sorted(int(m) for m in cfg["budgets"])
    reps = int(cfg["replicas"])
    clocks = np.zeros((reps, len(budgets)))
    finished = np.zeros((reps, len(budgets)), dtype=bool)
    depths = sorted(int(d) for d in cfg["depths"])
    by_depth = np.zeros((reps, len(depths)))

    for r in range(reps):
        tree = path_tree() if b == 1 else regular_tree(b)
        draws = Draws(root.child("replica", r))
        st = new_state(tree)
        done = False
        for k, m in enumerate(budgets):
            if not done:
                res = run(tree, c, StopRule.root_local_time(t), draws, max_events=m, state=st)
                done = res.completed
            clocks[r, k] = st.clock
            finished[r, k] = done
        heights = np.array([tree.height[v] for v in st.occupation], dtype=np.int64)
        occ = np.array(list(st.occupation.values()))
        for j, d in enumerate(depths):
            by_depth[r, j] = occ[heights <= d].sum()
    summ = RunSummary("null-recurrence", cfg, int(cfg["seed"]))
    rows = []
    for k, m in enumerate(budgets):
        mean = float(clocks[:, k].mean())
        se = float(clocks[:, k].std(ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan
        frac = float(finished[:, k].mean())
        rows.append((m, mean, se, frac, reps))
        summ.add(f"truncated_mean_xi@{m}", mean, reps, se)
    zs = z_chain(t, c, int(cfg["generations"]), int(cfg["z_replicas"]), root.child("z"))
    gen_rows = []
    for n in range(zs.shape[1]):
        est = b**n * (zs[:, n].mean() - c)
        se = b**n * zs[:, n].std(ddof=1) / math.sqrt(zs.shape[0])
        gen_rows.append({"n": n, "estimate": float(est), "stderr": float(se), "exact": b**n * (t - c)})
    summ.data["generation_terms"] = gen_rows
    # time spent at heights <= N when the root local time reaches t; mean sum_{n<=N} b^n (t - c)
    summ.data["depth_profile"] = [
        {"depth": d, "estimate": float(by_depth[:, j].mean()),
         "stderr": float(by_depth[:, j].std(ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan,
         "exact": math.fsum(b**n * (t - c) for n in range(d + 1))}
        for j, d in enumerate(depths)
    ]
    if not finished[:, -1].all():
        summ.warnings.append(f"{int((~finished[:, -1]).sum())} replicas exhausted the largest budget; "
                             "depth profile is truncated for them")
    text = csv_text(["budget", "truncated_mean_xi", "stderr", "fraction_finished", "replicas"], rows,
                    _meta(summ))
    return _finish(summ, started), text
