"""The thirteen acceptance criteria, each at its stated tolerance and runtime budget.

Run under pytest (one pass/fail line per criterion in the terminal summary)
or directly: ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from vrjpgw.branching import barrier_exponent, estimate_survival, z_chain
from vrjpgw.cli import main as cli_main
from vrjpgw.experiments import Phase, classify
from vrjpgw.rng import RngStream
from vrjpgw.sampling import m_infinity_cdf, sample_A_batch
from vrjpgw.scalar_math import (
    bessel_k_scaled,
    minimize_moment,
    moment_m_infinity,
    mu,
    mu_direct,
    mu_gaussian,
)
from vrjpgw.stats import binomial_se, ks_2samp_distance, ks_distance
from vrjpgw.trees import OffspringDistribution, regular_tree
from vrjpgw.vrjp import occupation_field_at_root_time

SEED = 20240601
D2, D4 = OffspringDistribution.delta(2), OffspringDistribution.delta(4)


def stream(*path):
    return RngStream(SEED, path)


def c_from_mu_table(b: float, target: float, step: float = 1e-4) -> float:
    """Largest c on a 1e-4 grid with b mu(c) <= target (monotone table lookup)."""
    lo, hi = 0, int(2.0 / step)
    while hi - lo > 1:  # binary search over the grid indices of a monotone table
        mid = (lo + hi) // 2
        lo, hi = (mid, hi) if b * mu(mid * step).mu <= target else (lo, mid)
    return lo * step


# --- criteria: each returns (passed, detail) ----------------------------------------------------


def crit_1():
    vals = {m: 1 / mu(1.0, m).mu for m in ("direct", "gaussian", "bessel")}
    ok = all(abs(v - 1.095) <= 0.005 for v in vals.values())
    return ok, " ".join(f"1/mu_{m}(1)={v:.5f}" for m, v in vals.items())


def crit_2():
    worst_g, worst_b = 0.0, 0.0
    for c in (0.1, 0.25, 0.5, 1, 2, 5):
        d = mu_direct(c).mu
        worst_g = max(worst_g, abs(d - mu_gaussian(c).mu))
        k0_scaled, _ = bessel_k_scaled(0, c * c)  # e^{z} K_0(z)
        worst_b = max(worst_b, abs(d - math.sqrt(2 / math.pi) * c * k0_scaled))
    return worst_g <= 1e-8 and worst_b <= 1e-6, f"max|direct-gaussian|={worst_g:.2e} max|direct-bessel|={worst_b:.2e}"


def crit_3():
    worst_norm, worst_theta, worst_min = 0.0, 0.0, 0.0
    for c in (0.25, 1.0, 3.0):
        for th in (0, 1):
            worst_norm = max(worst_norm, abs(moment_m_infinity(c, th).value - 1))
        theta, val = minimize_moment(c)
        worst_theta = max(worst_theta, abs(theta - 0.5))
        worst_min = max(worst_min, abs(val - mu(c).mu))
    ok = worst_norm <= 1e-6 and worst_theta <= 1e-6 and worst_min <= 1e-6
    return ok, f"|E m^0,1 - 1|<={worst_norm:.1e} |theta*-1/2|<={worst_theta:.1e} |min-mu|<={worst_min:.1e}"


def crit_4():
    parts, ok = [], True
    n = 10**5
    for c, t in ((1, 2), (2, 3), (0.5, 4)):
        b = sample_A_batch(c, t, stream("c4", c, t), size=n, method="event")
        p = math.exp(-c * (t - c))
        z = (b.hit_atom.mean() - p) / binomial_se(p, n)
        ok &= abs(z) <= 4
        parts.append(f"({c},{t}):z={z:+.2f}")
    return ok, " ".join(parts)


def crit_5():
    n = 10**5
    parts, ok = [], True
    for c, t in ((1.0, 2.0), (1.0, 3.0), (0.5, 4.0)):
        v = sample_A_batch(c, t, stream("c5a", c, t), size=n, method="event").values
        z = (v.mean() - t) / (v.std(ddof=1) / math.sqrt(n))
        ok &= abs(z) <= 4
        parts.append(f"E[A]({c},{t}):z={z:+.2f}")
    zs = z_chain(3.0, 1.0, 10, n, stream("c5z"))
    se = zs.std(axis=0, ddof=1) / math.sqrt(n)
    zz = np.abs(zs[:, 1:].mean(axis=0) - 3.0) / se[1:]
    ok &= bool(np.all(zz <= 4))
    parts.append(f"max|z| E[Z_n], n<=10: {zz.max():.2f}")
    return ok, " ".join(parts)


def crit_6():
    t, n = 1000.0, 10**5
    x = sample_A_batch(1.0, t, stream("c6"), size=n, method="mixture").values / t
    d = ks_distance(x, lambda s: m_infinity_cdf(1.0, s))
    return d < 0.01, f"KS={d:.5f}"


def crit_7():
    n, c, t = 10**5, 1.0, 2.0
    tree = regular_tree(2, 2)
    tree.expand()
    verts = tree.vertices()
    walk = occupation_field_at_root_time(tree, c, t, n, stream("c7", "walk"), verts)
    g = stream("c7", "F").generator
    col = {v: i for i, v in enumerate(verts)}
    f = np.empty_like(walk)
    f[:, 0] = t
    for v in verts[1:]:
        f[:, col[v]] = sample_A_batch(c, f[:, col[tree.parent[v]]], g).values
    ks = [ks_2samp_distance(walk[:, j], f[:, j]) for j in range(1, len(verts))]
    return max(ks) < 0.02, "per-vertex KS " + ",".join(f"{k:.4f}" for k in ks)


def crit_8():
    parts, ok = [], True
    for b, nu, cap in ((2, D2, 500), (4, D4, 300)):
        phase = classify(b, 1.0)
        est = estimate_survival(10.0, nu, 1.0, 25, 1000, stream("c8", b), cap=cap, on_cap="subsample")
        ok &= phase is Phase.TRANSIENT and est.p_hat >= 0.5
        parts.append(f"b={b}:{phase.value} p_hat={est.p_hat:.3f}+-{est.stderr:.3f}")
    return ok, " ".join(parts)


def crit_9():
    c = c_from_mu_table(2, 0.9)
    est = estimate_survival(10.0, D2, c, 40, 1000, stream("c9"), cap=500, on_cap="subsample")
    curve = est.curve
    ok = 2 * mu(c).mu <= 0.9 and est.p_hat <= 0.05 and bool(np.all(np.diff(curve) <= 0)) and curve[0] > curve[-1]
    return ok, f"c={c:.4f} b*mu={2 * mu(c).mu:.4f} p_hat(G=1,10,40)={curve[0]:.3f},{curve[9]:.3f},{curve[-1]:.3f}"


def crit_10():
    fit = barrier_exponent(1.0, 0.0, (10, 30), 10**6, stream("c10"), chain="iid", bootstrap=1000)
    target = mu(1.0).mu
    return abs(fit.rate - target) <= 0.03, \
        f"rate={fit.rate:.4f} ci=({fit.ci[0]:.4f},{fit.ci[1]:.4f}) mu(1)={target:.4f}"


def crit_11():
    fit = barrier_exponent(1.0, math.log(50), (10, 30), 10**6, stream("c11"), chain="Y", bootstrap=1000)
    return fit.rate >= 0.88, f"rate={fit.rate:.4f} ci=({fit.ci[0]:.4f},{fit.ci[1]:.4f})"


def crit_12():
    parts, best = [], 0.0
    for eta in (0.02, 0.05):
        nu = D2.thinned(eta)
        est = estimate_survival(20.0, nu, 1.0, 25, 1000, stream("c12", eta), cap=500, on_cap="subsample")
        best = max(best, est.p_hat)
        parts.append(f"eta={eta}:p_hat={est.p_hat:.3f}")
    return best >= 0.2, " ".join(parts)


DETERMINISM_RUNS = [
    ["mu", "--c-min", "0.1", "--c-max", "2", "--steps", "5"],
    ["critical-c", "--b", "2,4"],
    ["sample", "--replicas", "1000"],
    ["simulate", "--replicas", "2", "--value", "5"],
    ["survival", "--replicas", "50", "--generations", "5"],
    ["barrier", "--replicas", "200000", "--bootstrap", "10"],
    ["phase-diagram", "--replicas", "20", "--generations", "3"],
    ["null-recurrence", "--replicas", "10", "--budgets", "10,100"],
]


def crit_13():
    bad = []
    with tempfile.TemporaryDirectory() as tmp:
        for argv in DETERMINISM_RUNS:
            dirs = [Path(tmp) / f"{argv[0]}-{k}" for k in range(2)]
            for d in dirs:
                if cli_main(argv + ["--seed", "77", "--out", str(d)]) != 0:
                    bad.append(argv[0] + "(exit)")
            for suffix in (".csv", ".json"):
                a, b = ((d / (argv[0] + suffix)).read_bytes() for d in dirs)
                if a != b:
                    bad.append(argv[0] + suffix)
    return not bad, f"{len(DETERMINISM_RUNS)} commands byte-identical" if not bad else "differs: " + ",".join(bad)


CRITERIA = {
    1: ("mu anchor", crit_1, 1),
    2: ("formula consistency", crit_2, 5),
    3: ("moment identities", crit_3, 5),
    4: ("atom mass", crit_4, 10),
    5: ("martingale means", crit_5, 30),
    6: ("limit law", crit_6, 60),
    7: ("restriction principle", crit_7, 120),
    8: ("transient side", crit_8, 120),
    9: ("recurrent side", crit_9, 120),
    10: ("barrier exponent, i.i.d.", crit_10, 300),
    11: ("barrier exponent, Y chain", crit_11, 300),
    12: ("percolation", crit_12, 180),
    13: ("determinism", crit_13, 60),
}


def evaluate(k: int) -> tuple[bool, str]:
    name, fn, budget = CRITERIA[k]
    t0 = time.perf_counter()
    ok, detail = fn()
    dt = time.perf_counter() - t0
    in_time = dt < budget
    passed = bool(ok) and in_time
    line = f"criterion {k}: {'PASS' if passed else 'FAIL'} [{name}] {detail} ({dt:.1f}s, budget {budget}s)"
    return passed, line


@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(k, record_criterion):
    passed, line = evaluate(k)
    record_criterion(line)
    print(line)
    assert passed, line


if __name__ == "__main__":
    results = [evaluate(k) for k in sorted(CRITERIA)]
    for _, line in results:
        print(line)
    raise SystemExit(0 if all(p for p, _ in results) else 1)
