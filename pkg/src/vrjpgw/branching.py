"""The absorbed chain Z, its logarithm Y, and the branching Markov chain F.

F lives on a Galton-Watson genealogy: every particle at position x has a
nu-distributed number of children, each placed at an independent draw of
A_c(x). Position c is absorbing; absorbed particles are kept as a bare count
(their descendants are all at c, no randomness needed for their positions).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from .rng import RngStream
from .sampling import sample_A_batch, sample_m_infinity
from .summary import csv_text
from .trees import OffspringDistribution

__all__ = [
    "ParticleFront",
    "PopulationCapExceeded",
    "InsufficientData",
    "z_step",
    "z_chain",
    "f_evolve",
    "count_in_interval",
    "SurvivalEstimate",
    "estimate_survival",
    "DominanceReport",
    "monotone_dominance_check",
    "BarrierFit",
    "barrier_survival",
    "barrier_exponent",
    "fit_decay_rate",
    "mean_above_level",
]

DEFAULT_CAP = 10**6
_CHUNK = 256


class PopulationCapExceeded(RuntimeError):
    def __init__(self, front: "ParticleFront", cap: int):
        super().__init__(f"{front.alive.size} alive particles exceed the cap {cap}")
        self.front = front
        self.cap = cap


class InsufficientData(RuntimeError):
    """Too few surviving paths to fit; raise the replica count."""


@dataclass
class ParticleFront:
    """Generation ``generation`` of F: alive positions (> c) plus a count of particles at c."""

    c: float
    alive: np.ndarray
    absorbed: int = 0
    generation: int = 0
    subsampled: bool = False

    @classmethod
    def start(cls, x0: float, c: float) -> "ParticleFront":
        if x0 < c:
            raise ValueError("x0 must be >= c")
        if x0 == c:
            return cls(c, np.empty(0), 1)
        return cls(c, np.array([float(x0)]), 0)

    @classmethod
    def from_positions(cls, positions, c: float, generation: int = 0) -> "ParticleFront":
        pos = np.asarray(positions, dtype=float)
        if np.any(pos < c):
            raise ValueError("positions must be >= c")
        return cls(c, pos[pos > c].copy(), int(np.sum(pos == c)), generation)

    @property
    def size(self) -> int:
        return self.alive.size + self.absorbed

    @property
    def n_alive(self) -> int:
        return self.alive.size

    @property
    def dead(self) -> bool:
        return self.alive.size == 0

    def positions(self) -> np.ndarray:
        return np.concatenate([np.full(self.absorbed, self.c), self.alive])


def count_in_interval(front: ParticleFront, lo: float, hi: float = math.inf) -> int:
    """N^I for the closed interval I = [lo, hi] (``hi`` may be inf)."""
    if lo > hi:
        raise ValueError("lo must be <= hi")
    n = int(np.count_nonzero((front.alive >= lo) & (front.alive <= hi)))
    if lo <= front.c <= hi:
        n += front.absorbed
    return n


def _gen(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    return RngStream(int(rng)).generator


def z_step(x, c: float, rng):
    """One transition of Z: a draw of A_c(x). Exactly absorbing at c."""
    arr = np.asarray(x, dtype=float)
    out = sample_A_batch(c, arr.ravel(), _gen(rng)).values
    if arr.ndim == 0:
        return float(c) if arr == c else float(out[0])
    out[arr.ravel() == c] = c
    return out.reshape(arr.shape)


def z_chain(x0: float, c: float, steps: int, replicas: int, rng) -> np.ndarray:
    """Paths of Z, shape ``(replicas, steps + 1)``."""
    g = _gen(rng)
    out = np.empty((replicas, steps + 1))
    out[:, 0] = x0
    for k in range(steps):
        out[:, k + 1] = z_step(out[:, k], c, g)
    return out


def f_evolve(front: ParticleFront, nu: OffspringDistribution, c: float, rng,
             cap: Optional[int] = None, subsample: bool = False) -> ParticleFront:
    """Next generation of F.

    With ``cap`` set and more than ``cap`` alive children, either keep a
    uniform random subset of ``cap`` of them (``subsample=True``; dropping
    particles can only lower survival) or raise :class:`PopulationCapExceeded`.
    """
    g = _gen(rng)
    k = nu.sample(g, front.alive.size)
    parents = np.repeat(front.alive, k)
    batch = sample_A_batch(c, parents, g) if parents.size else None
    absorbed = nu.total_offspring(g, front.absorbed)
    if batch is None:
        alive = np.empty(0)
    else:
        hit = batch.hit_atom
        absorbed += int(hit.sum())
        alive = batch.values[~hit]
    out = ParticleFront(c, alive, absorbed, front.generation + 1, front.subsampled)
    if cap is not None and alive.size > cap:
        if not subsample:
            raise PopulationCapExceeded(out, cap)
        keep = g.choice(alive.size, size=cap, replace=False)
        out.alive = alive[np.sort(keep)]
        out.subsampled = True
    return out


@dataclass
class SurvivalEstimate:
    """Fraction of replicas with an alive particle at each generation 1..G."""

    x0: float
    c: float
    replicas: int
    alive_counts: np.ndarray  # replicas surviving at generation g (index g-1)
    cap_hits: int = 0
    on_cap: str = "survive"

    @property
    def curve(self) -> np.ndarray:
        return self.alive_counts / self.replicas

    @property
    def p_hat(self) -> float:
        return float(self.curve[-1])

    @property
    def stderr(self) -> float:
        p = self.p_hat
        return math.sqrt(p * (1 - p) / self.replicas)

    def table(self) -> list[tuple]:
        rows = []
        for g, s in enumerate(self.alive_counts, start=1):
            p = s / self.replicas
            rows.append((g, int(s), self.replicas, p, math.sqrt(p * (1 - p) / self.replicas)))
        return rows

    def to_csv(self, meta: Optional[dict] = None) -> str:
        return csv_text(["n", "survivors", "replicas", "p_hat", "stderr"], self.table(), meta)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("VRJPGW_THREADS", "1")))
    except ValueError:
        return 1


def _thin_groups(labels: np.ndarray, cap: int, g: np.random.Generator) -> np.ndarray:
    """Mask keeping a uniform random subset of at most ``cap`` entries per label."""
    order = np.lexsort((g.random(labels.size), labels))
    sorted_labels = labels[order]
    starts = np.flatnonzero(np.r_[True, sorted_labels[1:] != sorted_labels[:-1]])
    group_start = np.repeat(starts, np.diff(np.r_[starts, labels.size]))
    keep = np.zeros(labels.size, dtype=bool)
    keep[order[np.arange(labels.size) - group_start < cap]] = True
    return keep


def _survival_chunk(x0, nu, c, generations, n, rng: RngStream, cap, on_cap):
    """Run ``n`` replicas together; returns (survivors per generation, cap hits)."""
    g = rng.generator
    pos = np.full(n, float(x0))
    rep = np.arange(n)
    survivors = np.zeros(generations, dtype=np.int64)
    capped = np.zeros(n, dtype=bool)
    hit = np.zeros(n, dtype=bool)
    for gen in range(generations):
        if pos.size:
            k = nu.sample(g, pos.size)
            child = sample_A_batch(c, np.repeat(pos, k), g)
            rep = np.repeat(rep, k)
            live = ~child.hit_atom
            pos, rep = child.values[live], rep[live]
            if cap is not None and pos.size > cap:
                counts = np.bincount(rep, minlength=n)
                over = np.flatnonzero(counts > cap)
                if over.size:
                    hit[over] = True
                    if on_cap == "survive":
                        capped[over] = True
                        keep = ~np.isin(rep, over)
                    else:
                        keep = _thin_groups(rep, cap, g)
                    pos, rep = pos[keep], rep[keep]
        alive = np.zeros(n, dtype=bool)
        alive[rep] = True
        survivors[gen] = np.count_nonzero(alive | capped)
    return survivors, int(hit.sum())


def estimate_survival(x0: float, nu: OffspringDistribution, c: float, generations: int,
                      replicas: int, rng, cap: Optional[int] = DEFAULT_CAP,
                      on_cap: Literal["survive", "subsample"] = "survive") -> SurvivalEstimate:
    """Monte Carlo P_{x0}{F has an alive particle at generation G}, for G = 1..generations.

    This upper-biases the survival probability (the event shrinks as G
    grows); the whole curve is kept so the bias is visible. A replica whose
    alive population exceeds ``cap`` is either counted as surviving and
    flagged (``"survive"``), or thinned to ``cap`` particles
    (``"subsample"``, which biases survival downwards instead). ``cap_hits``
    counts replicas that reached the cap under either policy.

    Replicas are processed in fixed chunks, each with its own substream, so
    the result does not depend on the thread count (``VRJPGW_THREADS``).
    """
    if generations < 1 or replicas < 1:
        raise ValueError("generations and replicas must be >= 1")
    if x0 < c:
        raise ValueError("x0 must be >= c")
    if on_cap not in ("survive", "subsample"):
        raise ValueError(f"unknown on_cap {on_cap!r}")
    rng = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    if x0 == c:
        return SurvivalEstimate(x0, c, replicas, np.zeros(generations, dtype=np.int64), 0, on_cap)
    sizes = [min(_CHUNK, replicas - s) for s in range(0, replicas, _CHUNK)]
    jobs = [(x0, nu, c, generations, n, rng.child("chunk", i), cap, on_cap) for i, n in enumerate(sizes)]
    workers = _threads()
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(lambda a: _survival_chunk(*a), jobs))
    else:
        results = [_survival_chunk(*a) for a in jobs]
    total = np.sum([r[0] for r in results], axis=0)
    hits = sum(r[1] for r in results)
    return SurvivalEstimate(float(x0), c, replicas, total, hits, on_cap)


def _alive_count_paths(x0, nu, c, generations, replicas, rng: RngStream, cap):
    out = np.zeros((replicas, generations), dtype=np.int64)
    for r in range(replicas):
        g = rng.child("replica", r).generator
        front = ParticleFront.start(x0, c)
        for gen in range(generations):
            if front.dead:
                break
            front = f_evolve(front, nu, c, g, cap=cap, subsample=True)
            out[r, gen] = front.n_alive
    return out


@dataclass
class DominanceReport:
    x: float
    y: float
    counts_x: np.ndarray  # alive counts, shape (replicas, generations)
    counts_y: np.ndarray
    max_violation: np.ndarray  # per generation, max_k [F_y(k) - F_x(k)] in s.e. units
    survival_x: float
    survival_y: float
    survival_se: float

    @property
    def holds(self) -> bool:
        return bool(np.all(self.max_violation <= 4.0)) and \
            self.survival_x <= self.survival_y + 4.0 * self.survival_se


def monotone_dominance_check(x: float, y: float, nu: OffspringDistribution, c: float,
                             generations: int, replicas: int, rng,
                             cap: int = 10**5) -> DominanceReport:
    """Compare alive-count laws of F started at x and at y >= x, per generation.

    Both starts reuse the same per-replica substreams, so ``x == y`` gives
    identical samples.
    """
    if y < x:
        raise ValueError("need y >= x")
    rng = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    cx = _alive_count_paths(x, nu, c, generations, replicas, rng, cap)
    cy = _alive_count_paths(y, nu, c, generations, replicas, rng, cap)
    viol = np.zeros(generations)
    for gen in range(generations):
        a, b = np.sort(cx[:, gen]), np.sort(cy[:, gen])
        grid = np.unique(np.concatenate([a, b]))
        fx = np.searchsorted(a, grid, side="right") / replicas
        fy = np.searchsorted(b, grid, side="right") / replicas
        se = np.sqrt((fx * (1 - fx) + fy * (1 - fy)) / replicas)
        diff = fy - fx
        z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(diff > 0, np.inf, 0.0))
        viol[gen] = float(np.max(z))
    sx = float(np.mean(cx[:, -1] > 0))
    sy = float(np.mean(cy[:, -1] > 0))
    se = math.sqrt((sx * (1 - sx) + sy * (1 - sy)) / replicas)
    return DominanceReport(x, y, cx, cy, viol, sx, sy, se)


def mean_above_level(x0: float, nu: OffspringDistribution, c: float, k0: int, level: float,
                     replicas: int, rng) -> tuple[float, float]:
    """Monte Carlo E_{x0}[N_{k0}^{[level, inf)}] with its standard error."""
    rng = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    counts = np.empty(replicas)
    for r in range(replicas):
        g = rng.child("replica", r).generator
        front = ParticleFront.start(x0, c)
        for _ in range(k0):
            front = f_evolve(front, nu, c, g)
        counts[r] = count_in_interval(front, level)
    return float(counts.mean()), float(counts.std(ddof=1) / math.sqrt(replicas))


# --- barrier survival for Y = log Z ----------------------------------------------


def barrier_survival(c: float, x: float, n_max: int, replicas: int, rng,
                     chain: Literal["Y", "iid"] = "Y", chunk: int = 1_000_000) -> np.ndarray:
    """Counts of paths with tau_x > n for n = 0..n_max.

    ``chain="Y"`` runs Y' = log A_c(e^Y) from Y_0 = x. ``chain="iid"`` is the
    random-walk control Y' = Y + log m_c(inf). tau_x is the first n with
    Y_n < x; survivors are dropped as soon as they cross.
    """
    g = _gen(rng)
    surv = np.zeros(n_max + 1, dtype=np.int64)
    done = 0
    while done < replicas:
        n = min(chunk, replicas - done)
        y = np.full(n, float(x))
        surv[0] += n
        for k in range(1, n_max + 1):
            if chain == "Y":
                y = np.log(sample_A_batch(c, np.exp(y), g).values)
            elif chain == "iid":
                y = y + np.log(sample_m_infinity(c, g, y.size))
            else:
                raise ValueError(f"unknown chain {chain!r}")
            y = y[y >= x]
            surv[k] += y.size
            if not y.size:
                break
        done += n
    return surv


def fit_decay_rate(ns, survivors, replicas: int,
                   prefactor: Literal["none", "fixed", "free"] = "fixed",
                   exponent: float = -1.5) -> tuple[float, float]:
    """Least-squares fit of log P{tau > n}; returns ``(rate, fitted power of n)``.

    ``"none"`` fits log p = a + n log r. Survival of a killed walk with
    negative drift behaves like C r^n n^(-3/2), so over short windows the pure
    slope is biased low; ``"fixed"`` subtracts ``exponent * log n`` first and
    ``"free"`` fits the power too.
    """
    ns = np.asarray(ns, dtype=float)
    s = np.asarray(survivors, dtype=float)
    if np.any(s <= 0):
        raise InsufficientData("zero survivors inside the fitting window")
    lp = np.log(s / replicas)
    if prefactor == "none":
        slope = np.polyfit(ns, lp, 1)[0]
        return float(math.exp(slope)), 0.0
    if prefactor == "fixed":
        slope = np.polyfit(ns, lp - exponent * np.log(ns), 1)[0]
        return float(math.exp(slope)), exponent
    if prefactor == "free":
        A = np.column_stack([ns, np.log(ns), np.ones_like(ns)])
        coef = np.linalg.lstsq(A, lp, rcond=None)[0]
        return float(math.exp(coef[0])), float(coef[1])
    raise ValueError(f"unknown prefactor {prefactor!r}")


@dataclass
class BarrierFit:
    rate: float
    ci: tuple[float, float]
    power: float
    n_window: tuple[int, int]
    survivors: np.ndarray  # tau > n counts for n = 0..n_max
    replicas: int
    prefactor: str

    def table(self) -> list[tuple]:
        rows = []
        for n, s in enumerate(self.survivors):
            p = s / self.replicas
            rows.append((n, int(s), self.replicas, p, math.sqrt(p * (1 - p) / self.replicas)))
        return rows

    def to_csv(self, meta: Optional[dict] = None) -> str:
        return csv_text(["n", "survivors", "replicas", "p_hat", "stderr"], self.table(), meta)


def barrier_exponent(c: float, x: float, n_window: tuple[int, int], replicas: int, rng,
                     chain: Literal["Y", "iid"] = "Y", prefactor: str = "fixed",
                     bootstrap: int = 1000, min_survivors: int = 100) -> BarrierFit:
    """Estimate lim P_x{tau_x > n}^(1/n) from the survival curve over ``n_window``.

    The confidence interval is a 95% percentile bootstrap over replicas
    (resampling the histogram of tau).
    """
    n_min, n_max = n_window
    if not 1 <= n_min < n_max:
        raise ValueError("need 1 <= n_min < n_max")
    g = _gen(rng)
    surv = barrier_survival(c, x, n_max, replicas, g, chain)
    if surv[n_max] < min_survivors:
        raise InsufficientData(
            f"only {surv[n_max]} of {replicas} paths survive to n={n_max}; raise replicas"
        )
    ns = np.arange(n_min, n_max + 1)
    rate, power = fit_decay_rate(ns, surv[n_min:], replicas, prefactor)

    # tau histogram: tau = n for n in 1..n_max, plus "tau > n_max"
    deaths = surv[:-1] - surv[1:]
    probs = np.append(deaths[:], surv[n_max]) / replicas
    boot_rng = np.random.default_rng(int(g.integers(2**63)))
    rates = []
    for _ in range(bootstrap):
        h = boot_rng.multinomial(replicas, probs)
        tail = np.cumsum(h[::-1])[::-1]  # tail[n] = #{tau > n} for n = 0..n_max
        s = tail[n_min:]
        if np.any(s <= 0):
            continue
        rates.append(fit_decay_rate(ns, s, replicas, prefactor)[0])
    ci = (float(np.percentile(rates, 2.5)), float(np.percentile(rates, 97.5))) if rates else (math.nan, math.nan)
    return BarrierFit(rate, ci, power, (n_min, n_max), surv, replicas, prefactor)
