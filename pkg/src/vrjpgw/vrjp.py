"""Exact event-driven simulation of VRJP(c) on rooted trees.

While the walk sits at v, the rates c + occupation(u) of its neighbours are
frozen, so each holding time is an exact exponential draw and no time
discretization is involved. ``occupation`` stores time spent; the local time
of the walk is ``c + occupation``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .rng import Draws, RngStream
from .scalar_math import mu as mu_value
from .summary import RunSummary, csv_text
from .trees import RootedTree

__all__ = [
    "WalkState",
    "StopRule",
    "RunResult",
    "StructuralError",
    "new_state",
    "step",
    "run",
    "occupation_field_at_root_time",
    "g_n_experiment",
    "GnResult",
    "recurrence_diagnostic",
    "trace_csv",
]


class StructuralError(RuntimeError):
    """The walk sits on a vertex with no neighbours."""


@dataclass
class WalkState:
    current: int
    clock: float = 0.0
    occupation: dict = field(default_factory=dict)
    visit_counts: dict = field(default_factory=dict)
    events: int = 0
    max_height: int = 0

    def local_time(self, v: int, c: float) -> float:
        return c + self.occupation.get(v, 0.0)

    def clock_drift(self) -> float:
        return abs(math.fsum(self.occupation.values()) - self.clock)


@dataclass(frozen=True)
class StopRule:
    """Stopping rule: ``root_local_time`` (t), ``hit_height`` (n), ``clock_budget`` (T) or ``event_budget`` (M)."""

    kind: str
    value: float

    _KINDS = ("root_local_time", "hit_height", "clock_budget", "event_budget")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown stop rule {self.kind!r}")
        if not self.value > 0:
            raise ValueError("stop-rule parameter must be positive")

    @classmethod
    def root_local_time(cls, t: float) -> "StopRule":
        return cls("root_local_time", float(t))

    @classmethod
    def hit_height(cls, n: int) -> "StopRule":
        return cls("hit_height", int(n))

    @classmethod
    def clock_budget(cls, T: float) -> "StopRule":
        return cls("clock_budget", float(T))

    @classmethod
    def event_budget(cls, M: int) -> "StopRule":
        return cls("event_budget", int(M))


@dataclass
class RunResult:
    state: WalkState
    reason: str  # the rule kind that fired, or "budget_exceeded"
    trace: Optional[list] = None

    @property
    def completed(self) -> bool:
        return self.reason != "budget_exceeded"


def new_state(tree: RootedTree) -> WalkState:
    return WalkState(current=tree.root, visit_counts={tree.root: 1})


def _draws(rng) -> Draws:
    return rng if isinstance(rng, Draws) else Draws(rng if isinstance(rng, RngStream) else RngStream(int(rng)))


def step(state: WalkState, tree: RootedTree, c: float, rng) -> WalkState:
    """Advance the walk by one jump, in place; returns ``state``."""
    draws = _draws(rng)
    v = state.current
    nbrs = tree.neighbors(v)
    if not nbrs:
        raise StructuralError(f"vertex {v} has no neighbours")
    occ = state.occupation
    weights = [c + occ.get(u, 0.0) for u in nbrs]
    total = math.fsum(weights)
    hold = draws.exp() / total
    occ[v] = occ.get(v, 0.0) + hold
    state.clock += hold
    target = draws.uniform() * total
    nxt = nbrs[-1]
    for u, w in zip(nbrs, weights):
        target -= w
        if target < 0:
            nxt = u
            break
    state.current = nxt
    state.visit_counts[nxt] = state.visit_counts.get(nxt, 0) + 1
    state.events += 1
    h = tree.height[nxt]
    if h > state.max_height:
        state.max_height = h
    return state


def run(tree: RootedTree, c: float, stop: StopRule, rng, max_events: Optional[int] = None,
        state: Optional[WalkState] = None, trace: bool = False) -> RunResult:
    """Iterate :func:`step` until ``stop`` fires.

    ``max_events`` is a safety budget; exhausting it returns reason
    ``"budget_exceeded"`` with the state reached so far. For
    ``root_local_time`` the last holding at the root is cut exactly where
    c + occupation(root) = t, which is exact by memorylessness.
    """
    if not c > 0:
        raise ValueError("c must be positive")
    draws = _draws(rng)
    st = new_state(tree) if state is None else state
    kind, val = stop.kind, stop.value
    rule_events = int(val) if kind == "event_budget" else math.inf
    budget = math.inf if max_events is None else max_events
    root = tree.root
    occ = st.occupation
    visits = st.visit_counts
    height = tree.height
    neighbors = tree.neighbors
    rec: Optional[list] = [] if trace else None

    root_cap = val - c if kind == "root_local_time" else math.inf
    if kind == "root_local_time" and val < c:
        raise ValueError("root local time target must be >= c")
    clock_cap = val if kind == "clock_budget" else math.inf
    target_h = int(val) if kind == "hit_height" else -1

    v = st.current
    clock = st.clock
    events = st.events
    max_h = st.max_height
    reason = None
    if target_h >= 0 and height[v] >= target_h:
        reason = kind
    elif kind == "root_local_time" and occ.get(root, 0.0) >= root_cap:
        reason = kind
    while reason is None:
        if events >= rule_events:
            reason = kind
            break
        if events >= budget:
            reason = "budget_exceeded"
            break
        nbrs = neighbors(v)
        if not nbrs:
            raise StructuralError(f"vertex {v} has no neighbours")
        weights = [c + occ.get(u, 0.0) for u in nbrs]
        total = math.fsum(weights)
        hold = draws.exp() / total
        here = occ.get(v, 0.0)
        if v == root and here + hold >= root_cap:
            hold = root_cap - here
            occ[v] = root_cap
            clock += hold
            reason = kind
            break
        if clock + hold >= clock_cap:
            occ[v] = here + (clock_cap - clock)
            clock = clock_cap
            reason = kind
            break
        occ[v] = here + hold
        clock += hold
        target = draws.uniform() * total
        nxt = nbrs[-1]
        for u, w in zip(nbrs, weights):
            target -= w
            if target < 0:
                nxt = u
                break
        v = nxt
        visits[v] = visits.get(v, 0) + 1
        events += 1
        h = height[v]
        if h > max_h:
            max_h = h
        if rec is not None:
            rec.append((events, clock, h, occ.get(root, 0.0)))
        if h == target_h:
            reason = kind
    st.current, st.clock, st.events, st.max_height = v, clock, events, max_h
    return RunResult(st, reason, rec)


def trace_csv(result: RunResult) -> str:
    if result.trace is None:
        raise ValueError("run was not traced")
    return csv_text(["event_index", "clock", "vertex_height", "root_occupation"], result.trace)


def occupation_field_at_root_time(tree: RootedTree, c: float, t: float, replicas: int, rng,
                                  vertices: Optional[Sequence[int]] = None) -> np.ndarray:
    """Local times L_c(xi(t), v) over ``vertices`` (default: BFS order), one row per replica.

    ``tree`` must be finite so that xi(t) is reached.
    """
    rng = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    if vertices is None:
        tree.expand()
        vertices = tree.vertices()
    stop = StopRule.root_local_time(t)
    draws = Draws(rng)
    out = np.empty((replicas, len(vertices)))
    for r in range(replicas):
        res = run(tree, c, stop, draws)
        occ = res.state.occupation
        out[r] = [c + occ.get(v, 0.0) for v in vertices]
    return out


@dataclass
class GnResult:
    """Samples of G_n = L_c(sigma_n, o) and the right side of P{G_n < a^n} <= (mu a^(1/2))^n V_n."""

    n: int
    c: float
    samples: np.ndarray
    level_size: int
    mu: float

    def empirical(self, a: float) -> tuple[float, float]:
        p = float(np.mean(self.samples < a**self.n))
        return p, math.sqrt(p * (1 - p) / self.samples.size)

    def bound(self, a: float) -> float:
        return (self.mu * math.sqrt(a)) ** self.n * self.level_size


def g_n_experiment(tree: RootedTree, c: float, n: int, replicas: int, rng,
                   max_events: Optional[int] = None) -> GnResult:
    """Independent runs on one (quenched) tree until the walk first reaches height n."""
    rng = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    draws = Draws(rng)
    stop = StopRule.hit_height(n)
    out = np.empty(replicas)
    for r in range(replicas):
        res = run(tree, c, stop, draws, max_events=max_events)
        if not res.completed:
            raise RuntimeError(f"replica {r} did not reach height {n} within the event budget")
        out[r] = c + res.state.occupation.get(tree.root, 0.0)
    level = len(tree.level(n))
    return GnResult(n, c, out, level, mu_value(c).mu)


def recurrence_diagnostic(tree_factory, c: float, checkpoints: Iterable[int], replicas: int, rng,
                          label: str = "diagnostic") -> RunSummary:
    """Root occupation and max height at event checkpoints, over ``replicas`` runs.

    ``tree_factory(i)`` returns the tree for replica ``i`` (the same tree for
    quenched runs). This only reports the growth profile; a finite run
    cannot decide recurrence, the caller interprets the numbers.
    """
    rng = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    checkpoints = sorted(int(k) for k in checkpoints)
    occ = np.empty((replicas, len(checkpoints)))
    hts = np.empty((replicas, len(checkpoints)))
    for r in range(replicas):
        tree = tree_factory(r)
        draws = Draws(rng.child("replica", r))
        st = new_state(tree)
        for j, m in enumerate(checkpoints):
            run(tree, c, StopRule.event_budget(m), draws, state=st)
            occ[r, j] = st.occupation.get(tree.root, 0.0)
            hts[r, j] = st.max_height
    summ = RunSummary(label, {"c": c, "checkpoints": checkpoints, "replicas": replicas}, rng.seed)
    rows = []
    for j, m in enumerate(checkpoints):
        rows.append({
            "events": m,
            "root_occupation_median": float(np.median(occ[:, j])),
            "root_occupation_mean": float(occ[:, j].mean()),
            "max_height_median": float(np.median(hts[:, j])),
            "max_height_mean": float(hts[:, j].mean()),
        })
        summ.add(f"root_occupation@{m}", occ[:, j].mean(), replicas,
                 occ[:, j].std(ddof=1) / math.sqrt(replicas) if replicas > 1 else None)
        summ.add(f"max_height@{m}", hts[:, j].mean(), replicas,
                 hts[:, j].std(ddof=1) / math.sqrt(replicas) if replicas > 1 else None)
    summ.data["profile"] = rows
    return summ
