"""Galton-Watson and regular trees, grown lazily from per-vertex randomness.

Every vertex carries a 64-bit key derived from its path (the sequence of child
indices from the root). Its offspring count is a function of ``(seed, key)``
only, so a tree is the same object whatever order its vertices are expanded
in, and a walk that explores a thin subtree of an exponentially large tree
only pays for what it touches.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional

import numpy as np

from .rng import MASK64, RngStream, key_uniform, splitmix64

__all__ = [
    "OffspringDistribution",
    "RootedTree",
    "generate_gw",
    "regular_tree",
    "path_tree",
    "percolate",
    "truncate",
    "tree_from_text",
]

MAX_OFFSPRING = 2**32 - 1
ROOT_KEY = 1


@dataclass(frozen=True)
class OffspringDistribution:
    """A finitely supported law on {0, 1, 2, ...}, stored as ``((k, p), ...)``."""

    support: tuple[tuple[int, float], ...]
    ks: np.ndarray = field(init=False, repr=False, compare=False)
    ps: np.ndarray = field(init=False, repr=False, compare=False)
    cdf: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        items = sorted((int(k), float(p)) for k, p in self.support if p > 0)
        if not items:
            raise ValueError("empty offspring distribution")
        if any(k < 0 or k > MAX_OFFSPRING for k, _ in items):
            raise ValueError("offspring counts must lie in [0, 2^32 - 1]")
        if any(p < 0 for _, p in items):
            raise ValueError("negative probability")
        total = math.fsum(p for _, p in items)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {total}, not 1")
        object.__setattr__(self, "support", tuple(items))
        object.__setattr__(self, "ks", np.array([k for k, _ in items], dtype=np.int64))
        object.__setattr__(self, "ps", np.array([p for _, p in items]))
        acc, cdf = 0.0, []
        for _, p in items:
            acc += p
            cdf.append(acc)
        cdf[-1] = 1.0
        object.__setattr__(self, "cdf", tuple(cdf))

    @classmethod
    def from_mapping(cls, probs: Mapping[int, float]) -> "OffspringDistribution":
        return cls(tuple(probs.items()))

    @classmethod
    def delta(cls, k: int) -> "OffspringDistribution":
        return cls(((k, 1.0),))

    @classmethod
    def with_mean(cls, b: float) -> "OffspringDistribution":
        """Leafless law on {floor(b), ceil(b)} with mean ``b`` (b >= 1)."""
        if b < 1:
            raise ValueError("with_mean needs b >= 1 to stay leafless")
        lo = math.floor(b)
        frac = b - lo
        if frac == 0:
            return cls.delta(lo)
        return cls(((lo, 1.0 - frac), (lo + 1, frac)))

    @property
    def mean(self) -> float:
        return float(self.ks @ self.ps)

    @property
    def leafless(self) -> bool:
        return self.support[0][0] > 0

    @property
    def degenerate(self) -> bool:
        return len(self.support) == 1

    def pmf(self, k: int) -> float:
        return dict(self.support).get(k, 0.0)

    def generating_function(self, s):
        return self.ps @ np.power.outer(np.asarray(s, dtype=float), self.ks).T

    def from_uniform(self, u: float) -> int:
        for (k, _), edge in zip(self.support, self.cdf):
            if u < edge:
                return k
        return self.support[-1][0]

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        if self.degenerate:
            return np.full(size, self.support[0][0], dtype=np.int64)
        return gen.choice(self.ks, size=size, p=self.ps)

    def total_offspring(self, gen: np.random.Generator, parents: int) -> int:
        """Sum of ``parents`` independent draws, without drawing each one."""
        if self.degenerate:
            return parents * self.support[0][0]
        if parents == 0:
            return 0
        counts = gen.multinomial(parents, self.ps)
        return int(sum(int(k) * int(n) for k, n in zip(self.ks, counts)))

    def thinned(self, eta: float) -> "OffspringDistribution":
        """Law of the number of children kept when each is removed w.p. ``eta``."""
        if not 0 <= eta <= 1:
            raise ValueError("eta must be in [0, 1]")
        out: dict[int, float] = {}
        for k, p in self.support:
            for j in range(k + 1):
                w = p * math.comb(k, j) * (1 - eta) ** j * eta ** (k - j)
                if w > 0:
                    out[j] = out.get(j, 0.0) + w
        total = math.fsum(out.values())
        return OffspringDistribution(tuple((k, w / total) for k, w in out.items()))


def child_key(parent: int, index: int) -> int:
    return splitmix64((parent * 0x9E3779B97F4A7C15 + index + 1) & MASK64)


ChildRule = Callable[[int, int], list]


class RootedTree:
    """A rooted tree whose child lists are produced on demand by ``rule(key, height)``.

    Vertex ids are the path-derived 64-bit keys. ``max_depth`` truncates the
    tree: vertices at that height have no children.
    """

    def __init__(self, rule: ChildRule, max_depth: Optional[int] = None, root: int = ROOT_KEY):
        self.rule = rule
        self.max_depth = max_depth
        self.root = root
        self.parent: dict[int, Optional[int]] = {root: None}
        self.height: dict[int, int] = {root: 0}
        self._children: dict[int, list] = {}
        self._neighbors: dict[int, list] = {}

    def children(self, v: int) -> list:
        kids = self._children.get(v)
        if kids is None:
            h = self.height[v]
            kids = [] if self.max_depth is not None and h >= self.max_depth else list(self.rule(v, h))
            for k in kids:
                self.parent[k] = v
                self.height[k] = h + 1
            self._children[v] = kids
        return kids

    def neighbors(self, v: int) -> list:
        nb = self._neighbors.get(v)
        if nb is None:
            p = self.parent[v]
            nb = ([] if p is None else [p]) + self.children(v)
            self._neighbors[v] = nb
        return nb

    def is_expanded(self, v: int) -> bool:
        return v in self._children

    def expand(self, depth: Optional[int] = None) -> "RootedTree":
        """Eagerly expand every vertex of height < ``depth`` (default: ``max_depth``)."""
        depth = self.max_depth if depth is None else depth
        if depth is None:
            raise ValueError("cannot eagerly expand an infinite tree without a depth")
        frontier = [self.root]
        for _ in range(depth):
            nxt = []
            for v in frontier:
                nxt.extend(self.children(v))
            frontier = nxt
        return self

    def level(self, n: int) -> list:
        """Vertices at height ``n`` (expanding as needed)."""
        frontier = [self.root]
        for _ in range(n):
            frontier = [k for v in frontier for k in self.children(v)]
        return frontier

    def level_sizes(self, depth: int) -> list[int]:
        sizes, frontier = [1], [self.root]
        for _ in range(depth):
            frontier = [k for v in frontier for k in self.children(v)]
            sizes.append(len(frontier))
        return sizes

    def vertices(self) -> list:
        """Expanded-or-discovered vertices in breadth-first order."""
        out, queue = [], deque([self.root])
        while queue:
            v = queue.popleft()
            out.append(v)
            queue.extend(self._children.get(v, ()))
        return out

    def __len__(self) -> int:
        return len(self.height)

    def to_text(self) -> str:
        """One line per discovered vertex, ``id parent_id height``, BFS-relabelled from 0.

        The root's parent is written as -1.
        """
        order = self.vertices()
        label = {v: i for i, v in enumerate(order)}
        lines = []
        for v in order:
            p = self.parent[v]
            lines.append(f"{label[v]} {-1 if p is None else label[p]} {self.height[v]}")
        return "\n".join(lines) + "\n"


def tree_from_text(text: str) -> RootedTree:
    """Rebuild a (finite, fully expanded) tree from :meth:`RootedTree.to_text` output."""
    kids: dict[int, list] = {}
    root = None
    for line in text.strip().splitlines():
        v, p, _h = (int(s) for s in line.split())
        kids.setdefault(v, [])
        if p < 0:
            root = v
        else:
            kids.setdefault(p, []).append(v)
    if root is None:
        raise ValueError("no root line (parent -1)")
    tree = RootedTree(lambda key, h: kids.get(key, []), root=root)
    tree.expand(len(kids))
    return tree


def _seed_key(seed) -> int:
    return seed.key if isinstance(seed, RngStream) else RngStream(int(seed)).key


def _gw_rule(nu: OffspringDistribution, seed_key: int) -> ChildRule:
    if nu.degenerate:
        k = nu.support[0][0]
        return lambda key, h: [child_key(key, i) for i in range(k)]

    def rule(key, h):
        n = nu.from_uniform(key_uniform(seed_key, key))
        return [child_key(key, i) for i in range(n)]

    return rule


def generate_gw(nu: OffspringDistribution, depth: Optional[int], seed, eager: bool = True) -> RootedTree:
    """Galton-Watson tree with offspring law ``nu``, truncated at height ``depth``.

    ``depth=None`` gives an infinite, lazily grown tree. With ``eager`` the
    truncated tree is expanded immediately.
    """
    if depth is not None and depth < 0:
        raise ValueError("depth must be >= 0")
    tree = RootedTree(_gw_rule(nu, _seed_key(seed)), max_depth=depth)
    if eager and depth is not None:
        tree.expand()
    return tree


def regular_tree(b: int, depth: Optional[int] = None) -> RootedTree:
    return generate_gw(OffspringDistribution.delta(b), depth, 0, eager=depth is not None)


def path_tree(depth: Optional[int] = None) -> RootedTree:
    """The half-line {0, 1, 2, ...} rooted at 0 (a 1-ary tree)."""
    return regular_tree(1, depth)


def percolate(tree: RootedTree, eta: float, seed) -> RootedTree:
    """Remove each non-root vertex, with its descendants, independently w.p. ``eta``."""
    if not 0 <= eta <= 1:
        raise ValueError("eta must be in [0, 1]")
    pkey = splitmix64(_seed_key(seed) ^ 0x5045524300000000)
    base = tree.rule

    def rule(key, h):
        return [k for k in base(key, h) if key_uniform(pkey, k) >= eta]

    out = RootedTree(rule, max_depth=tree.max_depth, root=tree.root)
    if tree.max_depth is not None and tree.is_expanded(tree.root):
        out.expand()
    return out


def truncate(tree: RootedTree, n: int) -> RootedTree:
    """The subtree T_n of vertices of height <= n."""
    if n < 0:
        raise ValueError("n must be >= 0")
    depth = n if tree.max_depth is None else min(n, tree.max_depth)
    out = RootedTree(tree.rule, max_depth=depth, root=tree.root)
    return out.expand()


def mean_level_sizes(trees: Iterable[RootedTree], depth: int) -> np.ndarray:
    return np.mean([t.level_sizes(depth) for t in trees], axis=0)
