"""Tree-of-batches construction, the published-node cover, and activation schedules.

Times and leaf indices are 1-based throughout, matching user arrival order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class Node:
    node_id: int
    level: int
    start: int
    end: int

    @property
    def open_time(self) -> int:
        return self.start

    @property
    def close_time(self) -> int:
        return self.end

    @property
    def size(self) -> int:
        return self.end - self.start + 1

    @property
    def label(self) -> str:
        return f"v{self.start}^{self.end}"

    def contains(self, t: int) -> bool:
        return self.start <= t <= self.end


def ceil_root(n: int, p: int) -> int:
    """Smallest integer r >= 1 with r**p >= n (exact, no float rounding)."""
    if n <= 1:
        return 1
    r = max(1, int(round(n ** (1.0 / p))))
    while r**p < n:
        r += 1
    while r > 1 and (r - 1) ** p >= n:
        r -= 1
    return r


def max_levels(n: int) -> int:
    """Largest admissible shuffler count for horizon ``n``: ceil(log2 n) - 1, at least 1."""
    return max(1, (n - 1).bit_length() - 1)


@dataclass(frozen=True)
class TreePlan:
    """Immutable tree of batches: level-l nodes run on shuffler slot l.

    ``n_padded`` exceeds ``n`` only for binary plans, whose extra leaves are
    phantom users contributing value 0.
    """

    n: int
    k: int
    d: int
    d_low: int
    nodes: tuple[Node, ...]
    binary: bool = False
    n_padded: int = 0

    def __post_init__(self):
        if self.n_padded == 0:
            object.__setattr__(self, "n_padded", self.n)

    # -- derived structure -------------------------------------------------

    @cached_property
    def close_times(self) -> list[int]:
        """Distinct node close times, ascending."""
        return sorted({v.end for v in self.nodes})

    @cached_property
    def cover_chain(self) -> tuple[list[int], list[int]]:
        """(prev, top) arrays indexed by position in ``close_times``.

        ``top[i]`` is the highest-level node closing at ``close_times[i]``;
        ``prev[i]`` is the close-time index ending right before that node starts
        (-1 when it starts at leaf 1). Following ``prev`` from ``i`` enumerates
        the published cover at that close time, right to left.
        """
        best: dict[int, Node] = {}
        for v in self.nodes:
            cur = best.get(v.end)
            if cur is None or v.level > cur.level:
                best[v.end] = v
        index = {e: i for i, e in enumerate(self.close_times)}
        prev, top = [], []
        for e in self.close_times:
            v = best[e]
            top.append(v.node_id)
            prev.append(index[v.start - 1] if v.start > 1 else -1)
        return prev, top

    @cached_property
    def close_index(self) -> list[int]:
        """For t in 0..n_padded, index into ``close_times`` of the last close <= t (-1 if none)."""
        out = [-1] * (self.n_padded + 1)
        j = -1
        closes = self.close_times
        for t in range(1, self.n_padded + 1):
            while j + 1 < len(closes) and closes[j + 1] <= t:
                j += 1
            out[t] = j
        return out

    @cached_property
    def _by_start(self) -> dict[int, list[Node]]:
        out: dict[int, list[Node]] = {}
        for v in self.nodes:
            out.setdefault(v.start, []).append(v)
        for vs in out.values():
            vs.sort(key=lambda v: -v.level)
        return out

    @cached_property
    def arrays(self) -> dict:
        """Numpy views of the structure used by vectorised code paths."""
        prev, top = self.cover_chain
        return {
            "start": np.array([v.start for v in self.nodes], dtype=np.int64),
            "end": np.array([v.end for v in self.nodes], dtype=np.int64),
            "level": np.array([v.level for v in self.nodes], dtype=np.int64),
            "prev": np.array(prev, dtype=np.int64),
            "top": np.array(top, dtype=np.int64),
            "close_times": np.array(self.close_times, dtype=np.int64),
            "close_index": np.array(self.close_index, dtype=np.int64),
        }

    def closed_prefix(self, t: int) -> int:
        """Number of leading users whose values are covered by closed nodes at time t."""
        i = self.close_index[t]
        return self.close_times[i] if i >= 0 else 0

    def max_vstar_size(self) -> int:
        prev, _ = self.cover_chain
        depth = [0] * len(prev)
        for i, p in enumerate(prev):
            depth[i] = 1 + (depth[p] if p >= 0 else 0)
        return max(depth, default=0)

    def nodes_at_level(self, level: int) -> list[Node]:
        return [v for v in self.nodes if v.level == level]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "d": self.d,
            "d_low": self.d_low,
            "binary": self.binary,
            "n_padded": self.n_padded,
            "nodes": [
                {"node_id": v.node_id, "level": v.level, "start": v.start, "end": v.end}
                for v in self.nodes
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "TreePlan":
        nodes = tuple(Node(x["node_id"], x["level"], x["start"], x["end"]) for x in data["nodes"])
        return cls(
            n=data["n"], k=data["k"], d=data["d"], d_low=data["d_low"], nodes=nodes,
            binary=data.get("binary", False), n_padded=data.get("n_padded", data["n"]),
        )


def _group(children: list[tuple[int, int]], size: int) -> list[tuple[int, int]]:
    return [
        (children[i][0], children[min(i + size, len(children)) - 1][1])
        for i in range(0, len(children), size)
    ]


def build_plan(n: int, k: int | None = None, binary: bool = False) -> TreePlan:
    """Build the tree of batches for horizon ``n`` and ``k`` shufflers.

    General mode uses d_low = ceil(n^(1/(2k+1))) and the smallest d with
    d_low * d^k >= n; trailing nodes are ragged so exactly n leaves exist.
    Binary mode pads n up to a power of two and uses k = log2(n_padded) - 1.
    """
    if isinstance(n, bool) or int(n) != n or n < 2:
        raise ValueError(f"horizon n must be an integer >= 2, got {n!r}")
    n = int(n)
    if binary:
        height = (n - 1).bit_length()
        n_padded = 1 << height
        kk = height - 1
        if kk < 1:
            raise ValueError("binary mode needs n >= 3: a two-leaf tree has no non-root internal node")
        if k is not None and k != kk:
            raise ValueError(f"binary mode for n={n} uses k={kk}, got k={k}")
        k, d, d_low = kk, 2, 2
    else:
        if k is None:
            raise ValueError("k is required in general mode")
        if isinstance(k, bool) or int(k) != k or k < 1:
            raise ValueError(f"k must be a positive integer (no shuffler means no private protocol), got {k!r}")
        k = int(k)
        if k > max_levels(n):
            raise ValueError(f"k={k} exceeds ceil(log2 n) - 1 = {max_levels(n)} for n={n}")
        n_padded = n
        d_low = ceil_root(n, 2 * k + 1)
        leaves_above = -(-n // d_low)
        d = ceil_root(leaves_above, k)

    ranges = [(s, min(s + d_low - 1, n_padded)) for s in range(1, n_padded + 1, d_low)]
    nodes: list[Node] = []
    for level in range(1, k + 1):
        if level > 1:
            ranges = _group(ranges, d)
        for s, e in ranges:
            nodes.append(Node(len(nodes), level, s, e))
    return TreePlan(n=n, k=k, d=d, d_low=d_low, nodes=tuple(nodes), binary=binary, n_padded=n_padded)


def vstar(plan: TreePlan, t: int) -> list[Node]:
    """Published cover at time t: greedy left-to-right choice of maximal closed nodes.

    From cursor 1, repeatedly take the highest-level node that starts at the
    cursor and has closed by t.
    """
    if not 0 <= t <= plan.n_padded:
        raise ValueError(f"t={t} outside 0..{plan.n_padded}")
    out: list[Node] = []
    cursor = 1
    by_start = plan._by_start
    while True:
        for v in by_start.get(cursor, ()):
            if v.end <= t:
                out.append(v)
                cursor = v.end + 1
                break
        else:
            return out


def vstar_ids(plan: TreePlan, t: int) -> list[int]:
    """Node ids of the cover at time t via the precomputed chain (left to right)."""
    i = plan.close_index[t]
    prev, top = plan.cover_chain
    out = []
    while i >= 0:
        out.append(top[i])
        i = prev[i]
    out.reverse()
    return out


@dataclass
class Schedule:
    """Per-time activation and execution lists (index 0 unused)."""

    activations: list[list[Node]] = field(default_factory=list)
    executions: list[list[Node]] = field(default_factory=list)

    def at(self, t: int) -> tuple[list[Node], list[Node]]:
        return self.activations[t], self.executions[t]


def schedule(plan: TreePlan) -> Schedule:
    """Nodes to activate (open_time == t) and execute (close_time == t) at each time."""
    acts: list[list[Node]] = [[] for _ in range(plan.n_padded + 1)]
    execs: list[list[Node]] = [[] for _ in range(plan.n_padded + 1)]
    for v in sorted(plan.nodes, key=lambda v: (v.start, v.level)):
        acts[v.start].append(v)
    for v in sorted(plan.nodes, key=lambda v: (v.end, v.level)):
        execs[v.end].append(v)
    return Schedule(acts, execs)


def leaf_ranges(nodes: Iterable[Node]) -> list[tuple[int, int]]:
    return [(v.start, v.end) for v in nodes]
