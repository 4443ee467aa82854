"""Brute-force reference implementations used by the tests.

These read only ``plan.nodes`` and simple arithmetic, never the planner's
cover chain or greedy walk.
"""
import numpy as np


def closed_prefix_formula(plan, t):
    """d_low * floor(t / d_low), except that the final (possibly ragged) leaf closes at the horizon."""
    if t >= plan.n_padded:
        return plan.n_padded
    return plan.d_low * (t // plan.d_low)


def brute_vstar(plan, t):
    """Maximal closed nodes by range inclusion; equal ranges resolve to the highest level.

    Returns (start, end) ranges sorted by start and asserts they tile [1..t_closed].
    """
    closed = [v for v in plan.nodes if v.end <= t]
    best = {}
    for v in closed:
        key = (v.start, v.end)
        if key not in best or v.level > best[key].level:
            best[key] = v
    maximal = []
    for (s, e), v in best.items():
        inside = any(s2 <= s and e <= e2 and (s2, e2) != (s, e) for (s2, e2) in best)
        if not inside:
            maximal.append(v)
    maximal.sort(key=lambda v: v.start)
    cursor = 1
    for v in maximal:
        assert v.start == cursor, "brute-force cover is not contiguous"
        cursor = v.end + 1
    assert cursor - 1 == closed_prefix_formula(plan, t), (cursor - 1, t)
    return [(v.start, v.end) for v in maximal]


def brute_participation(plan):
    """Number of nodes containing each real user 1..n (index 0 unused)."""
    counts = np.zeros(plan.n + 1, dtype=np.int64)
    for v in plan.nodes:
        counts[v.start : min(v.end, plan.n) + 1] += 1
    return counts


def permutation_index(perm):
    """Lehmer rank of a permutation of 0..len-1."""
    perm = list(perm)
    rank = 0
    n = len(perm)
    fact = [1] * (n + 1)
    for i in range(1, n + 1):
        fact[i] = fact[i - 1] * i
    for i, p in enumerate(perm):
        smaller = sum(1 for q in perm[i + 1 :] if q < p)
        rank += smaller * fact[n - 1 - i]
    return rank
