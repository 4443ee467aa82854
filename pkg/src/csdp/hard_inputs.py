"""Adversarial binary streams from the lower-bound input family.

A stream is a constant prefix, then alternating segments: one fresh fair bit,
then a block of ``floor(rep)`` copies of another fresh fair bit, cut at length n.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


def c_eps(epsilon: float) -> float:
    """e^eps / (e^(2 eps) + 1); equals 1/2 at eps = 0 and decreases after."""
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    # e^eps / (e^2eps + 1) == e^-eps / (1 + e^-2eps), no overflow for large eps
    return math.exp(-epsilon) / (1.0 + math.exp(-2.0 * epsilon))


def rep(n: float, k: int, epsilon: float) -> float:
    return 0.5 * n ** (1.0 / (2 * k + 1)) * c_eps(epsilon) ** (2.0 * k / (2 * k + 1))


def big(n: float, k: int, epsilon: float) -> float:
    return n ** ((2.0 * k - 1) / (2 * k + 1)) * c_eps(epsilon) ** (2.0 / (2 * k + 1))


@dataclass(frozen=True)
class HardDistParams:
    n: int
    k: int
    epsilon: float
    prefix_len: int = 0
    prefix_bit: int = 0

    def __post_init__(self):
        if self.n < 1 or self.k < 0:
            raise ValueError("need n >= 1 and k >= 0")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.prefix_bit not in (0, 1):
            raise ValueError("prefix_bit must be 0 or 1")
        if not 0 <= self.prefix_len <= math.floor(self.rep):
            raise ValueError(f"prefix_len must lie in [0, floor(rep)] = [0, {math.floor(self.rep)}]")

    @property
    def c_eps(self) -> float:
        return c_eps(self.epsilon)

    @property
    def rep(self) -> float:
        return rep(self.n, self.k, self.epsilon)

    @property
    def big(self) -> float:
        return big(self.n, self.k, self.epsilon)

    @property
    def block_len(self) -> int:
        return max(1, math.floor(self.rep))


@dataclass
class HardStream:
    """A sampled stream with the record of how it was generated."""

    bits: np.ndarray
    params: HardDistParams
    # (kind, start, length, bit) with kind in {"prefix", "single", "block"}; 0-based starts
    segments: list = field(default_factory=list)

    @property
    def fresh_positions(self) -> list[int]:
        """0-based positions of the single (non-repeated) fair bits."""
        return [s for kind, s, _, _ in self.segments if kind == "single"]

    def to_dict(self) -> dict:
        p = self.params
        return {
            "params": {"n": p.n, "k": p.k, "epsilon": p.epsilon, "prefix_len": p.prefix_len,
                       "prefix_bit": p.prefix_bit, "c_eps": p.c_eps, "rep": p.rep, "big": p.big},
            "bits": self.bits.tolist(),
            "segments": [list(s) for s in self.segments],
            "fresh_positions": self.fresh_positions,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def sample_hard_stream(params: HardDistParams, rng: np.random.Generator) -> HardStream:
    n, block = params.n, params.block_len
    bits = np.empty(n, dtype=np.int64)
    segments = []
    pos = min(params.prefix_len, n)
    bits[:pos] = params.prefix_bit
    if pos:
        segments.append(("prefix", 0, pos, params.prefix_bit))
    # lengths alternate 1, block, 1, block, ... cut at n; only the bits are random
    full, tail = divmod(n - pos, 1 + block)
    lengths = [1, block] * full + ([1] + ([tail - 1] if tail > 1 else []) if tail else [])
    draws = rng.integers(0, 2, size=len(lengths))
    bits[pos:] = np.repeat(draws, lengths)
    starts = pos + np.concatenate([[0], np.cumsum(lengths)[:-1]]).astype(np.int64)
    for i, (s, length, b) in enumerate(zip(starts.tolist(), lengths, draws.tolist())):
        segments.append(("single" if i % 2 == 0 else "block", s, length, b))
    return HardStream(bits, params, segments)


def validate_structure(stream: HardStream) -> bool:
    """Check a sampled stream against prefix . (single . block)* cut at n."""
    p = stream.params
    pos = 0
    segs = list(stream.segments)
    if segs and segs[0][0] == "prefix":
        kind, s, length, b = segs.pop(0)
        if s != 0 or length != p.prefix_len or b != p.prefix_bit:
            return False
        if not np.all(stream.bits[:length] == b):
            return False
        pos = length
    elif min(p.prefix_len, p.n) != 0:
        return False
    if len(stream.bits) != p.n:
        return False
    if not segs:
        return pos == p.n
    kinds = [seg[0] for seg in segs]
    starts = np.array([seg[1] for seg in segs], dtype=np.int64)
    lengths = np.array([seg[2] for seg in segs], dtype=np.int64)
    seg_bits = np.array([seg[3] for seg in segs], dtype=np.int64)
    if any(kind != ("single" if i % 2 == 0 else "block") for i, kind in enumerate(kinds)):
        return False
    want_starts = pos + np.concatenate([[0], np.cumsum(lengths)[:-1]])
    if not np.array_equal(starts, want_starts) or not np.all((seg_bits == 0) | (seg_bits == 1)):
        return False
    ends = starts + lengths
    singles_ok = np.all(lengths[0::2] == 1)
    want_blocks = np.minimum(p.block_len, p.n - starts[1::2])
    if not singles_ok or not np.array_equal(lengths[1::2], want_blocks) or ends[-1] != p.n:
        return False
    return bool(np.array_equal(stream.bits[pos:], np.repeat(seg_bits, lengths)))


def worst_case_probe(plan, params: HardDistParams, trials: int = 100, kind: str = "oracle",
                     budget=None, seed: int = 0, oracle_variance: float | None = None,
                     quantiles=(0.5, 0.9, 0.99)) -> dict:
    """Max-error quantiles of the tree estimator on sampled hard streams.

    Observational only: the numbers document how the estimator behaves on
    this family; nothing here bounds other algorithms.
    """
    from .estimator import process_stream
    from .privacy import PrivacyParams

    if trials < 100:
        raise ValueError("worst_case_probe needs at least 100 trials")
    if params.n != plan.n:
        raise ValueError("stream length and plan horizon differ")
    budget = budget or PrivacyParams(params.epsilon or 1.0, 0.01)
    errors = np.empty(trials)
    for i in range(trials):
        rng = np.random.default_rng([seed, 7, i])
        stream = sample_hard_stream(params, rng)
        res = process_stream(stream.bits, plan, kind, budget, seed=int(rng.integers(2**31)),
                             oracle_variance=oracle_variance)
        errors[i] = res.report.max_abs_error
    return {
        "errors": errors,
        "quantiles": {q: float(np.quantile(errors, q)) for q in quantiles},
        "rep": params.rep,
    }
