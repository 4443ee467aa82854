"""Shuffle-model summation mechanisms.

Three kinds share one interface (``MechanismSpec.encode`` per user,
``MechanismSpec.decode`` per shuffled batch):

``binary-blanket``
    Randomized-response blanket over bits: each user reports its bit, except
    that with probability ``gamma`` it reports a fresh fair coin instead.
``vector-fixedpoint``
    Per-coordinate blanket over 16-bit fixed point. Coordinates in [-1, 1] are
    shifted to [0, 1], stochastically rounded to ``q = 2**16`` levels and
    blanketed with ``q * Bernoulli(1/2)``. Messages are integers tagged with
    their coordinate: ``tag * (q + 1) + level``.
``oracle``
    No encoding; the decoder returns the exact batch sum plus centered Gaussian
    noise of a configured variance. Used for large accuracy sweeps.

The blanket rate ``gamma = min(1, 32 log(2/delta) / (eps^2 m))`` gives the
variance shape O(log(1/delta)/eps^2); the constant is a conservative choice and
the amplification claim is not formally proved here, only the unbiasedness and
variance contracts are checked.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import EstimatorUndefined, MalformedTranscript
from .privacy import PrivacyParams, split_budget

BINARY = "binary-blanket"
VECTOR = "vector-fixedpoint"
ORACLE = "oracle"
KINDS = (BINARY, VECTOR, ORACLE)

BLANKET_CONSTANT = 32.0
QUANT_LEVELS = 1 << 16


@dataclass(frozen=True)
class SumEstimate:
    value: float | np.ndarray
    true_variance_bound: float


def blanket_rate(m: int, budget: PrivacyParams, constant: float = BLANKET_CONSTANT) -> float:
    """Fraction of users replaced by fair coins in a batch of ``m``."""
    if m < 1:
        raise ValueError(f"batch size must be >= 1, got {m}")
    if budget.delta <= 0:
        raise ValueError("the blanket mechanism needs delta > 0 (pure DP is not supported)")
    return min(1.0, constant * math.log(2.0 / budget.delta) / (budget.epsilon**2 * m))


def binary_variance(m: int, gamma: float) -> float:
    """Exact variance of the debiased binary sum, m*gamma*(2-gamma) / (4*(1-gamma)^2).

    A blanketed message is Bernoulli(1 - gamma/2) or Bernoulli(gamma/2), so its
    variance (gamma/2)(1 - gamma/2) does not depend on the input bit.
    """
    if gamma >= 1:
        return math.inf
    return m * gamma * (2.0 - gamma) / (4.0 * (1.0 - gamma) ** 2)


def _blanket(levels: np.ndarray, top: int, gamma: float, rng: np.random.Generator) -> np.ndarray:
    replace = rng.random(levels.shape) < gamma
    coins = rng.integers(0, 2, size=levels.shape, dtype=np.int64) * top
    return np.where(replace, coins, levels)


def encode_bits(bits, gamma: float, rng: np.random.Generator) -> np.ndarray:
    """Vectorised ``encode_binary`` over an array of bits."""
    b = np.asarray(bits)
    if not np.all((b == 0) | (b == 1)):
        raise ValueError("binary-blanket inputs must be bits")
    return _blanket(b.astype(np.int64), 1, gamma, rng)


def encode_binary(bit: int, gamma: float, rng: np.random.Generator) -> int:
    return int(encode_bits(np.array([bit]), gamma, rng)[0])


def decode_binary_sum(msgs, m: int, gamma: float) -> SumEstimate:
    """Unbiased estimate of the batch sum from the shuffled blanket bits."""
    msgs = np.asarray(msgs)
    if len(msgs) != m:
        raise MalformedTranscript(f"expected {m} messages, got {len(msgs)}")
    if gamma >= 1:
        raise EstimatorUndefined("blanket rate 1: the messages carry no signal")
    total = int(msgs.sum())
    value = (total - gamma * m / 2.0) / (1.0 - gamma)
    return SumEstimate(value, binary_variance(m, gamma))


def _stochastic_round(scaled: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    low = np.floor(scaled)
    up = rng.random(scaled.shape) < (scaled - low)
    return low.astype(np.int64) + up


def encode_vectors(xs, spec: "MechanismSpec", rng: np.random.Generator) -> np.ndarray:
    """Tagged fixed-point messages for a batch of users, shape (users, d)."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 1:
        xs = xs.reshape(-1, 1) if spec.d == 1 else xs.reshape(1, -1)
    if xs.shape[1] != spec.d:
        raise ValueError(f"expected vectors of length {spec.d}, got shape {xs.shape}")
    if np.any(np.linalg.norm(xs, axis=1) > 1 + 1e-9):
        raise ValueError("vector inputs must have l2 norm <= 1")
    q = QUANT_LEVELS
    z = np.clip((xs + 1.0) / 2.0, 0.0, 1.0)
    levels = _stochastic_round(z * q, rng)
    msgs = _blanket(levels, q, spec.gamma, rng)
    return np.arange(spec.d, dtype=np.int64) * (q + 1) + msgs


def encode_vector(x, spec: "MechanismSpec", rng: np.random.Generator) -> np.ndarray:
    """One user's tagged fixed-point messages for a vector in the unit ball."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape != (spec.d,):
        raise ValueError(f"expected a vector of length {spec.d}, got shape {x.shape}")
    return encode_vectors(x.reshape(1, -1), spec, rng)[0]


def decode_vector_sum(msgs, m: int, spec: "MechanismSpec") -> SumEstimate:
    """Per-coordinate debias, de-quantize and de-shift; unbiased per entry."""
    q = QUANT_LEVELS
    msgs = np.asarray(msgs, dtype=np.int64)
    gamma = spec.gamma
    if gamma >= 1:
        raise EstimatorUndefined("blanket rate 1: the messages carry no signal")
    tags, levels = np.divmod(msgs, q + 1)
    if len(msgs) and (tags.min() < 0 or tags.max() >= spec.d):
        raise MalformedTranscript("message carries an unknown coordinate tag")
    counts = np.bincount(tags, minlength=spec.d)
    if len(counts) != spec.d or np.any(counts != m):
        raise MalformedTranscript(f"every coordinate needs exactly {m} messages, got {counts.tolist()}")
    sums = np.bincount(tags, weights=levels.astype(np.float64), minlength=spec.d)
    shifted = (sums - gamma * m * q / 2.0) / ((1.0 - gamma) * q)
    value = 2.0 * shifted - m
    # scalar streams get a float, like the binary and oracle kinds
    return SumEstimate(float(value[0]) if spec.d == 1 else value, vector_variance(m, gamma))


def vector_variance(m: int, gamma: float, q: int = QUANT_LEVELS) -> float:
    """Per-entry variance bound of the decoded vector sum (blanket + rounding)."""
    if gamma >= 1:
        return math.inf
    return m * gamma * (2.0 - gamma) / (1.0 - gamma) ** 2 + m / q**2


def oracle_sum(true_sum, variance: float, rng: np.random.Generator | None = None,
               z=None) -> SumEstimate:
    """Exact sum plus N(0, variance) noise per entry.

    The standard normals come from ``rng`` or are passed in as ``z`` (same shape
    as ``true_sum``); the noise never depends on the sum itself.
    """
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    base = np.asarray(true_sum, dtype=np.float64)
    if z is None:
        if rng is None:
            raise ValueError("oracle_sum needs an rng or pre-drawn normals")
        z = rng.standard_normal(base.shape)
    noise = math.sqrt(variance) * np.asarray(z, dtype=np.float64)
    value = base + noise
    return SumEstimate(float(value) if value.ndim == 0 else value, float(variance))


def default_oracle_variance(budget: PrivacyParams, d: int = 1, constant: float = 1.0) -> float:
    """Oracle variance with the contracted shapes and a tunable constant.

    Scalar: ``C log(1/delta) / eps^2``; d entries: ``C log(d/delta)^2 / eps^2``.
    """
    if budget.delta <= 0:
        raise ValueError("the oracle variance shape needs delta > 0")
    if d == 1:
        return constant * math.log(1.0 / budget.delta) / budget.epsilon**2
    return constant * math.log(d / budget.delta) ** 2 / budget.epsilon**2


@dataclass(frozen=True)
class MechanismSpec:
    """A shuffle summation instance: kind, batch size, budget and dimension."""

    kind: str
    m: int
    budget: PrivacyParams
    d: int = 1
    oracle_variance: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown mechanism kind {self.kind!r}")
        if self.m < 1 or self.d < 1:
            raise ValueError("batch size and dimension must be >= 1")
        if self.kind == BINARY and self.d != 1:
            raise ValueError("binary-blanket is scalar (d=1)")
        if self.oracle_variance < 0:
            raise ValueError("oracle_variance must be nonnegative")

    @property
    def gamma(self) -> float:
        if self.kind == BINARY:
            return blanket_rate(self.m, self.budget)
        if self.kind == VECTOR:
            return blanket_rate(self.m, split_budget(self.budget, self.d))
        return 0.0

    @property
    def messages_per_user(self) -> int:
        return 1 if self.kind in (BINARY, ORACLE) else self.d

    def variance(self) -> float:
        return mechanism_variance(self.kind, self.m, self.budget, self.d, self.oracle_variance)

    def encode(self, value, rng: np.random.Generator | None = None) -> np.ndarray:
        """Messages a single user hands to the shuffler.

        Oracle messages are the raw value as a (1, d) row so that shuffling
        keeps coordinates together.
        """
        if self.kind == BINARY:
            return encode_bits(np.atleast_1d(value), self.gamma, rng)
        if self.kind == VECTOR:
            return encode_vector(value, self, rng)
        row = np.atleast_1d(np.asarray(value, dtype=np.float64))
        if row.shape != (self.d,):
            raise ValueError(f"expected a value of length {self.d}, got shape {row.shape}")
        return row.reshape(1, self.d)

    def decode(self, messages, z=None, rng: np.random.Generator | None = None) -> SumEstimate:
        if self.kind == BINARY:
            return decode_binary_sum(messages, self.m, self.gamma)
        if self.kind == VECTOR:
            return decode_vector_sum(messages, self.m, self)
        rows = np.asarray(messages, dtype=np.float64).reshape(-1, self.d)
        if len(rows) != self.m:
            raise MalformedTranscript(f"expected {self.m} messages, got {len(rows)}")
        # fsum is exactly rounded, so the sum is independent of message order
        total = np.array([math.fsum(col) for col in rows.T])
        if self.d == 1:
            total = total[0]
            if z is not None:
                z = np.asarray(z).reshape(())
        return oracle_sum(total, self.oracle_variance, rng=rng, z=z)


def mechanism_variance(kind: str, m: int, budget: PrivacyParams, d: int = 1,
                       oracle_variance: float = 0.0) -> float:
    """Variance bound (per entry) that this implementation actually attains."""
    if kind == ORACLE:
        return float(oracle_variance)
    if kind == BINARY:
        return binary_variance(m, blanket_rate(m, budget))
    if kind == VECTOR:
        return vector_variance(m, blanket_rate(m, split_budget(budget, d)))
    raise ValueError(f"unknown mechanism kind {kind!r}")


@lru_cache(maxsize=None)
def _triu(d: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(d)


def sym_to_upper(mat) -> np.ndarray:
    """Upper triangle (row-major, diagonal included) of a symmetric matrix."""
    mat = np.asarray(mat, dtype=np.float64)
    return mat[_triu(mat.shape[0])]


def upper_to_sym(vec, d: int) -> np.ndarray:
    """Inverse of ``sym_to_upper``: mirror an upper triangle into a symmetric matrix."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (d * (d + 1) // 2,):
        raise ValueError(f"expected {d * (d + 1) // 2} entries for d={d}")
    out = np.zeros((d, d))
    out[_triu(d)] = vec
    return out + np.triu(out, 1).T
