"""Online tree-based summation over concurrent shufflers.

At every time t the server publishes the sum of the decoded estimates of the
nodes in the cover ``vstar(plan, t)``. Between batch closes the output is held
at the last closed-prefix estimate. Ground-truth prefix sums are recorded next
to the outputs for error instrumentation only; the server never reads them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import EstimatorUndefined
from .mechanisms import (BINARY, KINDS, ORACLE, MechanismSpec, SumEstimate,
                         default_oracle_variance)
from .plan import TreePlan, vstar_ids
from .privacy import PrivacyParams, split_budget
from .runtime import ShuffleRuntime, Transcript

NOISE_STREAM = 2


@dataclass
class ErrorReport:
    max_abs_error: float
    per_time_error: np.ndarray

    @classmethod
    def from_outputs(cls, outputs: np.ndarray, true_prefix: np.ndarray) -> "ErrorReport":
        err = np.abs(np.asarray(outputs) - np.asarray(true_prefix))
        if err.ndim > 1:
            err = err.max(axis=1)
        return cls(float(err.max()) if len(err) else 0.0, err)


@dataclass
class StreamResult:
    """Outputs of one run; unpacks as ``(outputs, report)``."""

    outputs: np.ndarray
    true_prefix: np.ndarray
    report: ErrorReport
    node_estimates: dict = field(default_factory=dict)
    provenance: list | None = None
    transcript: Transcript | None = None

    def __iter__(self):
        return iter((self.outputs, self.report))

    def csv_rows(self, run_id) -> list[tuple]:
        """Rows ``(run_id, t, y_hat, true_sum, abs_error)`` for scalar runs."""
        return [
            (run_id, t, float(y), float(s), float(e))
            for t, (y, s, e) in enumerate(
                zip(self.outputs, self.true_prefix, self.report.per_time_error), start=1)
        ]


def node_specs(plan: TreePlan, kind: str, total: PrivacyParams, dim: int = 1,
               oracle_variance: float | None = None, oracle_constant: float = 1.0) -> dict:
    """Mechanism for every node, each with the simple-composition share of ``total``."""
    if kind not in KINDS:
        raise ValueError(f"unknown mechanism kind {kind!r}")
    per_mech = split_budget(total, plan.k)
    var = 0.0
    if kind == ORACLE:
        var = (default_oracle_variance(per_mech, dim, oracle_constant)
               if oracle_variance is None else float(oracle_variance))
    specs = {v.node_id: MechanismSpec(kind, v.size, per_mech, dim, var) for v in plan.nodes}
    if kind != ORACLE:
        for v in plan.nodes:
            if specs[v.node_id].gamma >= 1:
                raise EstimatorUndefined(
                    f"blanket rate is 1 for node {v.label} (m={v.size}); raise epsilon or batch sizes")
    return specs


class TreeSumEstimator:
    """Server side of the protocol, fed one user per ``update`` call."""

    def __init__(self, plan: TreePlan, kind: str = ORACLE,
                 budget: PrivacyParams = PrivacyParams(1.0, 0.01), seed: int = 0, dim: int = 1,
                 oracle_variance: float | None = None, oracle_constant: float = 1.0,
                 track_provenance: bool = False, specs: dict | None = None):
        self.plan = plan
        self.kind = kind
        self.dim = dim
        self.specs = specs if specs is not None else node_specs(
            plan, kind, budget, dim, oracle_variance, oracle_constant)
        self.runtime = ShuffleRuntime(plan, self.specs, seed)
        self.node_estimates: dict[int, SumEstimate] = {}
        self.t = 0
        self._last_close = -1
        self._current = np.zeros(dim) if dim > 1 else 0.0
        self.provenance: list | None = [] if track_provenance else None
        self._z = None
        if kind == ORACLE:
            rng = np.random.default_rng([int(seed), NOISE_STREAM])
            self._z = rng.standard_normal((len(plan.nodes), dim))

    @property
    def transcript(self) -> Transcript:
        return self.runtime.transcript

    @property
    def estimate(self):
        return self._current

    def update(self, value):
        """Feed user ``t + 1``'s value; return the published estimate at that time."""
        t = self.t + 1
        for rec in self.runtime.step(t, value):
            spec = self.specs[rec.mechanism_id]
            z = self._z[rec.mechanism_id] if self._z is not None else None
            self.node_estimates[rec.mechanism_id] = spec.decode(rec.messages, z=z)
        self.t = t
        i = self.plan.close_index[t]
        if i != self._last_close:
            self._last_close = i
            ids = vstar_ids(self.plan, t)
            self._current = np.sum([self.node_estimates[j].value for j in ids], axis=0)
        if self.provenance is not None:
            self.provenance.append(tuple(vstar_ids(self.plan, t)))
        return self._current


def _validate(values, plan: TreePlan, kind: str):
    arr = np.asarray(values, dtype=np.float64)
    if len(arr) != plan.n:
        raise ValueError(f"stream has {len(arr)} values but the plan horizon is {plan.n}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("stream values must be finite")
    if arr.ndim == 1:
        if kind == BINARY:
            if not np.all((arr == 0) | (arr == 1)):
                raise ValueError("binary-blanket streams must be 0/1")
        elif np.any(arr < 0) or np.any(arr > 1):
            raise ValueError("scalar stream values must lie in [0, 1]")
        return arr, 1
    if arr.ndim != 2:
        raise ValueError("stream must be 1-d (scalars) or 2-d (vectors)")
    if kind == BINARY:
        raise ValueError("binary-blanket is scalar only")
    if np.any(np.linalg.norm(arr, axis=1) > 1 + 1e-9):
        raise ValueError("vector stream values must have l2 norm <= 1")
    return arr, arr.shape[1]


def process_stream(values, plan: TreePlan, kind: str = ORACLE,
                   budget: PrivacyParams = PrivacyParams(1.0, 0.01), seed: int = 0, *,
                   oracle_variance: float | None = None, oracle_constant: float = 1.0,
                   engine: str = "auto", track_provenance: bool = False) -> StreamResult:
    """Run the tree estimator over a whole stream.

    ``engine="protocol"`` drives the shuffler runtime user by user and keeps the
    transcript. ``engine="vectorized"`` (oracle kind only) computes the same
    estimates in bulk: identical noise draws, sums equal up to float
    association. ``"auto"`` picks vectorized for oracle runs without provenance.
    """
    arr, dim = _validate(values, plan, kind)
    if engine == "auto":
        engine = "vectorized" if kind == ORACLE and not track_provenance else "protocol"
    if engine == "vectorized":
        if kind != ORACLE:
            raise ValueError("the vectorized engine only supports the oracle kind")
        var = (default_oracle_variance(split_budget(budget, plan.k), dim, oracle_constant)
               if oracle_variance is None else float(oracle_variance))
        return _vectorized(arr, plan, var, seed)
    if engine != "protocol":
        raise ValueError(f"unknown engine {engine!r}")
    est = TreeSumEstimator(plan, kind, budget, seed, dim, oracle_variance, oracle_constant,
                           track_provenance)
    outs = []
    for b in arr:
        outs.append(np.copy(est.update(b if dim > 1 else b.item())))
    zero = np.zeros(dim) if dim > 1 else 0.0
    for _ in range(plan.n, plan.n_padded):
        est.update(zero)
    outputs = np.asarray(outs, dtype=np.float64).reshape(plan.n, -1)
    if dim == 1:
        outputs = outputs[:, 0]
    true_prefix = np.cumsum(arr, axis=0)
    prov = est.provenance[: plan.n] if est.provenance is not None else None
    return StreamResult(outputs, true_prefix, ErrorReport.from_outputs(outputs, true_prefix),
                        est.node_estimates, prov, est.transcript)


def _vectorized(arr: np.ndarray, plan: TreePlan, variance: float, seed: int) -> StreamResult:
    a = plan.arrays
    dim = 1 if arr.ndim == 1 else arr.shape[1]
    padded = np.zeros((plan.n_padded + 1, dim))
    padded[1 : plan.n + 1] = arr.reshape(plan.n, dim)
    prefix = np.cumsum(padded, axis=0)
    node_sums = prefix[a["end"]] - prefix[a["start"] - 1]
    z = np.random.default_rng([int(seed), NOISE_STREAM]).standard_normal((len(plan.nodes), dim))
    estimates = node_sums + math.sqrt(variance) * z
    cover = kernels.cover_sums(a["prev"], a["top"], estimates)
    idx = a["close_index"][1 : plan.n + 1]
    held = np.where((idx >= 0)[:, None], cover[np.maximum(idx, 0)], 0.0)
    true_prefix = prefix[1 : plan.n + 1]
    if dim == 1:
        held, true_prefix = held[:, 0], true_prefix[:, 0]
    return StreamResult(held, true_prefix, ErrorReport.from_outputs(held, true_prefix))


def oracle_max_errors(plan: TreePlan, streams: Iterable[np.ndarray], variance: float,
                      seeds: Sequence[int]) -> np.ndarray:
    """Max absolute error of vectorized oracle runs, one per (stream, seed) pair."""
    return np.array([
        _vectorized(np.asarray(s, dtype=np.float64), plan, variance, seed).report.max_abs_error
        for s, seed in zip(streams, seeds)
    ])


def error_profile(max_errors, beta: float) -> float:
    """Empirical alpha at failure probability beta: the (1 - beta) quantile of max errors."""
    errs = np.asarray(max_errors, dtype=np.float64)
    if len(errs) < 100:
        raise ValueError(f"error_profile needs at least 100 runs, got {len(errs)}")
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    return float(np.quantile(errs, 1.0 - beta))
