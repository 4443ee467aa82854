"""Privacy budget arithmetic and participation auditing."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .plan import TreePlan


@dataclass(frozen=True)
class PrivacyParams:
    """An (epsilon, delta) budget."""

    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be positive and finite, got {self.epsilon}")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")

    def scaled(self, factor: float) -> "PrivacyParams":
        return PrivacyParams(self.epsilon * factor, self.delta * factor)


def split_budget(total: PrivacyParams, k: int) -> PrivacyParams:
    """Per-mechanism budget when each user takes part in ``k`` mechanisms."""
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    return PrivacyParams(total.epsilon / k, total.delta / k)


def composed_budget(
    per_mechanism: PrivacyParams,
    count: int,
    mode: str = "simple",
    delta_slack: float | None = None,
) -> PrivacyParams:
    """Reported total budget of ``count`` adaptively composed mechanisms.

    ``mode="simple"`` (the default, and what the mechanisms are calibrated for) adds
    the budgets. ``mode="advanced"`` reports the advanced composition bound
    ``eps*sqrt(2 c ln(1/slack)) + c*eps*(e^eps - 1)`` with total delta
    ``c*delta + slack``; it never changes any mechanism's noise.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    eps, delta = per_mechanism.epsilon, per_mechanism.delta
    if mode == "simple":
        return PrivacyParams(eps * count, delta * count)
    if mode == "advanced":
        slack = delta_slack if delta_slack is not None else max(delta, 1e-12)
        if not 0 < slack < 1:
            raise ValueError("delta_slack must lie in (0, 1)")
        total_eps = eps * math.sqrt(2 * count * math.log(1 / slack)) + count * eps * math.expm1(eps)
        return PrivacyParams(total_eps, min(count * delta + slack, 1 - 1e-15))
    raise ValueError(f"unknown composition mode {mode!r}")


@dataclass(frozen=True)
class ParticipationReport:
    per_user_mechanism_count: dict
    max_count: int
    per_mechanism_budget: PrivacyParams | None

    def total_per_user(self) -> PrivacyParams | None:
        """Simple-composition budget spent by the most exposed user."""
        if self.per_mechanism_budget is None or self.max_count == 0:
            return None
        return composed_budget(self.per_mechanism_budget, self.max_count)


def audit_participation(plan: "TreePlan", total: PrivacyParams | None = None) -> ParticipationReport:
    """Count, for every real user, the mechanisms (internal nodes) it feeds.

    Phantom padding leaves of binary plans are not users and are not reported.
    """
    diff = np.zeros(plan.n_padded + 2, dtype=np.int64)
    for node in plan.nodes:
        diff[node.start] += 1
        diff[node.end + 1] -= 1
    counts = np.cumsum(diff)[1 : plan.n + 1]
    per_user = {t: int(c) for t, c in enumerate(counts.tolist(), start=1)}
    max_count = int(counts.max()) if len(counts) else 0
    per_mech = split_budget(total, plan.k) if total is not None else None
    return ParticipationReport(per_user, max_count, per_mech)
