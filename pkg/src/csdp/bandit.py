"""LinUCB whose Gram matrix and feature-reward vector arrive through tree estimators.

Each user t picks an action from the state the server published at the last
batch close, then submits ``x_t y_t`` and the upper triangle of ``x_t x_t^T`` to
two tree estimators that share one plan and split the budget in half.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalFailure
from .estimator import TreeSumEstimator, node_specs
from .mechanisms import ORACLE, default_oracle_variance, sym_to_upper, upper_to_sym
from .plan import TreePlan, build_plan
from .privacy import PrivacyParams, split_budget


def beta(t: float, sigma: float, d: int, lam: float, alpha_conf: float) -> float:
    """Confidence radius sigma*sqrt(2 log(2/a) + d log(3 + 2t/(d lam))) + sqrt(3 lam/2) + sqrt(lam/2)."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if not 0 < alpha_conf <= 1:
        raise ValueError("alpha_conf must lie in (0, 1]")
    if t < 0:
        raise ValueError("t must be nonnegative")
    radius = math.sqrt(2 * math.log(2 / alpha_conf) + d * math.log(3 + 2 * t / (d * lam)))
    return sigma * radius + math.sqrt(1.5 * lam) + math.sqrt(0.5 * lam)


@dataclass
class BanditInstance:
    """Linear reward model with per-time contexts.

    ``contexts[t]`` is the (n_actions, d) feature matrix ``phi(c_t, .)``;
    ``noise[t, a]`` is the reward noise action a would receive at time t, drawn
    up front so different algorithms see common random numbers.
    """

    theta_star: np.ndarray
    contexts: np.ndarray
    noise: np.ndarray
    sigma: float

    def __post_init__(self):
        if np.linalg.norm(self.theta_star) > 1 + 1e-9:
            raise ValueError("theta_star must have l2 norm <= 1")
        if self.contexts.ndim != 3 or self.contexts.shape[2] != len(self.theta_star):
            raise ValueError("contexts must be (n, n_actions, d)")
        if self.contexts.shape[1] < 1:
            raise ValueError("the action set must be nonempty")
        if np.any(np.linalg.norm(self.contexts, axis=2) > 1 + 1e-9):
            raise ValueError("features must have l2 norm <= 1")

    @property
    def d(self) -> int:
        return len(self.theta_star)

    @property
    def horizon(self) -> int:
        return self.contexts.shape[0]

    def features(self, t: int) -> np.ndarray:
        return self.contexts[t - 1]

    def reward(self, t: int, action: int) -> float:
        x = self.contexts[t - 1, action]
        return float(np.clip(x @ self.theta_star + self.noise[t - 1, action], 0.0, 1.0))


def random_instance(n: int, d: int = 2, n_actions: int = 4, sigma: float = 0.1,
                    seed: int = 0, context: str = "random") -> BanditInstance:
    """Nonnegative unit-norm theta* and features, so mean rewards lie in [0, 1].

    ``context="fixed"`` repeats the first time step's features forever.
    """
    rng = np.random.default_rng([int(seed), 10])
    theta = np.abs(rng.standard_normal(d))
    theta /= np.linalg.norm(theta)
    shape = (1 if context == "fixed" else n, n_actions, d)
    feats = np.abs(rng.standard_normal(shape))
    feats /= np.linalg.norm(feats, axis=2, keepdims=True)
    if context == "fixed":
        feats = np.repeat(feats, n, axis=0)
    elif context != "random":
        raise ValueError(f"unknown context source {context!r}")
    noise = sigma * np.random.default_rng([int(seed), 11]).standard_normal((n, n_actions))
    return BanditInstance(theta, feats, noise, sigma)


@dataclass
class LinUcbState:
    V: np.ndarray
    u: np.ndarray
    theta_hat: np.ndarray
    V_inv: np.ndarray
    lam: float
    beta_t: float = 0.0
    repaired: bool = False

    @classmethod
    def initial(cls, d: int, lam: float) -> "LinUcbState":
        V = lam * np.eye(d)
        return cls(V, np.zeros(d), np.zeros(d), np.eye(d) / lam, lam)

    @classmethod
    def from_sums(cls, gram_est: np.ndarray, fr_est: np.ndarray, lam: float) -> "LinUcbState":
        """Regularise, repair to eigenvalues >= lam/2, and solve for theta-hat."""
        d = len(fr_est)
        V = gram_est + lam * np.eye(d)
        w, Q = np.linalg.eigh(V)
        repaired = bool(w.min() < lam / 2)
        w = np.maximum(w, lam / 2)
        if not np.all(np.isfinite(w)) or w.min() <= 0:
            raise NumericalFailure("Gram matrix is singular after repair")
        V = (Q * w) @ Q.T
        V_inv = (Q / w) @ Q.T
        return cls(V, fr_est.copy(), V_inv @ fr_est, V_inv, lam, repaired=repaired)


def ucb_scores(feats: np.ndarray, state: LinUcbState, beta_t: float) -> np.ndarray:
    widths = np.sqrt(np.maximum(np.einsum("ai,ij,aj->a", feats, state.V_inv, feats), 0.0))
    return feats @ state.theta_hat + beta_t * widths


def select_action(feats: np.ndarray, state: LinUcbState, beta_t: float | None = None) -> int:
    """UCB-maximising action; ties go to the lowest index."""
    b = state.beta_t if beta_t is None else beta_t
    scores = ucb_scores(feats, state, b)
    if not np.all(np.isfinite(scores)):
        raise NumericalFailure("non-finite UCB scores")
    return int(np.argmax(scores))


@dataclass
class RegretTrace:
    actions: np.ndarray
    rewards: np.ndarray
    inst_regret: np.ndarray

    @property
    def cum_regret(self) -> np.ndarray:
        return np.cumsum(self.inst_regret)

    @property
    def final_regret(self) -> float:
        return float(self.inst_regret.sum())

    def csv_rows(self, run_id) -> list[tuple]:
        cum = self.cum_regret
        return [
            (run_id, t, int(a), float(r), float(g), float(c))
            for t, (a, r, g, c) in enumerate(
                zip(self.actions, self.rewards, self.inst_regret, cum), start=1)
        ]


@dataclass
class BanditRun:
    trace: RegretTrace
    plan: TreePlan
    lam: float
    sigma_prime: float
    alpha_conf: float
    features: np.ndarray
    # (t, V, u) as published at every batch close
    published: list = field(default_factory=list)


def noise_scale(plan: TreePlan, specs: list[dict], n: int, d: int, scale: float = 1.0) -> float:
    """Per-entry error scale sigma' used to set lambda = 2 sigma' d.

    sqrt(worst mechanism variance * largest cover size) times the Gaussian
    quantile for a per-entry union bound over n^2 (d^2 + d) events.
    """
    var = max((s.variance() for group in specs for s in group.values()), default=0.0)
    quantile = math.sqrt(2 * math.log(2 * n * n * (d * d + d)))
    return scale * math.sqrt(var * plan.max_vstar_size()) * quantile


def run_bandit(instance: BanditInstance, n: int | None = None, k: int = 1,
               budget: PrivacyParams = PrivacyParams(0.5, 0.01), seed: int = 0, *,
               kind: str = ORACLE, binary: bool = False, oracle_variance: float | None = None,
               oracle_constant: float = 1.0, sigma_prime: float | None = None,
               sigma_prime_scale: float = 1.0, lambda_min: float = 1.0,
               alpha_conf: float | None = None) -> BanditRun:
    """Simulate the private LinUCB loop for ``n`` users.

    ``oracle_variance=0`` gives the zero-noise reference run. lambda is
    ``max(2 sigma' d, lambda_min)``; the floor keeps the zero-noise run well posed.
    """
    n = instance.horizon if n is None else n
    if n > instance.horizon:
        raise ValueError("instance horizon is shorter than n")
    d = instance.d
    D = d * (d + 1) // 2
    plan = build_plan(n, binary=True) if binary else build_plan(n, k)
    half = budget.scaled(0.5)
    per_mech = split_budget(half, plan.k)
    var_vec = var_mat = oracle_variance
    if kind == ORACLE and oracle_variance is None:
        var_vec = default_oracle_variance(per_mech, d, oracle_constant)
        var_mat = default_oracle_variance(per_mech, D, oracle_constant)
    vec_specs = node_specs(plan, kind, half, d, var_vec)
    mat_specs = node_specs(plan, kind, half, D, var_mat)
    if sigma_prime is None:
        sigma_prime = noise_scale(plan, [vec_specs, mat_specs], n, d, sigma_prime_scale)
    lam = max(2 * sigma_prime * d, lambda_min)
    alpha = 1.0 / n if alpha_conf is None else alpha_conf

    vec_est = TreeSumEstimator(plan, kind, half, seed=int(seed) * 2 + 1, dim=d, specs=vec_specs)
    mat_est = TreeSumEstimator(plan, kind, half, seed=int(seed) * 2 + 2, dim=D, specs=mat_specs)

    state = LinUcbState.initial(d, lam)
    actions = np.empty(n, dtype=np.int64)
    rewards = np.empty(n)
    regret = np.empty(n)
    xs = np.empty((n, d))
    published = []
    theta = instance.theta_star
    last_close = -1
    for t in range(1, n + 1):
        feats = instance.features(t)
        b = beta(t - 1, instance.sigma, d, lam, alpha)
        a = select_action(feats, state, b)
        x = feats[a]
        y = instance.reward(t, a)
        means = feats @ theta
        actions[t - 1], rewards[t - 1], regret[t - 1] = a, y, means.max() - means[a]
        xs[t - 1] = x
        u = vec_est.update(x * y)
        g = mat_est.update(sym_to_upper(np.outer(x, x)))
        i = plan.close_index[t]
        if i != last_close:
            last_close = i
            state = LinUcbState.from_sums(upper_to_sym(g, d), np.asarray(u, dtype=np.float64), lam)
            published.append((t, state.V.copy(), state.u.copy()))
    trace = RegretTrace(actions, rewards, regret)
    return BanditRun(trace, plan, lam, sigma_prime, alpha, xs, published)


@dataclass
class RegularityReport:
    times: np.ndarray
    H_norm: np.ndarray
    H_min_eig: np.ndarray
    h_norm: np.ndarray
    h_weighted: np.ndarray
    lam: float
    violations: np.ndarray

    @property
    def rho_max(self) -> float:
        return float(self.H_norm.max()) if len(self.H_norm) else 0.0

    @property
    def rho_min(self) -> float:
        return float(self.H_min_eig.min()) if len(self.H_min_eig) else 0.0

    @property
    def gamma(self) -> float:
        return float(self.h_weighted.max()) if len(self.h_weighted) else 0.0

    @property
    def any_violation(self) -> bool:
        return bool(self.violations.any())

    def bounds(self) -> dict:
        """The regularity constants the analysis assumes for this lambda."""
        lam = self.lam
        return {"rho_max": 1.5 * lam, "rho_min": 0.5 * lam, "gamma": math.sqrt(0.5 * lam)}


def regularity_diagnostics(run: BanditRun) -> RegularityReport:
    """Injected noise H = V - sum x x^T and h = u - sum x y at every published state.

    Sums run over the users covered when the state was published. A state is
    flagged when ||H|| > 3 lam/2 or ||h|| > lam/2; lambda_min(H) is reported only.
    """
    lam = run.lam
    xs, ys = run.features, run.trace.rewards
    gram = np.cumsum(np.einsum("ti,tj->tij", xs, xs), axis=0)
    fr = np.cumsum(xs * ys[:, None], axis=0)
    times, Hn, Hmin, hn, hw, viol = [], [], [], [], [], []
    for t, V, u in run.published:
        c = run.plan.closed_prefix(t)
        H = V - (gram[c - 1] if c > 0 else 0.0)
        h = u - (fr[c - 1] if c > 0 else 0.0)
        w = np.linalg.eigvalsh(H)
        norm_H = float(np.abs(w).max())
        min_H = float(w.min())
        norm_h = float(np.linalg.norm(h))
        weighted = float(np.sqrt(h @ np.linalg.solve(H, h))) if min_H > 0 else math.inf
        times.append(t)
        Hn.append(norm_H)
        Hmin.append(min_H)
        hn.append(norm_h)
        hw.append(weighted)
        tol = 1e-9 * max(lam, 1.0)
        viol.append(norm_H > 1.5 * lam + tol or norm_h > 0.5 * lam + tol)
    return RegularityReport(np.array(times), np.array(Hn), np.array(Hmin), np.array(hn),
                            np.array(hw), lam, np.array(viol, dtype=bool))
