"""Sweep orchestration and CSV reporting.

Cells are independent work items. With ``workers > 1`` they run on a process
pool; rows are always merged in cell order, so the CSV bytes do not depend on
completion order or worker count.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np
from scipy import stats

from .bandit import random_instance, regularity_diagnostics, run_bandit
from .config import BINARY_K, SweepConfig
from .errors import EstimatorUndefined, FitUndefined
from .estimator import error_profile, process_stream
from .hard_inputs import HardDistParams, sample_hard_stream
from .mechanisms import BINARY, ORACLE, MechanismSpec
from .plan import build_plan
from .privacy import PrivacyParams
from .runtime import SHUFFLER_STREAM, ShufflerSlot, Transcript, TranscriptRecord, node_rng

log = logging.getLogger(__name__)

SUM_COLUMNS = ("n", "k", "eps", "mechanism", "trial", "max_error", "alpha_hat")
BANDIT_COLUMNS = ("n", "k", "eps", "mechanism", "seed", "regret", "regret_per_n", "lambda",
                  "violation")
TRACE_COLUMNS = ("run_id", "t", "y_hat", "true_sum", "abs_error")
BANDIT_TRACE_COLUMNS = ("run_id", "t", "action", "reward", "inst_regret", "cum_regret")
MECH_COLUMNS = ("trial", "true_sum", "estimate", "error")

STREAM_SEED = 20


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def to_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


def write_csv(path, columns, rows) -> None:
    Path(path).write_text(to_csv(columns, rows), encoding="utf-8")


def family_path(output: str, family: str, families: list) -> Path:
    """One file per input family when several are swept; families are never pooled."""
    p = Path(output)
    if len(families) == 1:
        return p
    return p.with_name(f"{p.stem}_{family}{p.suffix}")


def make_stream(family: str, n: int, kind: str, seed: int, k_for_hard: int = 1,
                epsilon: float = 1.0) -> np.ndarray:
    rng = np.random.default_rng([int(seed), STREAM_SEED])
    if family == "all-ones":
        return np.ones(n)
    if family == "seeded-uniform":
        if kind == BINARY:
            return rng.integers(0, 2, n).astype(np.float64)
        return rng.random(n)
    if family == "hard":
        params = HardDistParams(n, k_for_hard, epsilon)
        return sample_hard_stream(params, rng).bits.astype(np.float64)
    raise ValueError(f"unknown input family {family!r}")


@dataclass
class SweepResult:
    rows: dict = field(default_factory=dict)  # family -> list of rows
    failures: list = field(default_factory=list)  # (cell, message)
    paths: list = field(default_factory=list)


def _plan_for(n: int, k):
    return build_plan(n, binary=True) if k == BINARY_K else build_plan(n, k)


def _sum_cell(args):
    cfg, (family, n, k, eps, delta, mech) = args
    plan = _plan_for(n, k)
    budget = PrivacyParams(eps, delta)
    errs, trace = [], None
    for i, seed in enumerate(cfg.cell_seeds):
        stream = make_stream(family, n, mech, seed, plan.k, eps)
        res = process_stream(stream, plan, mech, budget, seed,
                             oracle_variance=cfg.oracle_variance,
                             oracle_constant=cfg.oracle_constant)
        errs.append(res.report.max_abs_error)
        if i == 0 and cfg.trace_output:
            trace = res.csv_rows(f"{family}-n{n}-k{k}-eps{eps}-{mech}-s{seed}")
    alpha = error_profile(errs, cfg.beta) if len(errs) >= 100 else ""
    rows = [(n, k, eps, mech, i, e, alpha) for i, e in enumerate(errs)]
    return rows, trace


def _run_cells(fn, cfg: SweepConfig, cells: list):
    """Evaluate cells in order; a failing cell is reported and skipped."""
    work = [(cfg, c) for c in cells]
    results = []
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(fn, w) for w in work]
            for c, fut in zip(cells, futures):
                try:
                    results.append((c, fut.result(), None))
                except Exception as exc:  # noqa: BLE001 - cell isolation
                    results.append((c, None, f"{type(exc).__name__}: {exc}"))
    else:
        for c, w in zip(cells, work):
            try:
                results.append((c, fn(w), None))
            except Exception as exc:  # noqa: BLE001 - cell isolation
                results.append((c, None, f"{type(exc).__name__}: {exc}"))
    for c, _, err in results:
        if err is not None:
            log.error("cell %s failed: %s", c, err)
    return results


def run_sum_sweep(cfg: SweepConfig, write: bool = True) -> SweepResult:
    """Repeat ``process_stream`` per cell and input family; one row per trial.

    ``alpha_hat`` is the (1 - beta) quantile of the cell's max errors and is
    left empty for cells with fewer than 100 trials.
    """
    cells = list(product(cfg.families, cfg.n, cfg.k, cfg.epsilon, cfg.delta, cfg.mechanism))
    out = SweepResult(rows={f: [] for f in cfg.families})
    traces = []
    for cell, res, err in _run_cells(_sum_cell, cfg, cells):
        if err is not None:
            out.failures.append((cell, err))
            continue
        rows, trace = res
        out.rows[cell[0]].extend(rows)
        if trace:
            traces.extend(trace)
    if write:
        for fam in cfg.families:
            path = family_path(cfg.output, fam, cfg.families)
            try:
                write_csv(path, SUM_COLUMNS, out.rows[fam])
                out.paths.append(path)
            except OSError as exc:
                log.error("writing %s failed: %s", path, exc)
                out.failures.append((("write", fam), str(exc)))
        if cfg.trace_output:
            write_csv(cfg.trace_output, TRACE_COLUMNS, traces)
    return out


def fit_scaling(rows, stat: str = "mean", min_points: int = 4) -> dict:
    """Per-k log-log least-squares slope of max_error against n.

    ``rows`` is an iterable of dicts or tuples in ``SUM_COLUMNS`` order, or a
    path to a sweep CSV. Returns ``{k: (slope, stderr)}``.
    """
    if isinstance(rows, (str, Path)):
        with open(rows, newline="", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
    groups: dict = {}
    for r in rows:
        if not isinstance(r, dict):
            r = dict(zip(SUM_COLUMNS, r))
        k = r["k"]
        k = int(k) if str(k).isdigit() else k
        groups.setdefault(k, {}).setdefault(int(r["n"]), []).append(float(r["max_error"]))
    if not groups:
        raise FitUndefined("no rows to fit")
    agg = np.median if stat == "median" else np.mean
    out = {}
    for k, per_n in sorted(groups.items(), key=lambda kv: str(kv[0])):
        ns = np.array(sorted(per_n), dtype=np.float64)
        ys = np.array([agg(per_n[int(n)]) for n in ns])
        if len(ns) < min_points:
            raise FitUndefined(f"k={k}: need >= {min_points} distinct n values, got {len(ns)}")
        if np.any(ys <= 0) or np.ptp(ys) == 0:
            raise FitUndefined(f"k={k}: errors are constant or nonpositive, slope is undefined")
        fit = stats.linregress(np.log(ns), np.log(ys))
        out[k] = (float(fit.slope), float(fit.stderr))
    return out


def _bandit_cell(args):
    cfg, (n, k, eps, delta, mech) = args
    budget = PrivacyParams(eps, delta)
    rows, traces = [], []
    for seed in cfg.cell_seeds:
        inst = random_instance(n, cfg.d, cfg.n_actions, cfg.sigma, seed, cfg.context)
        run = run_bandit(inst, n, 1 if k == BINARY_K else k, budget, seed, kind=mech,
                         binary=k == BINARY_K, oracle_variance=cfg.oracle_variance,
                         oracle_constant=cfg.oracle_constant,
                         sigma_prime_scale=cfg.sigma_prime_scale, lambda_min=cfg.lambda_min,
                         alpha_conf=cfg.alpha_conf)
        reg = run.trace.final_regret
        viol = int(regularity_diagnostics(run).any_violation)
        rows.append((n, k, eps, mech, seed, reg, reg / n, run.lam, viol))
        if cfg.trace_output:
            traces.extend(run.trace.csv_rows(f"n{n}-k{k}-eps{eps}-{mech}-s{seed}"))
    return rows, traces


def run_bandit_sweep(cfg: SweepConfig, write: bool = True) -> SweepResult:
    """One regret summary row per (n, k, eps, mechanism, seed).

    Seeds are shared across cells, so rows with equal seed and different k are
    paired under common random numbers.
    """
    cells = list(product(cfg.n, cfg.k, cfg.epsilon, cfg.delta, cfg.mechanism))
    out = SweepResult(rows={"bandit": []})
    traces = []
    for cell, res, err in _run_cells(_bandit_cell, cfg, cells):
        if err is not None:
            out.failures.append((cell, err))
            continue
        out.rows["bandit"].extend(res[0])
        traces.extend(res[1])
    if write:
        write_csv(cfg.output, BANDIT_COLUMNS, out.rows["bandit"])
        out.paths.append(Path(cfg.output))
        if cfg.trace_output:
            write_csv(cfg.trace_output, BANDIT_TRACE_COLUMNS, traces)
    return out


def mean_regret_by_n(rows) -> dict:
    """{(k, n): mean regret} from bandit sweep rows."""
    acc: dict = {}
    for r in rows:
        acc.setdefault((r[1], r[0]), []).append(r[5])
    return {key: float(np.mean(v)) for key, v in sorted(acc.items(), key=lambda kv: str(kv[0]))}


@dataclass
class MechanismTestResult:
    rows: list
    mean_error: float
    stderr: float
    empirical_variance: float
    variance_bound: float
    transcript: Transcript

    @property
    def unbiased(self) -> bool:
        return abs(self.mean_error) <= 4 * self.stderr or self.stderr == 0

    @property
    def variance_ok(self) -> bool:
        return self.empirical_variance <= 1.2 * self.variance_bound

    def summary(self) -> str:
        ratio = (self.empirical_variance / self.variance_bound
                 if self.variance_bound > 0 else math.nan)
        return (f"mean_error={self.mean_error:.6g} stderr={self.stderr:.6g} "
                f"unbiased={'pass' if self.unbiased else 'FAIL'} "
                f"variance={self.empirical_variance:.6g} bound={self.variance_bound:.6g} "
                f"ratio={ratio:.4f} variance={'pass' if self.variance_ok else 'FAIL'}")


def mechanism_test(kind: str, m: int, epsilon: float, delta: float, trials: int, seed: int = 0,
                   d: int = 1, oracle_variance: float = 1.0) -> MechanismTestResult:
    """Encode, shuffle and decode ``trials`` batches of ``m`` random inputs.

    Inputs are fair bits (binary), uniform [0, 1] scalars or random unit-ball
    vectors. Errors are taken on the first coordinate.
    """
    spec = MechanismSpec(kind, m, PrivacyParams(epsilon, delta), d,
                         oracle_variance if kind == ORACLE else 0.0)
    if kind != ORACLE and spec.gamma >= 1:
        raise EstimatorUndefined(f"blanket rate is 1 at m={m}, eps={epsilon}, delta={delta}")
    errors = np.empty(trials)
    rows = []
    transcript = Transcript()
    for i in range(trials):
        rng = np.random.default_rng([int(seed), 30, i])
        if kind == BINARY:
            xs = rng.integers(0, 2, m)
        elif d == 1:
            xs = rng.random(m)
        else:
            v = rng.standard_normal((m, d))
            xs = v / np.linalg.norm(v, axis=1, keepdims=True) * rng.random((m, 1))
        slot = ShufflerSlot(1)
        slot.activate(spec, i)
        enc = node_rng(seed, 0, i)
        for x in xs:
            slot.submit(spec.encode(x, enc))
        msgs = slot.execute_if_full(node_rng(seed, SHUFFLER_STREAM, i))
        transcript.append(TranscriptRecord(i + 1, 1, i, kind, m, d, spec.gamma, msgs))
        est = spec.decode(msgs, rng=np.random.default_rng([int(seed), 31, i]))
        truth = np.atleast_1d(xs.sum(axis=0))[0]
        errors[i] = np.atleast_1d(est.value)[0] - truth
        rows.append((i, float(truth), float(np.atleast_1d(est.value)[0]), float(errors[i])))
    se = float(errors.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    var = float(errors.var(ddof=1)) if trials > 1 else 0.0
    return MechanismTestResult(rows, float(errors.mean()), se, var, spec.variance(), transcript)


def sum_transcript(cfg: SweepConfig) -> Transcript:
    """Protocol-engine transcript of the first trial of the first sum-sweep cell."""
    family, n, k, eps, delta, mech = next(iter(product(
        cfg.families, cfg.n, cfg.k, cfg.epsilon, cfg.delta, cfg.mechanism)))
    plan = _plan_for(n, k)
    seed = cfg.cell_seeds[0]
    stream = make_stream(family, n, mech, seed, plan.k, eps)
    res = process_stream(stream, plan, mech, PrivacyParams(eps, delta), seed,
                         oracle_variance=cfg.oracle_variance,
                         oracle_constant=cfg.oracle_constant, engine="protocol")
    return res.transcript


__all__ = [
    "SUM_COLUMNS", "BANDIT_COLUMNS", "TRACE_COLUMNS", "BANDIT_TRACE_COLUMNS", "MECH_COLUMNS",
    "SweepResult", "MechanismTestResult", "run_sum_sweep", "run_bandit_sweep", "fit_scaling",
    "mechanism_test", "make_stream", "mean_regret_by_n", "sum_transcript", "to_csv", "write_csv",
    "family_path",
]
