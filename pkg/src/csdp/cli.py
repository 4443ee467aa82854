"""Command line entry point: ``csdp <subcommand> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import SweepConfig
from .errors import CsdpError
from .estimator import process_stream
from .hard_inputs import HardDistParams, sample_hard_stream
from .mechanisms import KINDS, ORACLE
from .plan import build_plan
from .privacy import PrivacyParams
from .sweeps import (MECH_COLUMNS, fit_scaling, mechanism_test, run_bandit_sweep, run_sum_sweep,
                     sum_transcript, write_csv)


def _load(args) -> SweepConfig:
    cfg = SweepConfig.load(args.config)
    if args.seed is not None and cfg.seeds is None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    if args.output is not None:
        cfg.output = args.output
    cfg.validate()
    return cfg


def cmd_sum_sweep(args) -> int:
    cfg = _load(args)
    if cfg.experiment != "sum-sweep":
        raise CsdpError(f"config experiment is {cfg.experiment!r}, expected 'sum-sweep'")
    res = run_sum_sweep(cfg)
    for p in res.paths:
        print(f"wrote {p}")
    if args.fit:
        for fam, rows in res.rows.items():
            try:
                for k, (slope, se) in fit_scaling(rows).items():
                    print(f"fit family={fam} k={k} slope={slope:.4f} stderr={se:.4f}")
            except CsdpError as exc:
                print(f"fit family={fam}: {exc}")
    if args.dump_transcript:
        sum_transcript(cfg).write(args.dump_transcript, run_id="sum-sweep-first-cell")
    for cell, err in res.failures:
        print(f"FAILED cell {cell}: {err}", file=sys.stderr)
    return 1 if res.failures else 0


def cmd_bandit_sweep(args) -> int:
    cfg = _load(args)
    if cfg.experiment != "bandit-sweep":
        raise CsdpError(f"config experiment is {cfg.experiment!r}, expected 'bandit-sweep'")
    res = run_bandit_sweep(cfg)
    for p in res.paths:
        print(f"wrote {p}")
    if args.dump_transcript:
        print("note: bandit runs do not keep transcripts; use sum-sweep or mechanism-test",
              file=sys.stderr)
    for cell, err in res.failures:
        print(f"FAILED cell {cell}: {err}", file=sys.stderr)
    return 1 if res.failures else 0


def cmd_mechanism_test(args) -> int:
    seed = 0 if args.seed is None else args.seed
    res = mechanism_test(args.kind, args.m, args.eps, args.delta, args.trials, seed, args.d,
                         args.oracle_variance)
    print(f"kind={args.kind} m={args.m} eps={args.eps} delta={args.delta} trials={args.trials}")
    print(res.summary())
    if args.out:
        write_csv(args.out, MECH_COLUMNS, res.rows)
    if args.dump_transcript:
        res.transcript.write(args.dump_transcript, run_id=f"mechanism-test-{args.kind}")
    return 0 if res.unbiased and res.variance_ok else 1


def cmd_hard_input(args) -> int:
    seed = args.seed if args.seed is not None else 0
    params = HardDistParams(args.n, args.k, args.eps, args.prefix_len, args.prefix_bit)
    stream = sample_hard_stream(params, np.random.default_rng([seed, 7]))
    Path(args.out).write_text(stream.dumps() + "\n", encoding="utf-8")
    print(f"wrote {args.out}: n={args.n} rep={params.rep:.6g} big={params.big:.6g} "
          f"c_eps={params.c_eps:.6g}")
    if args.dump_transcript:
        plan = build_plan(args.n, max(1, args.k))
        res = process_stream(stream.bits, plan, ORACLE, PrivacyParams(args.eps, 0.01), seed,
                             engine="protocol")
        res.transcript.write(args.dump_transcript, run_id="hard-input")
        print(f"tree estimator max error on this stream: {res.report.max_abs_error:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    def globals_parser(default):
        g = argparse.ArgumentParser(add_help=False)
        g.add_argument("--seed", type=int, default=default, help="base seed")
        g.add_argument("--dump-transcript", metavar="PATH", default=default,
                       help="write the shuffled-message transcript as JSON lines")
        g.add_argument("-v", "--verbose", action="store_true",
                       default=False if default is None else default)
        return g

    # global flags work before or after the subcommand; the subcommand copy
    # must not reset a value given before it
    common = globals_parser(argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="csdp", parents=[globals_parser(None)],
                                description="Concurrent-shuffle private summation experiments")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sum-sweep", parents=[common], help="error sweep of the tree estimator")
    s.add_argument("--config", required=True)
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--output", default=None, help="override the config output path")
    s.add_argument("--fit", action="store_true", help="print per-k log-log slopes")
    s.set_defaults(func=cmd_sum_sweep)

    b = sub.add_parser("bandit-sweep", parents=[common], help="private LinUCB regret sweep")
    b.add_argument("--config", required=True)
    b.add_argument("--workers", type=int, default=None)
    b.add_argument("--output", default=None)
    b.set_defaults(func=cmd_bandit_sweep)

    m = sub.add_parser("mechanism-test", parents=[common], help="unbiasedness/variance check")
    m.add_argument("--kind", required=True, choices=KINDS)
    m.add_argument("--m", type=int, required=True)
    m.add_argument("--eps", type=float, required=True)
    m.add_argument("--delta", type=float, required=True)
    m.add_argument("--trials", type=int, required=True)
    m.add_argument("--d", type=int, default=1)
    m.add_argument("--oracle-variance", type=float, default=1.0)
    m.add_argument("--out", default=None, help="per-trial CSV")
    m.set_defaults(func=cmd_mechanism_test)

    h = sub.add_parser("hard-input", parents=[common], help="sample a lower-bound stream")
    h.add_argument("--n", type=int, required=True)
    h.add_argument("--k", type=int, required=True)
    h.add_argument("--eps", type=float, required=True)
    h.add_argument("--out", required=True)
    h.add_argument("--prefix-len", type=int, default=0)
    h.add_argument("--prefix-bit", type=int, default=0)
    h.set_defaults(func=cmd_hard_input)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CsdpError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
