import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from csdp.cli import main
from csdp.config import SweepConfig
from csdp.errors import ConfigError, FitUndefined
from csdp.sweeps import (SUM_COLUMNS, family_path, fit_scaling, mean_regret_by_n, mechanism_test,
                         run_bandit_sweep, run_sum_sweep)


def sum_cfg(tmp_path, **kw):
    base = dict(experiment="sum-sweep", n=[8], k=["binary"], mechanism=["oracle"],
                oracle_variance=0.0, families=["all-ones"], trials=5,
                output=str(tmp_path / "sum.csv"))
    base.update(kw)
    return SweepConfig.from_dict(base)


def read(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


@pytest.mark.parametrize("bad", [
    {"n": []}, {"k": []}, {"epsilon": []}, {"families": []}, {"seeds": [1, 1]},
    {"experiment": "nope"}, {"k": [0]}, {"n": [1]}, {"mechanism": ["laplace"]},
    {"families": ["zeros"]}, {"delta": [1.0]}, {"bogus_key": 1}, {"trials": 0},
])
def test_config_validation(tmp_path, bad):
    with pytest.raises(ConfigError):
        sum_cfg(tmp_path, **bad)


def test_config_load_yaml_and_json(tmp_path):
    y = tmp_path / "c.yaml"
    y.write_text("experiment: sum-sweep\nn: 64\nk: [1, binary]\ntrials: 3\n")
    cfg = SweepConfig.load(y)
    assert cfg.n == [64] and cfg.k == [1, "binary"] and cfg.cell_seeds == [0, 1, 2]
    j = tmp_path / "c.json"
    j.write_text(json.dumps({"experiment": "bandit-sweep", "n": [32], "seeds": [5, 9]}))
    assert SweepConfig.load(j).cell_seeds == [5, 9]
    bad = tmp_path / "bad.yaml"
    bad.write_text("experiment: [unclosed\n")
    with pytest.raises(ConfigError):
        SweepConfig.load(bad)


def test_single_cell_binary_n8_all_ones(tmp_path):
    res = run_sum_sweep(sum_cfg(tmp_path))
    rows = read(tmp_path / "sum.csv")
    assert list(rows[0]) == list(SUM_COLUMNS)
    assert {float(r["max_error"]) for r in rows} == {1.0}
    assert not res.failures


def test_sum_sweep_deterministic_and_worker_independent(tmp_path):
    kw = dict(n=[64, 100], k=[1, 2], oracle_variance=None, trials=100,
              families=["all-ones", "seeded-uniform", "hard"])
    a = run_sum_sweep(sum_cfg(tmp_path, output=str(tmp_path / "a.csv"), **kw))
    b = run_sum_sweep(sum_cfg(tmp_path, output=str(tmp_path / "b.csv"), workers=2, **kw))
    for fam in kw["families"]:
        pa = family_path(str(tmp_path / "a.csv"), fam, kw["families"])
        pb = family_path(str(tmp_path / "b.csv"), fam, kw["families"])
        assert pa.read_bytes() == pb.read_bytes()
        rows = read(pa)
        assert len(rows) == 4 * 100
        assert all(r["alpha_hat"] for r in rows)
    assert not a.failures and not b.failures


def test_failing_cell_is_isolated(tmp_path):
    cfg = sum_cfg(tmp_path, n=[64], k=[1], mechanism=["oracle", "binary-blanket"],
                  epsilon=[0.1], oracle_variance=None, families=["seeded-uniform"], trials=3)
    res = run_sum_sweep(cfg)
    assert len(res.failures) == 1
    assert res.failures[0][0][-1] == "binary-blanket"
    rows = read(tmp_path / "sum.csv")
    assert len(rows) == 3 and {r["mechanism"] for r in rows} == {"oracle"}


def test_trace_output(tmp_path):
    cfg = sum_cfg(tmp_path, trace_output=str(tmp_path / "trace.csv"))
    run_sum_sweep(cfg)
    rows = read(tmp_path / "trace.csv")
    assert list(rows[0]) == ["run_id", "t", "y_hat", "true_sum", "abs_error"]
    assert len(rows) == 8


def test_fit_scaling_exact_power_law():
    rows = [(n, 1, 1.0, "oracle", 0, n ** (1 / 3), "") for n in (2**10, 2**11, 2**12, 2**13)]
    slope, se = fit_scaling(rows)[1]
    assert slope == pytest.approx(1 / 3, abs=1e-9)
    assert se < 1e-9


def test_fit_scaling_degenerate():
    const = [(n, 2, 1.0, "oracle", 0, 5.0, "") for n in (16, 32, 64, 128)]
    with pytest.raises(FitUndefined):
        fit_scaling(const)
    few = [(n, 2, 1.0, "oracle", 0, float(n), "") for n in (16, 32, 64)]
    with pytest.raises(FitUndefined):
        fit_scaling(few)
    with pytest.raises(FitUndefined):
        fit_scaling([])


def test_fit_scaling_from_csv_and_median(tmp_path):
    cfg = sum_cfg(tmp_path, n=[256, 512, 1024, 2048], k=[2], oracle_variance=None,
                  families=["seeded-uniform"], trials=20)
    run_sum_sweep(cfg)
    by_path = fit_scaling(tmp_path / "sum.csv")
    assert set(by_path) == {2}
    assert 0.0 < by_path[2][0] < 0.6
    assert set(fit_scaling(tmp_path / "sum.csv", stat="median")) == {2}


def bandit_cfg(tmp_path, **kw):
    base = dict(experiment="bandit-sweep", n=[256], k=[1], epsilon=[0.5], trials=3,
                output=str(tmp_path / "bandit.csv"))
    base.update(kw)
    return SweepConfig.from_dict(base)


def test_bandit_sweep_zero_noise_single_action(tmp_path):
    run_bandit_sweep(bandit_cfg(tmp_path, n_actions=1, oracle_variance=0.0))
    rows = read(tmp_path / "bandit.csv")
    assert rows and all(float(r["regret"]) == 0.0 for r in rows)


def test_bandit_sweep_pairs_and_means(tmp_path):
    res = run_bandit_sweep(bandit_cfg(tmp_path, n=[2**10, 2**12], k=[1, 3], seeds=[3, 4],
                                      trace_output=str(tmp_path / "bt.csv")))
    rows = res.rows["bandit"]
    pairs = {(r[0], r[4]): [] for r in rows}
    for r in rows:
        pairs[(r[0], r[4])].append(r[1])
    assert all(sorted(v) == [1, 3] for v in pairs.values())
    means = mean_regret_by_n(rows)
    assert set(means) == {(1, 1024), (1, 4096), (3, 1024), (3, 4096)}
    trace = read(tmp_path / "bt.csv")
    assert list(trace[0]) == ["run_id", "t", "action", "reward", "inst_regret", "cum_regret"]


def test_mechanism_test_contracts():
    res = mechanism_test("binary-blanket", 100, 4.0, 0.1, 400, seed=1)
    assert res.unbiased and res.variance_ok
    assert len(res.transcript) == 400
    res = mechanism_test("vector-fixedpoint", 50, 8.0, 0.1, 200, seed=2, d=2)
    assert res.unbiased


def test_cli_sum_sweep_and_transcript(tmp_path, capsys):
    cfg = tmp_path / "s.yaml"
    cfg.write_text(f"experiment: sum-sweep\nn: [16]\nk: [1]\nfamilies: [seeded-uniform]\n"
                   f"trials: 4\noutput: {tmp_path / 'out.csv'}\n")
    for name in ("t1.jsonl", "t2.jsonl"):
        assert main(["--seed", "7", "sum-sweep", "--config", str(cfg),
                     "--dump-transcript", str(tmp_path / name)]) == 0
    assert (tmp_path / "t1.jsonl").read_bytes() == (tmp_path / "t2.jsonl").read_bytes()
    first = json.loads((tmp_path / "t1.jsonl").read_text().splitlines()[0])
    assert first["run_id"] == "sum-sweep-first-cell" and first["kind"] == "oracle"
    assert "wrote" in capsys.readouterr().out


def test_cli_seed_before_and_after_subcommand(tmp_path):
    cfg = tmp_path / "s.yaml"
    cfg.write_text(f"experiment: sum-sweep\nn: [16]\nk: [1]\nfamilies: [seeded-uniform]\n"
                   f"trials: 2\noutput: {tmp_path / 'o.csv'}\n")
    main(["--seed", "11", "sum-sweep", "--config", str(cfg), "--output", str(tmp_path / "a.csv")])
    main(["sum-sweep", "--seed", "11", "--config", str(cfg), "--output", str(tmp_path / "b.csv")])
    main(["sum-sweep", "--config", str(cfg), "--output", str(tmp_path / "c.csv")])
    a, b, c = ((tmp_path / f).read_bytes() for f in ("a.csv", "b.csv", "c.csv"))
    assert a == b and a != c


def test_cli_mechanism_test_and_hard_input(tmp_path, capsys):
    code = main(["mechanism-test", "--kind", "binary-blanket", "--m", "1000", "--eps", "1",
                 "--delta", "0.01", "--trials", "200", "--dump-transcript", str(tmp_path / "m.jsonl")])
    out = capsys.readouterr().out
    assert "unbiased=" in out and code in (0, 1)
    assert len((tmp_path / "m.jsonl").read_text().splitlines()) == 200
    assert main(["hard-input", "--n", "128", "--k", "1", "--eps", "1", "--seed", "3",
                 "--out", str(tmp_path / "h.json")]) == 0
    rec = json.loads((tmp_path / "h.json").read_text())
    assert len(rec["bits"]) == 128 and "fresh_positions" in rec


def test_cli_errors(tmp_path, capsys):
    cfg = tmp_path / "s.yaml"
    cfg.write_text("experiment: sum-sweep\nn: []\n")
    assert main(["sum-sweep", "--config", str(cfg)]) == 2
    assert "error" in capsys.readouterr().err
    cfg.write_text("experiment: bandit-sweep\nn: [16]\n")
    assert main(["sum-sweep", "--config", str(cfg)]) == 2


def test_console_script_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "csdp.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("sum-sweep", "bandit-sweep", "mechanism-test", "hard-input"):
        assert cmd in out.stdout
    assert "--dump-transcript" in out.stdout and "--seed" in out.stdout


def test_shipped_configs_load():
    from pathlib import Path
    paths = sorted((Path(__file__).resolve().parents[1] / "configs").glob("*.yaml"))
    assert len(paths) >= 3
    for p in paths:
        SweepConfig.load(p)


def test_shipped_blanket_config_runs(tmp_path):
    from pathlib import Path
    path = Path(__file__).resolve().parents[1] / "configs" / "sum_sweep_blanket.yaml"
    cfg = SweepConfig.load(path)
    cfg.output = str(tmp_path / "blanket.csv")
    res = run_sum_sweep(cfg)
    assert not res.failures
    assert len(read(tmp_path / "blanket.csv")) == 2 * 2 * 20
