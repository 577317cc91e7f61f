import csv
import json
import math
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from decmac.cli import main, sweep_capacities
from decmac.config import parse_config


def write(tmp_path, text, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return path


RAYLEIGH_K2 = """
users:
  - distribution: {kind: exponential, mean: 1.0}
    p_avg_db: 0
    repeat: 2
solver: {n_bins: 60}
"""


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_solve_writes_outputs(tmp_path):
    cfg = write(tmp_path, RAYLEIGH_K2)
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["termination"] == "converged" and summary["unit"] == "nats"
    assert summary["kkt_residual"] <= 1e-6
    rows = read_csv(tmp_path / "out" / "policies.csv")
    assert len(rows) == 120 and {r["user"] for r in rows} == {"0", "1"}
    probs = np.array([float(r["prob"]) for r in rows if r["user"] == "0"])
    powers = np.array([float(r["power"]) for r in rows if r["user"] == "0"])
    assert probs @ powers == pytest.approx(1.0, rel=1e-6)
    traj = [float(r["sum_rate"]) for r in read_csv(tmp_path / "out" / "trajectory.csv")]
    assert traj[-1] == pytest.approx(summary["capacity"], rel=1e-15)
    assert all(b >= a - 1e-9 for a, b in zip(traj, traj[1:]))


def test_solve_is_byte_stable(tmp_path):
    cfg = write(tmp_path, RAYLEIGH_K2)
    for name in ("a", "b"):
        assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
    for f in ("policies.csv", "trajectory.csv", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_bits_are_nats_over_ln2(tmp_path):
    cfg = write(tmp_path, RAYLEIGH_K2)
    main(["solve", "--config", str(cfg), "--out", str(tmp_path / "n")])
    main(["--rate-unit", "bits", "solve", "--config", str(cfg), "--out", str(tmp_path / "b")])
    nats = json.loads((tmp_path / "n" / "summary.json").read_text())["capacity"]
    bits = json.loads((tmp_path / "b" / "summary.json").read_text())
    assert bits["unit"] == "bits"
    assert bits["capacity"] == pytest.approx(nats / math.log(2), rel=1e-14)


def test_zero_budget_user_serialized(tmp_path):
    cfg = write(tmp_path, """
        users:
          - distribution: {kind: deterministic, value: 1.0}
          - distribution: {kind: discrete, atoms: [[0.0, 1.0]]}
        """)
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["lambdas"][1] is None
    assert summary["capacity"] == pytest.approx(math.log(2), abs=1e-12)


def test_sweep_outputs_and_ordering(tmp_path):
    caps = {}
    for K in (2, 3):
        cfg = write(tmp_path, f"""
            users:
              - distribution: {{kind: exponential}}
                repeat: {K}
            solver: {{n_bins: 40}}
            sweep: {{p_avg_db_start: -5, p_avg_db_stop: 15, p_avg_db_step: 5}}
            """, f"k{K}.yaml")
        out = tmp_path / f"k{K}"
        assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
        rows = read_csv(out / "capacity_vs_pavg.csv")
        assert [float(r["p_avg_db"]) for r in rows] == [-5, 0, 5, 10, 15]
        assert all(r["termination"] == "converged" for r in rows)
        caps[K] = np.array([float(r["capacity"]) for r in rows])
        assert np.all(np.diff(caps[K]) > 0)
    assert np.all(caps[3] >= caps[2] - 1e-9)


def test_warm_start_matches_cold_start():
    cfg = parse_config("""
users:
  - distribution: {kind: exponential}
    repeat: 2
solver: {n_bins: 40, eps_rate: 1.0e-12, kkt_tol: 1.0e-9}
sweep: {p_avg_db_start: 0, p_avg_db_stop: 10, p_avg_db_step: 2.5}
""")
    warm = sweep_capacities(cfg, warm_start=True)
    cold = sweep_capacities(cfg, warm_start=False)
    for w, c in zip(warm, cold):
        assert abs(w["capacity"] - c["capacity"]) <= 1e-7


def test_compare_oracle_two_state(tmp_path, capsys):
    cfg = write(tmp_path, """
        users:
          - distribution: {kind: discrete, atoms: [[0.5, 0.5], [1.5, 0.5]]}
            repeat: 2
        oracle: {power_step: 0.01, power_max: 2.0}
        """)
    assert main(["compare-oracle", "--config", str(cfg)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["oracle"] == "brute-force" and report["pass"]
    assert report["gap"] <= 1e-3


def test_compare_oracle_single_user(tmp_path, capsys):
    cfg = write(tmp_path, """
        users:
          - distribution: {kind: discrete, atoms: [[0.2, 0.3], [1.0, 0.3], [4.0, 0.4]]}
            p_avg_db: 3
        """)
    assert main(["compare-oracle", "--config", str(cfg)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["oracle"] == "waterfilling" and report["gap"] <= 1e-6


def test_compare_oracle_rejects_continuous(tmp_path):
    cfg = write(tmp_path, RAYLEIGH_K2)
    assert main(["compare-oracle", "--config", str(cfg)]) == 1


def test_invalid_config_exit_1_and_no_files(tmp_path, capsys):
    cfg = write(tmp_path, "users:\n  - distribution: {kind: rician}\n")
    out = tmp_path / "never"
    assert main(["solve", "--config", str(cfg), "--out", str(out)]) == 1
    assert not out.exists()
    assert "unknown distribution kind" in capsys.readouterr().err
    assert main(["sweep", "--config", str(write(tmp_path, RAYLEIGH_K2)), "--out", str(out)]) == 1
    assert not out.exists()


def test_usage_errors(tmp_path):
    assert main([]) == 1
    assert main(["solve"]) == 1
    assert main(["solve", "--config", str(write(tmp_path, RAYLEIGH_K2))]) == 1
    assert main(["--help"]) == 0


def test_non_convergence_exit_2(tmp_path):
    cfg = write(tmp_path, RAYLEIGH_K2.replace("{n_bins: 60}", "{n_bins: 60, max_outer_iters: 1}"))
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["termination"] == "max_iters"


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, RAYLEIGH_K2)
    proc = subprocess.run(
        [sys.executable, "-m", "decmac", "--verbose", "solve", "--config", str(cfg),
         "--out", str(tmp_path / "o")],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert "capacity" in proc.stdout and "sweep 1" in proc.stderr
