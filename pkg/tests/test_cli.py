"""Command line: exit codes, dry runs, bundles and machine-readable output."""

import json
import subprocess
import sys

import pytest

from pspinamp.cli import main

SMALL_SPHERICAL = ["--set", "model.mode=spherical", "--set", "model.n=120", "--set", "amp.delta=0.1",
                   "--set", "amp.n_se_samples=2000"]


def run_json(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None


def test_help_lists_subcommands():
    out = subprocess.run([sys.executable, "-m", "pspinamp.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("solve-gamma", "run", "se-check", "pde-check", "oracle", "bench"):
        assert cmd in out.stdout


def test_example_config(capsys):
    assert main(["example-config"]) == 0
    assert "[model]" in capsys.readouterr().out


def test_unknown_key_exits_2(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[model]\nwhatever = 3\n")
    assert main(["run", "-c", str(cfg), "--dry-run"]) == 2
    assert main(["run", "--set", "nosection.key=1", "--dry-run"]) == 2
    assert main(["run", "--set", "amp.delta=2", "--dry-run"]) == 2
    assert main(["run", "-c", str(tmp_path / "missing.ini")]) == 2


def test_dry_run_plan(capsys):
    code, payload = run_json(capsys, ["--json", "run", "--dry-run"])
    assert code == 0
    assert payload["plan"]["iterations"] == 47
    assert payload["plan"]["disorder_bytes"] == 2000**2 * 8
    code, payload = run_json(capsys, ["run", "--dry-run", "--json", "--set", "model.mixture=2:1,4:1",
                                      "--set", "model.n=400"])
    assert code == 4
    assert payload["plan"]["disorder_bytes"] > payload["plan"]["byte_budget"]


def test_budget_refusal_without_dry_run(tmp_path, capsys):
    out = tmp_path / "refused"
    assert main(["run", "--set", "model.mixture=2:1,4:1", "--set", "model.n=400",
                 "--set", f"output.dir={out}"]) == 4
    assert not out.exists()


def test_oracle(capsys):
    code, payload = run_json(capsys, ["oracle", "--json", "--n", "10", "--seed", "3"])
    assert code == 0
    assert payload["n"] == 10 and len(payload["argmax"]) == 10
    assert main(["oracle", "--n", "23"]) == 4


def test_pde_check_json(capsys):
    code, payload = run_json(capsys, ["pde-check", "--json"])
    assert code == 0 and payload["ok"]
    assert any(c["name"].startswith("phi(0,0)") for c in payload["checks"])


def test_solve_gamma_spherical(tmp_path, capsys):
    code, payload = run_json(capsys, ["solve-gamma", "--json", "--set", "model.mode=spherical",
                                      "--set", f"output.dir={tmp_path}"])
    assert code == 0
    assert payload["value"] == pytest.approx(2**0.5, rel=1e-8)
    assert (tmp_path / "gamma.csv").read_text().startswith("# config_hash=")


def test_run_bundle_is_reproducible(tmp_path, capsys):
    bundles = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["run", "--set", f"output.dir={out}", *SMALL_SPHERICAL]) == 0
        bundles.append(out)
    capsys.readouterr()
    for f in ("report.json", "iterations.jsonl", "rounding.json", "gamma.csv"):
        assert (bundles[0] / f).read_bytes() == (bundles[1] / f).read_bytes()
    report = json.loads((bundles[0] / "report.json").read_text())
    h = report["config_hash"]
    assert report["config"]["n"] == 120
    first = json.loads((bundles[0] / "iterations.jsonl").read_text().splitlines()[0])
    assert first["config_hash"] == h
    assert set(first) >= {"iter", "norm_m", "energy", "se_pred_energy", "max_abs_m"}
    assert json.loads((bundles[0] / "profile.json").read_text()).keys() >= {"calibrate", "iamp", "round"}


def test_ising_run_with_gamma_file(tmp_path, capsys):
    g = tmp_path / "g.csv"
    g.write_text("t,gamma\n0.0,1.0\n0.5,2.0\n")
    out = tmp_path / "o"
    code, payload = run_json(capsys, ["run", "--json", "--set", f"variational.gamma_file={g}",
                                      "--set", "model.n=150", "--set", "amp.delta=0.1",
                                      "--set", "amp.t_star=0.5", "--set", "amp.n_se_samples=2000",
                                      "--set", f"output.dir={out}"])
    assert code == 0
    assert payload["rounding"]["monotone"]
    assert abs(payload["final_energy"]) < 3
    assert (out / "rounding.json").exists()


def test_env_output_dir_and_threads(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("PSPINAMP_OUTPUT_DIR", str(tmp_path / "env"))
    monkeypatch.setenv("PSPINAMP_THREADS", "1")
    assert main(["solve-gamma", "--set", "model.mode=spherical"]) == 0
    assert (tmp_path / "env" / "report.json").exists()
    assert main(["--threads", "0", "pde-check"]) == 2


def test_se_check_spherical(capsys):
    code, payload = run_json(capsys, ["se-check", "--json", "--norm-tol", "10", "--z-max", "1e9",
                                      *SMALL_SPHERICAL])
    assert code == 0
    assert {"norm_law_max_deviation", "checks", "ok"} <= set(payload)
