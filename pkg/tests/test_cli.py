import hashlib
import json
import subprocess
import sys

import pytest

from bpdl.cli import main

SMALL = """\
model:
  gamma: 5
  mu: 1
  alpha: 1
  U: {shape: indicator, radius: 0.5}
  D: {shape: tophat, radius: 3}
  domain: {kind: torus, side: 20}
initial: {kind: atoms, at: [0.0], count: 5}
run:
  T: 2
  replicates: 6
  snapshots: {every: 0.5}
  window: [-5, 5]
output:
  positions: true
  histograms: {times: [1, 2], bin_width: 1}
"""


def _write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


def test_presets_listing(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    assert "stationarity" in out and "fig1" in out


def test_simulate_outputs_and_manifest(tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "--config", _write(tmp_path, SMALL), "--out", str(out), "--seed", "3"]) == 0
    files = _files(out)
    assert {"traces.csv", "manifest.json", "plot.gp"} <= set(files)
    man = json.loads(files["manifest.json"])
    assert man["seed"] == 3 and man["subcommand"] == "simulate"
    for name, digest in man["outputs"].items():
        assert hashlib.sha256(files[name]).hexdigest() == digest
    header = files["traces.csv"].decode().splitlines()[0]
    assert header.startswith("replicate_id,t,count,births_cum")


def test_reproducible_across_threads(tmp_path):
    cfg = _write(tmp_path, SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", cfg, "--out", str(a), "--seed", "9", "--threads", "1"]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(b), "--seed", "9", "--threads", "3"]) == 0
    fa, fb = _files(a), _files(b)
    assert fa.keys() == fb.keys()
    for name in fa:
        if name == "manifest.json":
            ma, mb = json.loads(fa[name]), json.loads(fb[name])
            for m in (ma, mb):
                m.pop("started"), m.pop("finished"), m.pop("threads", None)
            assert ma == mb
        else:
            assert fa[name] == fb[name], name


def test_missing_kernel_field_exit_2(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL.replace("  D: {shape: tophat, radius: 3}\n", ""))
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "model.D" in capsys.readouterr().err


def test_bad_value_reports_line(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL.replace("radius: 0.5", "radius: -0.5"))
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "line 5" in capsys.readouterr().err


def test_unknown_experiment_exit_2(tmp_path, capsys):
    assert main(["experiment", "bogus", "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "scaling-c1" in err and "lattice-survival" in err


def test_expensive_flag_required(tmp_path):
    assert main(["experiment", "scaling-c2", "--out", str(tmp_path / "o")]) == 2


def test_thread_env_validation(tmp_path, monkeypatch):
    monkeypatch.setenv("BPDL_THREADS", "zero")
    assert main(["simulate", "--config", _write(tmp_path, SMALL), "--out", str(tmp_path / "o")]) == 2


def test_failed_check_exit_3(tmp_path):
    text = SMALL + "checks:\n  window_average: {from: 1, to: 2, tol: 1.0e-9}\n"
    assert main(["simulate", "--config", _write(tmp_path, text), "--out", str(tmp_path / "o")]) == 3


def test_experiment_config_mismatch(tmp_path):
    cfg = _write(tmp_path, "experiment: slivnyak\nreplicates: 100\n")
    assert main(["experiment", "stationarity", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_experiment_small_run(tmp_path):
    cfg = _write(tmp_path, "experiment: slivnyak\nreplicates: 500\n")
    out = tmp_path / "o"
    assert main(["experiment", "slivnyak", "--config", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] is True


@pytest.mark.parametrize("preset", ["logistic-oracle", "dbc-decay", "fixed-point", "mass-decay", "l2-decay"])
def test_meanfield_presets(tmp_path, preset):
    out = tmp_path / preset
    assert main(["meanfield", "--preset", preset, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] is True
    if preset == "logistic-oracle":
        assert summary["max_error"] < 1e-6
    if preset == "fixed-point":
        assert (out / "contraction.csv").exists() and summary["F_c0_error"] <= 1e-12


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "bpdl.cli", "presets"], capture_output=True, text=True)
    assert r.returncode == 0 and "presets:" in r.stdout
