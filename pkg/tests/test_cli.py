from __future__ import annotations

import csv
import json

import pytest

from quasimodes import cli


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = cli.main([*args, "--out", str(out)])
    return code, out


def write_cfg(tmp_path, text):
    p = tmp_path / "run.ini"
    p.write_text(text)
    return str(p)


def test_validate_passes(tmp_path):
    code, out = run(tmp_path, "validate")
    assert code == 0
    checks = json.loads((out / "validate.json").read_text())["checks"]
    assert {c["check"] for c in checks} >= {"flat_torus_first_20", "constant_factor_scaling", "gauss_bonnet"}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "validate" and len(manifest["config_hash"]) == 64


def test_geodesic_record(tmp_path):
    code, out = run(tmp_path, "geodesic")
    rec = json.loads((out / "geodesic.json").read_text())
    assert code == 0 and rec[0]["classification"] == "elliptic_generic" and rec[1]["classification"] == "hyperbolic"


def test_spectrum_csv_schema(tmp_path):
    cfg = write_cfg(tmp_path, "[grid]\nn_t = 2\nN_s = 128\n[spectrum]\nLambda_max = 3.0\n")
    code, out = run(tmp_path, "spectrum", "--config", cfg)
    rows = list(csv.reader(open(out / "spectrum.csv")))
    assert code == 0 and rows[0] == ["t", "backend", "n_or_window", "index", "mu", "residual"]
    assert float(rows[1][4]) == pytest.approx(0.0, abs=1e-9)


def test_coupled_spectrum_window(tmp_path):
    cfg = write_cfg(tmp_path, "[factor]\nkind = coupled\n[grid]\nn_t = 2\nN_s = 48\nN_phi = 24\nbackend = coupled\n"
                              "[spectrum]\nwindow_center = 5.0\nwindow_half_width = 1.0\n")
    code, out = run(tmp_path, "spectrum", "--config", cfg)
    rows = list(csv.reader(open(out / "spectrum.csv")))
    assert code == 0 and len(rows) > 1 and all(r[1] == "coupled" for r in rows[1:])


def test_determinism(tmp_path):
    cfg = write_cfg(tmp_path, "[concentrate]\nm_min = 10\nm_max = 20\nn_t = 5\nN_s = 256\n")
    a = run(tmp_path, "concentrate", "--config", cfg, name="a")[1]
    b = run(tmp_path, "concentrate", "--config", cfg, "--jobs", "3", name="b")[1]
    for f in ("masses.csv", "badset.csv", "summary.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_constant_factor_control(tmp_path):
    cfg = write_cfg(tmp_path, "[factor]\nkind = constant\nvalue = 0.5\n"
                              "[concentrate]\nm_min = 10\nm_max = 20\nn_t = 3\nN_s = 256\n")
    code, out = run(tmp_path, "concentrate", "--config", cfg)
    rows = list(csv.DictReader(open(out / "badset.csv")))
    assert code == 0
    assert all(r["verdict"] == "fail: hypotheses violated (f not in cone)" for r in rows)


def test_sample_metric_seeded(tmp_path):
    a = run(tmp_path, "sample-metric", "--seed", "11", name="a")[1]
    b = run(tmp_path, "sample-metric", "--seed", "11", name="b")[1]
    assert (a / "sampled_factor.csv").read_bytes() == (b / "sampled_factor.csv").read_bytes()
    assert json.loads((a / "sampled_factor.json").read_text())["ok"]


def test_doublewell_csv(tmp_path):
    code, out = run(tmp_path, "doublewell", "--hbar", "0.1", "0.08", "--plot")
    rows = list(csv.DictReader(open(out / "doublewell.csv")))
    assert code == 0 and len(rows) == 2 and (out / "doublewell.svg").exists()
    assert 0.45 <= float(rows[0]["overlap_e"]) <= 0.55


def test_config_error_exit_code(tmp_path):
    cfg = write_cfg(tmp_path, "[factor]\nbogus = 1\n")
    assert run(tmp_path, "validate", "--config", cfg)[0] == 2
    assert run(tmp_path, "validate", "--config", str(tmp_path / "missing.ini"))[0] == 2


def test_numerical_error_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "[factor]\nkind = coupled\n[grid]\nbackend = coupled\nN_s = 512\nN_phi = 512\n"
                              "[spectrum]\nwindow_center = 5.0\nwindow_half_width = 1.0\n")
    assert run(tmp_path, "spectrum", "--config", cfg)[0] == 3
    assert "numerical failure in spectral" in capsys.readouterr().err


def test_dump_config(capsys):
    assert cli.main(["dump-config", "--seed", "5"]) == 0
    assert "seed = 5" in capsys.readouterr().out
