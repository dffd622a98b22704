"""Command-line front door: configs, artifacts, exit codes."""

import json
import os

import pytest

from walkfam.cli import canonical_hash, load_config, validate_config
from walkfam.cli.config import ConfigError, build_family, parse_fraction
from walkfam.cli.main import FAIL, INCONCLUSIVE, PASS, USAGE, main
from walkfam.families import KlebanerFamily, ScaledFamily, SymmetricFamily


WALK_CFG = """
family:
  kind: scaled
  base: {kind: two_point, value: 1}
  dimension: 1
simulate:
  engine: walk
  horizon: 12
  n_paths: 5
seed: 7
"""

WEAK_CFG = """
family:
  kind: scaled
  base: {kind: two_point, value: 2}
  dimension: 2
  members: [["1.5", "0.5"], ["1.2", "0.8"]]
verify:
  check: weak-semi
  method: exact
  z_grid: [2, 4, 6, 8, 10, 12]
  extend: false
seed: 5
"""


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_parse_fraction_accepts_strings_and_numbers():
    from fractions import Fraction
    assert parse_fraction("3/20") == Fraction(3, 20)
    assert parse_fraction(1.2) == Fraction(6, 5)
    assert parse_fraction(2) == Fraction(2)


def test_canonical_hash_is_order_insensitive():
    a = canonical_hash({"x": 1, "y": [1, 2]})
    b = canonical_hash({"y": [1, 2], "x": 1})
    assert a == b
    assert a != canonical_hash({"x": 2, "y": [1, 2]})
    assert len(a) == 64


def test_validate_config_reports_field_paths():
    with pytest.raises(ConfigError) as err:
        validate_config({"family": {"kind": "scaled",
                                    "base": {"kind": "two_point"},
                                    "dimension": 0}})
    assert "family/dimension" in str(err.value)
    with pytest.raises(ConfigError):
        validate_config({"family": {"kind": "scaled",
                                    "base": {"kind": "two_point"},
                                    "dimension": 1},
                         "unknown_section": {}})


def test_load_config_rejects_bad_yaml(tmp_path):
    path = _write(tmp_path, "bad.yaml", "family: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(path)
    path = _write(tmp_path, "list.yaml", "- a\n- b\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_build_family_kinds():
    fam = build_family({"family": {"kind": "scaled",
                                   "base": {"kind": "two_point", "value": 2},
                                   "dimension": 2}})
    assert isinstance(fam, ScaledFamily)
    fam = build_family({"family": {"kind": "klebaner", "alpha_star": 0.25}})
    assert isinstance(fam, KlebanerFamily)
    fam = build_family({"family": {"kind": "symmetric",
                                   "alphas": ["1/4", "1/4"]}})
    assert isinstance(fam, SymmetricFamily)


def test_simulate_writes_deterministic_csv(tmp_path):
    cfg = _write(tmp_path, "walk.yaml", WALK_CFG)
    out1 = tmp_path / "run1"
    out2 = tmp_path / "run2"
    assert main(["simulate", "--config", cfg, "--out", str(out1)]) == PASS
    assert main(["simulate", "--config", cfg, "--out", str(out2)]) == PASS
    p1 = (out1 / "paths.csv").read_bytes()
    p2 = (out2 / "paths.csv").read_bytes()
    assert p1 == p2
    assert p1.splitlines()[0].startswith(b"#")
    meta = json.loads((out1 / "simulate.meta.json").read_text())
    assert meta["seed"] == 7
    assert meta["config_hash"] == json.loads(
        (out2 / "simulate.meta.json").read_text())["config_hash"]


def test_simulate_seed_override_changes_output(tmp_path):
    cfg = _write(tmp_path, "walk.yaml", WALK_CFG)
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    assert main(["simulate", "--config", cfg, "--out", str(out1),
                 "--seed", "99"]) == PASS
    assert main(["simulate", "--config", cfg, "--out", str(out2)]) == PASS
    assert (out1 / "paths.csv").read_bytes() != (out2 / "paths.csv").read_bytes()


def test_output_dir_env_fallback(tmp_path, monkeypatch):
    cfg = _write(tmp_path, "walk.yaml", WALK_CFG)
    env_dir = tmp_path / "from_env"
    monkeypatch.setenv("WALKFAM_OUT", str(env_dir))
    assert main(["simulate", "--config", cfg]) == PASS
    assert (env_dir / "paths.csv").exists()


def test_verify_weak_semi_exact(tmp_path):
    cfg = _write(tmp_path, "weak.yaml", WEAK_CFG)
    out = tmp_path / "run"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == PASS
    rep = json.loads((out / "verify_weak_semi.json").read_text())
    assert rep["verdict"] == "PASS"
    assert rep["result"]["direction"] == "reference_below"
    assert rep["seed"] == 5
    assert rep["version"].startswith("walkfam-")
    assert rep["exit_code"] == PASS


def test_verify_check_override_and_csv(tmp_path):
    text = WEAK_CFG.replace("check: weak-semi", "check: property1")
    text += "\n"
    cfg = _write(tmp_path, "p1.yaml", text + "")
    out = tmp_path / "run"
    code = main(["verify", "--config", cfg, "--check", "weak-semi",
                 "--out", str(out), "--format", "csv"])
    assert code == PASS
    rep = json.loads((out / "verify_weak_semi.json").read_text())
    assert rep["check"] == "weak-semi"
    csv_path = out / "verify_weak_semi.csv"
    assert csv_path.exists()
    lines = csv_path.read_text().splitlines()
    # provenance rides along as comment lines above the table
    assert any(line.startswith("#") for line in lines)
    header = [l for l in lines if not l.startswith("#")][0]
    assert header.split(",")[:3] == ["a", "z", "member"]


def test_verify_property1_pass(tmp_path):
    text = """
family:
  kind: scaled
  base: {kind: two_point, value: 2}
  dimension: 2
verify:
  check: property1
  member: ["1.5", "0.5"]
  max_level: 6
  t_end: 300.0
seed: 1
"""
    cfg = _write(tmp_path, "p1.yaml", text)
    out = tmp_path / "run"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == PASS
    rep = json.loads((out / "verify_property1.json").read_text())
    assert rep["result"]["max_deviation"] < 1e-6


def test_verify_inconclusive_exit_code(tmp_path):
    # horizon far too short to converge the ratio extraction
    text = """
family:
  kind: scaled
  base: {kind: two_point, value: 2}
  dimension: 2
verify:
  check: property1
  member: ["1.5", "0.5"]
  max_level: 20
  t_end: 6.0
seed: 1
"""
    cfg = _write(tmp_path, "p1.yaml", text)
    out = tmp_path / "run"
    assert main(["verify", "--config", cfg, "--out", str(out)]) \
        == INCONCLUSIVE
    rep = json.loads((out / "verify_property1.json").read_text())
    assert rep["verdict"] == "INCONCLUSIVE"


def test_verify_index_formula(tmp_path):
    text = """
family:
  kind: klebaner
  alpha_star: 0.25
verify:
  check: index
  mode: formula
  n_formula: 100000
  expect_psi: 1.0
  tolerance: 0.001
seed: 2
"""
    cfg = _write(tmp_path, "idx.yaml", text)
    out = tmp_path / "run"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == PASS
    rep = json.loads((out / "verify_index.json").read_text())
    assert abs(rep["result"]["psi"] - 1.0) < 1e-3


def test_verify_tail_crossing(tmp_path):
    text = """
family:
  kind: scaled
  base: {kind: two_point, value: 2}
  dimension: 2
  members: [["1.5", "0.5"]]
verify:
  check: tail-crossing
  pmf: [["1", "1/2"], ["2", "1/2"]]
seed: 3
"""
    cfg = _write(tmp_path, "tc.yaml", text)
    out = tmp_path / "run"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == PASS
    rep = json.loads((out / "verify_tail_crossing.json").read_text())
    assert rep["result"]["tail"]["ordered_beyond"] is True
    assert rep["result"]["moments"]["gap_error"] <= 1e-8


def test_usage_errors_exit_2(tmp_path, capsys):
    bad = _write(tmp_path, "bad.yaml", "family:\n  kind: scaled\n"
                 "  base: {kind: two_point}\n  dimension: 0\n")
    assert main(["verify", "--config", bad]) == USAGE
    assert "config" in capsys.readouterr().err
    missing = str(tmp_path / "nope.yaml")
    assert main(["simulate", "--config", missing]) == USAGE
    # verify without a check configured anywhere
    nocheck = _write(tmp_path, "no.yaml", WALK_CFG)
    assert main(["verify", "--config", nocheck]) == USAGE


def test_report_summarises_run_dir(tmp_path):
    cfg = _write(tmp_path, "weak.yaml", WEAK_CFG)
    out = tmp_path / "run"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == PASS
    idx = """
family:
  kind: klebaner
  alpha_star: 0.1
verify: {check: index, mode: formula, n_formula: 10000}
seed: 2
"""
    cfg2 = _write(tmp_path, "idx.yaml", idx)
    assert main(["verify", "--config", cfg2, "--out", str(out)]) == PASS
    assert main(["report", str(out)]) == PASS
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["reports"]) == 2
    checks = {row["check"] for row in summary["reports"]}
    assert checks == {"weak-semi", "index"}
    # the two runs came from different configs; exactly one is flagged
    # against the majority hash
    flags = sorted(row["hash_differs"] for row in summary["reports"])
    assert flags == [False, True]
    assert summary["errors"] == []


def test_report_flags_corrupt_files(tmp_path):
    cfg = _write(tmp_path, "weak.yaml", WEAK_CFG)
    out = tmp_path / "run"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == PASS
    (out / "verify_broken.json").write_text("{not json")
    assert main(["report", str(out)]) == FAIL
    summary = json.loads((out / "summary.json").read_text())
    assert [e["file"] for e in summary["errors"]] == ["verify_broken.json"]
    assert len(summary["reports"]) == 1


def test_report_csv_format(tmp_path):
    cfg = _write(tmp_path, "weak.yaml", WEAK_CFG)
    out = tmp_path / "run"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == PASS
    assert main(["report", str(out), "--format", "csv"]) == PASS
    lines = (out / "summary.csv").read_text().splitlines()
    header = [l for l in lines if not l.startswith("#")][0]
    assert header.split(",")[:3] == ["file", "command", "check"]
