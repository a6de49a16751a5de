import json
import subprocess
import sys

import pytest

from roughheat import cli
from roughheat.cli import ConfigError, ExperimentConfig, ReportRecord, ReportSchemaError, main, read_reports


def _base(**over):
    cfg = {
        "schema": 1,
        "grid": {"n": 1, "box": [[0, 1]], "cells": [32], "T": 0.125, "dt": 1 / 256},
        "problem": {"initial": {"type": "sine"}, "boundary": {"kind": "dirichlet", "value": 0.0}},
        "action": "solve",
        "seed": 0,
    }
    cfg.update(over)
    return cfg


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def _run(tmp_path, cfg, *extra, command="solve", out="out"):
    path = _write(tmp_path, cfg)
    return main([command, *extra, "--config", str(path), "--out", str(tmp_path / out)])


@pytest.mark.parametrize(
    "mutate,path",
    [
        (lambda c: c.pop("action"), "action"),
        (lambda c: c.update(action="bogus"), "action"),
        (lambda c: c.update(schema=7), "schema"),
        (lambda c: c["grid"].pop("T"), "grid.T"),
        (lambda c: c["grid"].update(h=0.1), "grid"),
        (lambda c: c["grid"].update(box=[[0, 1], [0, 1]]), "grid.box"),
        (lambda c: c.update(tolerances={"mass": -1}), "tolerances.mass"),
        (lambda c: c.update(sweep={"path": "problem.nothing", "values": [1]}), "sweep.path"),
    ],
)
def test_config_errors_name_the_field(mutate, path):
    cfg = _base()
    mutate(cfg)
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.from_dict(cfg).validate()
    assert exc.value.path == path


def test_exit_codes(tmp_path, capsys):
    assert _run(tmp_path, _base()) == cli.EXIT_PASS
    # an unattainable tolerance makes the certificate fail
    assert _run(tmp_path, _base(tolerances={"weak_residual": 1e-30})) == cli.EXIT_CERT_FAIL
    bad = _base()
    bad["grid"]["h"] = 0.1
    assert _run(tmp_path, bad) == cli.EXIT_VALIDATION
    assert "grid" in capsys.readouterr().err
    # a kernel whose tails reach the walls is a downstream failure
    k = _base(action="kernel", params={"source": [0.515625]})
    k["problem"] = {}
    assert _run(tmp_path, k, command="kernel") == cli.EXIT_RUNTIME
    assert "[kernel]" in capsys.readouterr().err


def test_param_errors_are_validation_errors(tmp_path, capsys):
    cfg = _base(action="kernel")
    cfg["problem"] = {}
    # the default source (origin) is a cell face on this grid, not a center
    assert _run(tmp_path, cfg, command="kernel") == cli.EXIT_VALIDATION
    assert "params.source" in capsys.readouterr().err
    lb = _base(action="certify.local_bound")
    assert _run(tmp_path, lb, "local_bound", command="certify") == cli.EXIT_VALIDATION
    assert "params." in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "nope.json")]) == cli.EXIT_VALIDATION


def test_reports_and_artifacts(tmp_path):
    assert _run(tmp_path, _base()) == 0
    recs = read_reports(tmp_path / "out")
    assert len(recs) == 1
    rec = recs[0]
    assert rec.action == "solve" and rec.passed
    assert {"max_weak_residual", "mass_drift"} <= set(rec.payload["constants"])
    for art in rec.artifacts:
        assert (tmp_path / "out" / art).exists()


def test_reproducible_runs_are_byte_identical(tmp_path):
    cfg = _base()
    for out in ("a", "b"):
        assert _run(tmp_path, cfg, "--reproducible", out=out) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_output_directory_precedence(tmp_path, monkeypatch):
    cfg = _base(output="from-config")
    path = _write(tmp_path, cfg)
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "from-env"))
    assert main(["solve", "--config", str(path)]) == 0
    assert (tmp_path / "from-env" / cli.REPORT_FILE).exists()
    monkeypatch.delenv(cli.OUT_ENV)
    assert main(["solve", "--config", str(path)]) == 0
    assert (tmp_path / "from-config" / cli.REPORT_FILE).exists()


def test_baseline_record_and_compare(tmp_path, capsys):
    assert _run(tmp_path, _base(), "--reproducible") == 0
    out = str(tmp_path / "out")
    assert main(["baseline", "record", "--out", out]) == 0
    assert main(["baseline", "compare", "--out", out]) == 0
    assert "FAIL" not in capsys.readouterr().out
    # a refined grid shares the inputs hash and stays within a loose tolerance
    fine = _base()
    fine["grid"].update(cells=[64], dt=1 / 1024)
    assert _run(tmp_path, fine, out="fine") == 0
    report = str(tmp_path / "fine" / cli.REPORT_FILE)
    baseline = str(tmp_path / "out" / "baseline.json")
    assert main(["baseline", "compare", "--report", report, "--baseline", baseline, "--rel-tol", "0.5", "--out", out]) in (0, 1)
    rows = cli.compare_baseline(read_reports(report), baseline, 0.5).rows
    assert {r["constant"] for r in rows} >= {"u_max"}
    assert next(r for r in rows if r["constant"] == "u_max")["ok"]


def test_missing_baseline_tells_how_to_record(tmp_path, capsys):
    assert _run(tmp_path, _base()) == 0
    code = main(["baseline", "compare", "--out", str(tmp_path / "out"), "--baseline", str(tmp_path / "none.json")])
    assert code == cli.EXIT_VALIDATION
    assert "roughheat baseline record" in capsys.readouterr().err


def test_corrupted_report_is_schema_error(tmp_path):
    assert _run(tmp_path, _base()) == 0
    rep = tmp_path / "out" / cli.REPORT_FILE
    line = json.loads(rep.read_text().splitlines()[0])
    del line["inputs_hash"]
    rep.write_text(json.dumps(line) + "\n")
    with pytest.raises(ReportSchemaError):
        read_reports(rep)
    assert main(["report", str(rep)]) == cli.EXIT_VALIDATION


def test_report_record_roundtrip():
    rec = ReportRecord("solve", "abc", "def", "ghi", True, {"constants": {"x": 1.5}}, 0.0, ["a.json"])
    assert ReportRecord.from_json(rec.to_json()).to_json() == rec.to_json()


def test_validate_structure_cites_the_violated_condition(tmp_path, capsys):
    cfg = _base(action="validate-structure", params={"exponents": {"b": {"p": 2, "q": "inf"}}})
    cfg["problem"]["structure"] = {"family": "linear"}
    assert _run(tmp_path, cfg, command="validate-structure") == cli.EXIT_CERT_FAIL
    out = capsys.readouterr().out
    assert "coefficient b: p=2.0 violates p > 2" in out


def test_sweep_emits_trend(tmp_path):
    cfg = _base(sweep={"path": "problem.coefficient.contrast", "values": [1, 10]})
    cfg["problem"]["coefficient"] = {"family": "checkerboard", "contrast": 1, "period": 0.25}
    assert _run(tmp_path, cfg, "--reproducible") == 0
    recs = read_reports(tmp_path / "out")
    assert [r.action for r in recs] == ["solve", "solve", "trend"]
    assert recs[0].inputs_hash != recs[1].inputs_hash
    assert len(recs[-1].payload["series"]["u_max"]) == 2


def test_report_subcommand(tmp_path, capsys):
    assert _run(tmp_path, _base()) == 0
    capsys.readouterr()
    assert main(["report", "--out", str(tmp_path / "out")]) == 0
    assert capsys.readouterr().out.startswith("PASS solve")


def test_console_script_entry_point(tmp_path):
    path = _write(tmp_path, _base())
    res = subprocess.run(
        [sys.executable, "-m", "roughheat.cli", "solve", "--config", str(path), "--out", str(tmp_path / "o")],
        capture_output=True,
        text=True,
        timeout=300,
    )
    assert res.returncode == 0, res.stderr
    assert "PASS solve" in res.stdout
