import csv
import json
import os
import subprocess
import sys
from pathlib import Path

import jsonschema
import pytest
import yaml

from codecast.cli import main, plan_recipe
from codecast.sim.metrics import CSV_COLUMNS, report_schema

RECIPES = Path(__file__).resolve().parent.parent / "recipes"

TINY = {
    "name": "tiny",
    "scheme": "flooding",
    "seed": 3,
    "duration": 4,
    "drain": 3,
    "topology": {"n": 20, "degree": 4},
    "workload": {"tps": 20},
}


def recipe(tmp_path, **kw):
    data = {**TINY, **kw}
    p = tmp_path / f"{data['name']}.yaml"
    p.write_text(yaml.safe_dump(data))
    return p


def test_run_passes_and_writes_files(tmp_path, capsys):
    p = recipe(tmp_path, expect=[{"metric": "summary.overhead.mean", "approx": 4, "rel": 0.1}], budget_s=60)
    out = tmp_path / "out"
    assert main(["run", str(p), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "tiny [flooding] p95 latency" in text and "PASS" in text and "FAIL" not in text
    rows = list(csv.reader((out / "tiny.csv").open()))
    assert tuple(rows[0]) == CSV_COLUMNS and len(rows) == 21
    doc = json.loads((out / "tiny.json").read_text())
    jsonschema.validate(doc, report_schema())
    assert doc["config"]["topology"]["n"] == 20


def test_coded_and_censored_json_validates(tmp_path):
    p = recipe(tmp_path, name="cens", scheme="coded",
               adversary={"mode": "censor", "fraction": 0.2, "censored_fraction": 0.3},
               protocol={"tau": 1.0})
    assert main(["run", str(p), "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "cens.json").read_text())
    jsonschema.validate(doc, report_schema())
    assert doc["censored"]["created"] > 0 and doc["link_rates"]


def test_schema_rejects_malformed(tmp_path):
    p = recipe(tmp_path)
    main(["run", str(p), "--out", str(tmp_path)])
    doc = json.loads((tmp_path / "tiny.json").read_text())
    del doc["summary"]["latency"]
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(doc, report_schema())


def test_failed_expect_exits_1(tmp_path, capsys):
    p = recipe(tmp_path, expect=[{"metric": "summary.overhead.mean", "max": 1.0}])
    assert main(["run", str(p), "--out", str(tmp_path)]) == 1
    assert "FAIL tiny: summary.overhead.mean" in capsys.readouterr().out


def test_blown_budget_exits_1(tmp_path, capsys):
    p = recipe(tmp_path, budget_s=0)
    assert main(["run", str(p), "--out", str(tmp_path)]) == 1
    assert "FAIL wall time" in capsys.readouterr().out


def test_sweep_and_cross_run_checks(tmp_path):
    runs = [{"name": "lo", "topology.degree": 4}, {"name": "hi", "topology.degree": 6}]
    chk = [{"metric": "summary.overhead.mean", "run": "hi", "gt": {"run": "lo", "factor": 1.3}}]
    p = recipe(tmp_path, runs=runs, expect=chk)
    out = tmp_path / "o"
    assert main(["run", str(p), "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "sweep.csv").open()))
    assert [r["run"] for r in rows] == ["lo", "hi"]
    assert [r["topology.degree"] for r in rows] == ["4", "6"]
    assert float(rows[1]["overhead_mean"]) > float(rows[0]["overhead_mean"])


def test_parallel_jobs_same_bytes(tmp_path):
    p = recipe(tmp_path, runs=[{"seed": 1}, {"seed": 2}])
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(p), "--out", str(a)]) == 0
    assert main(["run", str(p), "--out", str(b), "--jobs", "2"]) == 0
    for f in sorted(a.iterdir()):
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_seed_override(tmp_path):
    p = recipe(tmp_path)
    main(["run", str(p), "--out", str(tmp_path / "s"), "--seed", "11"])
    assert json.loads((tmp_path / "s" / "tiny.json").read_text())["seed"] == 11


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["run"],
    ["run", "/nonexistent/recipe.yaml"],
    ["bench", "--txs", "0"],
    ["bench", "--k", "abc"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2


@pytest.mark.parametrize("data,field", [
    ({**TINY, "scheme": "gossip"}, "scheme"),
    ({**TINY, "topology": {"n": 20, "degree": 4, "colour": 1}}, "topology.colour"),
    ({**TINY, "expect": [{"metric": "x", "run": "nope", "min": 0}]}, "expect[0].run"),
    ({**TINY, "runs": [{"bitcoin.jitter_max": -1}]}, "runs[0]"),
])
def test_config_errors_exit_2(tmp_path, capsys, data, field):
    p = tmp_path / "bad.yaml"
    p.write_text(yaml.safe_dump(data))
    assert main(["run", str(p)]) == 2
    assert field in capsys.readouterr().err


def test_invalid_yaml_exits_2(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("name: [unclosed\n")
    assert main(["run", str(p)]) == 2


def test_controller_demo_csv(tmp_path):
    out = tmp_path / "demo.csv"
    assert main(["controller-demo", "--duration", "4", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert list(rows[0]) == ["init", "time_s", "rate_A", "rate_B", "loss_A", "loss_B"]
    assert {r["init"] for r in rows} == {"1000/1000", "3000/300", "300/3000"}
    assert all(float(r["rate_A"]) > 0 for r in rows)


def test_bench_json(capsys):
    assert main(["bench", "--txs", "2000", "--repeat", "1", "--json"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["decode"]["transactions"] == 2000 and res["decode"]["correct"]
    assert res["encode"]["codewords"] == 2000


def test_console_script_and_log_env(tmp_path):
    p = recipe(tmp_path)
    env = {**os.environ, "CODECAST_LOG": "INFO"}
    proc = subprocess.run([sys.executable, "-m", "codecast.cli", "run", str(p), "--out", str(tmp_path)],
                          env=env, capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert "INFO" in proc.stderr
    quiet = subprocess.run([sys.executable, "-m", "codecast.cli", "run", str(p), "--out", str(tmp_path)],
                           env={**os.environ, "CODECAST_LOG": "ERROR"}, capture_output=True, text=True,
                           timeout=120)
    assert quiet.returncode == 0 and "INFO" not in quiet.stderr


@pytest.mark.parametrize("path", sorted(RECIPES.glob("*.yaml")), ids=lambda p: p.stem)
def test_bundled_recipes_are_well_formed(path):
    raw, plan = plan_recipe(path)
    assert raw.get("budget_s") and raw.get("expect"), "every bundled recipe carries a budget and checks"
    assert plan
