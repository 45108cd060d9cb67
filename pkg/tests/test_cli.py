import csv
import io
import json
import subprocess
import sys

import pytest

from dtcompile.cli import SWEEP_COLUMNS, run_cli


def _compile(tmp_path, *extra):
    out = tmp_path / "out"
    code = run_cli(["compile", "--bench", "ising", "--n", "6", "--out", str(out), *extra])
    return code, out


def test_compile_then_validate(tmp_path, capsys):
    code, out = _compile(tmp_path, "--mode", "static", "--emit", "schedule,report,svg")
    assert code == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["ising6.static.fidelity.csv", "ising6.static.report.json",
                     "ising6.static.schedule.json", "ising6.static.svg"]
    rep = json.loads((out / "ising6.static.report.json").read_text())
    assert rep["mode"] == "static" and rep["n_remote_cz"] == 5
    assert run_cli(["validate", str(out / "ising6.static.schedule.json")]) == 0
    assert "ok:" in capsys.readouterr().out


def test_corrupted_schedule_fails_validation(tmp_path):
    _, out = _compile(tmp_path, "--mode", "static")
    p = out / "ising6.static.schedule.json"
    doc = json.loads(p.read_text())
    cz = next(i for i in doc["instructions"] if i["kind"] == "remote_cz")
    cz["duration_us"] = 0.001
    p.write_text(json.dumps(doc))
    assert run_cli(["validate", str(p)]) == 1
    p.write_text("{not json")
    assert run_cli(["validate", str(p)]) == 1


def test_usage_errors(tmp_path):
    assert run_cli(["compile", "--bench", "ising", "--n", "4", "--mode", "warp", "--out", str(tmp_path)]) == 2
    assert run_cli(["compile", "--out", str(tmp_path)]) == 2
    assert run_cli(["compile", "--bench", "ising", "--n", "4", "--config", str(tmp_path / "nope.json"),
                    "--out", str(tmp_path)]) == 2
    assert run_cli(["compile", "--circuit", str(tmp_path / "missing.qasm"), "--out", str(tmp_path)]) == 2
    assert run_cli(["compile", "--bench", "ising", "--n", "4", "--emit", "pdf", "--out", str(tmp_path)]) == 2


def test_syntax_error_is_compile_failure(tmp_path):
    src = tmp_path / "bad.txt"
    src.write_text("qreg 2;\nh 0;\nfrobnicate 0 1;\n")
    assert run_cli(["compile", "--circuit", str(src), "--out", str(tmp_path)]) == 1


def test_sweep_rows(tmp_path, capsys):
    code = run_cli(["sweep", "--family", "ising", "--sizes", "10,20,50", "--modes", "static,aod-baseline",
                    "--jobs", "2"])
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 6
    assert tuple(rows[0]) == SWEEP_COLUMNS
    by = {(int(r["n"]), r["mode"]): float(r["entangling_us"]) for r in rows}
    for n in (10, 20, 50):
        assert by[n, "static"] < by[n, "aod-baseline"]


def test_render(tmp_path):
    _, out = _compile(tmp_path, "--mode", "dynamic")
    svg = tmp_path / "pic.svg"
    assert run_cli(["render", "--schedule", str(out / "ising6.dynamic.schedule.json"), "--out", str(svg)]) == 0
    assert svg.read_text().startswith("<svg")


def test_repeat_runs_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert run_cli(["compile", "--bench", "qft", "--n", "6", "--mode", "dynamic", "--out", str(out)]) == 0
        outs.append({p.name: p.read_bytes() for p in out.iterdir()})
    assert outs[0] == outs[1]


@pytest.mark.parametrize("argv,code", [(["--help"], 0), (["validate"], 2)])
def test_module_entry_point(argv, code):
    proc = subprocess.run([sys.executable, "-m", "dtcompile", *argv], capture_output=True, text=True)
    assert proc.returncode == code
