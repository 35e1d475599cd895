import csv
import json
import os

import numpy as np
import pytest

from besselharm import cli
from besselharm.kernels import heat_closed


def _write(path, text):
    path.write_text(text)
    return str(path)


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_eval_heat_kernel_row(tmp_path, capsys):
    cfg = _write(tmp_path / "c.yaml", "lambda: [0.5]\neval: {t: 1.0, points: [[1.0, 2.0]]}\n")
    out = tmp_path / "o"
    assert cli.main(["eval", "--config", cfg, "--out", str(out)]) == 0
    rows = _rows(out / "eval.csv")
    assert rows[0] == ["x_1", "y_1", "t", "value"]
    assert len(rows) == 2
    ref = float(heat_closed((0.5,), 1.0, np.array([1.0]), np.array([2.0])))
    assert float(rows[1][3]) == ref
    # the resolved config is echoed
    assert "lambda:" in capsys.readouterr().out
    assert (out / "config.resolved.yaml").exists()


def test_eval_points_file(tmp_path):
    pts = _write(tmp_path / "p.csv", "x_1,y_1,t\n1.0,2.0,0.5\n0.5,3.0,2.0\n")
    out = tmp_path / "o"
    assert cli.main(["eval", "--points", pts, "--out", str(out)]) == 0
    rows = _rows(out / "eval.csv")
    assert len(rows) == 3 and float(rows[2][2]) == 2.0


def test_eval_transform_of_gaussian(tmp_path):
    cfg = _write(tmp_path / "c.yaml", "lambda: [1.3]\neval: {target: transform, points: [[0.5], [1.0], [3.0]]}\n")
    out = tmp_path / "o"
    assert cli.main(["eval", "--config", cfg, "--out", str(out)]) == 0
    rows = _rows(out / "eval.csv")[1:]
    for r in rows:
        assert abs(float(r[1]) - float(r[2])) < 1e-8


def test_eval_operator_on_grid(tmp_path):
    cfg = _write(tmp_path / "c.yaml", "lambda: [0.5]\neval: {target: operator, operator: semigroup, t: 0.5}\n")
    out = tmp_path / "o"
    assert cli.main(["eval", "--config", cfg, "--out", str(out)]) == 0
    rows = _rows(out / "eval.csv")[1:]
    x = np.array([float(r[0]) for r in rows])
    v = np.array([float(r[2]) for r in rows])
    assert np.max(np.abs(v - 3 ** -1.0 * np.exp(-x ** 2 / 3))) < 1e-9


@pytest.mark.parametrize("text", ["dimension: 0\n", "lambda: [0.5]\nunknown: 1\n"])
def test_eval_invalid_config_exit_2(tmp_path, text, capsys):
    cfg = _write(tmp_path / "c.yaml", text)
    assert cli.main(["eval", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "besselharm:" in capsys.readouterr().err


def test_eval_bad_points_exit_2(tmp_path):
    pts = _write(tmp_path / "p.csv", "1.0\n")
    assert cli.main(["eval", "--points", pts, "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["eval", "--points", str(tmp_path / "none.csv"), "--out", str(tmp_path / "o")]) == 2


def test_eval_accuracy_failure_exit_3(tmp_path):
    # a grid too coarse for its Z_max fails the plan certificate
    cfg = _write(tmp_path / "c.yaml", "lambda: [0.5]\ngrid: {order: 8, zmax: 40}\neval: {target: transform}\n")
    out = tmp_path / "o"
    assert cli.main(["eval", "--config", cfg, "--out", str(out)]) == 3
    assert (out / "eval.csv").exists()


def test_verify_reports_and_summary(tmp_path):
    out = tmp_path / "o"
    args = ["verify", "--estimate", "three_route", "--estimate", "heat.gr", "--seed", "5", "--out", str(out)]
    cfg = _write(tmp_path / "c.yaml", "lambda: [0.5]\nsampler: {count: 500}\n")
    assert cli.main(args + ["--config", cfg]) == 0
    assert sorted(os.listdir(out)) == ["config.resolved.yaml", "heat.gr.json", "summary.csv", "three_route.json"]
    rep = json.loads((out / "heat.gr.json").read_text())
    assert rep["sample_count"] == 500 and rep["converged"]
    first = (out / "heat.gr.json").read_bytes()
    out2 = tmp_path / "o2"
    assert cli.main(["verify", "--estimate", "heat.gr", "--seed", "5", "--out", str(out2), "--config", cfg]) == 0
    assert (out2 / "heat.gr.json").read_bytes() == first


def test_verify_failed_suite_exit_4(tmp_path):
    cfg = _write(tmp_path / "c.yaml", "lambda: [0.5]\ntolerances: {three_route: 1.0e-30}\n")
    out = tmp_path / "o"
    assert cli.main(["verify", "--config", cfg, "--estimate", "three_route", "--out", str(out)]) == 4
    assert (out / "three_route.json").exists()


def test_verify_unknown_estimate_exit_2(tmp_path):
    assert cli.main(["verify", "--estimate", "nope", "--out", str(tmp_path / "o")]) == 2


def test_report_table_sorted(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["verify", "--estimate", "three_route", "--estimate", "self_reciprocity",
                     "--out", str(out)]) == 0
    capsys.readouterr()
    assert cli.main(["report", str(out)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split()[0] == "estimate_id"
    assert [l.split()[0] for l in lines[1:]] == ["self_reciprocity", "three_route"]
    assert cli.main(["report", str(out / "three_route.json")]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 2


def test_report_errors_exit_2(tmp_path):
    assert cli.main(["report", str(tmp_path / "missing.json")]) == 2
    bad = _write(tmp_path / "bad.json", '{"estimate_id": 1}')
    assert cli.main(["report", bad]) == 2
    junk = _write(tmp_path / "junk.json", "not json")
    assert cli.main(["report", junk]) == 2
