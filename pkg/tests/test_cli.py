import csv
import json

import numpy as np
import pytest

from hsie.cli import dumps, main

CIRCLE = {"kind": "circle", "center": [0, 0], "radius": 0.5}
LINEAR_EXP = {"type": "linear", "rhs": "(5+2*t^2)*exp(2*t)",
              "terms": [{"coeff": "1"}, {"coeff": "2+t^2", "p": 2}]}


@pytest.fixture
def cfg(tmp_path):
    def write(obj, name="cfg.json"):
        path = tmp_path / name
        path.write_text(obj if isinstance(obj, str) else json.dumps(obj))
        return str(path)
    return write


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_quad_monomial(cfg, capsys):
    path = cfg({"contour": CIRCLE, "quad": {"mode": "monomial", "m": 2, "node": 3}})
    code, out, _ = run(capsys, "quad", "--config", path)
    assert code == 0
    assert '"re": 0.0' in out and '"im": 0.0' in out
    assert json.loads(out) == {"re": 0.0, "im": 0.0, "n": 128, "converged": True}


def test_quad_fp_and_pv(cfg, capsys):
    path = cfg({"contour": CIRCLE, "N": 64, "quad": {"mode": "fp", "p": 2, "density": "exp(2*t)"}})
    code, out, _ = run(capsys, "quad", "--config", path)
    res = json.loads(out)
    assert code == 0 and res["converged"]
    assert abs(complex(res["re"], res["im"]) - 2 * np.e) <= 1e-10
    path = cfg({"contour": CIRCLE, "quad": {"mode": "pv", "density": "1"}})
    code, out, _ = run(capsys, "quad", "--config", path)
    assert abs(json.loads(out)["re"] - 1) <= 1e-14


def test_quad_fp2d_and_oracle(cfg, capsys):
    path = cfg({"N": 32, "quad": {"mode": "fp2d", "p": 2, "density": "exp(t1+t2)"}})
    code, out, _ = run(capsys, "quad", "--config", path)
    res = json.loads(out)
    assert code == 0 and res["n"] == 64 and abs(res["re"] - np.e) <= 1e-8
    path = cfg({"contour": CIRCLE, "N": 64,
                "quad": {"mode": "oracle", "p": 1, "density": "1"}})
    code, out, _ = run(capsys, "quad", "--config", path)
    assert code == 0 and abs(json.loads(out)["im"] - np.pi) <= 1e-6


def test_output_is_byte_identical(cfg, capsys):
    path = cfg({"contour": CIRCLE, "quad": {"mode": "fp", "p": 3, "density": "1/(2+t^2)"}})
    _, first, _ = run(capsys, "quad", "--config", path)
    _, second, _ = run(capsys, "quad", "--config", path)
    assert first == second


def test_dumps_format():
    assert dumps({"a": 1.0, "b": 0.1, "c": 3, "z": 1 + 2j}) == \
        '{\n  "a": 1.0,\n  "b": 0.10000000000000001,\n  "c": 3,\n  "z": [1.0, 2.0]\n}'
    assert dumps(float("nan")) == "null"
    with pytest.raises(TypeError):
        dumps(object())


def test_verify_missing_contour(cfg, capsys):
    path = cfg({"equation": LINEAR_EXP, "candidate": "exp(2*t)"})
    code, _, err = run(capsys, "verify", "--config", path)
    assert code == 2 and "contour" in err


def test_missing_equation_field(cfg, capsys):
    bad = {"type": "linear", "rhs": "0", "terms": [{"p": 2}]}
    path = cfg({"contour": CIRCLE, "equation": bad, "candidate": "1"})
    code, _, err = run(capsys, "verify", "--config", path)
    assert code == 2 and "equation.terms[0].coeff" in err


def test_malformed_expression_exit_2(cfg, capsys):
    path = cfg({"contour": CIRCLE, "equation": LINEAR_EXP, "candidate": "exp(2*"})
    code, _, err = run(capsys, "verify", "--config", path)
    assert code == 2 and "offset" in err
    path = cfg({"contour": CIRCLE, "quad": {"mode": "fp", "density": "t +* 1"}})
    assert run(capsys, "quad", "--config", path)[0] == 2


def test_invalid_json_exit_2(cfg, capsys):
    path = cfg('{"contour": {"kind": "circle",\n  "radius": }')
    code, _, err = run(capsys, "reduce", "--config", path)
    assert code == 2 and "line 2" in err


def test_bad_arguments_exit_2(capsys):
    assert run(capsys, "demo", "ex99")[0] == 2
    assert run(capsys)[0] == 2
    assert run(capsys, "quad")[0] == 2
    assert run(capsys, "quad", "--config", "/nonexistent/cfg.json")[0] == 2


def test_bad_grid_size(cfg, capsys):
    path = cfg({"contour": CIRCLE, "N": 100, "quad": {"mode": "monomial", "m": 1}})
    assert run(capsys, "quad", "--config", path)[0] == 2


def test_reduce_json_and_print(cfg, capsys):
    path = cfg({"contour": CIRCLE, "equation": LINEAR_EXP})
    code, out, _ = run(capsys, "reduce", "--config", path)
    res = json.loads(out)
    assert code == 0 and res["ir"]["order"] == 1
    assert res["normalized"] == "x' + (1/(2 + t^2))*x = (5 + 2*t^2)*exp(2*t)/(2 + t^2)"
    code, out, _ = run(capsys, "reduce", "--config", path, "--print")
    assert code == 0 and out.splitlines()[0] == "(2 + t^2)*x' + x = (5 + 2*t^2)*exp(2*t)"
    bi = cfg({"contours": [CIRCLE, CIRCLE],
              "equation": {"type": "bi", "b": "1", "c": "2*t1+3", "p": 2}})
    code, out, _ = run(capsys, "reduce", "--config", bi, "--print")
    assert out.strip() == "d^1x/dt1^1 + (2*t1 + 3)*d^1x/dt2^1 = 0"


def test_solve_writes_csv(cfg, capsys, tmp_path):
    path = cfg({"contour": CIRCLE, "equation": LINEAR_EXP, "candidate": "exp(2*t)", "N": 64})
    out_csv = tmp_path / "x.csv"
    code, out, _ = run(capsys, "solve", "--config", path, "--out", str(out_csv))
    assert code == 0
    summary = json.loads(out)
    assert abs(complex(*summary["holonomy"][0])) <= 1e-6
    rows = list(csv.reader(out_csv.open()))
    assert rows[0][:6] == ["j", "s_j", "Re t", "Im t", "Re x", "Im x"]
    assert len(rows) == 65
    t = complex(float(rows[10][2]), float(rows[10][3]))
    x = complex(float(rows[10][4]), float(rows[10][5]))
    assert abs(x - np.exp(2 * t)) <= 1e-6


def test_solve_closed_with_output_dir(cfg, capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("HSIE_OUTPUT_DIR", str(tmp_path / "runs"))
    path = cfg({"contour": CIRCLE, "equation": LINEAR_EXP, "method": "closed",
                "initial": [[2.718281828459045, 0]]})
    assert run(capsys, "solve", "--config", path, "--out", "sol.csv")[0] == 0
    assert (tmp_path / "runs" / "sol.csv").exists()


def test_solve_input_errors(cfg, capsys, tmp_path):
    out_csv = str(tmp_path / "x.csv")
    path = cfg({"contour": CIRCLE, "equation": LINEAR_EXP})
    assert run(capsys, "solve", "--config", path, "--out", out_csv)[0] == 2
    path = cfg({"contour": CIRCLE, "equation": LINEAR_EXP, "initial": [1, 2]})
    assert run(capsys, "solve", "--config", path, "--out", out_csv)[0] == 2
    path = cfg({"contour": CIRCLE, "equation": LINEAR_EXP, "initial": [1], "method": "euler"})
    assert run(capsys, "solve", "--config", path, "--out", out_csv)[0] == 2


def test_verify_report(cfg, capsys, tmp_path):
    path = cfg({"contour": CIRCLE, "equation": LINEAR_EXP, "candidate": "exp(2*t)"})
    report = tmp_path / "rep.json"
    code, out, _ = run(capsys, "verify", "--config", path, "--report", str(report), "--per-node")
    assert code == 0
    data = json.loads(report.read_text())
    assert data["passed"] and data["max"] <= 1e-8 and len(data["residuals"]) == 128
    assert json.loads(out) == data


def test_verify_failure_exit_1(cfg, capsys):
    path = cfg({"contour": CIRCLE, "equation": LINEAR_EXP, "candidate": "exp(t)"})
    code, out, _ = run(capsys, "verify", "--config", path)
    assert code == 1 and json.loads(out)["passed"] is False


def test_verify_bi(cfg, capsys):
    path = cfg({"contours": [CIRCLE, CIRCLE], "N": 32, "candidate": "t1^2+3*t1-t2",
                "equation": {"type": "bi", "b": "1", "c": "2*t1+3", "p": 2}})
    code, out, _ = run(capsys, "verify", "--config", path)
    assert code == 0 and json.loads(out)["max"] <= 1e-8


@pytest.mark.parametrize("name", ["ex37", "ex43", "ex612", "ex614", "fp-identity"])
def test_demos(name, capsys):
    code, out, _ = run(capsys, "demo", name)
    assert code == 0
    assert "FAIL" not in out and "PASS" in out
