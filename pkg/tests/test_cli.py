from __future__ import annotations

import json
import math
from pathlib import Path

import pytest

from canardlab import cli
from canardlab import expr as ex

FIXTURE = Path(__file__).parent / "fixtures" / "lienard.cfg"
S2P = math.sqrt(2 * math.pi)


def _write(tmp_path, text, name="sys.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_fixture():
    cfg = cli.load_config(FIXTURE)
    s = cfg.system
    assert ex.fold(s.f) == ex.fold(ex.parse("-x^3/3+x^2/2-y", ("x", "y")))
    assert ex.fold(s.g) == ex.fold(ex.parse("eta+lambda*(x-1/2)-(-x^3/3+x^2/2)", ("x", "y", "lambda", "eta")))
    assert s.mu() == pytest.approx((1 / 6, 1 / 12))
    assert s.window == (-1.0, 2.0, -1.0, 1.0)
    assert cfg.eps == 0.045
    assert cli.is_reference_lienard(s)


def test_missing_key_is_named():
    with pytest.raises(cli.ConfigError, match="'g'"):
        cli.parse_config("f = x - y\nlambda = 0\neta_1 = 0\n")


def test_unknown_identifier_reports_line():
    with pytest.raises(cli.ConfigError) as info:
        cli.parse_config("# header\nf = x + z\ng = eta + lambda\nlambda = 0\neta_1 = 0\n")
    assert info.value.line == 2
    assert "'z'" in str(info.value)


@pytest.mark.parametrize("text, line", [
    ("f = x - y\ng = eta\nlambda = 0\neta_1 = 0\nwindow = 1, 0, 0, 1\n", 5),
    ("f = x - y\ng = eta\nlambda = 0\neta_1 = 0\neps = 0.1.2\n", 5),
    ("f = x - y\ng = eta\nlambda = 0\neta_1 = 0\nwindw = 0, 1, 0, 1\n", 5),
    ("f = x - y\nf = x\n", 2),
    ("f x - y\n", 1),
    ("f = x - y\ng = eta + lambda\nlambda = 0\neta_1 = 0\neta_3 = 0\n", 5),
])
def test_bad_lines_carry_line_numbers(text, line):
    with pytest.raises(cli.ConfigError) as info:
        cli.parse_config(text)
    assert info.value.line == line


def test_named_parameters_and_several_etas():
    cfg = cli.parse_config("f = -x^3/3 + x^2/2 - y\ng = a + b*x + c*x^2 - (-x^3/3 + x^2/2)\n"
                           "lambda = 0.1\nlambda.name = b\neta_1 = 0\neta_1.name = a\neta_2 = 0.5\n"
                           "eta_2.name = c\neta_index = 2\n")
    assert cfg.system.params == ("b", "a", "c")
    assert cfg.eta_index == 1


def test_lienard_frontend(tmp_path):
    cfg = cli.parse_config("lienard_F = 0, 0, 0.25, -1/12\nlambda = 0.1\neta_1 = 0.05\neps = 0.02\n")
    assert cfg.normalization.verdict == "normalized"
    assert cfg.normalization.record.nu == pytest.approx(2.0)


def test_check_passes(tmp_path):
    assert cli.main(["check", "--config", str(FIXTURE), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["exit_code"] == 0
    assert all(h["passed"] for h in rep["hypotheses"]["hypotheses"].values())
    assert sorted(rep["hypotheses"]["hypotheses"]) == ["H1", "H2", "H3", "H4", "H5"]


def test_analyze_reports_lambda_coefficient(tmp_path):
    assert cli.main(["analyze", "--config", str(FIXTURE), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    for cp in rep["analysis"]["canard_points"]:
        d = cp["melnikov"]["d_lambda2"]
        assert d["value"] == pytest.approx(-S2P, rel=1e-12)
        assert d["matches_reference"] and d["path"] == "quadrature"
        assert cp["melnikov"]["paths_agree"] and cp["a_paths_agree"]
    assert rep["analysis"]["canard_curve"]["lambda_slope"]["value"] == pytest.approx(-1 / 9)


def _paths(o, out):
    if isinstance(o, dict):
        for k, v in o.items():
            if k == "path":
                out.append(v)
            _paths(v, out)
    elif isinstance(o, list):
        for v in o:
            _paths(v, out)
    return out


def test_path_tags(tmp_path):
    _, rep = cli.run("analyze", cli.load_config(FIXTURE))
    tags = set(_paths(rep["analysis"], []))
    assert tags <= {"closed-form", "quadrature", "traced"}
    assert {"closed-form", "quadrature"} <= tags


def test_reports_are_deterministic(tmp_path):
    for d in ("a", "b"):
        assert cli.main(["analyze", "--config", str(FIXTURE), "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


def test_cycles_csv(tmp_path):
    assert cli.main(["cycles", "--config", str(FIXTURE), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["cycles"]["count"] == 1
    lines = (tmp_path / "cycle_gamma_0.csv").read_text().splitlines()
    assert lines[0] == "arc,x,y"
    for row in lines[1:]:
        tag, x, y = row.split(",")
        assert tag and "%.17g" % float(x) == x and "%.17g" % float(y) == y


def test_trace_writes_orbits(tmp_path):
    code = cli.main(["trace", "--config", str(FIXTURE), "--eps", "0.045", "--lambda", "0.163",
                     "--eta", "0.0833333", "--out", str(tmp_path)])
    assert code == 0
    rep = json.loads((tmp_path / "report.json").read_text())["trace"]
    assert rep["cycle_count"] == len(list((tmp_path / "orbits").glob("limit_cycle_*.csv")))
    assert rep["cycle_count"] >= 1
    head = (tmp_path / "orbits" / "limit_cycle_0.csv").read_text().splitlines()[:3]
    assert head[0] == "t,x,y" and float(head[1].split(",")[0]) == 0.0


def test_hypothesis_failure_exit_code(tmp_path):
    text = FIXTURE.read_text().replace("lambda = 1/6", "lambda = 0.3")
    p = _write(tmp_path, text)
    assert cli.main(["analyze", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["hypotheses"]["all_passed"] is False
    assert "analysis" not in rep


def test_bendixson_exit_code(tmp_path):
    p = _write(tmp_path, "lienard_F = 0, -1, 0, -1/3\n")
    assert cli.main(["check", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["hypotheses"]["bendixson"] == "no limit cycles"


def test_errors_exit_one(tmp_path, capsys):
    p = _write(tmp_path, "f = x - y\n")
    assert cli.main(["check", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    assert "'g'" in capsys.readouterr().err
    assert cli.main(["check", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path / "o")]) == 1
