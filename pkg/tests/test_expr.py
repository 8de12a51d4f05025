from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from canardlab import expr as ex

ROSTER = ("x", "y", "eps", "lambda", "eta")

CORPUS = [
    "-x^3/3 + x^2/2 - y",
    "eta + lambda*(x - 1/2) - (-x^3/3 + x^2/2)",
    "exp(-x^2/2)",
    "sin(x)*cos(y) + eps*x",
    "ln(1 + x^2) - y^3/(2 + y^2)",
    "x^4 - 2*x*y + lambda*y^2/3 - eta*eps",
    "(x - y)^-2 + 1",
]


def test_parse_cubic_value():
    e = ex.parse("-x^3/3 + x^2/2")
    assert ex.evaluate(e, {"x": 1.0}) == pytest.approx(1 / 6, abs=1e-15)


def test_zero_factor():
    assert ex.evaluate(ex.parse("x*(1-x)"), {"x": 0.0}) == 0.0


def test_slow_equation_vanishes_at_canard_values():
    e = ex.parse("eta + lambda*(x-1/2) - (-x^3/3 + x^2/2)", ROSTER)
    assert ex.evaluate(e, {"x": 0.0, "eta": 1 / 12, "lambda": 1 / 6}) == pytest.approx(0.0, abs=1e-16)


def test_precedence_unary_minus_below_power():
    assert ex.evaluate(ex.parse("-x^2"), {"x": 3.0}) == -9.0
    assert ex.evaluate(ex.parse("8/2/2"), {}) == 2.0
    assert ex.evaluate(ex.parse("1-2-3"), {}) == -4.0


def test_evaluate_examples():
    assert ex.evaluate(ex.parse("7"), {}) == 7.0
    assert ex.evaluate(ex.parse("x^2"), {"x": -3.0}) == 9.0
    assert ex.evaluate(ex.parse("exp(-x^2/2)"), {"x": 0.0}) == 1.0


def test_syntax_error_reports_offset():
    with pytest.raises(ex.ParseError) as info:
        ex.parse("x + * y")
    assert info.value.offset == 4


def test_unknown_identifier():
    with pytest.raises(ex.UnknownIdentifierError) as info:
        ex.parse("x + z", ROSTER)
    assert info.value.name == "z"


def test_non_integer_exponent_rejected():
    with pytest.raises(ex.ParseError):
        ex.parse("x^1.5")


def test_domain_errors():
    with pytest.raises(ex.DomainError):
        ex.evaluate(ex.parse("1/x"), {"x": 0.0})
    with pytest.raises(ex.DomainError):
        ex.evaluate(ex.parse("ln(x)"), {"x": -1.0})
    with pytest.raises(ex.UnboundVariableError):
        ex.evaluate(ex.parse("x + y"), {"x": 1.0})


def test_negative_integer_power_at_negative_base():
    # power rule, never exp(n ln x)
    assert ex.evaluate(ex.parse("x^3"), {"x": -2.0}) == -8.0
    d = ex.differentiate(ex.parse("x^3"), "x")
    assert ex.evaluate(d, {"x": -2.0}) == 12.0


def test_derivative_of_cubic():
    d = ex.differentiate(ex.parse("-x^3/3 + x^2/2"), "x")
    assert ex.evaluate(d, {"x": 0.0}) == 0.0
    assert ex.evaluate(d, {"x": 1.0}) == 0.0
    assert ex.evaluate(d, {"x": 2.0}) == pytest.approx(-2.0)


def test_derivative_of_graph_form_in_y():
    d = ex.differentiate(ex.parse("-x^3/3 + x^2/2 - y"), "y")
    assert d == ex.Const(-1.0)


def test_gaussian_derivative_vs_central_difference():
    e = ex.parse("exp(-x^2/2)")
    d = ex.evaluate(ex.differentiate(e, "x"), {"x": 1.0})
    h = 1e-5
    fd = (ex.evaluate(e, {"x": 1 + h}) - ex.evaluate(e, {"x": 1 - h})) / (2 * h)
    assert abs(d - fd) <= 1e-8 * abs(d)


def test_partial_examples():
    f = ex.parse("-x^3/3 + x^2/2 - y", ROSTER)
    g = ex.parse("eta + lambda*(x - 1/2) - (-x^3/3 + x^2/2)", ROSTER)
    assert ex.partial(f, ["x", "x"], {"x": 1.0, "y": 0.0}) == -1.0
    assert ex.partial(f, ["x", "y"], {"x": 0.3, "y": 2.0}) == 0.0
    assert ex.partial(g, ["x"], {"x": 0.0, "eta": 1 / 12, "lambda": 1 / 6}) == pytest.approx(1 / 6)


@pytest.mark.parametrize("text", CORPUS)
def test_round_trip_is_structural(text):
    e = ex.fold(ex.parse(text, ROSTER))
    assert ex.fold(ex.parse(ex.to_string(e), ROSTER)) == e


@pytest.mark.parametrize("text", CORPUS)
def test_derivative_in_absent_variable_is_zero(text):
    e = ex.parse(text + " + 0*q", ROSTER + ("q",))
    assert ex.differentiate(e, "q") == ex.Const(0.0)


def _fd5(e, var, point, h):
    def at(s):
        p = dict(point)
        p[var] += s
        return ex.evaluate(e, p)

    return (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h)


@pytest.mark.parametrize("text", CORPUS)
def test_symbolic_vs_finite_difference_corpus(text):
    e = ex.parse(text, ROSTER)
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(100):
        point = dict(zip(ROSTER, rng.uniform(-1.0, 1.0, len(ROSTER))))
        point["y"] = point["x"] + 0.5 + abs(point["y"])  # keeps (x - y)^-2 away from its pole
        for v in ("x", "y", "lambda"):
            sym = ex.evaluate(ex.differentiate(e, v), point)
            fd = _fd5(e, v, point, 1e-3)
            worst = max(worst, abs(sym - fd) / max(abs(sym), 1.0))
    assert worst < 1e-6


_leaf = st.one_of(st.sampled_from(["x", "y", "eps", "lambda", "eta"]),
                  st.integers(0, 9).map(str), st.sampled_from(["0.5", "2.25", "1e-3"]))


def _node(children):
    return st.one_of(
        st.tuples(children, st.sampled_from("+-*"), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        st.tuples(children, st.integers(0, 4)).map(lambda t: f"({t[0]})^{t[1]}"),
        children.map(lambda c: f"-{c}"),
        st.tuples(st.sampled_from(["sin", "cos", "exp"]), children).map(lambda t: f"{t[0]}({t[1]})"),
    )


expressions = st.recursive(_leaf, _node, max_leaves=12)


@settings(max_examples=150, deadline=None)
@given(expressions)
def test_round_trip_property(text):
    e = ex.fold(ex.parse(text, ROSTER))
    assert ex.fold(ex.parse(ex.to_string(e), ROSTER)) == e


@settings(max_examples=100, deadline=None)
@given(expressions, st.floats(-0.9, 0.9), st.floats(-0.9, 0.9))
def test_derivative_matches_difference_quotient(text, x, y):
    e = ex.parse(text, ROSTER)
    point = {"x": x, "y": y, "eps": 0.1, "lambda": 0.3, "eta": -0.2}
    try:
        sym = ex.evaluate(ex.differentiate(e, "x"), point)
        fd = _fd5(e, "x", point, 1e-3)
    except (ex.DomainError, OverflowError):
        return
    if not (math.isfinite(sym) and math.isfinite(fd)) or abs(sym) > 1e6:
        return
    assert abs(sym - fd) <= 1e-5 * max(abs(sym), 1.0)


def test_compiled_matches_tree_evaluator():
    e = ex.parse(CORPUS[4], ROSTER)
    fn = ex.compile_expr(e, ROSTER)
    vals = (0.3, -0.2, 0.01, 0.1, 0.2)
    assert fn(*vals) == pytest.approx(ex.evaluate(e, dict(zip(ROSTER, vals))), rel=1e-15)
