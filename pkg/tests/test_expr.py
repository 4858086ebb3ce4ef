"""Expression language: parsing, evaluation, differentiation, printing."""

import numpy as np
import pytest

from charpicard import expr as ex
from charpicard.expr import (Binary, Const, DomainError, ParseError, Unary,
                             UVar, Var, diff, evaluate, parse, to_string)

from helpers import central_difference, make_random_expr, random_point


def test_parse_basic_structure():
    node = parse("sin(x) + 0.1*u2", 2)
    assert node == Binary("add", Unary("sin", Var("x")),
                          Binary("mul", Const(0.1), UVar(2)))


def test_parse_nested_unary_minus_and_power():
    node = parse("exp(-(x-t)^2)", 1)
    assert node == Unary("exp", Unary("neg", Binary(
        "pow", Binary("sub", Var("x"), Var("t")), Const(2.0))))


def test_parse_index_out_of_range():
    with pytest.raises(ParseError, match="out of range"):
        parse("u3", 2)


def test_parse_unknown_identifier():
    with pytest.raises(ParseError, match="unknown identifier"):
        parse("y + 1", 1)


def test_parse_syntax_error_reports_offset():
    with pytest.raises(ParseError) as info:
        parse("sin(x", 1)
    assert "offset" in str(info.value)


@pytest.mark.parametrize("text, expected", [
    ("-x^2", Unary("neg", Binary("pow", Var("x"), Const(2.0)))),
    ("x^-2", Binary("pow", Var("x"), Unary("neg", Const(2.0)))),
    ("2^3^2", Binary("pow", Const(2.0),
                     Binary("pow", Const(3.0), Const(2.0)))),
    ("-x*t", Binary("mul", Unary("neg", Var("x")), Var("t"))),
])
def test_parse_precedence(text, expected):
    assert parse(text, 1) == expected


def test_eval_examples():
    assert evaluate(parse("x*u1", 1), 2.0, 0.0, [3.0]) == 6.0
    assert evaluate(parse("sin(x)", 0), 0.0, 5.0, []) == 0.0
    assert evaluate(parse("tanh(0)", 0), 0.0, 0.0, []) == 0.0


def test_eval_domain_errors():
    with pytest.raises(DomainError):
        evaluate(parse("1/(x-1)", 0), 1.0, 0.0, [])
    with pytest.raises(DomainError):
        evaluate(parse("log(x)", 0), 0.0, 0.0, [])
    with pytest.raises(DomainError):
        evaluate(parse("sqrt(x)", 0), -1.0, 0.0, [])
    with pytest.raises(DomainError):
        evaluate(parse("x^(-1)", 0), 0.0, 0.0, [])
    with pytest.raises(DomainError):
        evaluate(parse("(-2)^0.5", 0), 0.0, 0.0, [])


def test_eval_is_deterministic():
    e = parse("sin(x)*exp(t) + u1^3 / (2 + x^2)", 1)
    vals = {evaluate(e, 0.7, -0.3, [1.1]) for _ in range(10)}
    assert len(vals) == 1


def test_diff_examples():
    assert diff(parse("sin(x)", 0), "x") == Unary("cos", Var("x"))
    assert diff(parse("u1*u2", 2), "u1") == UVar(2)
    assert diff(parse("t", 0), "t") == Const(1.0)
    assert diff(parse("x", 0), "t") == Const(0.0)


def test_diff_matches_finite_difference_example():
    e = parse("exp(-(x-t)^2)", 1)
    d = diff(e, "t")
    got = evaluate(d, 1.0, 0.0, [0.0])
    want = central_difference(e, "t", 1.0, 0.0, [0.0])
    assert abs(got - want) <= 1e-6


def test_abs_derivative_convention_at_zero():
    d = diff(parse("abs(x)", 0), "x")
    assert evaluate(d, 0.0, 0.0, []) == 0.0
    assert evaluate(d, 2.0, 0.0, []) == 1.0
    assert evaluate(d, -2.0, 0.0, []) == -1.0


def test_diff_quotient_and_general_power():
    e = parse("x / (2 + t^2)", 0)
    d = diff(e, "t")
    want = central_difference(e, "t", 0.5, 0.7, [])
    assert abs(evaluate(d, 0.5, 0.7, []) - want) <= 1e-8
    e2 = parse("(1 + x^2) ^ t", 0)
    d2 = diff(e2, "t")
    want2 = central_difference(e2, "t", 0.4, 1.3, [])
    assert abs(evaluate(d2, 0.4, 1.3, []) - want2) <= 1e-7


def test_bump_is_smooth_and_compactly_supported():
    e = parse("bump(x)", 0)
    assert evaluate(e, 0.0, 0.0, []) == pytest.approx(np.exp(-1.0))
    assert evaluate(e, 1.0, 0.0, []) == 0.0
    assert evaluate(e, 1.5, 0.0, []) == 0.0
    d = diff(e, "x")
    assert evaluate(d, 1.2, 0.0, []) == 0.0
    want = central_difference(e, "x", 0.5, 0.0, [])
    assert abs(evaluate(d, 0.5, 0.0, []) - want) <= 1e-7


def test_random_derivatives_match_central_differences():
    rng = np.random.default_rng(20260810)
    checked = 0
    while checked < 200:
        n = int(rng.integers(1, 4))
        e = make_random_expr(rng, n, depth=3)
        var = ["x", "t", f"u{int(rng.integers(1, n + 1))}"][
            int(rng.integers(3))]
        d = diff(e, var)
        x, t, u = random_point(rng, n)
        got = evaluate(d, x, t, u)
        want = central_difference(e, var, x, t, u)
        assert abs(got - want) <= 1e-5 * (1.0 + abs(got)), \
            f"mismatch for {to_string(e)} d/d{var} at {(x, t, u)}"
        checked += 1


_CORPUS = [
    "sin(x) + 0.1*u2",
    "exp(-(x-t)^2)",
    "-x^2",
    "x^-2",
    "1 + 0.1*u2",
    "-1 + 0.1*u1",
    "0.5*sin(x)",
    "x - (t - 1)",
    "x - t - 1",
    "(x + t) * (x - t) / (2 + u1^2)",
    "sqrt(1 + x^2)",
    "tanh(x*t) - abs(u2)",
    "2^3^2",
    "-(x * t)",
    "x - -t",
    "log(2 + sin(x))",
    "bump((x - 1) / 0.5)",
]


@pytest.mark.parametrize("text", _CORPUS)
def test_print_parse_round_trip(text):
    node = parse(text, 2)
    assert parse(to_string(node), 2) == node


def test_round_trip_random(seeded=123):
    rng = np.random.default_rng(seeded)
    for _ in range(100):
        node = make_random_expr(rng, 2, depth=4)
        assert parse(to_string(node), 2) == node


def test_program_evaluation_matches_tree_evaluation():
    rng = np.random.default_rng(7)
    from charpicard._kernels import fallback
    for _ in range(50):
        n = 2
        e = make_random_expr(rng, n, depth=3)
        prog = ex.compile_program(e)
        x, t, u = random_point(rng, n)
        tree = evaluate(e, x, t, u)
        vm = fallback.eval_program(prog, np.array([x]), t,
                                   np.array(u).reshape(-1, 1))[0]
        assert vm == pytest.approx(tree, rel=1e-13, abs=1e-15)
