import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from starhjb.expr import ExprSyntaxError, parse_expr


@pytest.mark.parametrize("text, x, expected", [
    ("1", 0.7, 1.0),
    ("exp(-x)", 1.0, math.exp(-1.0)),
    ("2*x^2 + sin(x)", 0.0, 0.0),
    ("2^3^2", 0.0, 512.0),  # right associative
    ("-x^2", 3.0, -9.0),
    ("8/4/2", 0.0, 1.0),
    ("1 - 2 - 3", 0.0, -4.0),
    ("abs(cos(x)) * 2", math.pi, 2.0),
    ("1.5e-3*x", 2.0, 3e-3),
])
def test_evaluation(text, x, expected):
    assert parse_expr(text)(x) == pytest.approx(expected, rel=1e-15)


def test_exact_ieee_composition():
    x = 0.3
    assert parse_expr("sin(x)*exp(x) + x/3")(x) == math.sin(x) * math.exp(x) + x / 3


def test_vectorized():
    xs = np.linspace(0, 1, 5)
    np.testing.assert_array_equal(parse_expr("x^2 + 1")(xs), xs**2 + 1)
    assert parse_expr("2")(xs).shape == xs.shape


@pytest.mark.parametrize("text, pos", [
    ("1 +", 3),
    ("(x", 2),
    ("x $ 2", 2),
    ("2 x", 2),
    ("", 0),
])
def test_syntax_errors_carry_position(text, pos):
    with pytest.raises(ExprSyntaxError) as e:
        parse_expr(text)
    assert e.value.position == pos


def test_unknown_function():
    with pytest.raises(ExprSyntaxError, match="unknown function 'tan'"):
        parse_expr("tan(x)")


leaves = st.one_of(
    st.just("x"),
    st.floats(0, 100, allow_nan=False).map(repr),
)


def _combine(children):
    ops = st.sampled_from(["+", "-", "*", "/", "^"])
    funcs = st.sampled_from(["sin", "cos", "exp", "abs"])
    return st.one_of(
        st.tuples(children, ops, children).map(lambda t: f"({t[0]}) {t[1]} ({t[2]})"),
        st.tuples(funcs, children).map(lambda t: f"{t[0]}({t[1]})"),
        children.map(lambda c: f"-({c})"),
    )


@given(st.recursive(leaves, _combine, max_leaves=8))
def test_print_reparse_fixed_point(text):
    tree = parse_expr(text)
    assert parse_expr(str(tree)) == tree
