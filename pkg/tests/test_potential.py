import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dd_schrodinger.errors import EvalError, ParseError
from dd_schrodinger.potential import NodalPotential, parse_potential, sample_W

from conftest import small_plan


def test_constant_zero():
    v = parse_potential("0")
    assert v.is_constant and v.evaluate(0.3, 1.0, 2.0) == 0.0


def test_harmonic_value():
    assert parse_potential("x^2+y^2").evaluate(0, 3, 4) == 25


def test_time_dependent_value():
    v = parse_potential("5*(x^2+y^2)*(1+cos(4*pi*t))")
    assert abs(v.evaluate(0.25, 1, 0)) <= 1e-15
    assert not v.is_time_independent


@pytest.mark.parametrize("text,value", [
    ("1+2*3", 7.0),
    ("(1+2)*3", 9.0),
    ("8/4/2", 1.0),
    ("7-3-2", 2.0),
    ("-2^2", -4.0),
    ("2^-1", 0.5),
    ("2^3^2", 512.0),
    ("-x*-y", 6.0),
    ("sqrt(abs(-16))+exp(0)+sin(0)", 5.0),
    ("1e-1*10", 1.0),
    ("pi", math.pi),
    ("2**3", 8.0),
])
def test_precedence(text, value):
    assert parse_potential(text).evaluate(0.0, 2.0, 3.0) == pytest.approx(value, abs=1e-14)


@pytest.mark.parametrize("text", ["", "   ", "x^", "(x+1", "x+1)", "foo(x)", "z", "2*/3", "x y", "sin x", "1 $ 2"])
def test_parse_errors(text):
    with pytest.raises(ParseError) as info:
        parse_potential(text)
    assert "position" in str(info.value) or text.strip() == ""


def test_parse_error_position():
    with pytest.raises(ParseError) as info:
        parse_potential("x + q")
    assert info.value.position == 4


def test_eval_error_on_nonfinite():
    with pytest.raises(EvalError):
        parse_potential("1/x").evaluate(0.0, np.array([0.0, 1.0]), 0.0)
    with pytest.raises(EvalError):
        parse_potential("sqrt(x)").evaluate(0.0, -1.0, 0.0)


def test_sample_W_time_independent():
    plan = small_plan()
    a = sample_W("x^2+y^2", plan, 1, 1)
    b = sample_W("x^2+y^2", plan, 1, 4)
    assert a.time_independent
    np.testing.assert_array_equal(a.values, b.values)


def test_sample_W_linear_in_time():
    plan = small_plan()
    W = sample_W("t", plan, 2, 1).values
    np.testing.assert_allclose(W, 0.005, rtol=0, atol=1e-16)


def test_sample_W_cosine():
    plan = small_plan()
    W = sample_W("cos(4*pi*t)", plan, 1, 1).values
    np.testing.assert_allclose(W, (math.cos(0.04 * math.pi) + 1) / 2, rtol=0, atol=1e-15)


def test_sample_W_average_definition():
    plan = small_plan()
    expr = parse_potential("x*sin(3*t)+y")
    nodal = NodalPotential(expr, [0.5, 1.0], [0.2, -0.3], plan.dt)
    for n in (1, 2, 5):
        ref = 0.5 * (nodal.V(n * plan.dt) + nodal.V((n - 1) * plan.dt))
        np.testing.assert_array_equal(nodal.W(n), ref)


def test_sample_W_index_range():
    with pytest.raises(IndexError):
        sample_W("x", small_plan(), 1, 0)


# -- properties ------------------------------------------------------------

def _exprs():
    leaf = st.one_of(
        st.sampled_from(["x", "y", "t", "pi"]),
        st.floats(0.1, 5, allow_nan=False).map(lambda v: repr(round(v, 3))),
    )

    def extend(inner):
        return st.one_of(
            st.tuples(inner, st.sampled_from(["+", "-", "*"]), inner).map(lambda a: f"({a[0]}{a[1]}{a[2]})"),
            st.tuples(inner, inner).map(lambda a: f"{a[0]}/(1+{a[1]}^2)"),
            inner.map(lambda a: f"-{a}"),
            st.tuples(st.sampled_from(["sin", "cos", "abs"]), inner).map(lambda a: f"{a[0]}({a[1]})"),
            inner.map(lambda a: f"({a})^2"),
        )

    return st.recursive(leaf, extend, max_leaves=8)


@settings(max_examples=60, deadline=None)
@given(text=_exprs(), seed=st.integers(0, 2**31 - 1))
def test_pretty_round_trip(text, seed):
    e1 = parse_potential(text)
    e2 = parse_potential(e1.pretty())
    r = np.random.default_rng(seed)
    t, x, y = r.uniform(-2, 2, (3, 100))
    np.testing.assert_allclose(e2.evaluate(t, x, y), e1.evaluate(t, x, y), rtol=0, atol=1e-14)
    assert e1 == e2


@settings(max_examples=60, deadline=None)
@given(text=_exprs(), t1=st.floats(0, 1), t2=st.floats(1.5, 3))
def test_constant_flag(text, t1, t2):
    e = parse_potential(text)
    x = np.linspace(-1, 1, 7)
    y = np.linspace(-2, 0, 7)
    if e.is_time_independent:
        np.testing.assert_array_equal(e.evaluate(t1, x, y), e.evaluate(t2, x, y))
    if e.is_constant:
        vals = e.evaluate(t1, x, y)
        assert np.all(vals == vals[0])
