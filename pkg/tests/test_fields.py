import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from supergeo.algebra import grassmann, rescaling_hom
from supergeo.expr import DomainError, ParseError, jet_eval, parse_scalar
from supergeo.fields import Chart, ChartError, SuperPoint, evaluate, generic_point, map_parameters, parse_element
from supergeo.lie import generic_points


# ------------------------------------------------------------------ jets
def test_jet_exp():
    vals = jet_eval(parse_scalar("exp(x1)", 1), [0.0], 2)
    assert vals[0] == pytest.approx(1.0)
    assert vals[1][0] == pytest.approx(1.0)
    assert vals[2][0, 0] == pytest.approx(1.0)


def test_jet_product():
    vals = jet_eval(parse_scalar("x1*x2", 2), [1.0, 2.0], 1)
    assert vals[0] == pytest.approx(2.0)
    assert np.allclose(vals[1], [2.0, 1.0])


def test_jet_sin_squared_against_finite_differences():
    e = parse_scalar("sin(x1)^2", 1)
    x0 = math.pi / 4
    vals = jet_eval(e, [x0], 2)
    f = lambda x: math.sin(x) ** 2  # noqa: E731
    h = 1e-5
    assert vals[0] == pytest.approx(0.5, abs=1e-14)
    assert vals[1][0] == pytest.approx((f(x0 + h) - f(x0 - h)) / (2 * h), abs=1e-8)
    assert vals[1][0] == pytest.approx(1.0, abs=1e-12)
    assert vals[2][0, 0] == pytest.approx(0.0, abs=1e-12)
    assert vals[2][0, 0] == pytest.approx((f(x0 + h) - 2 * f(x0) + f(x0 - h)) / h**2, abs=1e-4)


EXPRS = ["exp(x1)*x2", "sin(x1*x2) + x1^3", "log(2 + x1^2)*cos(x2)", "sqrt(1 + x2^2)/(2 + x1)", "(x1 - x2)^2*exp(-x1)"]


@pytest.mark.parametrize("text", EXPRS)
def test_jet_gradient_matches_finite_differences(text):
    e = parse_scalar(text, 2)
    x0 = np.array([0.3, -0.4])
    vals = jet_eval(e, x0, 2)
    h = 1e-6
    for i in range(2):
        d = np.zeros(2)
        d[i] = h
        fd = (e.evaluate(list(x0 + d)) - e.evaluate(list(x0 - d))) / (2 * h)
        assert vals[1][i] == pytest.approx(fd, abs=1e-7)
    assert np.allclose(vals[2], vals[2].T)


@pytest.mark.parametrize("text,x", [("log(x1)", -1.0), ("1/x1", 0.0), ("sqrt(x1)", -2.0)])
def test_domain_errors(text, x):
    with pytest.raises(DomainError):
        parse_scalar(text, 1).evaluate([x])


@pytest.mark.parametrize("text,line,col", [("x1 +", 1, 5), ("x1 $ 2", 1, 4), ("(x1", 1, 4), ("x1\n + * 2", 2, 4)])
def test_parse_errors_carry_position(text, line, col):
    with pytest.raises(ParseError) as info:
        parse_scalar(text, 1)
    assert (info.value.line, info.value.col) == (line, col)


def test_unknown_identifier():
    with pytest.raises(ParseError):
        parse_scalar("y + 1", 1)


# --------------------------------------------------------------- evaluation
def test_coordinates_evaluate_to_point_coordinates():
    A = grassmann(3)
    c = Chart(2, 1, A)
    p = SuperPoint.from_elements(c, [1 + A.gen(0) * A.gen(1), A.scalar(2.0)], [A.gen(2)])
    assert evaluate(c.x(0), p).allclose(p.even_coord(0))
    assert evaluate(c.x(1), p).allclose(p.even_coord(1))
    assert evaluate(c.th(0), p).allclose(p.odd_coord(0))


def test_exp_at_nilpotent_shift():
    A = grassmann(2)
    c = Chart(1, 0, A)
    C = A.gen(0) * A.gen(1)
    p = SuperPoint.from_elements(c, [0.4 + C])
    assert evaluate(c.parse("exp(x1)"), p).allclose(math.exp(0.4) * (1 + C), 1e-14)


def test_odd_monomial_substitution():
    A = grassmann(2)
    c = Chart(0, 2, A)
    p = SuperPoint.from_elements(c, [], [A.gen(0), A.gen(1)])
    assert evaluate(c.th(0) * c.th(1), p).allclose(A.gen(0) * A.gen(1))


def test_body_outside_domain():
    c = Chart(1, 0, domain=[(0.0, 1.0)])
    with pytest.raises(DomainError):
        SuperPoint.from_elements(c, [2.0])


def test_point_parity_validation():
    A = grassmann(2)
    c = Chart(1, 1, A)
    with pytest.raises(Exception):
        SuperPoint.from_elements(c, [A.gen(0)], [A.gen(1)])


# ------------------------------------------------------------- derivatives
def test_odd_derivatives_left_convention():
    c = Chart(0, 2)
    t1, t2 = c.th(0), c.th(1)
    assert (t1.d_odd(0) - c.one()).is_zero()
    assert ((t1 * t2).d_odd(0) - t2).is_zero()
    assert ((t1 * t2).d_odd(1) + t1).is_zero()


def test_even_derivative():
    c = Chart(1, 1)
    f = c.parse("x1^2*th1")
    assert (f.d_even(0) - c.parse("2*x1*th1")).is_zero()


def test_derivative_index_out_of_range():
    c = Chart(1, 1)
    with pytest.raises(ChartError):
        c.x(0).d_odd(3)


def _random_superfunction(c, rng, parity):
    """Random homogeneous superfunction on a (2|2) chart from a small template pool."""
    pool_even = ["x1", "exp(x2)", "sin(x1)*x2", "1 + x1^2", "cos(x1 + x2)"]
    f = c.zero()
    for mask in range(4):
        if (bin(mask).count("1") % 2) != parity:
            continue
        mono = c.one()
        for j in range(2):
            if mask >> j & 1:
                mono = mono * c.th(j)
        coef = c.parse(pool_even[rng.integers(len(pool_even))])
        f = f + float(rng.normal()) * coef * mono
    return f


@given(st.integers(0, 2**31 - 1))
def test_graded_leibniz_and_nilpotency(seed):
    rng = np.random.default_rng(seed)
    c = Chart(2, 2)
    p, q = rng.integers(0, 2, size=2)
    f, g = _random_superfunction(c, rng, p), _random_superfunction(c, rng, q)
    pts = generic_points(c, 2, seed % 1000)
    for j in range(2):
        lhs = (f * g).d_odd(j)
        rhs = f.d_odd(j) * g + (-1.0 if p else 1.0) * (f * g.d_odd(j))
        assert max(evaluate(lhs - rhs, x).norm() for x in pts) < 1e-12
        assert f.d_odd(j).d_odd(j).is_zero()
    for i in range(2):
        lhs = (f * g).d_even(i)
        rhs = f.d_even(i) * g + f * g.d_even(i)
        assert max(evaluate(lhs - rhs, x).norm() for x in pts) < 1e-12


# ------------------------------------------------------------- arithmetic
def test_arithmetic_examples():
    c = Chart(1, 2)
    t1, t2, x = c.th(0), c.th(1), c.x(0)
    assert (t1 * t1).is_zero()
    assert ((x + t1 * t2) * (x - t1 * t2) - x * x).is_zero()


@given(st.integers(0, 2**31 - 1))
def test_graded_commutativity_and_eval_homomorphism(seed):
    rng = np.random.default_rng(seed)
    c = Chart(2, 2)
    p, q = rng.integers(0, 2, size=2)
    f, g = _random_superfunction(c, rng, p), _random_superfunction(c, rng, q)
    sign = -1.0 if p * q else 1.0
    for x in generic_points(c, 2, seed % 997):
        assert evaluate(f * g - sign * (g * f), x).norm() < 1e-12
        assert (evaluate(f * g, x) - evaluate(f, x) * evaluate(g, x)).norm() < 1e-10
        assert evaluate(c.one(), x).allclose(x.algebra.one())


@given(st.integers(0, 2**31 - 1))
def test_body_commutation(seed):
    rng = np.random.default_rng(seed)
    c = Chart(2, 2)
    f = _random_superfunction(c, rng, 0)
    x = generic_points(c, 1, seed % 991)[0]
    classical = f.body_expr().evaluate(list(x.body))
    assert evaluate(f, x).body == pytest.approx(classical, abs=1e-12)


def test_parameter_valued_coefficients_and_maps():
    A = grassmann(2)
    c = Chart(1, 0, A)
    C = A.gen(0) * A.gen(1)
    f = c.parse("exp(C*x1)", {"C": C})
    p = SuperPoint.from_elements(c, [2.0])
    assert evaluate(f, p).allclose(1 + 2 * C, 1e-14)
    h = rescaling_hom(A, 0.0)
    fb = map_parameters(f, h, c)
    assert evaluate(fb, p).allclose(A.one(), 1e-14)


def test_parse_element_and_generic_point():
    A = grassmann(2, "a")
    x = parse_element("1 + 2*a1*a2", A)
    assert x.allclose(1 + 2 * A.gen(0) * A.gen(1))
    c = Chart(1, 2, A)
    p = generic_point(c, [0.5])
    assert p.algebra.dim == 16
    assert p.odd_coord(0).is_odd() and not p.odd_coord(0).is_zero()
