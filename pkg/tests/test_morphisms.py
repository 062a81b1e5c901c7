import numpy as np
import pytest
from hypothesis import given, strategies as st

from supergeo.algebra import grassmann, rescaling_hom
from supergeo.fields import Chart, ChartError, SuperPoint, evaluate, map_parameters
from supergeo.flows import SuperVectorField
from supergeo.lie import generic_points
from supergeo.morphisms import (SuperMorphism, apply_point, compose, differential, pullback, related,
                                residual_norm)

C22 = Chart(2, 2)
EVEN_POOL = ["x1", "x2", "0.3*sin(x2)", "0.2*x1*x2", "0.5*th1*th2", "0.1*exp(x1)*th1*th2", "0.4"]
ODD_POOL = ["th1", "th2", "x1*th2", "0.3*exp(x2)*th1", "sin(x1)*th2"]


def random_morphism(rng, chart=C22):
    f = [chart.parse(" + ".join(rng.choice(EVEN_POOL, size=3))) for _ in range(2)]
    lam = [chart.parse(" + ".join(rng.choice(ODD_POOL, size=2))) for _ in range(2)]
    return SuperMorphism(chart, chart, f, lam)


def random_function(rng, chart=C22):
    return chart.parse(f"exp(x1)*x2 + th1*th2*cos(x1) + {rng.normal():.3f}*x2^2")


def test_pullback_of_coordinates():
    rng = np.random.default_rng(0)
    phi = random_morphism(rng)
    pts = generic_points(C22, 2)
    for k in range(4):
        assert residual_norm([pullback(phi, C22.coordinate(k)) - phi.components[k]], pts) == 0.0


def test_pullback_identity():
    h = random_function(np.random.default_rng(1))
    ident = SuperMorphism.identity(C22)
    assert residual_norm([pullback(ident, h) - h], generic_points(C22, 2)) == 0.0


def test_pullback_substitution_example():
    src, tgt = Chart(1, 1), Chart(1, 1)
    phi = SuperMorphism(src, tgt, [src.parse("x1^2")], [src.th(0)])
    assert (pullback(phi, tgt.parse("x1*th1")) - src.parse("x1^2*th1")).is_zero()


def test_compose_identity_and_linear():
    rng = np.random.default_rng(2)
    phi = random_morphism(rng)
    pts = generic_points(C22, 2)
    both = compose(phi, SuperMorphism.identity(C22))
    assert residual_norm([a - b for a, b in zip(both.components, phi.components)], pts) < 1e-14
    c = Chart(2, 0)
    A = SuperMorphism.parse(c, c, ["x1 + 2*x2", "3*x2"], [])
    B = SuperMorphism.parse(c, c, ["x1 - x2", "x1 + x2"], [])
    AB = compose(A, B)
    ref = SuperMorphism.parse(c, c, ["3*x1 + x2", "3*x1 + 3*x2"], [])
    assert residual_norm([a - b for a, b in zip(AB.components, ref.components)], generic_points(c, 2)) < 1e-14


@given(st.integers(0, 2**31 - 1))
def test_contravariance_and_point_functoriality(seed):
    rng = np.random.default_rng(seed)
    phi, xi = random_morphism(rng), random_morphism(rng)
    h = random_function(rng)
    pts = generic_points(C22, 2, seed % 1009)
    lhs = pullback(compose(phi, xi), h)
    rhs = pullback(xi, pullback(phi, h))
    assert residual_norm([lhs - rhs], pts) < 1e-10
    for p in pts:
        assert apply_point(compose(phi, xi), p).distance(apply_point(phi, apply_point(xi, p))) < 1e-10


def test_apply_point_examples():
    A = grassmann(3)
    c = Chart(1, 1, A)
    C = A.gen(0) * A.gen(1)
    p = SuperPoint.from_elements(c, [0.5 + A.gen(1) * A.gen(2)], [A.gen(2)])
    assert apply_point(SuperMorphism.identity(c), p).distance(p) == 0.0
    shift = SuperMorphism(c, c, [c.x(0) + c.const(C)], [c.th(0)])
    q = apply_point(shift, p)
    assert q.even_coord(0).allclose(p.even_coord(0) + C)
    sq = SuperMorphism.parse(c, c, ["x1^2"], ["th1"])
    assert apply_point(sq, p).body[0] == pytest.approx(0.25)


@given(st.integers(0, 2**31 - 1))
def test_apply_point_commutes_with_homs(seed):
    rng = np.random.default_rng(seed)
    phi = random_morphism(rng)
    p = generic_points(C22, 1, seed % 1013)[0]
    h = rescaling_hom(p.algebra, float(rng.uniform(-2, 2)))
    assert apply_point(phi, p).map_algebra(h).distance(apply_point(phi, p.map_algebra(h))) < 1e-10


def test_differential_examples():
    ident = differential(SuperMorphism.identity(C22))
    for i in range(4):
        for k in range(4):
            want = C22.one() if i == k else C22.zero()
            assert (ident[i][k] - want).is_zero()
    src = Chart(1, 1)
    phi = SuperMorphism(src, src, [src.parse("x1^2")], [src.th(0)])
    D = differential(phi)
    assert (D[0][0] - src.parse("2*x1")).is_zero()
    assert (D[1][1] - src.one()).is_zero()


@given(st.integers(0, 2**31 - 1))
def test_chain_rule(seed):
    rng = np.random.default_rng(seed)
    phi, xi = random_morphism(rng), random_morphism(rng)
    lhs = differential(compose(phi, xi))
    Dx, Dp = differential(xi), differential(phi)
    pts = generic_points(C22, 1, seed % 1019)
    res = []
    for i in range(4):
        for k in range(4):
            r = lhs[i][k]
            for j in range(4):
                r = r - Dx[i][j] * pullback(xi, Dp[j][k])
            res.append(r)
    assert residual_norm(res, pts) < 1e-10


def test_related_examples():
    c = Chart(1, 0)
    X = SuperVectorField.parse(c, ["1"])
    assert residual_norm(related(SuperMorphism.identity(c), X, X), generic_points(c, 2)) == 0.0
    shift = SuperMorphism.parse(c, c, ["x1 + 1"], [])
    assert residual_norm(related(shift, X, X), generic_points(c, 2)) == 0.0
    sq = SuperMorphism.parse(c, c, ["x1^2"], [])
    X = SuperVectorField.parse(c, ["x1"])
    Y = SuperVectorField.parse(c, ["2*x1"])
    assert residual_norm(related(sq, X, Y), generic_points(c, 2)) < 1e-14
    assert residual_norm(related(sq, X, X), generic_points(c, 2)) > 1e-3


def test_point_separation():
    rng = np.random.default_rng(5)
    phi = random_morphism(rng)
    f2 = list(phi.f)
    lam2 = list(phi.lam)
    lam2[0] = lam2[0] + C22.parse("1e-3*th2")
    psi = SuperMorphism(C22, C22, f2, lam2)
    pts = generic_points(C22, 3)
    assert max(apply_point(phi, p).distance(apply_point(psi, p)) for p in pts) > 1e-4


def test_component_parity_enforced():
    with pytest.raises(ChartError):
        SuperMorphism(C22, C22, [C22.th(0), C22.x(1)], [C22.th(0), C22.th(1)])
    with pytest.raises(ChartError):
        SuperMorphism(C22, Chart(1, 0), [C22.x(0), C22.x(1)], [])


def test_map_parameters_commutes_with_pullback():
    A = grassmann(2)
    c = Chart(1, 0, A)
    C = A.gen(0) * A.gen(1)
    phi = SuperMorphism(c, c, [c.x(0) + c.const(C) * c.x(0)], [])
    h = c.parse("exp(x1)")
    body = rescaling_hom(A, 0.0)
    lhs = map_parameters(pullback(phi, h), body, c)
    phib = SuperMorphism(c, c, [map_parameters(f, body, c) for f in phi.f], [])
    rhs = pullback(phib, map_parameters(h, body, c))
    p = SuperPoint.from_elements(c, [0.3 + C])
    assert (evaluate(lhs, p) - evaluate(rhs, p)).norm() < 1e-14
