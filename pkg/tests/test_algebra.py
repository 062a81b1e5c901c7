import numpy as np
import pytest
from hypothesis import given, strategies as st

from supergeo.algebra import (AlgebraError, AlgebraHom, SmallAlgebra, ZeroBody, body_hom, extend, grassmann,
                              identity_hom, invert, left_coefficient, max_dim, parse_algebra_spec, reals, rescaling_hom,
                              restrict, tensor)


def random_element(A, rng, body=None, parity=None):
    c = rng.normal(size=A.dim)
    if parity is not None:
        c[A.parity != parity] = 0.0
    if body is not None:
        c[0] = body
    return A.element(c)


def brute_nilpotency(A):
    """Smallest r such that every r-fold product of non-unit basis elements vanishes."""
    nil = [A.basis_element(i) for i in range(1, A.dim)]
    prods = nil
    r = 1
    while any(not p.is_zero() for p in prods):
        prods = [p * q for p in prods for q in nil]
        prods = [p for p in prods if not p.is_zero()]
        r += 1
    return r


def test_grassmann_zero_is_reals():
    R = grassmann(0)
    assert R.dim == 1 and R.nilpotency_index == 1
    assert (R.scalar(2.0) * R.scalar(3.0)).body == 6.0
    assert reals() is R


def test_grassmann_two_relations():
    A = grassmann(2)
    t1, t2 = A.gen(0), A.gen(1)
    assert (t1 * t2 + t2 * t1).is_zero()
    assert (t1 * t1).is_zero() and (t2 * t2).is_zero()


@pytest.mark.parametrize("q,d", [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)])
def test_nilpotency_index_matches_enumeration(q, d):
    A = grassmann(q)
    assert A.nilpotency_index == d
    assert brute_nilpotency(A) == d


def test_grassmann_three_top_product():
    A = grassmann(3)
    top = A.gen(0) * A.gen(1) * A.gen(2)
    assert not top.is_zero()
    assert A.filt_level[A.index_of[0b111]] == 3


def test_tensor_unit_law():
    A = grassmann(2)
    T = tensor(reals(), A)
    assert T.dim == A.dim and T.generators == A.generators


def test_tensor_koszul_sign_odd_odd():
    T = tensor(grassmann(1, "al"), grassmann(1, "be"))
    a, b = T.gen(0), T.gen(1)
    assert (a * b + b * a).is_zero()
    assert not (a * b).is_zero()


def test_tensor_dimension_and_nilpotency():
    T = tensor(grassmann(2, "a"), grassmann(2, "b"))
    assert T.dim == 16 and T.nilpotency_index == 5
    assert brute_nilpotency(T) == 5


def test_parse_algebra_spec():
    T = parse_algebra_spec("Grassmann(2) x Grassmann(2)")
    assert T.generators == ("a1", "a2", "b1", "b2") and T.dim == 16
    assert parse_algebra_spec("Grassmann(0)").dim == 1
    with pytest.raises(AlgebraError):
        parse_algebra_spec("Clifford(2)")


def test_mul_examples():
    A = grassmann(2)
    t1, t2 = A.gen(0), A.gen(1)
    assert ((1 + t1) * (1 - t1)).allclose(A.one())
    assert (t2 * t1).allclose(-(t1 * t2))
    e = 1 + t1 * t2
    assert (e * e).allclose(1 + 2 * t1 * t2)


def test_mul_algebra_mismatch():
    with pytest.raises(AlgebraError):
        grassmann(1).gen(0) * grassmann(2, "u").gen(0)


def test_invert_examples():
    A = grassmann(2)
    assert invert(A.scalar(2.0)).allclose(A.scalar(0.5))
    t12 = A.gen(0) * A.gen(1)
    assert invert(1 + t12).allclose(1 - t12)
    with pytest.raises(ZeroBody):
        invert(A.gen(0))


@given(st.integers(0, 2**31 - 1), st.sampled_from([1, 2, 3, 4, 5, 6]))
def test_invert_two_sided(seed, q):
    A = grassmann(q)
    rng = np.random.default_rng(seed)
    x = random_element(A, rng, body=rng.uniform(0.5, 2.0) * rng.choice([-1, 1]))
    y = invert(x)
    assert np.max(np.abs((x * y - 1).coeffs)) < 1e-12
    assert np.max(np.abs((y * x - 1).coeffs)) < 1e-12


@given(st.integers(0, 2**31 - 1))
def test_nilpotent_power_vanishes(seed):
    A = grassmann(4)
    rng = np.random.default_rng(seed)
    x = random_element(A, rng, body=0.0)
    assert (x ** A.nilpotency_index).is_zero(1e-12)


@given(st.integers(0, 2**31 - 1))
def test_graded_commutativity_of_homogeneous_elements(seed):
    A = grassmann(4)
    rng = np.random.default_rng(seed)
    p, q = rng.integers(0, 2, size=2)
    x = random_element(A, rng, parity=p)
    y = random_element(A, rng, parity=q)
    sign = -1.0 if p * q else 1.0
    assert (x * y - sign * (y * x)).is_zero(1e-12)


def test_exhaustive_laws_run_at_construction():
    for q in range(7):
        grassmann(q).check_laws()


def test_dimension_cap(monkeypatch):
    monkeypatch.setenv("SUPERGEO_MAX_ALG_DIM", "8")
    assert max_dim() == 8
    with pytest.raises(AlgebraError):
        SmallAlgebra(["p", "q", "r", "s"])
    monkeypatch.setenv("SUPERGEO_MAX_ALG_DIM", "128")
    assert SmallAlgebra(["g%d" % k for k in range(7)], check=False).dim == 128


def test_duplicate_generators_rejected():
    with pytest.raises(AlgebraError):
        SmallAlgebra(["a", "a"])


def test_body_and_parity_queries():
    A = grassmann(2)
    x = 3 + A.gen(0) * A.gen(1)
    assert x.body == 3.0 and x.is_even() and x.parity == 0
    assert A.gen(0).parity == 1
    assert (A.gen(0) + 1).parity is None


def test_body_hom_and_identity():
    A = grassmann(2)
    x = 3 + A.gen(0) * A.gen(1)
    assert body_hom(A)(x).allclose(A.scalar(3.0))
    assert body_hom(A, into_reals=True)(x).body == 3.0
    assert identity_hom(A)(x).allclose(x)


def test_rescaling_hom_zero_is_body():
    A = grassmann(3)
    assert np.array_equal(rescaling_hom(A, 0.0).matrix, body_hom(A).matrix)
    assert np.array_equal(rescaling_hom(A, 1.0).matrix, np.eye(A.dim))


@given(st.integers(0, 2**31 - 1), st.floats(-2, 2), st.floats(-2, 2))
def test_hom_composition(seed, c1, c2):
    A = grassmann(3)
    rng = np.random.default_rng(seed)
    x = random_element(A, rng)
    h1, h2 = rescaling_hom(A, c1), rescaling_hom(A, c2)
    assert h2.compose(h1)(x).allclose(h2(h1(x)), 1e-12)


def test_hom_must_be_multiplicative():
    A = grassmann(2)
    m = np.eye(A.dim)
    m[A.index_of[0b11], A.index_of[0b11]] = 2.0
    with pytest.raises(AlgebraError):
        AlgebraHom(A, A, m)


def test_body_preserved_by_homs():
    A = grassmann(3)
    x = random_element(A, np.random.default_rng(0))
    assert rescaling_hom(A, 0.3)(x).body == pytest.approx(x.body)


def test_extend_and_left_coefficient():
    A = grassmann(2)
    big, inc, (e,) = extend(A, ["eps"], front=True)
    x = A.gen(0) + 2 * A.gen(0) * A.gen(1)
    b = A.scalar(1.5) + A.gen(1)
    y = inc(x) + e * inc(b)
    assert np.allclose(left_coefficient(y.coeffs, big, A, 1), b.coeffs)
    assert np.allclose(restrict(y.coeffs, big, A), x.coeffs)


@pytest.mark.parametrize("fn,ref", [("exp", np.exp), ("sin", np.sin), ("cos", np.cos), ("log", np.log),
                                    ("sqrt", np.sqrt)])
def test_elementary_functions_on_nilpotent_shift(fn, ref):
    A = grassmann(2)
    c = A.gen(0) * A.gen(1)
    x = 0.7 + c
    y = getattr(x, fn)()
    h = 1e-6
    deriv = (ref(0.7 + h) - ref(0.7 - h)) / (2 * h)
    assert y.body == pytest.approx(ref(0.7), abs=1e-14)
    assert y.coeffs[A.index_of[0b11]] == pytest.approx(deriv, abs=1e-8)
