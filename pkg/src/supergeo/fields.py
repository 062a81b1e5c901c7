"""Charts, superfunctions and algebra-valued points.

A superfunction on the chart ``U^{m|n}`` is a finite sum ``f_I xi^I`` over odd
monomials ``I``.  Each coefficient is an expression tree in the even coordinates
with parameter-algebra constants, stored split by parameter parity so that the
Koszul signs of graded multiplication are explicit.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .algebra import (
    AlgebraElement,
    AlgebraError,
    AlgebraHom,
    SmallAlgebra,
    extend,
    identity_hom,
    monomial_sign,
    reals,
)
from .expr import (
    ONE,
    ZERO,
    Const,
    DomainError,
    Expr,
    ParseError,
    Var,
    add,
    build,
    func_derivative,
    mul,
    neg,
    parse,
    split_parity,
)


def _popcount(x: int) -> int:
    return bin(x).count("1")


class ChartError(ValueError):
    """Chart mismatch, bad index or a point outside the chart domain."""


@dataclass(eq=False)
class Chart:
    """Coordinate chart ``U^{m|n}`` with parameter algebra ``algebra``.

    ``domain`` is a list of ``(lo, hi)`` bounds per even coordinate, or None for
    all of ``R^m``.
    """

    m: int
    n: int
    algebra: SmallAlgebra = field(default_factory=reals)
    domain: list | None = None

    def __post_init__(self):
        if self.m < 0 or self.n < 0:
            raise ChartError("chart dimensions must be nonnegative")
        if self.domain is not None:
            self.domain = [(float(lo), float(hi)) for lo, hi in self.domain]
            if len(self.domain) != self.m:
                raise ChartError("domain needs one interval per even coordinate")
            if any(not lo < hi for lo, hi in self.domain):
                raise ChartError("domain intervals must be nonempty")

    @property
    def dim(self) -> int:
        return self.m + self.n

    def parity(self, k: int) -> int:
        """Parity of the k-th coordinate in the combined order (even first)."""
        return 0 if k < self.m else 1

    @property
    def parities(self) -> list[int]:
        return [self.parity(k) for k in range(self.dim)]

    def contains(self, body) -> bool:
        if self.domain is None:
            return True
        b = np.asarray(body, dtype=float)
        return all(lo < v < hi for v, (lo, hi) in zip(b, self.domain))

    def check(self, body) -> None:
        if not self.contains(body):
            raise DomainError(f"body point {np.asarray(body).tolist()} lies outside the chart domain")

    def compatible(self, other: "Chart") -> bool:
        return self.m == other.m and self.n == other.n and self.algebra is other.algebra

    # convenience constructors for coordinate functions
    def x(self, i: int) -> "SuperFunction":
        if not 0 <= i < self.m:
            raise ChartError(f"even coordinate index {i} out of range")
        return SuperFunction(self, {(0, 0): Var(i)})

    def th(self, j: int) -> "SuperFunction":
        if not 0 <= j < self.n:
            raise ChartError(f"odd coordinate index {j} out of range")
        return SuperFunction(self, {(1 << j, 0): ONE})

    def coordinate(self, k: int) -> "SuperFunction":
        return self.x(k) if k < self.m else self.th(k - self.m)

    def const(self, value) -> "SuperFunction":
        return SuperFunction.from_expr(self, Expr.wrap(value))

    def zero(self) -> "SuperFunction":
        return SuperFunction(self, {})

    def one(self) -> "SuperFunction":
        return SuperFunction(self, {(0, 0): ONE})

    def parse(self, text: str, constants: dict | None = None) -> "SuperFunction":
        return parse_superfunction(text, self, constants)

    def product(self, other: "Chart") -> "Chart":
        """Chart with coordinates ``(x, y | xi, eta)`` of the product."""
        if other.algebra is not self.algebra:
            raise ChartError("product charts need a common parameter algebra")
        dom = None
        if self.domain is not None or other.domain is not None:
            big = (-np.inf, np.inf)
            dom = (self.domain or [big] * self.m) + (other.domain or [big] * other.m)
        return Chart(self.m + other.m, self.n + other.n, self.algebra, dom)


class SuperFunction:
    """``sum_I f_I xi^I`` with coefficients split by parameter parity.

    ``terms`` maps ``(odd_mask, parameter_parity)`` to an expression; the
    expression stands to the left of the odd monomial.
    """

    __slots__ = ("chart", "terms")

    def __init__(self, chart: Chart, terms: dict | None = None):
        self.chart = chart
        self.terms = {k: v for k, v in (terms or {}).items() if not v.is_zero()}

    @classmethod
    def from_expr(cls, chart: Chart, e: Expr, mask: int = 0) -> "SuperFunction":
        ev, od = split_parity(e)
        return cls(chart, {(mask, 0): ev, (mask, 1): od})

    # ------------------------------------------------------------ queries
    def _check(self, other: "SuperFunction") -> None:
        if not self.chart.compatible(other.chart):
            raise ChartError("superfunctions live on different charts")

    def is_zero(self) -> bool:
        return not self.terms

    @property
    def parity(self) -> int | None:
        """0 or 1 when homogeneous (zero is even), else None."""
        ps = {(_popcount(mk) + p) % 2 for mk, p in self.terms}
        if not ps:
            return 0
        if len(ps) == 1:
            return ps.pop()
        return None

    def parity_part(self, p: int) -> "SuperFunction":
        return SuperFunction(
            self.chart, {k: v for k, v in self.terms.items() if (_popcount(k[0]) + k[1]) % 2 == p}
        )

    def body_expr(self) -> Expr:
        """Coefficient of the empty odd monomial (even parameter part)."""
        return self.terms.get((0, 0), ZERO)

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for (mk, p), e in sorted(self.terms.items()):
            mono = "".join(f"th{k + 1}" for k in range(self.chart.n) if mk >> k & 1)
            parts.append(f"({e})" + (f"*{mono}" if mono else ""))
        return " + ".join(parts)

    # ------------------------------------------------------------ arithmetic
    @staticmethod
    def _lift(chart: Chart, o) -> "SuperFunction":
        if isinstance(o, SuperFunction):
            return o
        if isinstance(o, (int, float, np.floating, np.integer, AlgebraElement, Expr)):
            if isinstance(o, AlgebraElement) and o.algebra is not chart.algebra:
                raise AlgebraError("constant is not in the chart's parameter algebra")
            return chart.const(o)
        return NotImplemented

    def __add__(self, o):
        o = self._lift(self.chart, o)
        if o is NotImplemented:
            return o
        self._check(o)
        terms = dict(self.terms)
        for k, v in o.terms.items():
            terms[k] = add(terms[k], v) if k in terms else v
        return SuperFunction(self.chart, terms)

    def __radd__(self, o):
        return self._lift(self.chart, o) + self

    def __neg__(self):
        return SuperFunction(self.chart, {k: neg(v) for k, v in self.terms.items()})

    def __sub__(self, o):
        o = self._lift(self.chart, o)
        if o is NotImplemented:
            return o
        return self + (-o)

    def __rsub__(self, o):
        return self._lift(self.chart, o) - self

    def __mul__(self, o):
        o = self._lift(self.chart, o)
        if o is NotImplemented:
            return o
        self._check(o)
        terms: dict = {}
        for (i, p), f in self.terms.items():
            ni = _popcount(i)
            for (j, q), g in o.terms.items():
                s = monomial_sign(i, j)
                if s == 0:
                    continue
                if (ni * q) % 2:
                    s = -s
                prod = mul(f, g)
                if s < 0:
                    prod = neg(prod)
                key = (i | j, (p + q) % 2)
                terms[key] = add(terms[key], prod) if key in terms else prod
        return SuperFunction(self.chart, terms)

    def __rmul__(self, o):
        return self._lift(self.chart, o) * self

    def __pow__(self, k: int):
        k = int(k)
        if k < 0:
            return self._smooth("recip") ** (-k)
        out = self.chart.one()
        for _ in range(k):
            out = out * self
        return out

    def __truediv__(self, o):
        o = self._lift(self.chart, o)
        if o is NotImplemented:
            return o
        return self * o._smooth("recip")

    def __rtruediv__(self, o):
        return self._lift(self.chart, o) * self._smooth("recip")

    def _smooth(self, name: str) -> "SuperFunction":
        """``f(u) = sum_k f^(k)(u_0) r^k / k!`` with ``u_0`` the plain even coefficient."""
        u0 = self.body_expr()
        rest = SuperFunction(self.chart, {k: v for k, v in self.terms.items() if k != (0, 0)})
        out = SuperFunction(self.chart, {(0, 0): func_derivative(name, u0, 0) if name != "recip" else _recip(u0)})
        power = self.chart.one()
        fact = 1.0
        for k in range(1, self.chart.n + 2):
            power = power * rest
            if power.is_zero():
                break
            fact *= k
            coef = Const(1.0 / fact) * func_derivative(name, u0, k)
            out = out + SuperFunction(self.chart, {(0, 0): coef}) * power
        return out

    def exp(self):
        return self._smooth("exp")

    def log(self):
        return self._smooth("log")

    def sin(self):
        return self._smooth("sin")

    def cos(self):
        return self._smooth("cos")

    def sqrt(self):
        return self._smooth("sqrt")

    # ---------------------------------------------------------- derivatives
    def d_even(self, i: int) -> "SuperFunction":
        if not 0 <= i < self.chart.m:
            raise ChartError(f"even index {i} out of range")
        return SuperFunction(self.chart, {k: v.diff(i) for k, v in self.terms.items()})

    def d_odd(self, j: int) -> "SuperFunction":
        """Left derivative in ``xi^j``; flips parity."""
        if not 0 <= j < self.chart.n:
            raise ChartError(f"odd index {j} out of range")
        bit = 1 << j
        terms: dict = {}
        for (mk, p), v in self.terms.items():
            if not mk & bit:
                continue
            before = _popcount(mk & (bit - 1))
            sign = (-1) ** (p + before)
            key = (mk ^ bit, p)
            val = v if sign > 0 else neg(v)
            terms[key] = add(terms[key], val) if key in terms else val
        return SuperFunction(self.chart, terms)

    def d(self, k: int) -> "SuperFunction":
        """Derivative along the k-th coordinate in combined (even first) order."""
        return self.d_even(k) if k < self.chart.m else self.d_odd(k - self.chart.m)

    # ---------------------------------------------------------- evaluation
    def evaluate(self, point: "SuperPoint") -> AlgebraElement:
        return evaluate(self, point)

    def __call__(self, point: "SuperPoint") -> AlgebraElement:
        return evaluate(self, point)


def _recip(u: Expr) -> Expr:
    from .expr import div

    return div(ONE, u)


# ----------------------------------------------------------------- points
class SuperPoint:
    """Algebra-valued point ``(a, beta)`` of a chart.

    ``even`` and ``odd`` are coefficient arrays of shape ``(m, Q.dim)`` and
    ``(n, Q.dim)``; ``embed`` maps the chart's parameter algebra into ``Q``.
    """

    __slots__ = ("chart", "algebra", "embed", "even", "odd")

    def __init__(self, chart: Chart, algebra: SmallAlgebra, even, odd, embed: AlgebraHom | None = None, check: bool = True):
        self.chart = chart
        self.algebra = algebra
        if embed is None:
            if algebra is not chart.algebra:
                raise AlgebraError("an embedding of the parameter algebra is required")
            embed = identity_hom(algebra)
        if embed.source is not chart.algebra or embed.target is not algebra:
            raise AlgebraError("embedding does not match chart and point algebras")
        self.embed = embed
        self.even = np.asarray(even, dtype=float).reshape(chart.m, algebra.dim)
        self.odd = np.asarray(odd, dtype=float).reshape(chart.n, algebra.dim)
        if check:
            self.validate()

    @classmethod
    def from_elements(cls, chart: Chart, even: Sequence, odd: Sequence = (), embed: AlgebraHom | None = None, check: bool = True) -> "SuperPoint":
        alg = embed.target if embed is not None else None
        for e in list(even) + list(odd):
            if isinstance(e, AlgebraElement):
                alg = alg or e.algebra
        if alg is None:
            alg = chart.algebra
        conv = [
            e.coeffs if isinstance(e, AlgebraElement) else alg.scalar(float(e)).coeffs for e in list(even) + list(odd)
        ]
        arr = np.array(conv).reshape(len(conv), alg.dim) if conv else np.zeros((0, alg.dim))
        return cls(chart, alg, arr[: chart.m], arr[chart.m :], embed, check)

    def validate(self) -> None:
        par = self.algebra.parity
        if np.any(self.even[:, par == 1] != 0.0):
            raise AlgebraError("even coordinates must be even algebra elements")
        if np.any(self.odd[:, par == 0] != 0.0):
            raise AlgebraError("odd coordinates must be odd algebra elements")
        self.chart.check(self.body)

    @property
    def body(self) -> np.ndarray:
        return self.even[:, 0].copy()

    def even_coord(self, i: int) -> AlgebraElement:
        return AlgebraElement(self.algebra, self.even[i].copy())

    def odd_coord(self, j: int) -> AlgebraElement:
        return AlgebraElement(self.algebra, self.odd[j].copy())

    def coord(self, k: int) -> AlgebraElement:
        m = self.chart.m
        return self.even_coord(k) if k < m else self.odd_coord(k - m)

    def coords(self) -> list[AlgebraElement]:
        return [self.coord(k) for k in range(self.chart.dim)]

    def stacked(self) -> np.ndarray:
        return np.vstack([self.even, self.odd])

    def lift(self, c: AlgebraElement) -> AlgebraElement:
        return _lift_const(self.embed, c)

    def with_coords(self, even, odd, check: bool = True) -> "SuperPoint":
        return SuperPoint(self.chart, self.algebra, even, odd, self.embed, check)

    def map_algebra(self, h: AlgebraHom) -> "SuperPoint":
        """Apply an algebra homomorphism to all coordinates."""
        if h.source is not self.algebra:
            raise AlgebraError("homomorphism source does not match the point algebra")
        return SuperPoint(self.chart, h.target, h.apply_array(self.even), h.apply_array(self.odd), h.compose(self.embed))

    def distance(self, other: "SuperPoint") -> float:
        a, b = self.stacked(), other.stacked()
        return float(np.max(np.abs(a - b))) if a.size else 0.0

    def __repr__(self) -> str:
        return f"SuperPoint(even={[repr(e) for e in map(self.even_coord, range(self.chart.m))]}, odd={[repr(e) for e in map(self.odd_coord, range(self.chart.n))]})"


def _lift_const(embed: AlgebraHom, c: AlgebraElement) -> AlgebraElement:
    if c.algebra is embed.target:
        return c
    cache = embed.__dict__.setdefault("_lift_cache", {})
    hit = cache.get(id(c))
    if hit is None or hit[0] is not c:
        hit = (c, embed(c))
        cache[id(c)] = hit
    return hit[1]


def generic_point(chart: Chart, body, even_spread: Sequence | None = None, extra: int = 0) -> SuperPoint:
    """Point with fresh odd generators as odd coordinates.

    The point algebra is ``P`` with ``n + extra`` adjoined generators; the odd
    coordinates are the first ``n`` of them.  ``even_spread`` optionally adds
    nilpotent even parts (elements of the point algebra, or callables taking it).
    """
    names = [f"b{j + 1}" for j in range(chart.n + extra)]
    Q, inc, gens = extend(chart.algebra, names)
    even = np.zeros((chart.m, Q.dim))
    even[:, 0] = np.asarray(body, dtype=float)
    if even_spread is not None:
        for i, s in enumerate(even_spread):
            if s is None:
                continue
            el = s(Q) if callable(s) else s
            even[i] += el.coeffs
    odd = np.array([g.coeffs for g in gens[: chart.n]]).reshape(chart.n, Q.dim)
    return SuperPoint(chart, Q, even, odd, inc)


def evaluate(f: SuperFunction, point: SuperPoint) -> AlgebraElement:
    """Value of ``f`` at an algebra-valued point via the Taylor pullback."""
    if not f.chart.compatible(point.chart):
        raise ChartError("point and function live on different charts")
    Q = point.algebra
    env = [AlgebraElement(Q, point.even[i]) for i in range(point.chart.m)]
    lift = lambda c: _lift_const(point.embed, c)  # noqa: E731
    cache: dict = {}
    total = np.zeros(Q.dim)
    for (mk, _p), e in f.terms.items():
        val = e.evaluate(env, lift, cache)
        coeffs = val.coeffs if isinstance(val, AlgebraElement) else _scalar(Q, val)
        if mk:
            mono = _odd_monomial(point, mk)
            coeffs = Q.mul_arrays(coeffs, mono)
        total = total + coeffs
    return AlgebraElement(Q, total)


def _scalar(Q: SmallAlgebra, v: float) -> np.ndarray:
    c = np.zeros(Q.dim)
    c[0] = float(v)
    return c


def _odd_monomial(point: SuperPoint, mk: int) -> np.ndarray:
    Q = point.algebra
    out = _scalar(Q, 1.0)
    j = 0
    while mk:
        if mk & 1:
            out = Q.mul_arrays(out, point.odd[j])
        mk >>= 1
        j += 1
    return out


# ----------------------------------------------------------------- parsing
_EVEN = re.compile(r"x(\d+)$")
_ODD = re.compile(r"th(\d+)$")


def parse_superfunction(text: str, chart: Chart, constants: dict | None = None) -> SuperFunction:
    """Parse the config grammar; ``x1..xm`` are even and ``th1..thn`` odd coordinates.

    ``constants`` maps names to reals or parameter-algebra elements.
    """
    constants = constants or {}

    def leaf(name, line, col):
        mt = _EVEN.match(name)
        if mt and 1 <= int(mt.group(1)) <= chart.m:
            return chart.x(int(mt.group(1)) - 1)
        mt = _ODD.match(name)
        if mt and 1 <= int(mt.group(1)) <= chart.n:
            return chart.th(int(mt.group(1)) - 1)
        if name in constants:
            v = constants[name]
            return chart.const(Const(v, name=name) if isinstance(v, AlgebraElement) else Const(float(v), name=name))
        if name == "pi":
            return chart.const(Const(np.pi, name="pi"))
        raise ParseError(f"unknown identifier {name!r}", line, col)

    out = build(parse(text), leaf)
    return SuperFunction._lift(chart, out)


def parse_element(text: str, algebra: SmallAlgebra, constants: dict | None = None) -> AlgebraElement:
    """Parse an algebra element from numbers, named constants and generator names."""
    constants = constants or {}

    def leaf(name, line, col):
        if name in constants:
            v = constants[name]
            return v if isinstance(v, AlgebraElement) else algebra.scalar(float(v))
        if name in algebra.generators:
            return algebra.gen(name)
        if name == "pi":
            return algebra.scalar(np.pi)
        raise ParseError(f"unknown identifier {name!r}", line, col)

    out = build(parse(text), leaf)
    if isinstance(out, AlgebraElement):
        return out
    return algebra.scalar(float(out))


def graded_sign(*parities: Iterable[int]) -> int:
    """``(-1)^(p1*p2)`` for a pair of parities; helper for Koszul signs."""
    p = list(parities)
    return -1 if (p[0] * p[1]) % 2 else 1


def map_parameters(f: SuperFunction, h: AlgebraHom, chart: Chart) -> SuperFunction:
    """Apply an algebra homomorphism to all parameter constants of ``f``.

    ``chart`` must have the same dimensions as ``f.chart`` and parameter algebra
    ``h.target``.
    """
    from .expr import map_constants

    if chart.m != f.chart.m or chart.n != f.chart.n or chart.algebra is not h.target:
        raise ChartError("target chart does not fit the homomorphism")
    out = chart.zero()
    for (mk, _p), e in f.terms.items():
        out = out + SuperFunction.from_expr(chart, map_constants(e, h), mk)
    return out
