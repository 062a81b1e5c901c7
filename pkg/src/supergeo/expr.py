"""Expression trees for smooth coefficient fields and the config grammar parser.

Grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := NUM | ident | '(' expr ')' | func '(' expr ')' | factor '^' INT | '-' factor

Constants may be reals or algebra elements, so an expression denotes a
parameter-valued smooth function of the even coordinates.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .algebra import AlgebraElement

FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt")


class DomainError(ValueError):
    """Evaluation outside the domain of an elementary function."""


def _is_zero_value(v) -> bool:
    if isinstance(v, AlgebraElement):
        return v.is_zero()
    return v == 0.0


def _is_one_value(v) -> bool:
    if isinstance(v, AlgebraElement):
        return v.allclose(1.0, 0.0)
    return v == 1.0


def _real_func(name: str, x: float) -> float:
    if name == "log" and x <= 0.0:
        raise DomainError(f"log of nonpositive value {x}")
    if name == "sqrt" and x < 0.0:
        raise DomainError(f"sqrt of negative value {x}")
    return getattr(math, name)(x)


def apply_func(name: str, v):
    if isinstance(v, (int, float, np.floating)):
        return _real_func(name, float(v))
    try:
        return getattr(v, name)()
    except ValueError as exc:
        raise DomainError(str(exc)) from exc


class Expr:
    """Node of an expression tree; immutable."""

    __slots__ = ("_dcache", "_hash_key", "__weakref__")

    def __init__(self):
        self._dcache = {}

    # ---------------------------------------------------------- construction
    @staticmethod
    def wrap(v) -> "Expr":
        if isinstance(v, Expr):
            return v
        if isinstance(v, (int, float, np.floating, np.integer)):
            return Const(float(v))
        if isinstance(v, AlgebraElement):
            return Const(v)
        raise TypeError(f"cannot build an expression from {type(v).__name__}")

    def __add__(self, o):
        return add(self, Expr.wrap(o))

    def __radd__(self, o):
        return add(Expr.wrap(o), self)

    def __sub__(self, o):
        return add(self, neg(Expr.wrap(o)))

    def __rsub__(self, o):
        return add(Expr.wrap(o), neg(self))

    def __mul__(self, o):
        return mul(self, Expr.wrap(o))

    def __rmul__(self, o):
        return mul(Expr.wrap(o), self)

    def __truediv__(self, o):
        return div(self, Expr.wrap(o))

    def __rtruediv__(self, o):
        return div(Expr.wrap(o), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, n):
        return pow_(self, int(n))

    def exp(self):
        return func("exp", self)

    def log(self):
        return func("log", self)

    def sin(self):
        return func("sin", self)

    def cos(self):
        return func("cos", self)

    def sqrt(self):
        return func("sqrt", self)

    # ---------------------------------------------------------------- queries
    def is_zero(self) -> bool:
        return isinstance(self, Const) and _is_zero_value(self.value)

    def diff(self, i: int) -> "Expr":
        """Symbolic partial derivative in even variable ``i`` (memoized)."""
        d = self._dcache.get(i)
        if d is None:
            d = self._diff(i)
            self._dcache[i] = d
        return d

    def evaluate(self, env: Sequence, lift: Callable | None = None, cache: dict | None = None):
        """Evaluate with variable values ``env`` (reals or algebra elements).

        ``lift`` maps algebra-valued constants into the algebra of ``env``.
        """
        if cache is None:
            cache = {}
        key = id(self)
        hit = cache.get(key)
        if hit is not None:
            return hit[1]
        val = self._eval(env, lift, cache)
        cache[key] = (self, val)
        return val

    def variables(self) -> set[int]:
        out: set[int] = set()
        self._collect(out)
        return out

    def constants(self) -> list:
        out: list = []
        self._consts(out)
        return out

    def has_algebra_constants(self) -> bool:
        return any(isinstance(c, AlgebraElement) for c in self.constants())

    def has_odd_constants(self) -> bool:
        return any(isinstance(c, AlgebraElement) and not c.is_even() for c in self.constants())

    def __call__(self, *xs):
        return self.evaluate(list(xs))

    # subclass hooks
    def _diff(self, i):
        raise NotImplementedError

    def _eval(self, env, lift, cache):
        raise NotImplementedError

    def _collect(self, out):
        pass

    def _consts(self, out):
        pass

    def children(self) -> tuple:
        return ()


class Const(Expr):
    __slots__ = ("value", "name")

    def __init__(self, value, name: str | None = None):
        super().__init__()
        self.value = value
        self.name = name

    def _diff(self, i):
        return ZERO

    def _eval(self, env, lift, cache):
        if isinstance(self.value, AlgebraElement) and lift is not None:
            return lift(self.value)
        return self.value

    def _consts(self, out):
        out.append(self.value)

    def __str__(self):
        if self.name:
            return self.name
        if isinstance(self.value, AlgebraElement):
            return f"[{self.value!r}]"
        return repr(self.value)


class Var(Expr):
    __slots__ = ("index",)

    def __init__(self, index: int):
        super().__init__()
        self.index = index

    def _diff(self, i):
        return ONE if i == self.index else ZERO

    def _eval(self, env, lift, cache):
        return env[self.index]

    def _collect(self, out):
        out.add(self.index)

    def __str__(self):
        return f"x{self.index + 1}"


class _Binary(Expr):
    __slots__ = ("a", "b")

    def __init__(self, a: Expr, b: Expr):
        super().__init__()
        self.a = a
        self.b = b

    def _collect(self, out):
        self.a._collect(out)
        self.b._collect(out)

    def _consts(self, out):
        self.a._consts(out)
        self.b._consts(out)

    def children(self):
        return (self.a, self.b)


class Add(_Binary):
    __slots__ = ()

    def _diff(self, i):
        return add(self.a.diff(i), self.b.diff(i))

    def _eval(self, env, lift, cache):
        return self.a.evaluate(env, lift, cache) + self.b.evaluate(env, lift, cache)

    def __str__(self):
        if isinstance(self.b, Neg):
            return f"{self.a} - {_paren(self.b.a, 2)}"
        return f"{self.a} + {self.b}"


class Mul(_Binary):
    __slots__ = ()

    def _diff(self, i):
        return add(mul(self.a.diff(i), self.b), mul(self.a, self.b.diff(i)))

    def _eval(self, env, lift, cache):
        return self.a.evaluate(env, lift, cache) * self.b.evaluate(env, lift, cache)

    def __str__(self):
        return f"{_paren(self.a, 2)}*{_paren(self.b, 3)}"


class Div(_Binary):
    __slots__ = ()

    def _diff(self, i):
        num = add(mul(self.a.diff(i), self.b), neg(mul(self.a, self.b.diff(i))))
        return div(num, pow_(self.b, 2))

    def _eval(self, env, lift, cache):
        den = self.b.evaluate(env, lift, cache)
        if isinstance(den, (int, float)) and den == 0.0:
            raise DomainError("division by zero")
        try:
            return self.a.evaluate(env, lift, cache) / den
        except ArithmeticError as exc:
            raise DomainError(str(exc)) from exc

    def __str__(self):
        return f"{_paren(self.a, 2)}/{_paren(self.b, 3)}"


class Neg(Expr):
    __slots__ = ("a",)

    def __init__(self, a: Expr):
        super().__init__()
        self.a = a

    def _diff(self, i):
        return neg(self.a.diff(i))

    def _eval(self, env, lift, cache):
        return -self.a.evaluate(env, lift, cache)

    def _collect(self, out):
        self.a._collect(out)

    def _consts(self, out):
        self.a._consts(out)

    def children(self):
        return (self.a,)

    def __str__(self):
        return f"-{_paren(self.a, 3)}"


class Pow(Expr):
    __slots__ = ("a", "n")

    def __init__(self, a: Expr, n: int):
        super().__init__()
        self.a = a
        self.n = n

    def _diff(self, i):
        return mul(mul(Const(float(self.n)), pow_(self.a, self.n - 1)), self.a.diff(i))

    def _eval(self, env, lift, cache):
        base = self.a.evaluate(env, lift, cache)
        if isinstance(base, (int, float)):
            if base == 0.0 and self.n < 0:
                raise DomainError("division by zero in negative power")
            return float(base) ** self.n
        try:
            return base ** self.n
        except ArithmeticError as exc:
            raise DomainError(str(exc)) from exc

    def _collect(self, out):
        self.a._collect(out)

    def _consts(self, out):
        self.a._consts(out)

    def children(self):
        return (self.a,)

    def __str__(self):
        return f"{_paren(self.a, 4)}^{self.n}"


class Func(Expr):
    __slots__ = ("name", "a")

    def __init__(self, name: str, a: Expr):
        super().__init__()
        if name not in FUNCTIONS:
            raise ValueError(f"unknown function {name!r}")
        self.name = name
        self.a = a

    def _diff(self, i):
        return mul(func_derivative(self.name, self.a, 1), self.a.diff(i))

    def _eval(self, env, lift, cache):
        return apply_func(self.name, self.a.evaluate(env, lift, cache))

    def _collect(self, out):
        self.a._collect(out)

    def _consts(self, out):
        self.a._consts(out)

    def children(self):
        return (self.a,)

    def __str__(self):
        return f"{self.name}({self.a})"


def _prec(e: Expr) -> int:
    if isinstance(e, Add):
        return 1
    if isinstance(e, (Mul, Div, Neg)):
        return 2
    if isinstance(e, Const) and not e.name and not isinstance(e.value, AlgebraElement) and e.value < 0:
        return 2
    return 4


def _paren(e: Expr, level: int) -> str:
    """Parenthesize ``e`` unless its precedence is at least ``level``."""
    s = str(e)
    return f"({s})" if _prec(e) < level else s


ZERO = Const(0.0)
ONE = Const(1.0)


# ------------------------------------------------------------ smart constructors
def key(e: Expr) -> tuple:
    """Structural identity of an expression (cached)."""
    try:
        return e._hash_key
    except AttributeError:
        pass
    if isinstance(e, Const):
        v = e.value
        k = ("c", id(v.algebra), tuple(v.coeffs.tolist())) if isinstance(v, AlgebraElement) else ("c", v)
    elif isinstance(e, Var):
        k = ("v", e.index)
    elif isinstance(e, Pow):
        k = ("pow", key(e.a), e.n)
    elif isinstance(e, Func):
        k = (e.name, key(e.a))
    else:
        k = (type(e).__name__,) + tuple(key(c) for c in e.children())
    e._hash_key = k
    return k


def _real_const(e: Expr) -> bool:
    return isinstance(e, Const) and not isinstance(e.value, AlgebraElement)


def _coeff_core(e: Expr) -> tuple[float, Expr | None]:
    """Split ``e`` as ``c * core`` with a real constant ``c``; core None means constant."""
    if _real_const(e):
        return float(e.value), None
    if isinstance(e, Neg):
        c, core = _coeff_core(e.a)
        return -c, core
    if isinstance(e, Mul) and _real_const(e.a):
        c, core = _coeff_core(e.b)
        return float(e.a.value) * c, core
    return 1.0, e


def _terms(e: Expr, out: list, c: float = 1.0) -> None:
    """Flatten sums, pushing negations and real scalings down to the summands."""
    if isinstance(e, Add):
        _terms(e.a, out, c)
        _terms(e.b, out, c)
    elif isinstance(e, Neg) and isinstance(e.a, (Add, Neg, Mul)):
        _terms(e.a, out, -c)
    elif isinstance(e, Mul) and _real_const(e.a) and not e.a.name and isinstance(e.b, (Add, Neg)):
        _terms(e.b, out, c * float(e.a.value))
    else:
        out.append((c, e))


def _scaled(c: float, core: Expr | None) -> Expr:
    if core is None:
        return Const(c)
    if c == 1.0:
        return core
    if c == -1.0:
        return Neg(core)
    return Mul(Const(c), core)


def add(a: Expr, b: Expr) -> Expr:
    if a.is_zero():
        return b
    if b.is_zero():
        return a
    if isinstance(a, Const) and isinstance(b, Const) and not (a.name or b.name):
        return Const(a.value + b.value)
    items: list = []
    _terms(a, items)
    _terms(b, items)
    order: list = []
    coeffs: dict = {}
    cores: dict = {}
    other: list = []
    for scale, t in items:
        c, core = _coeff_core(t)
        c *= scale
        k = None if core is None else key(core)
        if core is not None and isinstance(core, Const):
            other.append(_scaled(c, core))
            continue
        if k not in coeffs:
            order.append(k)
            coeffs[k] = 0.0
            cores[k] = core
        coeffs[k] += c
    parts = [_scaled(coeffs[k], cores[k]) for k in order if coeffs[k] != 0.0] + other
    if not parts:
        return ZERO
    out = parts[0]
    for t in parts[1:]:
        out = Add(out, t)
    return out


def neg(a: Expr) -> Expr:
    if a.is_zero():
        return a
    if isinstance(a, Const) and not a.name:
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.a
    if isinstance(a, Mul) and _real_const(a.a) and not a.a.name:
        return _scaled(-float(a.a.value), a.b)
    return Neg(a)


def mul(a: Expr, b: Expr) -> Expr:
    if a.is_zero() or b.is_zero():
        return ZERO
    if isinstance(a, Const) and not a.name and _is_one_value(a.value):
        return b
    if isinstance(b, Const) and not b.name and _is_one_value(b.value):
        return a
    if isinstance(a, Const) and isinstance(b, Const) and not (a.name or b.name):
        return Const(a.value * b.value)
    ca, cora = _coeff_core(a)
    cb, corb = _coeff_core(b)
    c = ca * cb
    if cora is None and corb is None:
        return Const(c)
    if cora is None or corb is None:
        core = cora if corb is None else corb
    else:
        core = Mul(cora, corb)
    if (ca, cb) == (1.0, 1.0) and cora is a and corb is b:
        return Mul(a, b)
    return _scaled(c, core)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(b, Const) and not isinstance(b.value, AlgebraElement) and b.value == 0.0:
        raise DomainError("division by the constant zero")
    if a.is_zero():
        return ZERO
    if isinstance(b, Const) and not b.name and _is_one_value(b.value):
        return a
    return Div(a, b)


def pow_(a: Expr, n: int) -> Expr:
    if n == 0:
        return ONE
    if n == 1:
        return a
    if a.is_zero():
        if n < 0:
            raise DomainError("negative power of zero")
        return ZERO
    return Pow(a, n)


def func(name: str, a: Expr) -> Expr:
    if isinstance(a, Const) and not isinstance(a.value, AlgebraElement) and not a.name:
        return Const(_real_func(name, a.value))
    return Func(name, a)


def func_derivative(name: str, u: Expr, k: int) -> Expr:
    """The k-th derivative of the elementary function ``name`` evaluated at ``u``."""
    if k == 0:
        return func(name, u)
    if name == "exp":
        return func("exp", u)
    if name == "log":
        return mul(Const((-1.0) ** (k - 1) * math.factorial(k - 1)), pow_(u, -k))
    if name == "sin":
        return [func("sin", u), func("cos", u), neg(func("sin", u)), neg(func("cos", u))][k % 4]
    if name == "cos":
        return [func("cos", u), neg(func("sin", u)), neg(func("cos", u)), func("sin", u)][k % 4]
    if name == "sqrt":
        c = 1.0
        for j in range(k):
            c *= 0.5 - j
        return mul(Const(c), mul(func("sqrt", u), pow_(u, -k)))
    if name == "recip":
        return mul(Const((-1.0) ** k * math.factorial(k)), pow_(u, -(k + 1)))
    raise ValueError(f"unknown function {name!r}")


def split_parity(e: Expr) -> tuple[Expr, Expr]:
    """Split a parameter-valued expression into its even and odd parts."""
    if not e.has_odd_constants():
        return e, ZERO
    return _split(e)


def _split(e: Expr) -> tuple[Expr, Expr]:
    if isinstance(e, Const):
        v = e.value
        if isinstance(v, AlgebraElement):
            return Const(v.even_part()), Const(v.odd_part())
        return e, ZERO
    if isinstance(e, Var):
        return e, ZERO
    if not e.has_odd_constants():
        return e, ZERO
    if isinstance(e, Add):
        ae, ao = _split(e.a)
        be, bo = _split(e.b)
        return add(ae, be), add(ao, bo)
    if isinstance(e, Neg):
        ae, ao = _split(e.a)
        return neg(ae), neg(ao)
    if isinstance(e, Mul):
        ae, ao = _split(e.a)
        be, bo = _split(e.b)
        return add(mul(ae, be), mul(ao, bo)), add(mul(ae, bo), mul(ao, be))
    if isinstance(e, Div):
        ae, ao = _split(e.a)
        be, bo = _split(e.b)
        inv_e = div(ONE, be)
        inv_o = neg(div(bo, pow_(be, 2)))
        return add(mul(ae, inv_e), mul(ao, inv_o)), add(mul(ae, inv_o), mul(ao, inv_e))
    if isinstance(e, Pow):
        ae, ao = _split(e.a)
        return pow_(ae, e.n), mul(mul(Const(float(e.n)), pow_(ae, e.n - 1)), ao)
    if isinstance(e, Func):
        ue, uo = _split(e.a)
        return func(e.name, ue), mul(func_derivative(e.name, ue, 1), uo)
    raise TypeError(type(e).__name__)


# ---------------------------------------------------------------------- jets
def jet_eval(field: Expr, x0, order: int, m: int | None = None) -> list:
    """All partial derivatives of ``field`` at the real point ``x0`` up to ``order``.

    Returns ``[value, gradient, hessian, ...]`` where entry ``k`` is an array of
    shape ``(m,) * k``.  Derivatives are exact (symbolic), not finite differences.
    """
    x0 = [float(v) for v in np.atleast_1d(np.asarray(x0, dtype=float))]
    if m is None:
        m = len(x0)
    exprs = {(): field}
    cache: dict = {}
    out = [field.evaluate(x0, cache=cache)]
    for k in range(1, order + 1):
        shape = (m,) * k
        vals = np.empty(shape, dtype=object) if field.has_algebra_constants() else np.zeros(shape)
        for idx in np.ndindex(*shape):
            key = tuple(sorted(idx))
            e = exprs.get(key)
            if e is None:
                e = exprs[key[:-1]].diff(key[-1])
                exprs[key] = e
            vals[idx] = e.evaluate(x0, cache=cache)
        out.append(vals)
    return out


# ------------------------------------------------------------------- parsing
class ParseError(ValueError):
    """Syntax error with 1-based line and column."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} at line {line}, column {col}")
        self.line = line
        self.col = col


_TOKEN = re.compile(
    r"(?P<ws>[ \t\r\n]+)|(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()])"
)


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    toks = []
    pos = 0
    line, col = 1, 1
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        s = m.group()
        if kind != "ws":
            toks.append(Token(kind, s, line, col))
        nl = s.count("\n")
        if nl:
            line += nl
            col = len(s) - s.rfind("\n")
        else:
            col += len(s)
        pos = m.end()
    toks.append(Token("eof", "", line, col))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def take(self, text=None, kind=None) -> Token:
        t = self.tok
        if (text is not None and t.text != text) or (kind is not None and t.kind != kind):
            want = repr(text) if text is not None else kind
            got = repr(t.text) if t.kind != "eof" else "end of input"
            raise ParseError(f"expected {want}, got {got}", t.line, t.col)
        self.i += 1
        return t

    def parse(self):
        if self.tok.kind == "eof":
            raise ParseError("empty expression", self.tok.line, self.tok.col)
        node = self.expr()
        if self.tok.kind != "eof":
            raise ParseError(f"unexpected token {self.tok.text!r}", self.tok.line, self.tok.col)
        return node

    def expr(self):
        node = self.term()
        while self.tok.text in ("+", "-"):
            op = self.take().text
            node = ("add" if op == "+" else "sub", node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.tok.text in ("*", "/"):
            op = self.take().text
            node = ("mul" if op == "*" else "div", node, self.factor())
        return node

    def factor(self):
        t = self.tok
        if t.text == "-":
            self.take()
            return ("neg", self.factor())
        if t.kind == "num":
            self.take()
            node = ("num", float(t.text))
        elif t.kind == "ident":
            self.take()
            if self.tok.text == "(":
                if t.text not in FUNCTIONS:
                    raise ParseError(f"unknown function {t.text!r}", t.line, t.col)
                self.take("(")
                arg = self.expr()
                self.take(")")
                node = ("func", t.text, arg)
            else:
                node = ("ident", t.text, t.line, t.col)
        elif t.text == "(":
            self.take("(")
            node = self.expr()
            self.take(")")
        else:
            got = repr(t.text) if t.kind != "eof" else "end of input"
            raise ParseError(f"unexpected {got}", t.line, t.col)
        while self.tok.text == "^":
            self.take("^")
            sign = 1
            if self.tok.text == "-":
                self.take("-")
                sign = -1
            n = self.take(kind="num")
            if not re.fullmatch(r"\d+", n.text):
                raise ParseError("exponent must be an integer", n.line, n.col)
            node = ("pow", node, sign * int(n.text))
        return node


def parse(text: str):
    """Parse text into a neutral syntax tree of nested tuples."""
    return _Parser(text).parse()


def build(tree, leaf: Callable[[str, int, int], object]):
    """Evaluate a syntax tree with ``leaf(name, line, col)`` resolving identifiers."""
    kind = tree[0]
    if kind == "num":
        return tree[1]
    if kind == "ident":
        return leaf(tree[1], tree[2], tree[3])
    if kind == "neg":
        return -build(tree[1], leaf)
    if kind == "func":
        return apply_func(tree[1], build(tree[2], leaf))
    if kind == "pow":
        return build(tree[1], leaf) ** tree[2]
    a = build(tree[1], leaf)
    b = build(tree[2], leaf)
    if kind == "add":
        return a + b
    if kind == "sub":
        return a - b
    if kind == "mul":
        return a * b
    if kind == "div":
        return a / b
    raise ValueError(kind)


_VAR = re.compile(r"x(\d+)$")


def parse_scalar(text: str, m: int, constants: dict | None = None) -> Expr:
    """Parse a real or parameter-valued field in the even variables ``x1 .. xm``."""
    constants = constants or {}

    def leaf(name, line, col):
        mt = _VAR.match(name)
        if mt and 1 <= int(mt.group(1)) <= m:
            return Var(int(mt.group(1)) - 1)
        if name in constants:
            return Const(constants[name], name=name)
        if name == "pi":
            return Const(math.pi, name="pi")
        raise ParseError(f"unknown identifier {name!r}", line, col)

    out = build(parse(text), leaf)
    return Expr.wrap(out)


ScalarField = Expr


def map_constants(e: Expr, fn: Callable) -> Expr:
    """Rebuild ``e`` with every algebra-valued constant replaced by ``fn(value)``."""
    memo: dict = {}

    def go(x: Expr) -> Expr:
        hit = memo.get(id(x))
        if hit is not None:
            return hit
        if isinstance(x, Const):
            out = Const(fn(x.value), name=x.name) if isinstance(x.value, AlgebraElement) else x
        elif isinstance(x, Var):
            out = x
        elif isinstance(x, Add):
            out = add(go(x.a), go(x.b))
        elif isinstance(x, Mul):
            out = mul(go(x.a), go(x.b))
        elif isinstance(x, Div):
            out = div(go(x.a), go(x.b))
        elif isinstance(x, Neg):
            out = neg(go(x.a))
        elif isinstance(x, Pow):
            out = pow_(go(x.a), x.n)
        elif isinstance(x, Func):
            out = func(x.name, go(x.a))
        else:
            raise TypeError(type(x).__name__)
        memo[id(x)] = out
        return out

    return go(e)
