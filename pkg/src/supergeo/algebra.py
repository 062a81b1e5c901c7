"""Small graded-commutative algebras built from Grassmann generators.

Basis elements are monomials in the odd generators, stored as bitmasks.  The
canonical order of a monomial is ascending generator index, so every product
reduces to a signed basis element and equality is bit-exact.
"""
from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_MAX_DIM = 64


class AlgebraError(ValueError):
    """Raised on invalid algebra construction or mismatched operands."""


class ZeroBody(ArithmeticError):
    """Raised when inverting an element whose body vanishes."""


def max_dim() -> int:
    """Dimension cap, overridable through ``SUPERGEO_MAX_ALG_DIM``."""
    raw = os.environ.get("SUPERGEO_MAX_ALG_DIM")
    if raw is None:
        return DEFAULT_MAX_DIM
    try:
        cap = int(raw)
    except ValueError as exc:
        raise AlgebraError(f"SUPERGEO_MAX_ALG_DIM must be an integer, got {raw!r}") from exc
    if cap < 1:
        raise AlgebraError("SUPERGEO_MAX_ALG_DIM must be positive")
    return cap


def _popcount(x: int) -> int:
    return bin(x).count("1")


def monomial_sign(a: int, b: int) -> int:
    """Sign of reordering the product of monomials ``a`` and ``b`` into canonical order.

    Returns 0 when the monomials share a generator.
    """
    if a & b:
        return 0
    swaps = 0
    bb = b
    while bb:
        low = bb & -bb
        # generators of a with larger index than this generator of b must pass it
        swaps += _popcount(a & ~((low << 1) - 1))
        bb ^= low
    return -1 if swaps & 1 else 1


class SmallAlgebra:
    """Grassmann algebra on a list of odd generators.

    Parameters
    ----------
    generators : sequence of str
        Names of the odd generators, in canonical order.
    check : bool
        Run the exhaustive commutativity and associativity check.
    """

    def __init__(self, generators: Sequence[str], check: bool = True):
        gens = tuple(generators)
        if len(set(gens)) != len(gens):
            raise AlgebraError(f"duplicate generator names in {gens}")
        dim = 1 << len(gens)
        if dim > max_dim():
            raise AlgebraError(
                f"algebra dimension {dim} exceeds cap {max_dim()} (set SUPERGEO_MAX_ALG_DIM)"
            )
        self.generators = gens
        self.dim = dim
        masks = sorted(range(dim), key=lambda x: (_popcount(x), x))
        self.masks = np.array(masks, dtype=np.int64)
        self.index_of = {mk: i for i, mk in enumerate(masks)}
        self.filt_level = np.array([_popcount(mk) for mk in masks], dtype=np.int64)
        self.parity = self.filt_level % 2
        idx = np.full((dim + 1, dim + 1), dim, dtype=np.int64)
        sign = np.zeros((dim + 1, dim + 1))
        for i, a in enumerate(masks):
            for j, b in enumerate(masks):
                s = monomial_sign(a, b)
                if s:
                    idx[i, j] = self.index_of[a | b]
                    sign[i, j] = s
        self._idx_full = idx
        self._sign_full = sign
        self.mul_index = idx[:dim, :dim]
        self.mul_sign = sign[:dim, :dim]
        self._flat_idx = self.mul_index.ravel()
        self._flat_sign = self.mul_sign.ravel()
        self.nilpotency_index = len(gens) + 1
        if check:
            self.check_laws()

    # ----------------------------------------------------------------- structure
    @property
    def basis_labels(self) -> list[str]:
        return [self.label(i) for i in range(self.dim)]

    def label(self, i: int) -> str:
        mk = int(self.masks[i])
        if mk == 0:
            return "1"
        return "".join(g for k, g in enumerate(self.generators) if mk >> k & 1)

    @cached_property
    def structure(self) -> np.ndarray:
        """Dense structure tensor ``S[a, b, c]`` with ``e_a e_b = S[a, b, c] e_c``."""
        s = np.zeros((self.dim, self.dim, self.dim))
        a, b = np.nonzero(self.mul_sign)
        s[a, b, self.mul_index[a, b]] = self.mul_sign[a, b]
        return s

    def level_mask(self, r: int) -> np.ndarray:
        return self.filt_level == r

    def check_laws(self) -> None:
        """Exhaustive graded commutativity, associativity and filtration checks."""
        d = self.dim
        par = self.parity
        i, j = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
        koszul = np.where((par[i] * par[j]) % 2 == 1, -1.0, 1.0)
        if not (
            np.array_equal(self.mul_index, self.mul_index.T)
            and np.array_equal(self.mul_sign, koszul * self.mul_sign.T)
        ):
            raise AlgebraError("multiplication table is not graded commutative")
        idx, sgn = self._idx_full, self._sign_full
        ij = idx[:d, :d]
        left_idx = idx[ij[:, :, None], np.arange(d)[None, None, :]]
        left_sgn = sgn[:d, :d][:, :, None] * sgn[ij[:, :, None], np.arange(d)[None, None, :]]
        jk = idx[:d, :d]
        right_idx = idx[np.arange(d)[:, None, None], jk[None, :, :]]
        right_sgn = sgn[:d, :d][None, :, :] * sgn[np.arange(d)[:, None, None], jk[None, :, :]]
        left_idx = np.where(left_sgn == 0, d, left_idx)
        right_idx = np.where(right_sgn == 0, d, right_idx)
        if not (np.array_equal(left_idx, right_idx) and np.array_equal(left_sgn, right_sgn)):
            raise AlgebraError("multiplication table is not associative")
        nz = self.mul_sign != 0
        lvl = self.filt_level
        if np.any(lvl[self.mul_index[nz]] < (lvl[i] + lvl[j])[nz]):
            raise AlgebraError("multiplication violates the filtration")
        if self.parity[0] != 0 or self.filt_level[0] != 0:
            raise AlgebraError("unit must be even of level 0")

    # ------------------------------------------------------------------- elements
    def element(self, coeffs) -> "AlgebraElement":
        arr = np.asarray(coeffs, dtype=float)
        if arr.shape != (self.dim,):
            raise AlgebraError(f"expected {self.dim} coefficients, got shape {arr.shape}")
        return AlgebraElement(self, arr.copy())

    def scalar(self, value: float) -> "AlgebraElement":
        c = np.zeros(self.dim)
        c[0] = value
        return AlgebraElement(self, c)

    def zero(self) -> "AlgebraElement":
        return AlgebraElement(self, np.zeros(self.dim))

    def one(self) -> "AlgebraElement":
        return self.scalar(1.0)

    def gen(self, name_or_index) -> "AlgebraElement":
        k = self.generators.index(name_or_index) if isinstance(name_or_index, str) else int(name_or_index)
        c = np.zeros(self.dim)
        c[self.index_of[1 << k]] = 1.0
        return AlgebraElement(self, c)

    def monomial(self, names: Iterable) -> "AlgebraElement":
        out = self.one()
        for nm in names:
            out = out * self.gen(nm)
        return out

    def basis_element(self, i: int) -> "AlgebraElement":
        c = np.zeros(self.dim)
        c[i] = 1.0
        return AlgebraElement(self, c)

    # -------------------------------------------------------------- raw kernels
    def mul_arrays(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Product of coefficient arrays with trailing axis ``dim`` (broadcasting)."""
        if x.ndim == 1 and y.ndim == 1:
            w = np.multiply.outer(x, y).ravel() * self._flat_sign
            return np.bincount(self._flat_idx, weights=w, minlength=self.dim)[: self.dim]
        return np.einsum("...a,...b,abc->...c", x, y, self.structure, optimize=True)

    def __repr__(self) -> str:
        return f"SmallAlgebra({list(self.generators)!r})"


_GRASSMANN_CACHE: dict[tuple, SmallAlgebra] = {}


def algebra_from_generators(gens: Sequence[str]) -> SmallAlgebra:
    key = tuple(gens)
    alg = _GRASSMANN_CACHE.get(key)
    if alg is None or alg.dim > max_dim():
        alg = SmallAlgebra(key)
        _GRASSMANN_CACHE[key] = alg
    return alg


def grassmann(q: int, prefix: str = "th") -> SmallAlgebra:
    """Grassmann algebra on ``q`` odd generators named ``prefix1 .. prefixq``."""
    if q < 0:
        raise AlgebraError("q must be nonnegative")
    return algebra_from_generators([f"{prefix}{k + 1}" for k in range(q)])


def reals() -> SmallAlgebra:
    return grassmann(0)


_FACTOR = re.compile(r"\s*grassmann\s*\(\s*(\d+)\s*\)\s*$", re.IGNORECASE)


def parse_algebra_spec(text: str) -> SmallAlgebra:
    """``"Grassmann(q) x Grassmann(r) ..."``; factor k names its generators ``<letter_k>1 ..``.

    The first factor uses ``a1, a2, ..``, the second ``b1, ..`` and so on.
    """
    parts = re.split(r"\s+x\s+|\s*⊠\s*", text.strip())
    gens: list[str] = []
    for k, part in enumerate(parts):
        mt = _FACTOR.match(part)
        if not mt or k >= 26:
            raise AlgebraError(f"cannot read algebra factor {part!r}; expected Grassmann(q)")
        letter = chr(ord("a") + k)
        gens += [f"{letter}{i + 1}" for i in range(int(mt.group(1)))]
    return algebra_from_generators(gens)


def tensor(a: SmallAlgebra, b: SmallAlgebra) -> SmallAlgebra:
    """Graded tensor product; generator lists are concatenated.

    Clashing names are renumbered ``th1 .. thN`` in order.
    """
    gens = list(a.generators) + list(b.generators)
    if len(set(gens)) != len(gens):
        gens = [f"th{k + 1}" for k in range(len(gens))]
    return algebra_from_generators(gens)


@dataclass(eq=False)
class AlgebraElement:
    """Coefficient vector over the basis of a :class:`SmallAlgebra`."""

    algebra: SmallAlgebra
    coeffs: np.ndarray

    # ------------------------------------------------------------ inspection
    @property
    def body(self) -> float:
        return float(self.coeffs[0])

    def nilpotent_part(self) -> "AlgebraElement":
        c = self.coeffs.copy()
        c[0] = 0.0
        return AlgebraElement(self.algebra, c)

    def even_part(self) -> "AlgebraElement":
        return AlgebraElement(self.algebra, np.where(self.algebra.parity == 0, self.coeffs, 0.0))

    def odd_part(self) -> "AlgebraElement":
        return AlgebraElement(self.algebra, np.where(self.algebra.parity == 1, self.coeffs, 0.0))

    def is_even(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.coeffs[self.algebra.parity == 1]) <= tol))

    def is_odd(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.coeffs[self.algebra.parity == 0]) <= tol))

    @property
    def parity(self) -> int | None:
        """0 or 1 for homogeneous elements (zero counts as even), else None."""
        if self.is_even():
            return 0
        if self.is_odd():
            return 1
        return None

    def level_part(self, r: int) -> "AlgebraElement":
        return AlgebraElement(self.algebra, np.where(self.algebra.filt_level == r, self.coeffs, 0.0))

    def norm(self) -> float:
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0

    def allclose(self, other, tol: float = 1e-12) -> bool:
        other = self._coerce(other)
        return bool(np.max(np.abs(self.coeffs - other.coeffs)) <= tol)

    def is_zero(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.coeffs) <= tol))

    # ------------------------------------------------------------ arithmetic
    def _coerce(self, other) -> "AlgebraElement":
        if isinstance(other, AlgebraElement):
            if other.algebra is not self.algebra:
                raise AlgebraError("operands live in different algebras")
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return self.algebra.scalar(float(other))
        return NotImplemented

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return AlgebraElement(self.algebra, self.coeffs + o.coeffs)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return AlgebraElement(self.algebra, self.coeffs - o.coeffs)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return AlgebraElement(self.algebra, o.coeffs - self.coeffs)

    def __neg__(self):
        return AlgebraElement(self.algebra, -self.coeffs)

    def __pos__(self):
        return self

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return AlgebraElement(self.algebra, self.coeffs * float(other))
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return AlgebraElement(self.algebra, self.algebra.mul_arrays(self.coeffs, o.coeffs))

    def __rmul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return AlgebraElement(self.algebra, self.coeffs * float(other))
        return NotImplemented

    def __truediv__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return AlgebraElement(self.algebra, self.coeffs / float(other))
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return self * invert(o)

    def __rtruediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return o * invert(self)

    def __pow__(self, k: int):
        if not isinstance(k, (int, np.integer)):
            return power(self, float(k))
        if k < 0:
            return invert(self) ** (-k)
        out = self.algebra.one()
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    # ------------------------------------------------------------ functions
    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sin(self):
        return sin(self)

    def cos(self):
        return cos(self)

    def sqrt(self):
        return sqrt(self)

    def __repr__(self) -> str:
        terms = []
        for i, c in enumerate(self.coeffs):
            if c != 0.0:
                lab = self.algebra.label(i)
                terms.append(f"{c:g}" if lab == "1" else f"{c:g}*{lab}")
        return " + ".join(terms) if terms else "0"


def mul(x: AlgebraElement, y: AlgebraElement) -> AlgebraElement:
    return x * y


def invert(x: AlgebraElement) -> AlgebraElement:
    """Inverse via ``body^-1 * sum_{k<d} (-n/body)^k`` with ``n`` the nilpotent part."""
    b = x.body
    if b == 0.0:
        raise ZeroBody("cannot invert an element with zero body")
    alg = x.algebra
    q = (-x.nilpotent_part().coeffs) / b
    term = np.zeros(alg.dim)
    term[0] = 1.0
    total = term.copy()
    for _ in range(1, alg.nilpotency_index):
        term = alg.mul_arrays(term, q)
        if not term.any():
            break
        total += term
    return AlgebraElement(alg, total / b)


def taylor_apply(x: AlgebraElement, derivs: Callable[[float, int], Sequence[float]]) -> AlgebraElement:
    """Evaluate a smooth function at ``x`` by its Taylor series around the body.

    ``derivs(body, k)`` returns the derivatives of orders ``0..k``.
    """
    alg = x.algebra
    order = alg.nilpotency_index - 1
    n = x.nilpotent_part().coeffs
    if not n.any():
        order = 0
    ds = derivs(x.body, order)
    total = np.zeros(alg.dim)
    total[0] = ds[0]
    power_n = np.zeros(alg.dim)
    power_n[0] = 1.0
    fact = 1.0
    for k in range(1, order + 1):
        power_n = alg.mul_arrays(power_n, n)
        if not power_n.any():
            break
        fact *= k
        total += ds[k] / fact * power_n
    return AlgebraElement(alg, total)


def _exp_derivs(b, k):
    v = math.exp(b)
    return [v] * (k + 1)


def _log_derivs(b, k):
    if b <= 0.0:
        raise ValueError(f"log of element with nonpositive body {b}")
    out = [math.log(b)]
    for j in range(1, k + 1):
        out.append((-1) ** (j - 1) * math.factorial(j - 1) / b**j)
    return out


def _sin_derivs(b, k):
    cyc = [math.sin(b), math.cos(b), -math.sin(b), -math.cos(b)]
    return [cyc[j % 4] for j in range(k + 1)]


def _cos_derivs(b, k):
    cyc = [math.cos(b), -math.sin(b), -math.cos(b), math.sin(b)]
    return [cyc[j % 4] for j in range(k + 1)]


def _power_derivs(p: float):
    def derivs(b, k):
        if b <= 0.0 and (k > 0 or p != int(p)):
            raise ValueError(f"non-integer power of element with nonpositive body {b}")
        out = []
        coef = 1.0
        for j in range(k + 1):
            out.append(coef * b ** (p - j))
            coef *= p - j
        return out

    return derivs


def exp(x: AlgebraElement) -> AlgebraElement:
    return taylor_apply(x, _exp_derivs)


def log(x: AlgebraElement) -> AlgebraElement:
    return taylor_apply(x, _log_derivs)


def sin(x: AlgebraElement) -> AlgebraElement:
    return taylor_apply(x, _sin_derivs)


def cos(x: AlgebraElement) -> AlgebraElement:
    return taylor_apply(x, _cos_derivs)


def sqrt(x: AlgebraElement) -> AlgebraElement:
    if x.body == 0.0 and x.is_zero():
        return x.algebra.zero()
    return taylor_apply(x, _power_derivs(0.5))


def power(x: AlgebraElement, p: float) -> AlgebraElement:
    return taylor_apply(x, _power_derivs(p))


SMOOTH_DERIVS = {
    "exp": _exp_derivs,
    "log": _log_derivs,
    "sin": _sin_derivs,
    "cos": _cos_derivs,
    "sqrt": _power_derivs(0.5),
}


# ---------------------------------------------------------------------------
# homomorphisms
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class AlgebraHom:
    """Even unital algebra homomorphism given by the images of all basis elements.

    ``matrix[:, i]`` holds the target coefficients of the image of source basis
    element ``i``.
    """

    source: SmallAlgebra
    target: SmallAlgebra
    matrix: np.ndarray
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.shape != (self.target.dim, self.source.dim):
            raise AlgebraError("hom matrix has the wrong shape")
        if self.check:
            self.verify()

    def verify(self, tol: float = 1e-12) -> None:
        m = self.matrix
        unit = np.zeros(self.target.dim)
        unit[0] = 1.0
        if np.max(np.abs(m[:, 0] - unit)) > tol:
            raise AlgebraError("homomorphism is not unital")
        odd_src = self.source.parity == 1
        odd_tgt = self.target.parity == 1
        if np.any(np.abs(m[np.ix_(odd_tgt, ~odd_src)]) > tol) or np.any(
            np.abs(m[np.ix_(~odd_tgt, odd_src)]) > tol
        ):
            raise AlgebraError("homomorphism is not even")
        src = self.source
        imgs = m.T  # (dim_s, dim_t)
        prod_img = self.target.mul_arrays(imgs[:, None, :], imgs[None, :, :])
        sidx = src.mul_index
        ssgn = src.mul_sign
        padded = np.vstack([imgs, np.zeros((1, imgs.shape[1]))])
        img_prod = ssgn[:, :, None] * padded[sidx]
        if np.max(np.abs(prod_img - img_prod)) > tol:
            raise AlgebraError("homomorphism is not multiplicative")

    def __call__(self, x: AlgebraElement) -> AlgebraElement:
        return apply_hom(self, x)

    def apply_array(self, arr: np.ndarray) -> np.ndarray:
        return arr @ self.matrix.T

    def compose(self, first: "AlgebraHom") -> "AlgebraHom":
        """``self`` after ``first``."""
        if first.target is not self.source:
            raise AlgebraError("cannot compose: algebra mismatch")
        return AlgebraHom(first.source, self.target, self.matrix @ first.matrix)


def apply_hom(h: AlgebraHom, x: AlgebraElement) -> AlgebraElement:
    if x.algebra is not h.source:
        raise AlgebraError("element is not in the source algebra of the homomorphism")
    return AlgebraElement(h.target, h.matrix @ x.coeffs)


def identity_hom(a: SmallAlgebra) -> AlgebraHom:
    return AlgebraHom(a, a, np.eye(a.dim), check=False)


def body_hom(a: SmallAlgebra, into_reals: bool = False) -> AlgebraHom:
    """The body projection, either onto the reals or as the endomorphism ``x -> x# * 1``."""
    if into_reals:
        r = reals()
        m = np.zeros((1, a.dim))
        m[0, 0] = 1.0
        return AlgebraHom(a, r, m)
    m = np.zeros((a.dim, a.dim))
    m[0, 0] = 1.0
    return AlgebraHom(a, a, m)


def rescaling_hom(a: SmallAlgebra, c: float) -> AlgebraHom:
    """Multiply the level-r part by ``c**r``; ``c = 0`` gives the body endomorphism."""
    scale = np.array([c**int(r) if r > 0 else 1.0 for r in a.filt_level])
    return AlgebraHom(a, a, np.diag(scale))


def generator_hom(source: SmallAlgebra, target: SmallAlgebra, images: Sequence[AlgebraElement]) -> AlgebraHom:
    """Homomorphism determined by the (odd) images of the source generators."""
    if len(images) != len(source.generators):
        raise AlgebraError("one image per generator is required")
    for im in images:
        if im.algebra is not target or not im.is_odd():
            raise AlgebraError("generator images must be odd elements of the target")
    m = np.zeros((target.dim, source.dim))
    for i, mk in enumerate(source.masks):
        img = target.one()
        for k in range(len(source.generators)):
            if int(mk) >> k & 1:
                img = img * images[k]
        m[:, i] = img.coeffs
    return AlgebraHom(source, target, m)


def inclusion(source: SmallAlgebra, target: SmallAlgebra, offset: int = 0) -> AlgebraHom:
    """Embed ``source`` by mapping its generator ``k`` to target generator ``k + offset``."""
    if offset + len(source.generators) > len(target.generators):
        raise AlgebraError("target has too few generators for this inclusion")
    m = np.zeros((target.dim, source.dim))
    for i, mk in enumerate(source.masks):
        m[target.index_of[int(mk) << offset], i] = 1.0
    return AlgebraHom(source, target, m, check=False)


def extend(a: SmallAlgebra, extra: Sequence[str], front: bool = False) -> tuple[SmallAlgebra, AlgebraHom, list[AlgebraElement]]:
    """Adjoin fresh odd generators to ``a``.

    Returns the enlarged algebra, the inclusion of ``a`` and the new generators.
    With ``front=True`` the new generators precede the old ones, which makes the
    left coefficient of a new generator a plain slice of the coefficient array.
    """
    names = list(extra)
    clash = set(names) & set(a.generators)
    if clash:
        names = [f"_{nm}" for nm in names]
        while set(names) & set(a.generators):
            names = [f"_{nm}" for nm in names]
    if front:
        big = algebra_from_generators(names + list(a.generators))
        inc = inclusion(a, big, offset=len(names))
        new = [big.gen(k) for k in range(len(names))]
    else:
        big = algebra_from_generators(list(a.generators) + names)
        inc = inclusion(a, big, offset=0)
        new = [big.gen(len(a.generators) + k) for k in range(len(names))]
    return big, inc, new


def left_coefficient(x: np.ndarray, big: SmallAlgebra, small: SmallAlgebra, bits: int) -> np.ndarray:
    """Coefficient ``B`` in ``x = A + g B`` where ``g`` is the monomial of the leading ``bits``.

    ``big`` must have been built by :func:`extend` with ``front=True`` from ``small``;
    ``B`` and ``A`` do not involve the new generators.  Works on arrays with a
    trailing algebra axis.
    """
    shift = len(big.generators) - len(small.generators)
    src = [big.index_of[(int(mk) << shift) | bits] for mk in small.masks]
    return x[..., src]


def restrict(x: np.ndarray, big: SmallAlgebra, small: SmallAlgebra) -> np.ndarray:
    """Part of ``x`` free of the leading generators (inverse of the front inclusion)."""
    return left_coefficient(x, big, small, 0)


def even_nilpotent(a: SmallAlgebra, i, j) -> AlgebraElement:
    """Even nilpotent ``g_i g_j`` used to model parameters with square zero."""
    return a.gen(i) * a.gen(j)
