"""Chart-global super Lie groups, right-invariant fields, the exponential map and actions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .algebra import AlgebraElement, SmallAlgebra, extend, max_dim
from .fields import Chart, ChartError, SuperFunction, SuperPoint
from .flows import (
    StepperConfig,
    SuperVectorField,
    bracket,
    eval_flow_super_time,
    flow_point,
)
from .morphisms import SuperMorphism, apply_point, pullback, residual_norm


class GroupError(ValueError):
    pass


def pair_point(chart: Chart, p: SuperPoint, q: SuperPoint) -> SuperPoint:
    """The point ``(p, q)`` of a product chart; ``p`` is lifted into ``q``'s algebra if needed."""
    if p.algebra is not q.algebra:
        if q.embed.source is p.algebra:
            p = p.map_algebra(q.embed)
        elif p.embed.source is q.algebra:
            q = q.map_algebra(p.embed)
        else:
            raise ChartError("points live over unrelated algebras")
    even = np.vstack([p.even, q.even])
    odd = np.vstack([p.odd, q.odd])
    return SuperPoint(chart, q.algebra, even, odd, q.embed, check=False)


def projection(prod: Chart, factor: Chart, first: bool = True) -> SuperMorphism:
    """Projection of a product chart onto its first or second factor."""
    other_m = prod.m - factor.m
    other_n = prod.n - factor.n
    off_m = 0 if first else other_m
    off_n = 0 if first else other_n
    return SuperMorphism(
        prod, factor, [prod.x(off_m + i) for i in range(factor.m)], [prod.th(off_n + j) for j in range(factor.n)]
    )


def lift_to_factor(X: SuperVectorField, prod: Chart, first: bool = True) -> SuperVectorField:
    """``X`` acting on one factor of a product chart, zero on the other."""
    pr = projection(prod, X.chart, first)
    A = [prod.zero() for _ in range(prod.m)]
    D = [prod.zero() for _ in range(prod.n)]
    off_m = 0 if first else prod.m - X.chart.m
    off_n = 0 if first else prod.n - X.chart.n
    for i, a in enumerate(X.A):
        A[off_m + i] = pullback(pr, a)
    for j, d in enumerate(X.D):
        D[off_n + j] = pullback(pr, d)
    return SuperVectorField(prod, A, D)


@dataclass(eq=False)
class ChartGroup:
    """Group structure on a single chart: multiplication, inversion and unit body."""

    chart: Chart
    mul: SuperMorphism
    inv: SuperMorphism
    unit_body: np.ndarray

    def __post_init__(self):
        self.unit_body = np.asarray(self.unit_body, dtype=float).reshape(self.chart.m)
        self.doubled = self.mul.source
        if not (self.doubled.m == 2 * self.chart.m and self.doubled.n == 2 * self.chart.n):
            raise GroupError("multiplication must be defined on the doubled chart")
        if not self.mul.target.compatible(self.chart) or not self.inv.target.compatible(self.chart):
            raise GroupError("multiplication and inversion must land in the group chart")

    @classmethod
    def from_strings(cls, chart: Chart, mul_even: Sequence[str], mul_odd: Sequence[str], inv_even: Sequence[str],
                     inv_odd: Sequence[str], unit, constants=None) -> "ChartGroup":
        """Multiplication strings use ``x1..x2m`` and ``th1..th2n`` for the two factors."""
        doubled = chart.product(chart)
        mul = SuperMorphism.parse(doubled, chart, mul_even, mul_odd, constants)
        inv = SuperMorphism.parse(chart, chart, inv_even, inv_odd, constants)
        return cls(chart, mul, inv, unit)

    @property
    def algebra(self) -> SmallAlgebra:
        return self.chart.algebra

    def unit(self, like: SuperPoint | None = None) -> SuperPoint:
        """The unit as a point over ``like``'s algebra (or the parameter algebra)."""
        Q = like.algebra if like is not None else self.algebra
        even = np.zeros((self.chart.m, Q.dim))
        even[:, 0] = self.unit_body
        embed = like.embed if like is not None else None
        return SuperPoint(self.chart, Q, even, np.zeros((self.chart.n, Q.dim)), embed, check=False)

    def multiply(self, p: SuperPoint, q: SuperPoint) -> SuperPoint:
        return apply_point(self.mul, pair_point(self.doubled, p, q))

    def inverse(self, p: SuperPoint) -> SuperPoint:
        return apply_point(self.inv, p)

    def commutator(self, g: SuperPoint, h: SuperPoint) -> SuperPoint:
        """``g h g^-1 h^-1``."""
        return self.multiply(self.multiply(self.multiply(g, h), self.inverse(g)), self.inverse(h))


def generic_points(chart: Chart, count: int, seed: int = 0) -> list[SuperPoint]:
    """``count`` points over one algebra with independent fresh odd coordinates.

    Even coordinates get random bodies inside the domain plus random nilpotent
    parts built from the parameter algebra and, if the dimension cap allows, one
    extra even product of fresh generators.
    """
    rng = np.random.default_rng(seed)
    P = chart.algebra
    names = [f"g{k}_{j}" for k in range(count) for j in range(chart.n)]
    spread = chart.m > 0 and P.dim * 2 ** (len(names) + 2) <= max_dim()
    if spread:
        names += ["e1", "e2"]
    Q, inc, gens = extend(P, names)
    e12 = gens[-2] * gens[-1] if spread else Q.zero()
    nil = [k for k in range(1, P.dim) if P.parity[k] == 0]
    pts = []
    for k in range(count):
        even = np.zeros((chart.m, Q.dim))
        for i in range(chart.m):
            if chart.domain is not None:
                lo, hi = chart.domain[i]
                lo, hi = max(lo, -2.0), min(hi, 2.0)
                even[i, 0] = rng.uniform(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo))
            else:
                even[i, 0] = rng.uniform(-1.0, 1.0)
            even[i] += rng.uniform(-1, 1) * e12.coeffs
            for b in nil:
                basis = np.zeros(P.dim)
                basis[b] = rng.uniform(-1, 1)
                even[i] += inc.apply_array(basis)
        odd = np.array([gens[k * chart.n + j].coeffs for j in range(chart.n)]).reshape(chart.n, Q.dim)
        pts.append(SuperPoint(chart, Q, even, odd, inc, check=False))
    return pts


def group_axiom_residuals(G: ChartGroup, seed: int = 0) -> dict:
    """Associativity, unit and inverse laws evaluated at generic points."""
    g, h, k = generic_points(G.chart, 3, seed)
    e = G.unit(g)
    return {
        "associativity": G.multiply(G.multiply(g, h), k).distance(G.multiply(g, G.multiply(h, k))),
        "left_unit": G.multiply(e, g).distance(g),
        "right_unit": G.multiply(g, e).distance(g),
        "left_inverse": G.multiply(G.inverse(g), g).distance(e),
        "right_inverse": G.multiply(g, G.inverse(g)).distance(e),
    }


# ------------------------------------------------------------------ examples
def additive_group(m: int, n: int = 0, algebra: SmallAlgebra | None = None) -> ChartGroup:
    """``(R^{m|n}, +)``."""
    chart = Chart(m, n, algebra) if algebra is not None else Chart(m, n)
    d = chart.product(chart)
    mul = SuperMorphism(d, chart, [d.x(i) + d.x(m + i) for i in range(m)], [d.th(j) + d.th(n + j) for j in range(n)])
    inv = SuperMorphism(chart, chart, [-chart.x(i) for i in range(m)], [-chart.th(j) for j in range(n)])
    return ChartGroup(chart, mul, inv, np.zeros(m))


def deformed_r01(alpha: AlgebraElement) -> ChartGroup:
    """``R^{0|1}`` with ``m(xi, eta) = xi + eta + xi eta alpha`` for an odd parameter ``alpha``."""
    if not alpha.is_odd():
        raise GroupError("the deformation parameter must be odd")
    chart = Chart(0, 1, alpha.algebra)
    d = chart.product(chart)
    xi, eta = d.th(0), d.th(1)
    mul = SuperMorphism(d, chart, [], [xi + eta + xi * eta * d.const(alpha)])
    inv = SuperMorphism(chart, chart, [], [-chart.th(0)])
    return ChartGroup(chart, mul, inv, np.zeros(0))


def affine_group(algebra: SmallAlgebra | None = None) -> ChartGroup:
    """``(a, b)(c, d) = (ac, ad + b)`` on ``a > 0``."""
    chart = Chart(2, 0, algebra, [(0.0, np.inf), (-np.inf, np.inf)]) if algebra is not None else Chart(
        2, 0, domain=[(0.0, np.inf), (-np.inf, np.inf)])
    d = chart.product(chart)
    a, b, c, dd = (d.x(i) for i in range(4))
    mul = SuperMorphism(d, chart, [a * c, a * dd + b], [])
    inv = SuperMorphism(chart, chart, [1.0 / chart.x(0), -chart.x(1) / chart.x(0)], [])
    return ChartGroup(chart, mul, inv, np.array([1.0, 0.0]))


# ------------------------------------------------------------- invariant fields
def right_invariant_residual(G: ChartGroup, X: SuperVectorField) -> list[SuperFunction]:
    """Components of ``X_1(m^k) - m^*(X^k)``, with ``X_1`` acting on the first factor."""
    if not X.chart.compatible(G.chart):
        raise ChartError("field is not on the group chart")
    X1 = lift_to_factor(X, G.doubled, first=True)
    return [X1.apply(mk) - pullback(G.mul, xk) for mk, xk in zip(G.mul.components, X.components)]


def is_right_invariant(G: ChartGroup, X: SuperVectorField, tol: float = 1e-10, seed: int = 0) -> bool:
    pts = generic_points(G.doubled, 2, seed)
    return residual_norm(right_invariant_residual(G, X), pts) <= tol


def group_exp(G: ChartGroup, X: SuperVectorField, t, cfg: StepperConfig | None = None, like: SuperPoint | None = None) -> SuperPoint:
    """``exp(tX)``: the flow of ``X`` through the unit, for real or even algebra-valued ``t``."""
    e = G.unit(like)
    if isinstance(t, AlgebraElement):
        return eval_flow_super_time(X, e, t, cfg)
    return flow_point(X, e, float(t), cfg) if t != 0 else e


def exp_commutator_residuals(G: ChartGroup, X: SuperVectorField, Y: SuperVectorField,
                             a: AlgebraElement, b: AlgebraElement) -> dict:
    """``[exp(aX), exp(bY)]`` against ``exp(ab[Y, X])`` for both commutator orders."""
    ga, hb = group_exp(G, X, a), group_exp(G, Y, b)
    ref = group_exp(G, bracket(Y, X), a * b)
    return {
        "commutator": G.commutator(ga, hb).distance(ref),
        "commutator_swapped": G.commutator(hb, ga).distance(ref),
    }


# ---------------------------------------------------------------------- actions
def unit_section(G: ChartGroup, prod: Chart, M: Chart) -> SuperMorphism:
    """``M -> G x M``, ``y -> (1, y)``."""
    f = [M.const(float(u)) for u in G.unit_body]
    f += [M.x(i) for i in range(M.m)]
    lam = [M.zero() for _ in range(G.chart.n)] + [M.th(j) for j in range(M.n)]
    return SuperMorphism(M, prod, f, lam)


def infinitesimal_action(G: ChartGroup, action: SuperMorphism, X: SuperVectorField) -> SuperVectorField:
    """``phi(X) = (d_1 Phi)(1, Pr) X`` as a field on the acted-on chart."""
    prod = action.source
    M = action.target
    X1 = lift_to_factor(X, prod, first=True)
    iota = unit_section(G, prod, M)
    comps = [pullback(iota, X1.apply(c)) for c in action.components]
    return SuperVectorField(M, comps[: M.m], comps[M.m :])


def action_law_residuals(G: ChartGroup, action: SuperMorphism, seed: int = 0) -> dict:
    """Unit and compatibility laws of an action at generic points."""
    M = action.target
    prod = action.source
    pts = generic_points(G.chart.product(M), 3, seed)
    # split product points into group and manifold parts
    def split(p):
        g = SuperPoint(G.chart, p.algebra, p.even[: G.chart.m], p.odd[: G.chart.n], p.embed, check=False)
        y = SuperPoint(M, p.algebra, p.even[G.chart.m :], p.odd[G.chart.n :], p.embed, check=False)
        return g, y

    g, y = split(pts[0])
    h, _ = split(pts[1])
    act = lambda gg, yy: apply_point(action, pair_point(prod, gg, yy))  # noqa: E731
    return {
        "unit": act(G.unit(y), y).distance(y),
        "compatibility": act(g, act(h, y)).distance(act(G.multiply(g, h), y)),
    }


def infinitesimal_action_residual(G: ChartGroup, action: SuperMorphism, X: SuperVectorField,
                                  points: Sequence[SuperPoint], times: Sequence[float],
                                  cfg: StepperConfig | None = None) -> float:
    """Largest gap between ``Phi(exp(tX), y)`` and the flow of ``phi(X)`` through ``y``."""
    cfg = cfg or StepperConfig()
    phiX = infinitesimal_action(G, action, X)
    worst = 0.0
    for y in points:
        for t in times:
            lhs = apply_point(action, pair_point(action.source, group_exp(G, X, t, cfg, like=y), y))
            rhs = flow_point(phiX, y, t, cfg) if t != 0 else y
            worst = max(worst, lhs.distance(rhs))
    return worst


def bracket_homomorphism_residual(G: ChartGroup, action: SuperMorphism, X: SuperVectorField, Y: SuperVectorField,
                                  points: Sequence[SuperPoint]) -> float:
    """``[phi X, phi Y] - phi [X, Y]`` at sample points."""
    lhs = bracket(infinitesimal_action(G, action, X), infinitesimal_action(G, action, Y))
    rhs = infinitesimal_action(G, action, bracket(X, Y))
    return residual_norm((lhs - rhs).components, points)
