"""Chart-to-chart supermorphisms given by tuples of even and odd superfunctions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fields import Chart, ChartError, SuperFunction, SuperPoint, evaluate
from .expr import Expr


def substitute(e: Expr, args: Sequence[SuperFunction], chart: Chart) -> SuperFunction:
    """Compose the smooth field ``e`` with even superfunctions ``args``.

    Every elementary function is expanded by its Taylor series around the plain
    even part of its argument, which is the Taylor pullback formula written out
    node by node.
    """
    out = e.evaluate(list(args), lift=chart.const, cache={})
    return SuperFunction._lift(chart, out)


@dataclass(eq=False)
class SuperMorphism:
    """``Phi : source -> target`` given by ``f`` (even) and ``lam`` (odd) on the source."""

    source: Chart
    target: Chart
    f: list
    lam: list

    def __post_init__(self):
        self.f = list(self.f)
        self.lam = list(self.lam)
        if len(self.f) != self.target.m or len(self.lam) != self.target.n:
            raise ChartError("component count does not match the target chart")
        if self.source.algebra is not self.target.algebra:
            raise ChartError("source and target must share the parameter algebra")
        for k, c in enumerate(self.f):
            if not c.chart.compatible(self.source):
                raise ChartError(f"even component {k} is not on the source chart")
            if c.parity != 0:
                raise ChartError(f"even component {k} must be an even superfunction")
        for k, c in enumerate(self.lam):
            if not c.chart.compatible(self.source):
                raise ChartError(f"odd component {k} is not on the source chart")
            if c.parity not in (1,) and not c.is_zero():
                raise ChartError(f"odd component {k} must be an odd superfunction")

    @property
    def components(self) -> list:
        return self.f + self.lam

    @classmethod
    def identity(cls, chart: Chart) -> "SuperMorphism":
        return cls(chart, chart, [chart.x(i) for i in range(chart.m)], [chart.th(j) for j in range(chart.n)])

    @classmethod
    def parse(cls, source: Chart, target: Chart, even: Sequence[str], odd: Sequence[str], constants=None) -> "SuperMorphism":
        return cls(
            source,
            target,
            [source.parse(t, constants) for t in even],
            [source.parse(t, constants) for t in odd],
        )

    def __call__(self, point: SuperPoint) -> SuperPoint:
        return apply_point(self, point)


def pullback(phi: SuperMorphism, h: SuperFunction) -> SuperFunction:
    """``Phi^* h`` for a superfunction on the target chart."""
    if not h.chart.compatible(phi.target):
        raise ChartError("function is not on the target chart")
    src = phi.source
    out = src.zero()
    for (mk, _p), e in h.terms.items():
        coef = substitute(e, phi.f, src)
        j = 0
        bits = mk
        while bits:
            if bits & 1:
                coef = coef * phi.lam[j]
            bits >>= 1
            j += 1
        out = out + coef
    return out


def compose(phi: SuperMorphism, xi: SuperMorphism) -> SuperMorphism:
    """``Phi o Xi``: the tuple ``Xi^*(f, lam)``."""
    if not xi.target.compatible(phi.source):
        raise ChartError("cannot compose: target of the inner map is not the source of the outer")
    return SuperMorphism(
        xi.source,
        phi.target,
        [pullback(xi, c) for c in phi.f],
        [pullback(xi, c) for c in phi.lam],
    )


def apply_point(phi: SuperMorphism, point: SuperPoint) -> SuperPoint:
    """Image of an algebra-valued point."""
    if not point.chart.compatible(phi.source):
        raise ChartError("point is not on the source chart")
    even = np.array([evaluate(c, point).coeffs for c in phi.f]).reshape(phi.target.m, point.algebra.dim)
    odd = np.array([evaluate(c, point).coeffs for c in phi.lam]).reshape(phi.target.n, point.algebra.dim)
    return SuperPoint(phi.target, point.algebra, even, odd, point.embed)


def differential(phi: SuperMorphism) -> list[list[SuperFunction]]:
    """Matrix ``D[i][k] = d_i Phi^k`` over source coordinates ``i`` and target ``k``."""
    comps = phi.components
    return [[c.d(i) for c in comps] for i in range(phi.source.dim)]


def related(phi: SuperMorphism, X, Y) -> list[SuperFunction]:
    """Componentwise residual ``(dPhi) X - Phi^* Y``; zero iff X and Y are related."""
    if not X.chart.compatible(phi.source) or not Y.chart.compatible(phi.target):
        raise ChartError("vector fields do not match the morphism charts")
    return [X.apply(c) - pullback(phi, y) for c, y in zip(phi.components, Y.components)]


def residual_norm(funcs: Sequence[SuperFunction], points: Sequence[SuperPoint]) -> float:
    """Largest coefficient of the listed superfunctions over sample points."""
    worst = 0.0
    for pt in points:
        for f in funcs:
            worst = max(worst, evaluate(f, pt).norm())
    return worst
