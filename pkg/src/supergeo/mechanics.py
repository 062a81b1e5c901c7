"""Geodesic flow on the tangent chart and Newton, Lagrange and Hamilton mechanics.

Tangent and cotangent charts share one layout: even coordinates ``(x_1..x_m,
v_1..v_m)`` and odd coordinates ``(th_1..th_n, w_1..w_n)``.  Fiber slot ``k`` (in
the combined base order) carries the velocity ``xi^k`` or momentum ``a_k`` of
parity ``|k|``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .algebra import AlgebraElement, extend, left_coefficient, restrict
from .fields import Chart, SuperFunction, SuperPoint, evaluate
from .flows import StepperConfig, SuperVectorField, Trajectory, flow_point, integrate_flow
from .geometry import Connection, SuperMetric, supermatrix_invert
from .morphisms import SuperMorphism, pullback, related, residual_norm


def _sign(e: int) -> float:
    return -1.0 if e % 2 else 1.0


def as_rows(values, Q, rows: int) -> np.ndarray:
    """Coefficient rows ``(rows, dim)`` from algebra elements, reals or an array."""
    if isinstance(values, np.ndarray) and values.ndim == 2:
        return values.astype(float).reshape(rows, Q.dim)
    out = []
    for x in values:
        if isinstance(x, AlgebraElement):
            out.append(x.coeffs)
        elif np.ndim(x) == 0:
            out.append(Q.scalar(float(x)).coeffs)
        else:
            out.append(np.asarray(x, dtype=float))
    return np.array(out, dtype=float).reshape(rows, Q.dim)


class Bundle:
    """Index bookkeeping for the tangent (or cotangent) chart of a base chart."""

    def __init__(self, base: Chart):
        self.base = base
        dom = None
        if base.domain is not None:
            dom = list(base.domain) + [(-np.inf, np.inf)] * base.m
        self.chart = Chart(2 * base.m, 2 * base.n, base.algebra, dom)

    def base_index(self, k: int) -> int:
        m = self.base.m
        return k if k < m else 2 * m + (k - m)

    def fiber_index(self, k: int) -> int:
        m, n = self.base.m, self.base.n
        return m + k if k < m else 2 * m + n + (k - m)

    @cached_property
    def projection(self) -> SuperMorphism:
        c = self.chart
        return SuperMorphism(c, self.base, [c.x(i) for i in range(self.base.m)], [c.th(j) for j in range(self.base.n)])

    def lift(self, f: SuperFunction) -> SuperFunction:
        """``f o Pi``."""
        return pullback(self.projection, f)

    def fiber(self, k: int) -> SuperFunction:
        return self.chart.coordinate(self.fiber_index(k))

    def point(self, base: SuperPoint, fiber) -> SuperPoint:
        """Tangent point from a base point and fiber coefficients ``(N, dim)``."""
        m = self.base.m
        fib = as_rows(fiber, base.algebra, self.base.dim)
        even = np.vstack([base.even, fib[:m]])
        odd = np.vstack([base.odd, fib[m:]])
        return SuperPoint(self.chart, base.algebra, even, odd, base.embed, check=False)

    def split(self, pt: SuperPoint) -> tuple[SuperPoint, np.ndarray]:
        m, n = self.base.m, self.base.n
        base = SuperPoint(self.base, pt.algebra, pt.even[:m], pt.odd[:n], pt.embed, check=False)
        fiber = np.vstack([pt.even[m:], pt.odd[n:]])
        return base, fiber

    def split_states(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(T, 2N, dim)`` tangent states to base and fiber arrays ``(T, N, dim)`` in combined order."""
        m, n = self.base.m, self.base.n
        base = np.concatenate([states[:, :m], states[:, 2 * m : 2 * m + n]], axis=1)
        fib = np.concatenate([states[:, m : 2 * m], states[:, 2 * m + n :]], axis=1)
        return base, fib


# ------------------------------------------------------------------ geodesics
def geodesic_field(conn: Connection, bundle: Bundle | None = None) -> SuperVectorField:
    """``U = xi^i d_{x^i} - xi^j xi^i (Gamma_ij^k o Pi) d_{xi^k}``."""
    if not conn.affine:
        raise ValueError("geodesics need an affine connection")
    B = bundle or Bundle(conn.chart)
    c = B.chart
    N = conn.chart.dim
    comps = [c.zero() for _ in range(c.dim)]
    xi = [B.fiber(k) for k in range(N)]
    lifted = [[[B.lift(conn.Gamma[i][j][k]) if not conn.Gamma[i][j][k].is_zero() else None for k in range(N)]
               for j in range(N)] for i in range(N)]
    for k in range(N):
        comps[B.base_index(k)] = xi[k]
        acc = c.zero()
        for i in range(N):
            for j in range(N):
                G = lifted[i][j][k]
                if G is not None:
                    acc = acc + xi[j] * xi[i] * G
        comps[B.fiber_index(k)] = -acc
    return SuperVectorField(c, comps[: c.m], comps[c.m :])


def integrate_geodesic(p: SuperPoint, v, conn: Connection, t_span, cfg: StepperConfig | None = None,
                       t_eval=None, field: SuperVectorField | None = None) -> Trajectory:
    """Integral curve of the geodesic field through ``(p, v)``."""
    B = Bundle(conn.chart)
    U = field or geodesic_field(conn, B)
    return integrate_flow(U, B.point(p, v), t_span, cfg, t_eval)


def exp_map(p: SuperPoint, v, conn: Connection, cfg: StepperConfig | None = None,
            field: SuperVectorField | None = None) -> SuperPoint:
    """Base point of the geodesic with ``gamma(0) = p``, ``gamma'(0) = v`` at ``t = 1``."""
    B = Bundle(conn.chart)
    U = field or geodesic_field(conn, B)
    return B.split(flow_point(U, B.point(p, v), 1.0, cfg))[0]


def scaling_residual(p: SuperPoint, v, conn: Connection, s: float, t: float = 1.0,
                     cfg: StepperConfig | None = None) -> float:
    """``Phi(t, s v) = s . Phi(s t, v)``: base and scaled fiber compared."""
    B = Bundle(conn.chart)
    U = geodesic_field(conn, B)
    v = as_rows(v, p.algebra, B.base.dim)
    lhs = B.split(flow_point(U, B.point(p, s * v), t, cfg))
    rhs = B.split(flow_point(U, B.point(p, v), s * t, cfg))
    return max(lhs[0].distance(rhs[0]), float(np.max(np.abs(lhs[1] - s * rhs[1]), initial=0.0)))


def geodesic_residual(traj: Trajectory, conn: Connection) -> float:
    """Largest ``|gamma'' + gamma'^j gamma'^i Gamma_ij^k|`` and ``|base' - fiber|`` along samples.

    Derivatives come from cubic splines through the sampled states.
    """
    B = Bundle(conn.chart)
    Q = traj.algebra
    base, fib = B.split_states(traj.states)
    sb = CubicSpline(traj.times, base, axis=0)(traj.times, 1)
    sf = CubicSpline(traj.times, fib, axis=0)(traj.times, 1)
    worst = float(np.max(np.abs(sb - fib)))
    for n, pt in enumerate(traj.points):
        bp, _ = B.split(pt)
        G = conn.christoffel_at(bp)
        acc = np.einsum("ja,ib,abc->jic", fib[n], fib[n], Q.structure)
        r = sf[n] + np.einsum("jia,ijkb,abc->kc", acc, G, Q.structure)
        # interior samples only: spline end effects dominate the first and last points
        if 2 <= n < len(traj.times) - 2:
            worst = max(worst, float(np.max(np.abs(r))))
    return worst


def gauss_lemma_residual(p: SuperPoint, v, w, g: SuperMetric, conn: Connection | None = None,
                         cfg: StepperConfig | None = None) -> float:
    """``|g(exp_p v)(D_w, D_v) - g(p)(w, v)|`` with ``D`` from an adjoined ``eps = e1 e2``."""
    conn = conn or Connection.levi_civita(g)
    B = Bundle(conn.chart)
    U = geodesic_field(conn, B)
    Q = p.algebra
    big, inc, (e1, e2) = extend(Q, ["_g1", "_g2"], front=True)
    eps = e1 * e2
    v = as_rows(v, Q, B.base.dim)
    w = as_rows(w, Q, B.base.dim)
    pb = p.map_algebra(inc)
    vb = inc.apply_array(v) + big.mul_arrays(eps.coeffs, inc.apply_array(w))
    end = flow_point(U, B.point(pb, vb), 1.0, cfg)
    eb, ef = B.split(end)
    arr = eb.stacked()
    Dw = left_coefficient(arr, big, Q, 0b11)
    base_arr = restrict(arr, big, Q)
    Dv = restrict(ef, big, Q)
    m = B.base.m
    y = SuperPoint(B.base, Q, base_arr[:m], base_arr[m:], p.embed, check=False)
    lhs = g.pair_at(y, Dw, Dv)
    rhs = g.pair_at(p, w, v)
    return (lhs - rhs).norm()


# ------------------------------------------------------------------ mechanics
class Mechanics:
    """Metric and potential with the tangent/cotangent machinery built once."""

    def __init__(self, g: SuperMetric, V: SuperFunction | None = None, conn: Connection | None = None):
        self.g = g
        self.base = g.chart
        self.V = V if V is not None else self.base.zero()
        if self.V.parity not in (0,) and not self.V.is_zero():
            raise ValueError("the potential must be even")
        self.conn = conn or Connection.levi_civita(g)
        self.B = Bundle(self.base)

    @property
    def N(self) -> int:
        return self.base.dim

    def _par(self, k: int) -> int:
        return self.base.parity(k)

    @cached_property
    def _g_lift(self):
        return [[self.B.lift(e) if not e.is_zero() else None for e in row] for row in self.g.g]

    @cached_property
    def _ginv_lift(self):
        ginv = self.g.inverse
        # raised-index form g^{kl}: sum_k g^{kl} g_kj = delta_lj
        return [[self.B.lift(ginv[l][k]) if not ginv[l][k].is_zero() else None for l in range(self.N)]
                for k in range(self.N)]

    # symbolic scalars on the tangent / cotangent chart
    @cached_property
    def kinetic(self) -> SuperFunction:
        """``T = 1/2 xi^i xi^j (g_ji o Pi)``."""
        c = self.B.chart
        T = c.zero()
        for i in range(self.N):
            for j in range(self.N):
                G = self._g_lift[j][i]
                if G is not None:
                    T = T + self.B.fiber(i) * self.B.fiber(j) * G
        return 0.5 * T

    @cached_property
    def lagrangian(self) -> SuperFunction:
        return self.kinetic - self.B.lift(self.V)

    @cached_property
    def hamiltonian(self) -> SuperFunction:
        """``H = 1/2 (-1)^{|l|} a_k a_l g^{kl} + V o Pi`` on the cotangent chart."""
        c = self.B.chart
        H = c.zero()
        for k in range(self.N):
            for l in range(self.N):
                G = self._ginv_lift[k][l]
                if G is not None:
                    H = H + _sign(self._par(l)) * (self.B.fiber(k) * self.B.fiber(l) * G)
        return 0.5 * H + self.B.lift(self.V)

    @cached_property
    def lowering(self) -> SuperMorphism:
        """``(Id, a_i = (-1)^{|i|+|j|} (g_ij o Pi) xi^j)`` from tangent to cotangent chart."""
        c = self.B.chart
        comps = [c.coordinate(self.B.base_index(k)) for k in range(self.N)]
        full = [None] * c.dim
        for k in range(self.N):
            full[self.B.base_index(k)] = comps[k]
            a = c.zero()
            for j in range(self.N):
                G = self._g_lift[k][j]
                if G is not None:
                    a = a + _sign(self._par(k) + self._par(j)) * (G * self.B.fiber(j))
            full[self.B.fiber_index(k)] = a
        return SuperMorphism(c, c, full[: c.m], full[c.m :])

    @cached_property
    def raising(self) -> SuperMorphism:
        """``(Id, xi^l = (-1)^{|k|+|l|} (g^{kl} o Pi) a_k)``."""
        c = self.B.chart
        full = [None] * c.dim
        for l in range(self.N):
            full[self.B.base_index(l)] = c.coordinate(self.B.base_index(l))
            x = c.zero()
            for k in range(self.N):
                G = self._ginv_lift[k][l]
                if G is not None:
                    x = x + _sign(self._par(k) + self._par(l)) * (G * self.B.fiber(k))
            full[self.B.fiber_index(l)] = x
        return SuperMorphism(c, c, full[: c.m], full[c.m :])

    def lower(self, tp: SuperPoint) -> SuperPoint:
        from .morphisms import apply_point

        return apply_point(self.lowering, tp)

    def raise_(self, cp: SuperPoint) -> SuperPoint:
        from .morphisms import apply_point

        return apply_point(self.raising, cp)

    # vector fields
    @cached_property
    def gradient(self) -> SuperVectorField:
        """``X^k = d_r V (g^-1)_{rk}``, the solution of ``dV = g(., X)``."""
        c = self.base
        ginv = self.g.inverse
        comps = []
        for k in range(self.N):
            s = c.zero()
            for r in range(self.N):
                dV = self.V.d(r)
                if not dV.is_zero() and not ginv[r][k].is_zero():
                    s = s + dV * ginv[r][k]
            comps.append(s)
        return SuperVectorField(c, comps[: c.m], comps[c.m :])

    def gradient_residual(self, points: Sequence[SuperPoint]) -> float:
        """``dV - g(., X)`` on coordinate fields."""
        X = self.gradient
        res = [self.V.d(r) - self.g.pairing(SuperVectorField.coordinate(self.base, r), X) for r in range(self.N)]
        return residual_norm(res, points)

    @cached_property
    def geodesic(self) -> SuperVectorField:
        return geodesic_field(self.conn, self.B)

    @cached_property
    def newton(self) -> SuperVectorField:
        """``U - X~`` with the vertical lift ``X~ = (X^i o Pi) d_{xi^i}``."""
        U = self.geodesic
        X = self.gradient
        comps = list(U.components)
        for k in range(self.N):
            if not X.components[k].is_zero():
                comps[self.B.fiber_index(k)] = comps[self.B.fiber_index(k)] - self.B.lift(X.components[k])
        c = self.B.chart
        return SuperVectorField(c, comps[: c.m], comps[c.m :])

    @cached_property
    def hamilton(self) -> SuperVectorField:
        return hamiltonian_field(self.hamiltonian, self.B)

    # checks
    def momentum_residual(self, points: Sequence[SuperPoint]) -> float:
        """``a_k o phi - d_{xi^k} T`` at tangent points, with right fiber derivatives.

        For the even ``T`` the right derivative along an odd slot is minus the left one.
        """
        low = self.lowering
        res = [low.components[self.B.fiber_index(k)] - _sign(self._par(k)) * self.kinetic.d(self.B.fiber_index(k))
               for k in range(self.N)]
        return residual_norm(res, points)

    def energy(self, tp: SuperPoint) -> AlgebraElement:
        return evaluate(self.kinetic, tp) + evaluate(self.B.lift(self.V), tp)

    def equivalence_checks(self, p: SuperPoint, v, t_span=(0.0, 2.0), cfg: StepperConfig | None = None,
                           samples: int = 2001) -> dict:
        """Newton versus Hamilton trajectories, the Euler-Lagrange residual and energy drift."""
        cfg = cfg or StepperConfig()
        t_eval = np.linspace(t_span[0], t_span[1], samples)
        tp0 = self.B.point(p, v)
        newton = integrate_flow(self.newton, tp0, t_span, cfg, t_eval)
        cp0 = self.lower(tp0)
        ham = integrate_flow(self.hamilton, cp0, t_span, cfg, t_eval)
        k = min(len(newton.times), len(ham.times))
        lowered = np.array([self.lower(newton.point(n)).stacked() for n in range(k)])
        nvh = float(np.max(np.abs(lowered - ham.states[:k])))
        # Euler-Lagrange: d/dt (d_xi L)(gamma') = (d_x L)(gamma')
        L = self.lagrangian
        mom = [L.d(self.B.fiber_index(j)) for j in range(self.N)]
        force = [L.d(self.B.base_index(j)) for j in range(self.N)]
        pts = newton.points
        P = np.array([[evaluate(f, pt).coeffs for f in mom] for pt in pts])
        F = np.array([[evaluate(f, pt).coeffs for f in force] for pt in pts])
        dP = CubicSpline(newton.times, P, axis=0)(newton.times, 1)
        el = float(np.max(np.abs(dP[2:-2] - F[2:-2]))) if len(pts) > 4 else float(np.max(np.abs(dP - F)))
        span = abs(t_span[1] - t_span[0]) or 1.0
        en = np.array([self.energy(pt).coeffs for pt in pts])
        hn = np.array([evaluate(self.hamiltonian, ham.point(n)).coeffs for n in range(len(ham.times))])
        rel = residual_norm(related(self.lowering, self.newton, self.hamilton), pts[:: max(1, len(pts) // 5)])
        return {
            "newton_vs_hamilton": nvh,
            "euler_lagrange_residual": el,
            "relatedness_residual": rel,
            "energy_drift_newton": float(np.max(np.abs(en - en[0]))) / span,
            "energy_drift_hamilton": float(np.max(np.abs(hn - hn[0]))) / span,
            "newton": newton,
            "hamilton": ham,
        }


def hamiltonian_field(H: SuperFunction, bundle: Bundle) -> SuperVectorField:
    """``X_H = (d_{a_i} H) d_{x^i} - (-1)^{|r|} (d_{x^r} H) d_{a_r}``."""
    c = bundle.chart
    comps = [c.zero() for _ in range(c.dim)]
    for i in range(bundle.base.dim):
        comps[bundle.base_index(i)] = H.d(bundle.fiber_index(i))
        comps[bundle.fiber_index(i)] = -_sign(bundle.base.parity(i)) * H.d(bundle.base_index(i))
    return SuperVectorField(c, comps[: c.m], comps[c.m :])
