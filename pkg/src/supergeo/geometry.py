"""Supermetrics, affine and bundle connections, curvature, torsion and transport.

Conventions
-----------
Indices run over the combined coordinate order (even first).  A connection on a
bundle with frame ``e_k`` has symbols ``Gamma[i][k][l]`` with
``nabla_{d_i} e_k = Gamma_ik^l e_l``.  Bilinear forms are left linear,
``g(fS, T) = f g(S, T)``, and pick up ``(-1)^{|f||S|}`` when a coefficient moves
past ``S`` in the second slot.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from .algebra import AlgebraElement, AlgebraHom, SmallAlgebra
from .fields import Chart, ChartError, SuperFunction, SuperPoint, evaluate, map_parameters
from .flows import StepperConfig, SuperVectorField, Trajectory, bracket, flow_differential, solve
from .morphisms import SuperMorphism, pullback, residual_norm


class SingularBody(ArithmeticError):
    """The body of a supermatrix is not invertible."""


class MetricError(ValueError):
    pass


def _sign(e: int) -> float:
    return -1.0 if e % 2 else 1.0


# ------------------------------------------------------------ supermatrices
def matmul(Q: SmallAlgebra, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Product of matrices with algebra entries, arrays of shape ``(r, c, dim)``."""
    return np.einsum("ija,jkb,abc->ikc", A, B, Q.structure, optimize=True)


def supermatrix_invert(M: np.ndarray, Q: SmallAlgebra, pivot_tol: float = 1e-12) -> np.ndarray:
    """Two-sided inverse of a square matrix over ``Q``: body inverse plus a Neumann series."""
    M = np.asarray(M, dtype=float)
    r = M.shape[0]
    if M.shape != (r, r, Q.dim):
        raise ValueError("expected an array of shape (r, r, dim)")
    if r == 0:
        return M.copy()
    body = M[..., 0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(body, check_finite=True)
    scale = max(1.0, float(np.max(np.abs(body))))
    if np.min(np.abs(np.diag(lu))) < pivot_tol * scale:
        raise SingularBody("supermatrix body is singular")
    binv = lu_solve((lu, piv), np.eye(r))
    Binv = np.zeros_like(M)
    Binv[..., 0] = binv
    N = M.copy()
    N[..., 0] = 0.0
    T = -matmul(Q, Binv, N)
    out = Binv.copy()
    term = Binv
    for _ in range(1, Q.nilpotency_index):
        term = matmul(Q, T, term)
        if not term.any():
            break
        out += term
    return out


def _det(rows: list[list[SuperFunction]]) -> SuperFunction:
    n = len(rows)
    if n == 1:
        return rows[0][0]
    if n == 2:
        return rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
    out = None
    for j in range(n):
        if rows[0][j].is_zero():
            continue
        minor = [r[:j] + r[j + 1 :] for r in rows[1:]]
        term = rows[0][j] * _det(minor)
        term = term if j % 2 == 0 else -term
        out = term if out is None else out + term
    return out if out is not None else rows[0][0].chart.zero()


def _even_inverse(rows: list[list[SuperFunction]]) -> list[list[SuperFunction]]:
    """Inverse of a matrix of even superfunctions by the adjugate (entries commute)."""
    n = len(rows)
    if n == 0:
        return []
    chart = rows[0][0].chart
    if n == 1:
        return [[chart.one() / rows[0][0]]]
    # diagonal shortcut keeps expressions small
    if all(rows[i][j].is_zero() for i in range(n) for j in range(n) if i != j):
        return [[chart.one() / rows[i][i] if i == j else chart.zero() for j in range(n)] for i in range(n)]
    det = _det(rows)
    inv_det = chart.one() / det
    out = [[chart.zero()] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [r[:i] + r[i + 1 :] for k, r in enumerate(rows) if k != j]
            c = _det(minor) if minor else chart.one()
            out[i][j] = (c if (i + j) % 2 == 0 else -c) * inv_det
    return out


def _mm(A, B):
    if not A or not B:
        return [[] for _ in A]
    chart = (A[0][0] if A[0] else B[0][0]).chart
    out = []
    for i in range(len(A)):
        row = []
        for k in range(len(B[0])):
            s = chart.zero()
            for j in range(len(B)):
                if not A[i][j].is_zero() and not B[j][k].is_zero():
                    s = s + A[i][j] * B[j][k]
            row.append(s)
        out.append(row)
    return out


def symbolic_inverse(g: list[list[SuperFunction]], m: int) -> list[list[SuperFunction]]:
    """Inverse of an even supermatrix of superfunctions via the Schur complement of the even block."""
    N = len(g)
    n = N - m
    A = [r[:m] for r in g[:m]]
    B = [r[m:] for r in g[:m]]
    C = [r[:m] for r in g[m:]]
    D = [r[m:] for r in g[m:]]
    Ai = _even_inverse(A)
    if n == 0:
        return Ai
    if m == 0:
        return _even_inverse(D)
    AiB = _mm(Ai, B)
    S = [[D[i][j] - x for j, x in enumerate(row)] for i, row in enumerate(_mm(C, AiB))]
    Si = _even_inverse(S)
    CAi = _mm(C, Ai)
    AiBSi = _mm(AiB, Si)
    top_left = [[Ai[i][j] + x for j, x in enumerate(row)] for i, row in enumerate(_mm(AiBSi, CAi))]
    top_right = [[-x for x in row] for row in AiBSi]
    bottom_left = [[-x for x in row] for row in _mm(Si, CAi)]
    return [top_left[i] + top_right[i] for i in range(m)] + [bottom_left[i] + Si[i] for i in range(n)]


# ------------------------------------------------------------------ metrics
class SuperMetric:
    """Riemannian supermetric ``g_ij = g(d_i, d_j)`` on a chart."""

    def __init__(self, chart: Chart, g: Sequence[Sequence[SuperFunction]], check: bool = True):
        self.chart = chart
        self.g = [list(r) for r in g]
        N = chart.dim
        if len(self.g) != N or any(len(r) != N for r in self.g):
            raise MetricError(f"metric must be a {N}x{N} matrix")
        if check:
            self.validate()

    @classmethod
    def parse(cls, chart: Chart, entries: Sequence[Sequence[str]], constants=None, check: bool = True) -> "SuperMetric":
        return cls(chart, [[chart.parse(str(t), constants) for t in row] for row in entries], check)

    @classmethod
    def euclidean(cls, chart: Chart) -> "SuperMetric":
        if chart.n % 2:
            raise MetricError("the odd block needs even size")
        N = chart.dim
        g = [[chart.zero() for _ in range(N)] for _ in range(N)]
        for i in range(chart.m):
            g[i][i] = chart.one()
        for j in range(0, chart.n, 2):
            a, b = chart.m + j, chart.m + j + 1
            g[a][b] = chart.one()
            g[b][a] = -chart.one()
        return cls(chart, g)

    def validate(self) -> None:
        c = self.chart
        for i in range(c.dim):
            for j in range(c.dim):
                e = self.g[i][j]
                if not e.chart.compatible(c):
                    raise MetricError("metric entry lives on another chart")
                p = e.parity
                if not e.is_zero() and p != (c.parity(i) + c.parity(j)) % 2:
                    raise MetricError(f"entry ({i}, {j}) has the wrong parity")
                diff = self.g[j][i] - _sign(c.parity(i) * c.parity(j)) * e
                if not diff.is_zero():
                    raise MetricError(f"entries ({i}, {j}) and ({j}, {i}) violate graded symmetry")

    def entry(self, i: int, j: int) -> SuperFunction:
        return self.g[i][j]

    def at(self, point: SuperPoint) -> np.ndarray:
        N = self.chart.dim
        return np.array([[evaluate(self.g[i][j], point).coeffs for j in range(N)] for i in range(N)]).reshape(
            N, N, point.algebra.dim
        )

    def d_at(self, point: SuperPoint) -> np.ndarray:
        """``dG[r, i, j] = d_r g_ij`` at the point."""
        N = self.chart.dim
        out = np.zeros((N, N, N, point.algebra.dim))
        for i in range(N):
            for j in range(N):
                if self.g[i][j].is_zero():
                    continue
                for r in range(N):
                    out[r, i, j] = evaluate(self.g[i][j].d(r), point).coeffs
        return out

    def inverse_at(self, point: SuperPoint) -> np.ndarray:
        return supermatrix_invert(self.at(point), point.algebra)

    def check_body(self, point: SuperPoint) -> None:
        """Even block symmetric invertible, odd block antisymmetric invertible."""
        G = self.at(point)[..., 0]
        m = self.chart.m
        A, D = G[:m, :m], G[m:, m:]
        if m and (not np.allclose(A, A.T) or abs(np.linalg.det(A)) < 1e-12):
            raise SingularBody("even block body is not symmetric invertible")
        if self.chart.n and (not np.allclose(D, -D.T) or abs(np.linalg.det(D)) < 1e-12):
            raise SingularBody("odd block body is not antisymmetric invertible")

    @cached_property
    def inverse(self) -> list[list[SuperFunction]]:
        """Symbolic inverse matrix ``g^{kl}``."""
        return symbolic_inverse(self.g, self.chart.m)

    def pairing(self, X: SuperVectorField, Y: SuperVectorField) -> SuperFunction:
        """``g(X, Y) = sum X^k (-1)^{|k||Y^l|} Y^l g_kl``."""
        c = self.chart
        out = c.zero()
        for k, xk in enumerate(X.components):
            if xk.is_zero():
                continue
            for l, yl in enumerate(Y.components):
                if yl.is_zero() or self.g[k][l].is_zero():
                    continue
                for q in (0, 1):
                    ylq = yl.parity_part(q)
                    if ylq.is_zero():
                        continue
                    out = out + _sign(c.parity(k) * q) * (xk * ylq * self.g[k][l])
        return out

    def pair_at(self, point: SuperPoint, u: np.ndarray, v: np.ndarray, G: np.ndarray | None = None) -> AlgebraElement:
        """Pairing of two vectors given by component arrays ``(N, dim)`` at a point."""
        Q = point.algebra
        G = self.at(point) if G is None else G
        par = np.asarray(Q.parity)
        total = np.zeros(Q.dim)
        for k in range(self.chart.dim):
            for l in range(self.chart.dim):
                for q in (0, 1):
                    vq = np.where(par == q, v[l], 0.0)
                    if not vq.any():
                        continue
                    s = _sign(self.chart.parity(k) * q)
                    total += s * Q.mul_arrays(Q.mul_arrays(u[k], vq), G[k, l])
        return AlgebraElement(Q, total)

    def map_parameters(self, h: AlgebraHom, chart: Chart | None = None) -> "SuperMetric":
        chart = chart or Chart(self.chart.m, self.chart.n, h.target, self.chart.domain)
        return SuperMetric(chart, [[map_parameters(e, h, chart) for e in r] for r in self.g], check=False)


def levi_civita_at(g: SuperMetric, point: SuperPoint) -> np.ndarray:
    """Christoffel symbols ``Gamma[i, j, k]`` of the Levi-Civita connection at a point.

    ``2 Gamma_ij^k g_kr = d_i g_jr + (-1)^{|i||j|} d_j g_ir - (-1)^{|r|(|i|+|j|)} d_r g_ij``
    solved by right multiplication with the inverse supermatrix.
    """
    Q = point.algebra
    par = np.array(g.chart.parities)
    dG = g.d_at(point)
    s1 = np.where(np.outer(par, par) % 2 == 1, -1.0, 1.0)  # [i, j]
    s2 = np.where((par[None, None, :] * (par[:, None, None] + par[None, :, None])) % 2 == 1, -1.0, 1.0)  # [i, j, r]
    rhs = dG + s1[:, :, None, None] * np.transpose(dG, (1, 0, 2, 3)) - s2[..., None] * np.transpose(dG, (1, 2, 0, 3))
    Ginv = g.inverse_at(point)
    return 0.5 * np.einsum("ijra,rkb,abc->ijkc", rhs, Ginv, Q.structure, optimize=True)


def compatibility_residual_at(g: SuperMetric, Gamma: np.ndarray, point: SuperPoint) -> float:
    """Max of ``d_i g_jk - Gamma_ij^l g_lk - (-1)^{|i||j| + |j||Gamma_ik^l|} Gamma_ik^l g_jl``."""
    Q = point.algebra
    N = g.chart.dim
    par = g.chart.parities
    G = g.at(point)
    dG = g.d_at(point)
    worst = 0.0
    for i in range(N):
        for j in range(N):
            for k in range(N):
                r = dG[i, j, k].copy()
                for l in range(N):
                    r -= Q.mul_arrays(Gamma[i, j, l], G[l, k])
                    s = _sign(par[i] * par[j] + par[j] * (par[i] + par[k] + par[l]))
                    r -= s * Q.mul_arrays(Gamma[i, k, l], G[j, l])
                worst = max(worst, float(np.max(np.abs(r))))
    return worst


def torsion_residual_at(Gamma: np.ndarray, parities: Sequence[int]) -> float:
    par = np.array(parities)
    s = np.where(np.outer(par, par) % 2 == 1, -1.0, 1.0)
    return float(np.max(np.abs(Gamma - s[:, :, None, None] * np.transpose(Gamma, (1, 0, 2, 3))), initial=0.0))


# -------------------------------------------------------------- connections
class Connection:
    """Connection on a trivial bundle over a chart (affine when the frame is the coordinate frame)."""

    def __init__(self, chart: Chart, Gamma, frame_parities: Sequence[int] | None = None, check: bool = True):
        self.chart = chart
        self.frame = list(chart.parities if frame_parities is None else frame_parities)
        K = len(self.frame)
        self.Gamma = [[list(Gamma[i][k]) for k in range(K)] for i in range(chart.dim)]
        if check:
            for i in range(chart.dim):
                for k in range(K):
                    if len(self.Gamma[i][k]) != K:
                        raise ValueError("Christoffel array has the wrong shape")
                    for l in range(K):
                        e = self.Gamma[i][k][l]
                        if not e.chart.compatible(chart):
                            raise ChartError("Christoffel symbol on another chart")
                        if not e.is_zero() and e.parity != (chart.parity(i) + self.frame[k] + self.frame[l]) % 2:
                            raise ValueError(f"Gamma[{i}][{k}][{l}] has the wrong parity")

    @property
    def affine(self) -> bool:
        return self.frame == list(self.chart.parities)

    @classmethod
    def trivial(cls, chart: Chart, frame_parities: Sequence[int] | None = None) -> "Connection":
        K = chart.dim if frame_parities is None else len(frame_parities)
        Z = [[[chart.zero() for _ in range(K)] for _ in range(K)] for _ in range(chart.dim)]
        return cls(chart, Z, frame_parities)

    @classmethod
    def from_entries(cls, chart: Chart, entries: dict, frame_parities: Sequence[int] | None = None, constants=None) -> "Connection":
        """``entries`` maps ``(i, k, l)`` (0-based) to expression strings or superfunctions."""
        conn = cls.trivial(chart, frame_parities)
        for (i, k, l), v in entries.items():
            conn.Gamma[i][k][l] = chart.parse(v, constants) if isinstance(v, str) else v
        return cls(chart, conn.Gamma, conn.frame)

    @classmethod
    def levi_civita(cls, g: SuperMetric) -> "Connection":
        """Symbolic Levi-Civita connection; agrees with :func:`levi_civita_at` pointwise."""
        c = g.chart
        N = c.dim
        ginv = g.inverse
        dg = [[[g.g[i][j].d(r) if not g.g[i][j].is_zero() else c.zero() for j in range(N)] for i in range(N)] for r in range(N)]
        Gamma = [[[c.zero() for _ in range(N)] for _ in range(N)] for _ in range(N)]
        for i in range(N):
            for j in range(N):
                rhs = []
                for r in range(N):
                    v = dg[i][j][r] + _sign(c.parity(i) * c.parity(j)) * dg[j][i][r]
                    v = v - _sign(c.parity(r) * (c.parity(i) + c.parity(j))) * dg[r][i][j]
                    rhs.append(v)
                for k in range(N):
                    s = c.zero()
                    for r in range(N):
                        if not rhs[r].is_zero() and not ginv[r][k].is_zero():
                            s = s + rhs[r] * ginv[r][k]
                    Gamma[i][j][k] = 0.5 * s
        return cls(c, Gamma, check=False)

    def christoffel_at(self, point: SuperPoint) -> np.ndarray:
        N, K = self.chart.dim, len(self.frame)
        out = np.zeros((N, K, K, point.algebra.dim))
        for i in range(N):
            for k in range(K):
                for l in range(K):
                    e = self.Gamma[i][k][l]
                    if not e.is_zero():
                        out[i, k, l] = evaluate(e, point).coeffs
        return out

    def covariant(self, X: SuperVectorField, S: Sequence[SuperFunction]) -> list[SuperFunction]:
        """``nabla_X S = [X(S^l) + (-1)^{|X||S^k|} S^k X^i Gamma_ik^l] e_l``."""
        c = self.chart
        K = len(self.frame)
        out = [c.zero() for _ in range(K)]
        for p in (0, 1):
            Xp = X.parity_part(p)
            comps = Xp.components
            if all(a.is_zero() for a in comps):
                continue
            for l in range(K):
                out[l] = out[l] + Xp.apply(S[l])
            for k in range(K):
                for q in (0, 1):
                    Skq = S[k].parity_part(q)
                    if Skq.is_zero():
                        continue
                    for i, xi in enumerate(comps):
                        if xi.is_zero():
                            continue
                        pre = _sign(p * q) * (Skq * xi)
                        for l in range(K):
                            G = self.Gamma[i][k][l]
                            if not G.is_zero():
                                out[l] = out[l] + pre * G
        return out

    def covariant_field(self, X: SuperVectorField, Y: SuperVectorField) -> SuperVectorField:
        if not self.affine:
            raise ValueError("vector fields need an affine connection")
        comps = self.covariant(X, Y.components)
        return SuperVectorField(self.chart, comps[: self.chart.m], comps[self.chart.m :])

    def curvature(self, X: SuperVectorField, Y: SuperVectorField, S: Sequence[SuperFunction]) -> list[SuperFunction]:
        """``R(X, Y)S = [nabla_X, nabla_Y] S - nabla_{[X, Y]} S``."""
        c = self.chart
        K = len(self.frame)
        out = [c.zero() for _ in range(K)]
        for p in (0, 1):
            Xp = X.parity_part(p)
            for q in (0, 1):
                Yq = Y.parity_part(q)
                a = self.covariant(Xp, self.covariant(Yq, S))
                b = self.covariant(Yq, self.covariant(Xp, S))
                out = [o + u - _sign(p * q) * v for o, u, v in zip(out, a, b)]
        br = self.covariant(bracket(X, Y), S)
        return [o - v for o, v in zip(out, br)]

    def torsion(self, X: SuperVectorField, Y: SuperVectorField) -> SuperVectorField:
        """``T(X, Y) = nabla_X Y - (-1)^{|X||Y|} nabla_Y X - [X, Y]``."""
        out = SuperVectorField.zero(self.chart)
        for p in (0, 1):
            Xp = X.parity_part(p)
            for q in (0, 1):
                Yq = Y.parity_part(q)
                out = out + self.covariant_field(Xp, Yq) - _sign(p * q) * self.covariant_field(Yq, Xp)
        return out - bracket(X, Y)

    def torsion_tensor(self) -> "Connection":
        """``A_ij^k = Gamma_ij^k - (-1)^{|i||j|} Gamma_ji^k``, the coordinate torsion."""
        c = self.chart
        N = c.dim
        A = [[[self.Gamma[i][j][k] - _sign(c.parity(i) * c.parity(j)) * self.Gamma[j][i][k] for k in range(N)]
              for j in range(N)] for i in range(N)]
        return Connection(c, A, check=False)

    def symmetrized(self) -> "Connection":
        """``nabla - T/2``: the torsionfree connection with the same geodesics."""
        c = self.chart
        N = c.dim
        A = self.torsion_tensor()
        G = [[[self.Gamma[i][j][k] - 0.5 * A.Gamma[i][j][k] for k in range(N)] for j in range(N)] for i in range(N)]
        return Connection(c, G, check=False)

    def __add__(self, other: "Connection") -> "Connection":
        N, K = self.chart.dim, len(self.frame)
        G = [[[self.Gamma[i][k][l] + other.Gamma[i][k][l] for l in range(K)] for k in range(K)] for i in range(N)]
        return Connection(self.chart, G, self.frame, check=False)

    def map_parameters(self, h: AlgebraHom, chart: Chart | None = None) -> "Connection":
        chart = chart or Chart(self.chart.m, self.chart.n, h.target, self.chart.domain)
        G = [[[map_parameters(e, h, chart) for e in row] for row in blk] for blk in self.Gamma]
        return Connection(chart, G, self.frame, check=False)


def pullback_connection(phi: SuperMorphism, conn: Connection) -> Connection:
    """``hat Gamma_ik^l = (d_i Phi^j)(Gamma_jk^l o Phi)`` on the source chart."""
    if not phi.target.compatible(conn.chart):
        raise ChartError("connection does not live on the target chart")
    src = phi.source
    K = len(conn.frame)
    comps = phi.components
    pulled = [[[pullback(phi, conn.Gamma[j][k][l]) for l in range(K)] for k in range(K)] for j in range(conn.chart.dim)]
    G = [[[src.zero() for _ in range(K)] for _ in range(K)] for _ in range(src.dim)]
    for i in range(src.dim):
        for j, c in enumerate(comps):
            dij = c.d(i)
            if dij.is_zero():
                continue
            for k in range(K):
                for l in range(K):
                    if not pulled[j][k][l].is_zero():
                        G[i][k][l] = G[i][k][l] + dij * pulled[j][k][l]
    return Connection(src, G, conn.frame, check=False)


def scalar_curvature(g: SuperMetric, conn: Connection | None = None) -> SuperFunction:
    """``S = g^{jk} R^i_{ijk}`` for a purely even chart."""
    c = g.chart
    if c.n:
        raise NotImplementedError("scalar curvature is provided for purely even charts")
    conn = conn or Connection.levi_civita(g)
    N = c.dim
    coords = [SuperVectorField.coordinate(c, i) for i in range(N)]
    ginv = g.inverse
    S = c.zero()
    for j in range(N):
        for k in range(N):
            if ginv[j][k].is_zero():
                continue
            ek = [c.one() if l == k else c.zero() for l in range(N)]
            ric = c.zero()
            for i in range(N):
                ric = ric + conn.curvature(coords[i], coords[j], ek)[i]
            S = S + ginv[j][k] * ric
    return S


# ------------------------------------------------------------- along curves
@dataclass
class FrameSection:
    """Coefficients ``S^k`` (frame ``e_k``) sampled along a curve."""

    times: np.ndarray
    values: np.ndarray  # (T, K, dim)
    algebra: SmallAlgebra

    def at(self, k: int) -> list[AlgebraElement]:
        return [AlgebraElement(self.algebra, v) for v in self.values[k]]

    def derivative(self) -> np.ndarray:
        """Time derivative from a cubic spline through the samples."""
        return CubicSpline(self.times, self.values, axis=0)(self.times, 1)


def _gamma_dot(traj: Trajectory, X: SuperVectorField | None) -> np.ndarray:
    if X is not None:
        out = []
        for pt in traj.points:
            ev, od = X.velocity(pt)
            out.append(np.vstack([ev, od]))
        return np.array(out)
    return CubicSpline(traj.times, traj.states, axis=0)(traj.times, 1)


def covariant_derivative_along(traj: Trajectory, S: FrameSection, conn: Connection,
                               X: SuperVectorField | None = None, S_dot: np.ndarray | None = None) -> FrameSection:
    """``nabla_gamma' S = S' + S^j gamma'^i (Gamma_ij^k o gamma) e_k`` at the samples.

    ``gamma'`` comes from the generating field ``X`` when given, ``S'`` from
    ``S_dot`` or a spline through the samples.
    """
    if len(S.times) != len(traj.times) or not np.allclose(S.times, traj.times):
        raise ValueError("section and trajectory must share their sampling")
    Q = traj.algebra
    gd = _gamma_dot(traj, X)
    Sd = S.derivative() if S_dot is None else np.asarray(S_dot)
    out = Sd.copy()
    for n, pt in enumerate(traj.points):
        G = conn.christoffel_at(pt)
        Sg = np.einsum("ja,ib,abc->jic", S.values[n], gd[n], Q.structure)
        out[n] += np.einsum("jia,ijkb,abc->kc", Sg, G, Q.structure)
    return FrameSection(S.times, out, Q)


def parallel_transport(traj: Trajectory, v0: np.ndarray, conn: Connection, X: SuperVectorField | None = None,
                       cfg: StepperConfig | None = None) -> FrameSection:
    """Solve ``S' = -S^j gamma'^i Gamma_ij^k(gamma)`` along the trajectory with ``S(t0) = v0``.

    The curve is read from the trajectory's dense output; ``gamma'`` is the
    generating field ``X`` when given, else the dense output's derivative.
    """
    cfg = cfg or StepperConfig()
    Q = traj.algebra
    K = len(conn.frame)
    v0 = np.asarray(v0, dtype=float).reshape(K, Q.dim)
    m = traj.chart.m
    spline = None if X is not None or traj.dense is not None else CubicSpline(traj.times, traj.states, axis=0)

    def curve(t):
        if traj.dense is not None:
            st = traj.state_at(t)
        else:
            st = spline(t)
        return SuperPoint(traj.chart, Q, st[:m], st[m:], traj.embed, check=False)

    def rhs(t, y):
        pt = curve(t)
        if X is not None:
            ev, od = X.velocity(pt)
            gd = np.vstack([ev, od])
        elif traj.dense is not None:
            h = 1e-6
            gd = (traj.state_at(t + h) - traj.state_at(t - h)) / (2 * h)
        else:
            gd = spline(t, 1)
        G = conn.christoffel_at(pt)
        S = y.reshape(K, Q.dim)
        Sg = np.einsum("ja,ib,abc->jic", S, gd, Q.structure)
        return -np.einsum("jia,ijkb,abc->kc", Sg, G, Q.structure).ravel()

    t0, t1 = float(traj.times[0]), float(traj.times[-1])
    res = solve(rhs, v0.ravel(), t0, t1, cfg, t_eval=traj.times)
    return FrameSection(res.times, res.states.reshape(len(res.times), K, Q.dim), Q)


def parallel_obstruction_01(conn: Connection, b) -> SuperFunction:
    """``nabla_{d_xi}((1 + b xi) e)`` for a rank-one bundle over the purely odd line."""
    c = conn.chart
    if (c.m, c.n) != (0, 1) or len(conn.frame) != 1:
        raise ValueError("expects a rank-one bundle over R^{0|1}")
    S = c.one() + c.const(b) * c.th(0)
    return conn.covariant(SuperVectorField.coordinate(c, 0), [S])[0]


# ---------------------------------------------------- Killing and isometry
def _nabla_coord(conn: Connection, a: int, X: SuperVectorField) -> list[SuperFunction]:
    return conn.covariant(SuperVectorField.coordinate(conn.chart, a), X.components)


def killing_residual(X: SuperVectorField, g: SuperMetric, conn: Connection | None = None) -> list[list[SuperFunction]]:
    """``g(nabla_a X, d_b) + (-1)^{|X||b|} g(d_a, nabla_b X)`` for homogeneous ``X``; split otherwise."""
    c = g.chart
    conn = conn or Connection.levi_civita(g)
    N = c.dim
    out = [[c.zero() for _ in range(N)] for _ in range(N)]
    for p in (0, 1):
        Xp = X.parity_part(p)
        if all(a.is_zero() for a in Xp.components):
            continue
        W = [_nabla_coord(conn, a, Xp) for a in range(N)]
        for a in range(N):
            for b in range(N):
                r = c.zero()
                for l in range(N):
                    if not W[a][l].is_zero() and not g.g[l][b].is_zero():
                        r = r + W[a][l] * g.g[l][b]
                    if not W[b][l].is_zero() and not g.g[a][l].is_zero():
                        s = _sign(p * c.parity(b) + c.parity(a) * (p + c.parity(b) + c.parity(l)))
                        r = r + s * (W[b][l] * g.g[a][l])
                out[a][b] = out[a][b] + r
    return out


def lie_derivative_metric(X: SuperVectorField, g: SuperMetric) -> list[list[SuperFunction]]:
    """``(L_X g)(d_a, d_b) = X g_ab - g([X, d_a], d_b) - (-1)^{|X||a|} g(d_a, [X, d_b])``.

    For the Levi-Civita connection the Killing residual equals ``(-1)^{|X||a|}`` times this.
    """
    c = g.chart
    N = c.dim
    coords = [SuperVectorField.coordinate(c, a) for a in range(N)]
    out = [[c.zero() for _ in range(N)] for _ in range(N)]
    for p in (0, 1):
        Xp = X.parity_part(p)
        if all(a.is_zero() for a in Xp.components):
            continue
        brs = [bracket(Xp, coords[a]) for a in range(N)]
        for a in range(N):
            for b in range(N):
                r = Xp.apply(g.g[a][b]) - g.pairing(brs[a], coords[b])
                r = r - _sign(p * c.parity(a)) * g.pairing(coords[a], brs[b])
                out[a][b] = out[a][b] + r
    return out


def isometry_residual(phi: SuperMorphism, g: SuperMetric, h: SuperMetric) -> list[list[SuperFunction]]:
    """``(Phi^* h)(dPhi d_i, dPhi d_j) - g_ij`` with ``dPhi d_i = (d_i Phi^k) Phi^* d_k``."""
    src, tgt = phi.source, phi.target
    if not g.chart.compatible(src) or not h.chart.compatible(tgt):
        raise ChartError("metrics do not match the morphism charts")
    comps = phi.components
    D = [[c.d(i) for c in comps] for i in range(src.dim)]
    hp = [[pullback(phi, h.g[k][l]) if not h.g[k][l].is_zero() else src.zero() for l in range(tgt.dim)] for k in range(tgt.dim)]
    out = []
    for i in range(src.dim):
        row = []
        for j in range(src.dim):
            r = -g.g[i][j]
            for k in range(tgt.dim):
                if D[i][k].is_zero():
                    continue
                for l in range(tgt.dim):
                    if D[j][l].is_zero() or hp[k][l].is_zero():
                        continue
                    s = _sign(tgt.parity(k) * (src.parity(j) + tgt.parity(l)))
                    r = r + s * (D[i][k] * D[j][l] * hp[k][l])
            row.append(r)
        out.append(row)
    return out


def infaff_residual(X: SuperVectorField, conn: Connection) -> list[list[SuperVectorField]]:
    """``[X, nabla_a d_b] - nabla_{[X, d_a]} d_b - (-1)^{|X||a|} nabla_a [X, d_b]``."""
    c = conn.chart
    N = c.dim
    coords = [SuperVectorField.coordinate(c, a) for a in range(N)]
    out = [[SuperVectorField.zero(c) for _ in range(N)] for _ in range(N)]
    for p in (0, 1):
        Xp = X.parity_part(p)
        if all(a.is_zero() for a in Xp.components):
            continue
        for a in range(N):
            for b in range(N):
                r = bracket(Xp, conn.covariant_field(coords[a], coords[b]))
                r = r - conn.covariant_field(bracket(Xp, coords[a]), coords[b])
                r = r - _sign(p * c.parity(a)) * conn.covariant_field(coords[a], bracket(Xp, coords[b]))
                out[a][b] = out[a][b] + r
    return out


def matrix_residual_norm(mat, points: Sequence[SuperPoint]) -> float:
    funcs = []
    for row in mat:
        for e in row:
            funcs.extend(e.components if isinstance(e, SuperVectorField) else [e])
    return residual_norm(funcs, points)


def flow_metric_pullback_residual(X: SuperVectorField, g: SuperMetric, points: Sequence[SuperPoint], t: float,
                                  cfg: StepperConfig | None = None) -> float:
    """Largest entry of ``(J_X(t, .)^* g) - g`` at the sample points.

    The flow differential comes from nilpotent-generator adjunction.
    """
    c = g.chart
    par = c.parities
    worst = 0.0
    for pt in points:
        y, D = flow_differential(X, pt, t, cfg)
        Q = pt.algebra
        Gy = g.at(y)
        Gx = g.at(pt)
        for i in range(c.dim):
            for j in range(c.dim):
                r = -Gx[i, j]
                for k in range(c.dim):
                    for l in range(c.dim):
                        s = _sign(par[k] * (par[j] + par[l]))
                        r = r + s * Q.mul_arrays(Q.mul_arrays(D[i, k], D[j, l]), Gy[k, l])
                worst = max(worst, float(np.max(np.abs(r))))
    return worst
