"""Super vector fields, their integral flows and the nilpotent-time calculus.

A flow is integrated pointwise: the coordinates of an algebra-valued point are
flattened to a real vector and the field is evaluated on that point, so any
Runge-Kutta scheme applies.  The layered solver exploits that the level-r
coefficients obey a linear equation driven only by lower levels.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .algebra import AlgebraElement, AlgebraHom, SmallAlgebra, extend, grassmann, tensor, inclusion
from .expr import DomainError
from .fields import Chart, ChartError, SuperFunction, SuperPoint, evaluate, map_parameters
from .morphisms import SuperMorphism, apply_point


class FlowError(RuntimeError):
    """Step failure, step budget exhaustion or other integration errors."""


# ----------------------------------------------------------------- vector fields
class SuperVectorField:
    """``A^i d/dx^i + Delta^j d/dxi^j`` on a chart."""

    def __init__(self, chart: Chart, A: Sequence[SuperFunction], D: Sequence[SuperFunction] = ()):
        self.chart = chart
        self.A = list(A)
        self.D = list(D)
        if len(self.A) != chart.m or len(self.D) != chart.n:
            raise ChartError("component count does not match the chart")
        for c in self.A + self.D:
            if not c.chart.compatible(chart):
                raise ChartError("component lives on a different chart")

    @classmethod
    def parse(cls, chart: Chart, even: Sequence[str], odd: Sequence[str] = (), constants=None) -> "SuperVectorField":
        return cls(chart, [chart.parse(t, constants) for t in even], [chart.parse(t, constants) for t in odd])

    @classmethod
    def coordinate(cls, chart: Chart, k: int) -> "SuperVectorField":
        """The coordinate field d/dz^k (combined order, even first)."""
        comps = [chart.one() if i == k else chart.zero() for i in range(chart.dim)]
        return cls(chart, comps[: chart.m], comps[chart.m :])

    @classmethod
    def zero(cls, chart: Chart) -> "SuperVectorField":
        return cls(chart, [chart.zero()] * chart.m, [chart.zero()] * chart.n)

    @property
    def components(self) -> list[SuperFunction]:
        return self.A + self.D

    @property
    def parity(self) -> int | None:
        """0 or 1 for homogeneous fields (zero counts as even), else None."""
        ps = set()
        for k, c in enumerate(self.components):
            if c.is_zero():
                continue
            p = c.parity
            if p is None:
                return None
            ps.add((p + self.chart.parity(k)) % 2)
        if not ps:
            return 0
        return ps.pop() if len(ps) == 1 else None

    def parity_part(self, p: int) -> "SuperVectorField":
        comps = [c.parity_part((p + self.chart.parity(k)) % 2) for k, c in enumerate(self.components)]
        return SuperVectorField(self.chart, comps[: self.chart.m], comps[self.chart.m :])

    def apply(self, f: SuperFunction) -> SuperFunction:
        return apply(self, f)

    def __call__(self, f: SuperFunction) -> SuperFunction:
        return apply(self, f)

    def __add__(self, o: "SuperVectorField") -> "SuperVectorField":
        return SuperVectorField(self.chart, [a + b for a, b in zip(self.A, o.A)], [a + b for a, b in zip(self.D, o.D)])

    def __sub__(self, o: "SuperVectorField") -> "SuperVectorField":
        return SuperVectorField(self.chart, [a - b for a, b in zip(self.A, o.A)], [a - b for a, b in zip(self.D, o.D)])

    def __neg__(self):
        return SuperVectorField(self.chart, [-a for a in self.A], [-a for a in self.D])

    def __rmul__(self, c) -> "SuperVectorField":
        """Left multiplication by a superfunction, algebra element or real."""
        return SuperVectorField(self.chart, [c * a for a in self.A], [c * a for a in self.D])

    def velocity(self, point: SuperPoint) -> tuple[np.ndarray, np.ndarray]:
        """Coefficient arrays of the field's components evaluated at ``point``."""
        Q = point.algebra
        ev = np.array([evaluate(a, point).coeffs for a in self.A]).reshape(self.chart.m, Q.dim)
        od = np.array([evaluate(d, point).coeffs for d in self.D]).reshape(self.chart.n, Q.dim)
        return ev, od

    def map_parameters(self, h: AlgebraHom, chart: Chart | None = None) -> "SuperVectorField":
        chart = chart or Chart(self.chart.m, self.chart.n, h.target, self.chart.domain)
        return SuperVectorField(
            chart, [map_parameters(a, h, chart) for a in self.A], [map_parameters(d, h, chart) for d in self.D]
        )

    def body(self) -> "SuperVectorField":
        """The classical field on the chart over the reals."""
        from .algebra import body_hom

        return self.map_parameters(body_hom(self.chart.algebra, into_reals=True))

    def residual_at(self, points: Sequence[SuperPoint]) -> float:
        worst = 0.0
        for pt in points:
            ev, od = self.velocity(pt)
            worst = max(worst, float(np.max(np.abs(ev), initial=0.0)), float(np.max(np.abs(od), initial=0.0)))
        return worst

    def __repr__(self) -> str:
        parts = [f"({a})*d/dx{i + 1}" for i, a in enumerate(self.A) if not a.is_zero()]
        parts += [f"({d})*d/dth{j + 1}" for j, d in enumerate(self.D) if not d.is_zero()]
        return " + ".join(parts) if parts else "0"


def apply(X: SuperVectorField, f: SuperFunction) -> SuperFunction:
    """``X f = A^i d_i f + Delta^j d_j f`` (left odd derivatives)."""
    if not X.chart.compatible(f.chart):
        raise ChartError("field and function live on different charts")
    out = f.chart.zero()
    for i, a in enumerate(X.A):
        if not a.is_zero():
            out = out + a * f.d_even(i)
    for j, d in enumerate(X.D):
        if not d.is_zero():
            out = out + d * f.d_odd(j)
    return out


def bracket(X: SuperVectorField, Y: SuperVectorField) -> SuperVectorField:
    """Graded commutator ``XY - (-1)^{|X||Y|} YX``, split bilinearly into homogeneous parts."""
    if not X.chart.compatible(Y.chart):
        raise ChartError("fields live on different charts")
    chart = X.chart
    comps = [chart.zero() for _ in range(chart.dim)]
    for p in (0, 1):
        Xp = X.parity_part(p)
        if all(c.is_zero() for c in Xp.components):
            continue
        for q in (0, 1):
            Yq = Y.parity_part(q)
            if all(c.is_zero() for c in Yq.components):
                continue
            sign = -1.0 if p * q else 1.0
            for k in range(chart.dim):
                comps[k] = comps[k] + Xp.apply(Yq.components[k]) - sign * Yq.apply(Xp.components[k])
    return SuperVectorField(chart, comps[: chart.m], comps[chart.m :])


def evenize(X_even: SuperVectorField | None, X_odd: SuperVectorField, name: str = "alpha"):
    """Turn ``X_0 + alpha X_1`` into an even field over the algebra with a fresh odd ``alpha``.

    Returns the new field and ``alpha``.
    """
    chart = X_odd.chart
    big, inc, (alpha,) = extend(chart.algebra, [name])
    new_chart = Chart(chart.m, chart.n, big, chart.domain)
    out = alpha * X_odd.map_parameters(inc, new_chart)
    if X_even is not None:
        out = X_even.map_parameters(inc, new_chart) + out
    return out, alpha


# ------------------------------------------------------------------- stepping
@dataclass
class StepperConfig:
    """Integration settings: ``method`` is ``"rk45"`` (Dormand-Prince, adaptive) or ``"rk4"``."""

    method: str = "rk45"
    atol: float = 1e-10
    rtol: float = 1e-10
    step: float = 1e-2
    max_steps: int = 200_000
    on_exit: str = "truncate"

    def __post_init__(self):
        if self.method not in ("rk45", "rk4"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.atol <= 0 or self.rtol <= 0 or self.step <= 0 or self.max_steps <= 0:
            raise ValueError("tolerances, step and max_steps must be positive")
        if self.on_exit not in ("truncate", "raise"):
            raise ValueError("on_exit must be 'truncate' or 'raise'")

    def to_dict(self) -> dict:
        return {"method": self.method, "atol": self.atol, "rtol": self.rtol, "step": self.step,
                "max_steps": self.max_steps, "on_exit": self.on_exit}


@dataclass
class ODEResult:
    times: np.ndarray
    states: np.ndarray
    status: str
    info: dict
    dense: Callable | None = None


def _box_event(body_index: np.ndarray, domain, dim: int):
    lo = np.array([d[0] for d in domain])
    hi = np.array([d[1] for d in domain])

    def event(t, y):
        b = y[body_index]
        return float(np.min(np.minimum(b - lo, hi - b)))

    event.terminal = True
    event.direction = -1
    return event


def _rk4_stage_inputs(rhs, t, y, h):
    k1 = rhs(t, y)
    y2 = y + 0.5 * h * k1
    k2 = rhs(t + 0.5 * h, y2)
    y3 = y + 0.5 * h * k2
    k3 = rhs(t + 0.5 * h, y3)
    y4 = y + h * k3
    k4 = rhs(t + h, y4)
    return (y, y2, y3, y4), (k1, k2, k3, k4)


def solve(rhs, y0, t0: float, t1: float, cfg: StepperConfig, inside: Callable | None = None,
          body_index=None, domain=None, t_eval=None, stage_hook=None) -> ODEResult:
    """Integrate ``y' = rhs(t, y)`` from ``t0`` to ``t1``.

    ``inside(y)`` tells whether the body lies in the chart domain; for RK45 the
    box boundary is located by an event on the coordinates ``body_index``.
    ``stage_hook(n, stages)`` receives the RK4 stage inputs of every step.
    """
    y0 = np.asarray(y0, dtype=float)
    if t1 == t0:
        return ODEResult(np.array([t0]), y0[None, :].copy(), "ok", {"method": cfg.method, "steps": 0})
    if cfg.method == "rk45":
        events = None
        if domain is not None and body_index is not None:
            events = [_box_event(np.asarray(body_index), domain, y0.size)]
        calls = [0]

        def wrapped(t, y):
            calls[0] += 1
            if calls[0] > 13 * cfg.max_steps:
                raise FlowError("max_steps exceeded")
            return rhs(t, y)

        sol = solve_ivp(wrapped, (t0, t1), y0, method="RK45", rtol=cfg.rtol, atol=cfg.atol,
                        dense_output=True, events=events, t_eval=t_eval)
        if sol.status == -1:
            raise FlowError(f"integration failed: {sol.message}")
        status = "ok" if sol.status == 0 else "domain_exit"
        ts = np.asarray(sol.t, dtype=float)
        ys = np.asarray(sol.y, dtype=float).T.reshape(len(ts), y0.size)
        if status == "domain_exit":
            if cfg.on_exit == "raise":
                raise DomainError(f"trajectory leaves the chart domain at t = {sol.t_events[0][0]:.6g}")
            if t_eval is not None:
                keep = ts <= sol.t_events[0][0] if t1 > t0 else ts >= sol.t_events[0][0]
                ts, ys = ts[keep], ys[keep]
        info = {"method": "rk45", "atol": cfg.atol, "rtol": cfg.rtol, "rhs_evals": int(sol.nfev),
                "steps": int(len(sol.sol.ts) - 1) if sol.sol is not None else 0}
        if status == "domain_exit":
            info["exit_time"] = float(sol.t_events[0][0])
        return ODEResult(np.asarray(ts), np.asarray(ys), status, info, sol.sol)
    # fixed-step classical Runge-Kutta
    nsteps = max(1, int(math.ceil(abs(t1 - t0) / cfg.step - 1e-12)))
    if nsteps > cfg.max_steps:
        raise FlowError("max_steps exceeded")
    h = (t1 - t0) / nsteps
    ts = [t0]
    ys = [y0.copy()]
    ders = [None]
    status = "ok"
    y = y0.copy()
    for k in range(nsteps):
        t = t0 + k * h
        stages, ks = _rk4_stage_inputs(rhs, t, y, h)
        if stage_hook is not None:
            stage_hook(k, stages)
        ders[-1] = ks[0]
        y_new = y + h / 6.0 * (ks[0] + 2 * ks[1] + 2 * ks[2] + ks[3])
        if inside is not None and not inside(y_new):
            status = "domain_exit"
            if cfg.on_exit == "raise":
                raise DomainError(f"trajectory leaves the chart domain near t = {t + h:.6g}")
            break
        y = y_new
        ts.append(t0 + (k + 1) * h)
        ys.append(y.copy())
        ders.append(None)
    ders[-1] = rhs(ts[-1], ys[-1])
    ts_arr, ys_arr, ds_arr = np.array(ts), np.array(ys), np.array(ders)
    dense = _hermite(ts_arr, ys_arr, ds_arr)
    info = {"method": "rk4", "step": abs(h), "steps": len(ts) - 1}
    if status == "domain_exit":
        info["exit_time"] = float(ts_arr[-1])
    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)
        lo, hi = min(ts_arr[0], ts_arr[-1]), max(ts_arr[0], ts_arr[-1])
        t_eval = t_eval[(t_eval >= lo - 1e-14) & (t_eval <= hi + 1e-14)]
        return ODEResult(t_eval, np.array([dense(t) for t in t_eval]).reshape(len(t_eval), -1), status, info, dense)
    return ODEResult(ts_arr, ys_arr, status, info, dense)


def _hermite(ts, ys, ds):
    """Piecewise cubic Hermite interpolant through nodes with known derivatives."""

    def dense(t):
        t = float(t)
        if ts[-1] >= ts[0]:
            k = int(np.clip(np.searchsorted(ts, t) - 1, 0, len(ts) - 2)) if len(ts) > 1 else 0
        else:
            k = int(np.clip(np.searchsorted(-ts, -t) - 1, 0, len(ts) - 2)) if len(ts) > 1 else 0
        if len(ts) == 1:
            return ys[0].copy()
        h = ts[k + 1] - ts[k]
        s = (t - ts[k]) / h
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return h00 * ys[k] + h10 * h * ds[k] + h01 * ys[k + 1] + h11 * h * ds[k + 1]

    return dense


# ----------------------------------------------------------------- trajectories
@dataclass
class Trajectory:
    """Time samples of algebra-valued points produced by an integrator."""

    chart: Chart
    algebra: SmallAlgebra
    embed: AlgebraHom
    times: np.ndarray
    states: np.ndarray  # (N, m + n, dim)
    stepper_info: dict = field(default_factory=dict)
    status: str = "ok"
    dense: Callable | None = field(default=None, repr=False)

    @property
    def points(self) -> list[SuperPoint]:
        return [self.point(k) for k in range(len(self.times))]

    def point(self, k: int) -> SuperPoint:
        m = self.chart.m
        st = self.states[k]
        return SuperPoint(self.chart, self.algebra, st[:m], st[m:], self.embed, check=False)

    @property
    def final(self) -> SuperPoint:
        return self.point(len(self.times) - 1)

    def state_at(self, t: float) -> np.ndarray:
        if self.dense is None:
            raise FlowError("trajectory carries no dense output")
        return np.asarray(self.dense(t)).reshape(self.states.shape[1:])

    def point_at(self, t: float) -> SuperPoint:
        st = self.state_at(t)
        m = self.chart.m
        return SuperPoint(self.chart, self.algebra, st[:m], st[m:], self.embed, check=False)

    def column_names(self) -> list[str]:
        labels = self.algebra.basis_labels
        names = []
        for i in range(self.chart.m):
            names += [f"x{i + 1}.{lab}" for lab in labels]
        for j in range(self.chart.n):
            names += [f"th{j + 1}.{lab}" for lab in labels]
        return names

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time"] + self.column_names())
        for t, st in zip(self.times, self.states):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in st.ravel()])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_dict(self) -> dict:
        coords = {}
        for i in range(self.chart.m):
            coords[f"x{i + 1}"] = self.states[:, i, :].tolist()
        for j in range(self.chart.n):
            coords[f"th{j + 1}"] = self.states[:, self.chart.m + j, :].tolist()
        return {
            "generators": list(self.algebra.generators),
            "basis": self.algebra.basis_labels,
            "times": [float(t) for t in self.times],
            "coords": coords,
            "status": self.status,
            "stepper": self.stepper_info,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=1)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_dict(cls, data: dict, chart: Chart, algebra: SmallAlgebra, embed: AlgebraHom) -> "Trajectory":
        names = [f"x{i + 1}" for i in range(chart.m)] + [f"th{j + 1}" for j in range(chart.n)]
        N = len(data["times"])
        states = np.zeros((N, chart.dim, algebra.dim))
        for k, nm in enumerate(names):
            states[:, k, :] = np.asarray(data["coords"][nm])
        return cls(chart, algebra, embed, np.asarray(data["times"]), states, data.get("stepper", {}), data.get("status", "ok"))

    def map_algebra(self, h: AlgebraHom) -> "Trajectory":
        return Trajectory(self.chart_for(h), h.target, h.compose(self.embed), self.times.copy(),
                          h.apply_array(self.states), dict(self.stepper_info), self.status)

    def chart_for(self, h: AlgebraHom) -> Chart:
        return self.chart


# ------------------------------------------------------------------- flows
def _field_rhs(X, x0: SuperPoint):
    chart = x0.chart
    Q = x0.algebra
    m, n, dim = chart.m, chart.n, Q.dim

    def rhs(t, y):
        st = y.reshape(m + n, dim)
        pt = SuperPoint(chart, Q, st[:m], st[m:], x0.embed, check=False)
        ev, od = X.velocity(pt)
        return np.concatenate([ev.ravel(), od.ravel()])

    return rhs


def _inside(chart: Chart, dim: int):
    if chart.domain is None:
        return None
    m = chart.m

    def inside(y):
        return chart.contains(y.reshape(-1, dim)[:m, 0])

    return inside


def _body_index(chart: Chart, dim: int):
    return np.arange(chart.m) * dim


def integrate_flow(X, x0: SuperPoint, t_span, cfg: StepperConfig | None = None, t_eval=None) -> Trajectory:
    """Integral curve of the even field ``X`` through ``x0`` (direct algebra-valued RK)."""
    cfg = cfg or StepperConfig()
    if not X.chart.compatible(x0.chart):
        raise ChartError("point and field live on different charts")
    if getattr(X, "parity", 0) not in (0,):
        raise FlowError("only even vector fields generate flows (see evenize)")
    x0.chart.check(x0.body)
    t0, t1 = float(t_span[0]), float(t_span[1])
    Q = x0.algebra
    chart = x0.chart
    y0 = x0.stacked().ravel()
    res = solve(_field_rhs(X, x0), y0, t0, t1, cfg, _inside(chart, Q.dim), _body_index(chart, Q.dim),
                chart.domain, t_eval)
    states = res.states.reshape(len(res.times), chart.dim, Q.dim)
    dense = res.dense
    return Trajectory(chart, Q, x0.embed, res.times, states, res.info, res.status, dense)


def flow_point(X, x0: SuperPoint, t: float, cfg: StepperConfig | None = None) -> SuperPoint:
    """The point ``J_X(t, x0)`` for real ``t``."""
    cfg = cfg or StepperConfig()
    traj = integrate_flow(X, x0, (0.0, t), cfg, t_eval=[t] if t != 0 else None)
    if traj.status != "ok":
        raise DomainError(f"flow leaves the chart domain before t = {t}")
    return traj.final


def integrate_flow_layered(X, x0: SuperPoint, t_span, cfg: StepperConfig | None = None, t_eval=None) -> Trajectory:
    """Integral curve solved level by level in the nilpotent filtration.

    The body equation is solved first; level ``r`` then solves a linear
    equation whose inhomogeneity uses only the already computed levels.
    """
    cfg = cfg or StepperConfig()
    if not X.chart.compatible(x0.chart):
        raise ChartError("point and field live on different charts")
    x0.chart.check(x0.body)
    chart = x0.chart
    Q = x0.algebra
    t0, t1 = float(t_span[0]), float(t_span[1])
    full_rhs = _field_rhs(X, x0)
    shape = (chart.dim, Q.dim)
    y0 = x0.stacked()
    levels = sorted(set(int(v) for v in Q.filt_level))
    masks = [np.broadcast_to(Q.filt_level == r, shape).ravel() for r in levels]
    info = {"method": cfg.method, "layered": True, "levels": []}
    status = "ok"

    if cfg.method == "rk4":
        lower_stages: list = []  # per step: 4 full-size stage inputs of the levels solved so far
        lower_nodes = None
        for r, mask in zip(levels, masks):
            ys_level, stages_level, ts, st = _rk4_level(full_rhs, y0.ravel()[mask], mask, lower_stages, t0, t1, cfg,
                                                        _inside(chart, Q.dim) if r == 0 else None)
            if r == 0:
                status = st
            if lower_nodes is None:
                lower_nodes = np.zeros((len(ts), y0.size))
            lower_nodes[:, mask] = ys_level
            if not lower_stages:
                lower_stages = [[np.zeros(y0.size) for _ in range(4)] for _ in range(len(stages_level))]
            for k, sts in enumerate(stages_level):
                for s in range(4):
                    lower_stages[k][s][mask] = sts[s]
            info["levels"].append({"level": r, "steps": len(ts) - 1})
        states = lower_nodes
        times = np.asarray(ts)
        ders = np.array([full_rhs(t, y) for t, y in zip(times, states)])
        dense = _hermite(times, states, ders)
        if t_eval is not None:
            t_eval = np.asarray(t_eval, dtype=float)
            states = np.array([dense(t) for t in t_eval])
            times = t_eval
        return Trajectory(chart, Q, x0.embed, times, states.reshape(len(times), *shape), info, status, dense)

    sols = []

    def assemble(t, r_idx, yr):
        y = np.zeros(y0.size)
        for k in range(r_idx):
            y[masks[k]] = sols[k](t)
        y[masks[r_idx]] = yr
        return y

    for r_idx, (r, mask) in enumerate(zip(levels, masks)):
        if not mask.any():
            sols.append(lambda t: np.zeros(0))
            continue

        def rhs_r(t, yr, r_idx=r_idx, mask=mask):
            return full_rhs(t, assemble(t, r_idx, yr))[mask]

        res = solve(rhs_r, y0.ravel()[mask], t0, t1, cfg,
                    body_index=np.arange(chart.m) if r == 0 and chart.m else None,
                    domain=chart.domain if r == 0 else None)
        if r == 0 and res.status != "ok":
            status = res.status
            t1 = float(res.info.get("exit_time", res.times[-1]))
        sols.append(res.dense)
        info["levels"].append({"level": r, **{k: v for k, v in res.info.items() if k != "method"}})
    if t_eval is None:
        t_eval = np.linspace(t0, t1, 101)
    t_eval = np.asarray(t_eval, dtype=float)
    states = np.array([assemble(t, len(levels) - 1, sols[-1](t)) if masks[-1].any() else
                       assemble(t, len(levels) - 1, np.zeros(0)) for t in t_eval])
    dense = lambda t: assemble(t, len(levels) - 1, sols[-1](t))  # noqa: E731
    return Trajectory(chart, Q, x0.embed, t_eval, states.reshape(len(t_eval), *shape), info, status, dense)


def _rk4_level(full_rhs, yr0, mask, lower_stages, t0, t1, cfg, inside):
    """Classical RK4 for one filtration level, reusing the lower levels' stage inputs."""
    nsteps = max(1, int(math.ceil(abs(t1 - t0) / cfg.step - 1e-12)))
    if nsteps > cfg.max_steps:
        raise FlowError("max_steps exceeded")
    if lower_stages:
        nsteps = len(lower_stages)
    h = (t1 - t0) / max(1, int(math.ceil(abs(t1 - t0) / cfg.step - 1e-12)))
    size = mask.size
    ys = [yr0.copy()]
    ts = [t0]
    stages_out = []
    status = "ok"
    y = yr0.copy()
    for k in range(nsteps):
        t = t0 + k * h
        low = lower_stages[k] if lower_stages else [np.zeros(size)] * 4

        def F(tt, yr, s):
            full = low[s].copy()
            full[mask] = yr
            return full_rhs(tt, full)[mask]

        Y1 = y
        k1 = F(t, Y1, 0)
        Y2 = y + 0.5 * h * k1
        k2 = F(t + 0.5 * h, Y2, 1)
        Y3 = y + 0.5 * h * k2
        k3 = F(t + 0.5 * h, Y3, 2)
        Y4 = y + h * k3
        k4 = F(t + h, Y4, 3)
        y_new = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if inside is not None:
            full = np.zeros(size)
            full[mask] = y_new
            if not inside(full):
                status = "domain_exit"
                if cfg.on_exit == "raise":
                    raise DomainError(f"trajectory leaves the chart domain near t = {t + h:.6g}")
                break
        stages_out.append((Y1, Y2, Y3, Y4))
        y = y_new
        ys.append(y.copy())
        ts.append(t0 + (k + 1) * h)
    return np.array(ys), stages_out, ts, status


# ------------------------------------------------------------ super time
def iterated_applications(X: SuperVectorField, order: int) -> list[list[SuperFunction]]:
    """``[X^k z^c for all coordinates c]`` for ``k = 0 .. order``."""
    chart = X.chart
    cur = [chart.coordinate(c) for c in range(chart.dim)]
    out = [cur]
    for _ in range(order):
        cur = [X.apply(f) for f in cur]
        out.append(cur)
    return out


def eval_flow_super_time(X: SuperVectorField, x0: SuperPoint, t, cfg: StepperConfig | None = None) -> SuperPoint:
    """``J_X(t, x0)`` for an even algebra-valued time ``t = t# + c``.

    The nilpotent part enters through the exact time-Taylor series
    ``sum_k c^k / k! (X^k z)(J(t#))``.
    """
    if isinstance(t, AlgebraElement):
        c = t.nilpotent_part()
        tb = t.body
        if not t.is_even():
            raise ValueError("flow time must be even")
    else:
        c, tb = None, float(t)
    base = x0 if tb == 0.0 else flow_point(X, x0, tb, cfg)
    if c is None or c.is_zero():
        return base
    Q = x0.algebra
    c = x0.lift(c) if c.algebra is not Q else c
    d = Q.nilpotency_index
    powers = [Q.one()]
    for k in range(1, d):
        nxt = powers[-1] * c
        if nxt.is_zero():
            break
        powers.append(nxt)
    iters = iterated_applications(X, len(powers) - 1)
    out = np.zeros((x0.chart.dim, Q.dim))
    fact = 1.0
    for k, ck in enumerate(powers):
        if k:
            fact *= k
        for comp, f in enumerate(iters[k]):
            val = evaluate(f, base) if k else base.coord(comp)
            out[comp] += Q.mul_arrays(ck.coeffs, val.coeffs) / fact
    m = x0.chart.m
    return SuperPoint(x0.chart, Q, out[:m], out[m:], x0.embed, check=False)


def flow_morphism_nilpotent(X: SuperVectorField, a: AlgebraElement) -> SuperMorphism:
    """``J_X(a, .)`` for a nilpotent even parameter ``a`` as a supermorphism."""
    chart = X.chart
    if a.algebra is not chart.algebra:
        raise ValueError("time must lie in the chart's parameter algebra")
    if a.body != 0.0 or not a.is_even():
        raise ValueError("time must be even and nilpotent")
    d = chart.algebra.nilpotency_index
    powers = [chart.algebra.one()]
    while len(powers) < d:
        nxt = powers[-1] * a
        if nxt.is_zero():
            break
        powers.append(nxt)
    iters = iterated_applications(X, len(powers) - 1)
    comps = []
    for c in range(chart.dim):
        f = chart.zero()
        fact = 1.0
        for k, ak in enumerate(powers):
            if k:
                fact *= k
            f = f + chart.const(ak * (1.0 / fact)) * iters[k][c]
        comps.append(f)
    return SuperMorphism(chart, chart, comps[: chart.m], comps[chart.m :])


# ----------------------------------------------------------------- flow laws
def flow_law_residual(X, x: SuperPoint, s: float, t: float, cfg: StepperConfig | None = None) -> float:
    """Sup-norm of ``J_X(s, J_X(t, x)) - J_X(s + t, x)``."""
    cfg = cfg or StepperConfig()
    xt = flow_point(X, x, t, cfg)
    lhs = flow_point(X, xt, s, cfg)
    rhs = flow_point(X, x, s + t, cfg)
    return lhs.distance(rhs)


def body_commutation_residual(X: SuperVectorField, x: SuperPoint, t_span, cfg: StepperConfig | None = None, samples: int = 11) -> float:
    """Largest difference between the body of the super trajectory and the classical one."""
    cfg = cfg or StepperConfig()
    t_eval = np.linspace(t_span[0], t_span[1], samples)
    traj = integrate_flow(X, x, t_span, cfg, t_eval)
    Xb = X.body()
    pb = SuperPoint.from_elements(Xb.chart, [float(v) for v in x.body], [Xb.chart.algebra.zero()] * x.chart.n)
    tb = integrate_flow(Xb, pb, t_span, cfg, t_eval)
    k = min(len(traj.times), len(tb.times))
    return float(np.max(np.abs(traj.states[:k, : x.chart.m, 0] - tb.states[:k, : x.chart.m, 0])))


def commutator_points(X: SuperVectorField, Y: SuperVectorField, a: AlgebraElement, b: AlgebraElement, point: SuperPoint):
    """Both orderings of the group commutator of ``J_X(a, .)`` and ``J_Y(b, .)`` at a point.

    Returns ``(phi psi phi^-1 psi^-1 (p), psi phi psi^-1 phi^-1 (p))``.
    """
    fa, fa_inv = flow_morphism_nilpotent(X, a), flow_morphism_nilpotent(X, -a)
    gb, gb_inv = flow_morphism_nilpotent(Y, b), flow_morphism_nilpotent(Y, -b)
    p1 = apply_point(fa, apply_point(gb, apply_point(fa_inv, apply_point(gb_inv, point))))
    p2 = apply_point(gb, apply_point(fa, apply_point(gb_inv, apply_point(fa_inv, point))))
    return p1, p2


def nilpotent_flow_identities(X: SuperVectorField, Y: SuperVectorField, f: SuperFunction, Z: SuperVectorField,
                              a: AlgebraElement, b: AlgebraElement, points: Sequence[SuperPoint]) -> dict:
    """Residuals of the three nilpotent-time identities at sample points.

    ``pullback``: ``f o J_X(a, .) - (f + a X f)``;
    ``related``: ``Z`` versus ``Z - a [X, Z]`` under ``J_X(a, .)``;
    ``commutator``: ``[J_X(a, .), J_Y(b, .)]`` versus ``J_{[Y, X]}(ab, .)`` with the
    commutator ``phi psi phi^-1 psi^-1``; ``commutator_swapped`` uses the other order.
    """
    from .morphisms import pullback, related, residual_norm

    chart = X.chart
    phi = flow_morphism_nilpotent(X, a)
    res_i = residual_norm([pullback(phi, f) - (f + chart.const(a) * X.apply(f))], points)
    W = Z - chart.const(a) * bracket(X, Z)
    res_ii = residual_norm(related(phi, Z, W), points)
    target = flow_morphism_nilpotent(bracket(Y, X), a * b)
    res_iii = 0.0
    res_iii_swapped = 0.0
    for pt in points:
        p1, p2 = commutator_points(X, Y, a, b, pt)
        ref = apply_point(target, pt)
        res_iii = max(res_iii, p1.distance(ref))
        res_iii_swapped = max(res_iii_swapped, p2.distance(ref))
    return {"pullback": res_i, "related": res_ii, "commutator": res_iii, "commutator_swapped": res_iii_swapped}


def flow_differential(X: SuperVectorField, x: SuperPoint, t: float, cfg: StepperConfig | None = None):
    """``J_X(t, x)`` and ``D[i, k] = d_i J^k`` at ``x`` by nilpotent-generator adjunction.

    Even directions use ``eps = e1 e2``; odd directions a fresh odd ``eta`` with
    ``J(xi + eta) = J + eta d_xi J`` (left derivatives).
    """
    from .algebra import left_coefficient, restrict

    cfg = cfg or StepperConfig()
    chart = x.chart
    Q = x.algebra
    D = np.zeros((chart.dim, chart.dim, Q.dim))
    base = None
    for i in range(chart.dim):
        nnew = 2 if i < chart.m else 1
        big, inc, gens = extend(Q, [f"_d{k}" for k in range(nnew)], front=True)
        xp = x.map_algebra(inc)
        even, odd = xp.even.copy(), xp.odd.copy()
        if i < chart.m:
            even[i] += (gens[0] * gens[1]).coeffs
        else:
            odd[i - chart.m] += gens[0].coeffs
        yp = flow_point(X, xp.with_coords(even, odd, check=False), t, cfg)
        arr = yp.stacked()
        D[i] = left_coefficient(arr, big, Q, (1 << nnew) - 1)
        if base is None:
            st = restrict(arr, big, Q)
            base = SuperPoint(chart, Q, st[: chart.m], st[chart.m :], x.embed, check=False)
    if base is None:
        base = flow_point(X, x, t, cfg)
    return base, D


def random_polynomial_field(chart: Chart, rng, degree: int = 2, scale: float = 0.3) -> SuperVectorField:
    """Even field with random real polynomial coefficients.

    Even components are polynomials of total degree ``degree`` in the even
    coordinates times the even odd-monomials ``1`` and ``xi^1 xi^2``; odd
    components are linear in the odd coordinates with polynomial coefficients.
    """
    rng = np.random.default_rng(rng)
    xs = [chart.coordinate(i) for i in range(chart.m)]
    th = [chart.coordinate(chart.m + j) for j in range(chart.n)]
    monos = [chart.const(1.0)]
    frontier = [chart.const(1.0)]
    for _ in range(degree):
        frontier = [f * x for f in frontier for x in xs]
        monos += frontier

    def poly():
        out = chart.zero()
        for mono in monos:
            out = out + float(rng.normal(scale=scale)) * mono
        return out

    A = []
    for _ in range(chart.m):
        a = poly()
        if chart.n >= 2:
            a = a + poly() * th[0] * th[1]
        A.append(a)
    D = []
    for _ in range(chart.n):
        d = chart.zero()
        for t in th:
            d = d + poly() * t
        D.append(d)
    return SuperVectorField(chart, A, D)
