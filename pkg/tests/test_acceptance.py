"""Acceptance criteria, one test (and one summary line) per criterion.

Run ``pytest tests/test_acceptance.py -v`` for the summary section, or execute
this file directly to print the lines without pytest.
"""
import math
import time

import numpy as np
import pytest

from supergeo.algebra import grassmann, invert, parse_algebra_spec, tensor
from supergeo.fields import Chart, SuperPoint, evaluate, generic_point
from supergeo.flows import (StepperConfig, SuperVectorField, body_commutation_residual, bracket,
                            eval_flow_super_time, flow_law_residual, flow_morphism_nilpotent, integrate_flow,
                            integrate_flow_layered, nilpotent_flow_identities, random_polynomial_field)
from supergeo.geometry import (Connection, SuperMetric, flow_metric_pullback_residual, matmul,
                               parallel_obstruction_01, scalar_curvature, supermatrix_invert)
from supergeo.lie import deformed_r01, generic_points, group_axiom_residuals, right_invariant_residual
from supergeo.mechanics import Mechanics, gauss_lemma_residual, geodesic_residual, integrate_geodesic, scaling_residual
from supergeo.morphisms import apply_point, residual_norm

try:
    from conftest import ACCEPTANCE
except ImportError:  # executed as a script
    ACCEPTANCE = {}

RK45 = StepperConfig("rk45", atol=1e-11, rtol=1e-11)
CONFORMAL = "exp(C*(x1^2 + x2^2))"
GAMMA_REF = {(0, 0, 0): "C*x1", (0, 0, 1): "-C*x2", (0, 1, 0): "C*x2"}


def record(k, ok, detail):
    ACCEPTANCE[k] = (bool(ok), detail)
    print(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def conformal(C, algebra=None):
    c = Chart(2, 0, algebra) if algebra is not None else Chart(2, 0)
    return c, SuperMetric.parse(c, [[CONFORMAL, "0"], ["0", CONFORMAL]], {"C": C})


def nilpotent_c():
    A = grassmann(2, "a")
    return A, A.gen(0) * A.gen(1)


# ------------------------------------------------------------------- 1
def criterion_1():
    """Christoffel symbols and scalar curvature of exp(C r^2)(dx^2 + dy^2)."""
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    out = {}
    A, Cn = nilpotent_c()
    for label, C, alg in (("real", 0.7, None), ("nilpotent", Cn, A)):
        c, g = conformal(C, alg)
        conn = Connection.levi_civita(g)
        S = scalar_curvature(g, conn)
        gam = lit = true_s = 0.0
        for _ in range(10):
            body = rng.uniform(-1, 1, size=2)
            p = SuperPoint.from_elements(c, list(body))
            G = conn.christoffel_at(p)
            for key, text in GAMMA_REF.items():
                gam = max(gam, float(np.max(np.abs(G[key] - evaluate(c.parse(text, {"C": C}), p).coeffs))))
            val = evaluate(S, p)
            lit = max(lit, (val - evaluate(c.parse("-4*C", {"C": C}), p)).norm())
            true_s = max(true_s, (val - evaluate(c.parse("-4*C*exp(-C*(x1^2 + x2^2))", {"C": C}), p)).norm())
        out[label] = (gam, lit, true_s)
    secs = time.perf_counter() - start
    return out, secs


def test_criterion_1_christoffel_and_curvature():
    out, secs = criterion_1()
    gam_r, lit_r, true_r = out["real"]
    gam_n, lit_n, _ = out["nilpotent"]
    ok = max(gam_r, gam_n, lit_n, lit_r) < 1e-10 and secs < 1.0
    record(1, ok, f"Gamma real {gam_r:.1e} nilpotent {gam_n:.1e}; S=-4C nilpotent {lit_n:.1e}, "
                  f"real {lit_r:.2e} (true -4C exp(-C r^2): {true_r:.1e}); {secs:.2f} s")
    assert max(gam_r, gam_n) < 1e-10
    assert lit_n < 1e-10
    assert true_r < 1e-10
    assert secs < 1.0


@pytest.mark.xfail(strict=True, reason="for real C the scalar curvature is -4C exp(-C r^2), not the constant -4C")
def test_criterion_1_constant_curvature_for_real_c():
    out, _ = criterion_1()
    assert out["real"][1] < 1e-10


# ------------------------------------------------------------------- 2
def test_criterion_2_odd_line_connection():
    start = time.perf_counter()
    A = grassmann(2, "b")
    c = Chart(0, 1, A)
    worst_exact = 0.0
    nonzero = True
    for C in (0.7, -1.3, A.gen(0) * A.gen(1)):
        consts = {"C": C}
        conn = Connection.from_entries(c, {(0, 0, 0): "C*th1"}, constants=consts)
        d = SuperVectorField.coordinate(c, 0)
        R = conn.curvature(d, d, [c.one()])[0] - c.parse("2*C", consts)
        T = conn.torsion(d, d).components[0] - c.parse("2*C*th1", consts)
        worst_exact = max(worst_exact, residual_norm([R, T], generic_points(c, 2)))
        for b in (A.zero(), A.gen(0), 3.0 * A.gen(1), A.gen(0) - A.gen(1)):
            r = parallel_obstruction_01(conn, b)
            want = c.const(-b) + c.parse("C*th1", consts)
            worst_exact = max(worst_exact, residual_norm([r - want], generic_points(c, 1)))
            nonzero &= not r.is_zero()
    secs = time.perf_counter() - start
    ok = worst_exact == 0.0 and nonzero and secs < 1.0
    record(2, ok, f"R=2C, T=2C th, obstruction -b + C th: max residual {worst_exact:.1e}; "
                  f"obstruction nonzero for all b: {nonzero}; {secs:.2f} s")
    assert worst_exact == 0.0 and nonzero and secs < 1.0


# ------------------------------------------------------------------- 3
def test_criterion_3_deformed_odd_line_group():
    start = time.perf_counter()
    A = grassmann(2, "a")
    alpha = A.gen(0)
    G = deformed_r01(alpha)
    axioms = max(group_axiom_residuals(G, seed=5).values())
    c = G.chart
    X = SuperVectorField.parse(c, [], ["1 + th1*al"], {"al": alpha})
    inv = right_invariant_residual(G, X)
    pts2 = generic_points(G.doubled, 2)
    inv_res = residual_norm(inv, pts2)
    inv_sym = all(r.is_zero() for r in inv)
    br = bracket(X, X) - 2.0 * (c.const(alpha) * X)
    br_sym = all(r.is_zero() for r in br.components)
    br_res = residual_norm(br.components, generic_points(c, 2))
    secs = time.perf_counter() - start
    ok = axioms < 1e-12 and inv_res == 0.0 and br_res == 0.0 and secs < 1.0
    record(3, ok, f"axioms {axioms:.1e}; right invariance {inv_res:.1e} (symbolic zero {inv_sym}); "
                  f"[X,X]-2aX {br_res:.1e} (symbolic zero {br_sym}); {secs:.2f} s")
    assert ok


# ------------------------------------------------------------------- 4 and 5
def corpus():
    c = Chart(2, 2)
    fields = [random_polynomial_field(c, 100 + k, degree=2, scale=0.3) for k in range(20)]
    points = [generic_point(c, [0.2 - 0.02 * k, 0.1], extra=2) for k in range(20)]
    return c, fields, points


def test_criterion_4_layered_solver():
    start = time.perf_counter()
    c, fields, points = corpus()
    t_eval = np.linspace(0, 1, 11)
    worst = 0.0
    status = True
    for X, p in zip(fields, points):
        assert p.algebra.dim == 16
        d = integrate_flow(X, p, (0, 1), RK45, t_eval)
        l = integrate_flow_layered(X, p, (0, 1), RK45, t_eval)
        status &= d.status == "ok" and l.status == "ok"
        worst = max(worst, float(np.max(np.abs(d.states - l.states))))
    # triangularity: perturb level-r data, lower levels must not move at all
    X, p = fields[0], points[0]
    Q = p.algebra
    base = integrate_flow_layered(X, p, (0, 1), RK45, t_eval)
    tri = 0.0
    for r in range(1, int(Q.filt_level.max()) + 1):
        even, odd = p.even.copy(), p.odd.copy()
        even[:, (Q.filt_level == r) & (Q.parity == 0)] += 0.25
        odd[:, (Q.filt_level == r) & (Q.parity == 1)] += 0.25
        pert = integrate_flow_layered(X, p.with_coords(even, odd), (0, 1), RK45, t_eval)
        low = Q.filt_level < r
        tri = max(tri, float(np.max(np.abs(pert.states[..., low] - base.states[..., low]))))
    secs = time.perf_counter() - start
    ok = worst < 1e-8 and tri == 0.0 and status and secs < 30
    record(4, ok, f"direct vs layered sup {worst:.1e} over 20 fields (dim 16); triangularity {tri:.1e}; "
                  f"{secs:.1f} s")
    assert ok


def test_criterion_5_flow_laws():
    start = time.perf_counter()
    c, fields, points = corpus()
    law = body = 0.0
    for X, p in zip(fields, points):
        law = max(law, flow_law_residual(X, p, 0.4, 0.5, RK45))
        body = max(body, body_commutation_residual(X, p, (0, 1), RK45, samples=11))
    # nilpotent-time identities over a parameter algebra with nilpotent times a, b
    A = grassmann(4, "a")
    c1 = Chart(1, 1, A)
    a = A.gen(0) * A.gen(1)
    b = A.gen(2) * A.gen(3)
    nil = 0.0
    for k in range(5):
        X = random_polynomial_field(c1, 200 + k, degree=2)
        Y = random_polynomial_field(c1, 300 + k, degree=2)
        Z = random_polynomial_field(c1, 400 + k, degree=1)
        f = c1.parse(f"exp({0.1 * (k + 1):.1f}*x1) + x1^2*th1 + sin(x1)")
        pts = generic_points(c1, 2, k)
        res = nilpotent_flow_identities(X, Y, f, Z, a, b, pts)
        nil = max(nil, res["pullback"], res["related"], res["commutator"])
        phi = flow_morphism_nilpotent(X, a)
        for p in pts:
            st = eval_flow_super_time(X, p, p.lift(a), RK45)
            nil = max(nil, st.distance(apply_point(phi, p)))
    secs = time.perf_counter() - start
    ok = law < 1e-7 and body < 1e-7 and nil < 1e-12
    record(5, ok, f"flow law {law:.1e}; body commutation {body:.1e}; nilpotent identities {nil:.1e}; {secs:.1f} s")
    assert ok


# ------------------------------------------------------------------- 6
def test_criterion_6_geodesics():
    start = time.perf_counter()
    A, Cn = nilpotent_c()
    scal = geo = 0.0
    t_eval = np.linspace(0, 1, 201)
    for C, alg in ((0.7, None), (Cn, A)):
        c, g = conformal(C, alg)
        conn = Connection.levi_civita(g)
        p = SuperPoint.from_elements(c, [0.2, -0.1])
        for v in ([0.4, 0.3], [-0.5, 0.2]):
            for s in (-1.0, 0.5, 2.0):
                scal = max(scal, scaling_residual(p, v, conn, s, 1.0, RK45))
            traj = integrate_geodesic(p, v, conn, (0, 1), RK45, t_eval)
            geo = max(geo, geodesic_residual(traj, conn))
    c, g = conformal(0.7)
    lc = Connection.levi_civita(g)
    tors = Connection.from_entries(c, {(0, 1, 0): "x2", (1, 0, 0): "-x2", (0, 1, 1): "x1", (1, 0, 1): "-x1"})
    p = SuperPoint.from_elements(c, [0.2, -0.1])
    a = integrate_geodesic(p, [0.4, 0.3], lc, (0, 1), RK45, t_eval)
    b = integrate_geodesic(p, [0.4, 0.3], lc + tors, (0, 1), RK45, t_eval)
    inv = float(np.max(np.abs(a.states - b.states)))
    secs = time.perf_counter() - start
    ok = scal < 1e-6 and geo < 1e-6 and inv < 1e-8
    record(6, ok, f"scaling {scal:.1e}; geodesic equation {geo:.1e}; torsion invariance {inv:.1e}; {secs:.1f} s")
    assert ok


# ------------------------------------------------------------------- 7
def test_criterion_7_gauss_lemma():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = {}
    c2 = Chart(2, 0)
    for label, (c, g) in (("euclidean", (c2, SuperMetric.euclidean(c2))), ("conformal", conformal(0.7))):
        p = SuperPoint.from_elements(c, [0.2, -0.1])
        worst[label] = max(gauss_lemma_residual(p, list(rng.normal(scale=0.5, size=2)), list(rng.normal(size=2)),
                                                g, cfg=RK45) for _ in range(10))
    c = Chart(1, 2)
    g = SuperMetric.euclidean(c)
    p = generic_point(c, [0.3], extra=2)
    Q = p.algebra
    odd = np.flatnonzero(Q.parity == 1)

    def odd_el():
        co = np.zeros(Q.dim)
        co[odd] = rng.normal(size=len(odd))
        return Q.element(co)

    worst["flat R^{1|2}"] = max(
        gauss_lemma_residual(p, [Q.scalar(rng.normal(scale=0.5)), odd_el(), odd_el()],
                             [Q.scalar(rng.normal()), odd_el(), odd_el()], g, cfg=RK45)
        for _ in range(10))
    secs = time.perf_counter() - start
    ok = max(worst.values()) < 1e-6 and secs < 10
    record(7, ok, "; ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {secs:.1f} s")
    assert ok


# ------------------------------------------------------------------- 8
def test_criterion_8_mechanics():
    start = time.perf_counter()
    span = (0.0, 2.0)
    rows = {}
    # (a) harmonic oscillator on R, nilpotent initial spread
    A, C = nilpotent_c()
    c = Chart(1, 0, A)
    m = Mechanics(SuperMetric.parse(c, [["1"]]), c.parse("0.5*x1^2"))
    p = SuperPoint.from_elements(c, [0.3 + C])
    res = m.equivalence_checks(p, [0.2 - C], span, RK45, samples=401)
    closed = 0.0
    for t, st in zip(res["newton"].times, res["newton"].states):
        closed = max(closed, float(np.max(np.abs(st[0] - ((0.3 + C) * math.cos(t) + (0.2 - C) * math.sin(t)).coeffs))))
    rows["oscillator"] = res
    # (b) flat R^{1|2}
    A4 = grassmann(4, "a")
    c = Chart(1, 2, A4)
    m = Mechanics(SuperMetric.euclidean(c), c.parse("0.5*x1^2"))
    p = SuperPoint.from_elements(c, [0.3], [A4.gen(0), A4.gen(1)])
    rows["flat R^{1|2}"] = m.equivalence_checks(p, [0.2, A4.gen(2), A4.gen(3) + A4.gen(0)], span, RK45, samples=401)
    # (c) conformal metric with nilpotent C and V = x
    c, g = conformal(C, A)
    m = Mechanics(g, c.parse("x1"))
    p = SuperPoint.from_elements(c, [0.2, -0.1])
    rows["conformal"] = m.equivalence_checks(p, [0.4, 0.3], span, RK45, samples=401)
    secs = time.perf_counter() - start
    nvh = max(r["newton_vs_hamilton"] for r in rows.values())
    el = max(r["euler_lagrange_residual"] for r in rows.values())
    drift = max(max(r["energy_drift_newton"], r["energy_drift_hamilton"]) for r in rows.values())
    ok = nvh < 1e-6 and el < 1e-6 and closed < 1e-6 and drift < 1e-7
    record(8, ok, f"Newton vs Hamilton {nvh:.1e}; Euler-Lagrange {el:.1e}; closed form {closed:.1e}; "
                  f"energy drift {drift:.1e}/unit time; {secs:.1f} s")
    assert ok


# ------------------------------------------------------------------- 9
def test_criterion_9_killing_flows():
    start = time.perf_counter()
    c = Chart(2, 0)
    g = SuperMetric.euclidean(c)
    pts = generic_points(c, 3, 9)
    rot = SuperVectorField.parse(c, ["-x2", "x1"])
    dil = SuperVectorField.parse(c, ["x1", "0"])
    r = max(flow_metric_pullback_residual(rot, g, pts, t, RK45) for t in (0.5, 1.0))
    d = flow_metric_pullback_residual(dil, g, pts, 0.5, RK45)
    secs = time.perf_counter() - start
    ok = r < 1e-6 and d > 1e-3
    record(9, ok, f"rotation pullback {r:.1e}; x d_x deviation {d:.2f} at t = 0.5; {secs:.1f} s")
    assert ok


# ------------------------------------------------------------------ 10
def random_supermatrix(Q, rng, p, q):
    r = p + q
    M = np.zeros((r, r, Q.dim))
    for i in range(r):
        for j in range(r):
            par = int((i >= p) != (j >= p))
            mask = Q.parity == par
            M[i, j, mask] = rng.normal(scale=0.5, size=int(mask.sum()))
    # even blocks get a well-conditioned body, odd blocks have none
    M[:p, :p, 0] = rng.normal(scale=0.5, size=(p, p)) + 2.0 * np.eye(p)
    M[p:, p:, 0] = rng.normal(scale=0.5, size=(q, q)) + 2.0 * np.eye(q)
    return M


def test_criterion_10_algebra_kernel():
    start = time.perf_counter()
    algebras = [grassmann(q) for q in range(7)]
    algebras += [tensor(grassmann(2, "a"), grassmann(2, "b")), parse_algebra_spec("Grassmann(3) x Grassmann(3)")]
    for A in algebras:
        assert A.dim <= 64
        A.check_laws()
    rng = np.random.default_rng(10)
    inv_err = 0.0
    for A in algebras:
        for _ in range(20):
            co = rng.normal(scale=0.5, size=A.dim)
            co[0] = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2.0)
            x = A.element(co)
            y = invert(x)
            inv_err = max(inv_err, float(np.max(np.abs((x * y - 1).coeffs))), float(np.max(np.abs((y * x - 1).coeffs))))
    Q = grassmann(4)
    mat_err = 0.0
    for _ in range(100):
        r = int(rng.integers(1, 7))
        p = int(rng.integers(0, r + 1))
        M = random_supermatrix(Q, rng, p, r - p)
        Mi = supermatrix_invert(M, Q)
        eye = np.zeros_like(M)
        eye[..., 0] = np.eye(r)
        mat_err = max(mat_err, float(np.max(np.abs(matmul(Q, M, Mi) - eye))),
                      float(np.max(np.abs(matmul(Q, Mi, M) - eye))))
    secs = time.perf_counter() - start
    ok = inv_err < 1e-12 and mat_err < 1e-10
    record(10, ok, f"laws verified on {len(algebras)} algebras; invert {inv_err:.1e}; "
                   f"100 supermatrices {mat_err:.1e}; {secs:.1f} s")
    assert ok


if __name__ == "__main__":
    import sys

    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion") and "constant_curvature" not in name:
            try:
                fn()
            except AssertionError:
                pass
    sys.exit(0 if all(ok for ok, _ in ACCEPTANCE.values()) else 1)
