"""Command line entry point: ``supergeo <task> config.json``.

Each task writes its trajectories (CSV and JSON) and a ``report.json`` with the
named residuals, their tolerances and pass flags into the output directory.
The exit code is 0 when every residual is within tolerance, 1 when a check
fails and 2 on configuration errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .algebra import AlgebraError
from .config import TASKS, Built, ConfigError, RunConfig, load_config
from .expr import DomainError
from .fields import SuperPoint, evaluate
from .flows import (StepperConfig, body_commutation_residual, flow_law_residual, integrate_flow,
                    integrate_flow_layered)
from .geometry import (compatibility_residual_at, killing_residual, levi_civita_at, matrix_residual_norm,
                       scalar_curvature, torsion_residual_at)
from .lie import generic_points
from .mechanics import (Bundle, Mechanics, gauss_lemma_residual, geodesic_residual, integrate_geodesic,
                        scaling_residual)

log = logging.getLogger("supergeo")

DEFAULT_TOL = {
    "algebra": 1e-12,
    "christoffel": 1e-10,
    "scalar_curvature": 1e-10,
    "compatibility": 1e-10,
    "torsion": 1e-10,
    "killing": 1e-10,
    "layered": 1e-8,
    "flow_law": 1e-7,
    "body_commutation": 1e-7,
    "final_error": 1e-8,
    "geodesic": 1e-6,
    "kinetic_drift": 1e-7,
    "scaling": 1e-6,
    "torsion_invariance": 1e-8,
    "gauss": 1e-6,
    "newton_vs_hamilton": 1e-6,
    "euler_lagrange_residual": 1e-6,
    "relatedness_residual": 1e-10,
    "energy_drift_newton": 1e-7,
    "energy_drift_hamilton": 1e-7,
}


class Report:
    def __init__(self, task: str, cfg: RunConfig, stepper: StepperConfig, seed: int):
        self.data = {"task": task, "seed": seed, "stepper": stepper.to_dict(), "results": {}, "artifacts": [],
                     "info": {}}
        self.expect = cfg.expect

    def add(self, name: str, value: float):
        tol = float(self.expect.get(name, DEFAULT_TOL.get(name, 1e-8)))
        value = float(value)
        ok = bool(np.isfinite(value) and value <= tol)
        self.data["results"][name] = {"value": value, "tolerance": tol, "pass": ok}
        print(f"{name:28s} {value:12.3e}  tol {tol:.1e}  {'PASS' if ok else 'FAIL'}")

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.data["results"].values())


def _require(b: Built, *names: str):
    for n in names:
        if getattr(b, n) is None:
            raise ConfigError(f"{n}: required for this task")


def _sample_points(b: Built, count: int, seed: int) -> list[SuperPoint]:
    # one algebra per point keeps the dimension small for charts with odd coordinates
    return [generic_points(b.chart, 1, seed + k)[0] for k in range(count)]


def _write_traj(traj, out: Path, stem: str, rep: Report):
    csv_path, json_path = out / f"{stem}.csv", out / f"{stem}.json"
    traj.to_csv(csv_path)
    traj.to_json(json_path)
    rep.data["artifacts"] += [csv_path.name, json_path.name]
    rep.data["info"][f"{stem}_status"] = traj.status


def _t_eval(cfg: RunConfig):
    return np.linspace(float(cfg.t_span[0]), float(cfg.t_span[1]), cfg.samples)


def run_flow(b: Built, rep: Report, out: Path):
    _require(b, "field", "point")
    cfg = b.config
    solver = integrate_flow_layered if cfg.layered else integrate_flow
    traj = solver(b.field, b.point, cfg.t_span, b.stepper, _t_eval(cfg))
    _write_traj(traj, out, "trajectory", rep)
    if "final" in b.reference:
        want = np.array([e.coeffs for e in b.reference["final"]])
        rep.add("final_error", float(np.max(np.abs(traj.final.stacked() - want))))


def run_geodesic(b: Built, rep: Report, out: Path):
    _require(b, "connection", "point", "velocity")
    cfg = b.config
    traj = integrate_geodesic(b.point, b.velocity, b.connection, cfg.t_span, b.stepper, _t_eval(cfg))
    _write_traj(traj, out, "geodesic", rep)
    rep.add("geodesic", geodesic_residual(traj, b.connection))
    if b.metric is not None:
        T = Mechanics(b.metric, None, b.connection).kinetic
        vals = np.array([evaluate(T, pt).coeffs for pt in traj.points])
        span = abs(traj.times[-1] - traj.times[0]) or 1.0
        rep.add("kinetic_drift", float(np.max(np.abs(vals - vals[0]))) / span)


def run_mechanics(b: Built, rep: Report, out: Path):
    _require(b, "metric", "point", "velocity")
    cfg = b.config
    M = Mechanics(b.metric, b.potential, b.connection)
    res = M.equivalence_checks(b.point, b.velocity, tuple(cfg.t_span), b.stepper, max(cfg.samples, 5))
    _write_traj(res["newton"], out, "newton", rep)
    _write_traj(res["hamilton"], out, "hamilton", rep)
    for k in ("newton_vs_hamilton", "euler_lagrange_residual", "relatedness_residual", "energy_drift_newton",
              "energy_drift_hamilton"):
        rep.add(k, res[k])


def _applicable(b: Built) -> list[str]:
    out = ["algebra"]
    if b.metric is not None:
        out.append("levi_civita")
        if "christoffel" in b.reference:
            out.append("christoffel")
        if "scalar_curvature" in b.reference:
            out.append("scalar_curvature")
        if b.field is not None:
            out.append("killing")
    if b.field is not None and b.point is not None:
        out += ["layered", "flow_law", "body_commutation"]
    if b.connection is not None and b.point is not None and b.velocity is not None:
        out += ["geodesic", "scaling"]
        if b.torsion is not None:
            out.append("torsion_invariance")
        if b.metric is not None:
            out.append("gauss")
    if b.metric is not None and b.point is not None and b.velocity is not None:
        out.append("equivalence")
    return out


def run_check(b: Built, rep: Report, out: Path, seed: int):
    cfg = b.config
    checks = cfg.checks or _applicable(b)
    pts = None

    def points():
        nonlocal pts
        if pts is None:
            pts = _sample_points(b, 10, seed)
        return pts

    t1 = float(cfg.t_span[1])
    for name in checks:
        log.info("check %s", name)
        if name == "algebra":
            b.algebra.check_laws()
            rep.add("algebra", 0.0)
        elif name == "christoffel":
            _require(b, "connection")
            ref = b.reference.get("christoffel", {})
            N = b.chart.dim
            worst = 0.0
            for pt in points():
                G = b.connection.christoffel_at(pt)
                for i in range(N):
                    for k in range(N):
                        for l in range(N):
                            want = evaluate(ref[(i, k, l)], pt).coeffs if (i, k, l) in ref else 0.0
                            worst = max(worst, float(np.max(np.abs(G[i, k, l] - want))))
            rep.add("christoffel", worst)
            p0 = b.point or points()[0]
            for (i, k, l), e in sorted(_nonzero_gamma(b.connection).items()):
                want = evaluate(ref[(i, k, l)], p0) if (i, k, l) in ref else 0.0
                print(f"  Gamma[{i}][{k}][{l}] = {evaluate(e, p0)}   reference {want}")
        elif name == "scalar_curvature":
            _require(b, "metric")
            S = scalar_curvature(b.metric, b.connection)
            want = b.reference["scalar_curvature"]
            p0 = b.point or points()[0]
            print(f"  scalar curvature = {evaluate(S, p0)}   reference {evaluate(want, p0)}")
            rep.add("scalar_curvature", max((evaluate(S, p) - evaluate(want, p)).norm() for p in points()))
        elif name == "levi_civita":
            _require(b, "metric")
            comp = tors = 0.0
            for pt in points():
                G = levi_civita_at(b.metric, pt)
                comp = max(comp, compatibility_residual_at(b.metric, G, pt))
                tors = max(tors, torsion_residual_at(G, b.chart.parities))
            rep.add("compatibility", comp)
            rep.add("torsion", tors)
        elif name == "killing":
            _require(b, "metric", "field")
            rep.add("killing", matrix_residual_norm(killing_residual(b.field, b.metric), points()))
        elif name == "layered":
            _require(b, "field", "point")
            te = np.linspace(float(cfg.t_span[0]), t1, 11)
            d = integrate_flow(b.field, b.point, cfg.t_span, b.stepper, te)
            l = integrate_flow_layered(b.field, b.point, cfg.t_span, b.stepper, te)
            k = min(len(d.times), len(l.times))
            rep.add("layered", float(np.max(np.abs(d.states[:k] - l.states[:k]))))
        elif name == "flow_law":
            _require(b, "field", "point")
            rep.add("flow_law", flow_law_residual(b.field, b.point, 0.4 * t1, 0.5 * t1, b.stepper))
        elif name == "body_commutation":
            _require(b, "field", "point")
            rep.add("body_commutation", body_commutation_residual(b.field, b.point, cfg.t_span, b.stepper))
        elif name == "geodesic":
            _require(b, "connection", "point", "velocity")
            traj = integrate_geodesic(b.point, b.velocity, b.connection, cfg.t_span, b.stepper, _t_eval(cfg))
            rep.add("geodesic", geodesic_residual(traj, b.connection))
        elif name == "scaling":
            _require(b, "connection", "point", "velocity")
            rep.add("scaling", max(scaling_residual(b.point, b.velocity, b.connection, s, t1, b.stepper)
                                   for s in (-1.0, 0.5, 2.0)))
        elif name == "torsion_invariance":
            _require(b, "connection", "torsion", "point", "velocity")
            te = _t_eval(cfg)
            a = integrate_geodesic(b.point, b.velocity, b.connection, cfg.t_span, b.stepper, te)
            c = integrate_geodesic(b.point, b.velocity, b.connection + b.torsion, cfg.t_span, b.stepper, te)
            k = min(len(a.times), len(c.times))
            rep.add("torsion_invariance", float(np.max(np.abs(a.states[:k] - c.states[:k]))))
        elif name == "gauss":
            _require(b, "metric", "point", "velocity")
            rng = np.random.default_rng(seed)
            worst = 0.0
            for _ in range(3):
                w = _random_direction(b, rng)
                worst = max(worst, gauss_lemma_residual(b.point, b.velocity, w, b.metric, b.connection, b.stepper))
            rep.add("gauss", worst)
        elif name == "equivalence":
            run_mechanics(b, rep, out)


def _nonzero_gamma(conn) -> dict:
    N = conn.chart.dim
    return {(i, k, l): conn.Gamma[i][k][l] for i in range(N) for k in range(N) for l in range(N)
            if not conn.Gamma[i][k][l].is_zero()}


def _random_direction(b: Built, rng) -> list:
    P = b.algebra
    odd = [k for k in range(P.dim) if P.parity[k] == 1]
    w = []
    for k in range(b.chart.dim):
        if b.chart.parity(k) == 0:
            w.append(P.scalar(float(rng.normal())))
        else:
            c = np.zeros(P.dim)
            for j in odd:
                c[j] = rng.normal()
            w.append(P.element(c))
    return w


def run(task: str, config_path, out_dir=None, stepper: dict | None = None, seed: int | None = None) -> int:
    """Execute one task; returns the process exit code."""
    cfg = load_config(config_path)
    if cfg.task is not None and cfg.task != task:
        raise ConfigError(f"task: configuration is for {cfg.task!r}, not {task!r}")
    if stepper:
        cfg.stepper = {**cfg.stepper, **stepper}
    if seed is not None:
        cfg.seed = seed
    b = cfg.build()
    out = Path(out_dir) if out_dir is not None else Path(cfg.outputs.get("dir", "supergeo_out"))
    out.mkdir(parents=True, exist_ok=True)
    rep = Report(task, cfg, b.stepper, cfg.seed)
    rep.data["config"] = str(config_path)
    start = time.perf_counter()
    if task == "flow":
        run_flow(b, rep, out)
    elif task == "geodesic":
        run_geodesic(b, rep, out)
    elif task == "mechanics":
        run_mechanics(b, rep, out)
    else:
        run_check(b, rep, out, cfg.seed)
    rep.data["info"]["seconds"] = time.perf_counter() - start
    rep.data["pass"] = rep.passed
    (out / "report.json").write_text(json.dumps(rep.data, indent=2))
    print(f"report written to {out / 'report.json'}: {'PASS' if rep.passed else 'FAIL'}")
    return 0 if rep.passed else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="supergeo", description="Flows, geodesics and mechanics on super charts.")
    p.add_argument("task", choices=TASKS)
    p.add_argument("config", help="JSON run configuration")
    p.add_argument("--out", help="output directory (default: supergeo_out or outputs.dir)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--rk4", type=float, metavar="STEP", help="fixed-step classical Runge-Kutta")
    g.add_argument("--rk45", type=float, nargs=2, metavar=("ATOL", "RTOL"), help="adaptive Dormand-Prince")
    p.add_argument("--seed", type=int, help="seed for sampled check points")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    stepper = None
    if args.rk4 is not None:
        stepper = {"method": "rk4", "step": args.rk4}
    elif args.rk45 is not None:
        stepper = {"method": "rk45", "atol": args.rk45[0], "rtol": args.rk45[1]}
    try:
        return run(args.task, args.config, args.out, stepper, args.seed)
    except ConfigError as exc:
        print(f"supergeo: configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"supergeo: {exc}", file=sys.stderr)
        return 2
    except (DomainError, AlgebraError, ArithmeticError) as exc:
        print(f"supergeo: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
