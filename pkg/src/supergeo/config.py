"""JSON run configurations: parsing, validation and the built objects.

Expressions are stored as strings so a configuration round-trips exactly; the
``build`` step turns them into charts, fields, metrics and points.  Coordinates
are named ``x1..xm`` (even) and ``th1..thn`` (odd); parameter generators and
named constants may appear in any expression.
"""
from __future__ import annotations

import json
import dataclasses as dc
from dataclasses import asdict, dataclass
from typing import Any

from .algebra import AlgebraError, SmallAlgebra, parse_algebra_spec, reals
from .expr import ParseError
from .fields import Chart, ChartError, SuperPoint, parse_element
from .flows import StepperConfig, SuperVectorField
from .geometry import Connection, SuperMetric

TASKS = ("flow", "geodesic", "mechanics", "check")
CHECKS = ("algebra", "christoffel", "scalar_curvature", "levi_civita", "killing", "layered", "flow_law",
          "body_commutation", "geodesic", "scaling", "torsion_invariance", "gauss", "equivalence")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending entry."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        if line is not None:
            message = f"{message} (line {line}, column {col})"
        super().__init__(message)
        self.line = line
        self.col = col


@dataclass
class RunConfig:
    task: str | None = None
    algebra: Any = dc.field(default_factory=list)
    chart: dict = dc.field(default_factory=lambda: {"m": 1, "n": 0})
    constants: dict = dc.field(default_factory=dict)
    field: dict | None = None
    metric: list | None = None
    connection: Any = None
    torsion: dict | None = None
    potential: str | None = None
    point: dict | None = None
    velocity: list | None = None
    t_span: list = dc.field(default_factory=lambda: [0.0, 1.0])
    stepper: dict = dc.field(default_factory=dict)
    samples: int = 101
    layered: bool = False
    seed: int = 0
    checks: list = dc.field(default_factory=list)
    expect: dict = dc.field(default_factory=dict)
    reference: dict = dc.field(default_factory=dict)
    outputs: dict = dc.field(default_factory=dict)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    def serialize(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def build(self) -> "Built":
        return _build(self)


@dataclass
class Built:
    """Objects constructed from a validated configuration."""

    config: RunConfig
    algebra: SmallAlgebra
    chart: Chart
    constants: dict
    stepper: StepperConfig
    field: SuperVectorField | None = None
    metric: SuperMetric | None = None
    connection: Connection | None = None
    torsion: Connection | None = None
    potential: Any = None
    point: SuperPoint | None = None
    velocity: list | None = None
    reference: dict = dc.field(default_factory=dict)


_KEYS = set(RunConfig.__dataclass_fields__)


def parse_config(text: str, build: bool = True) -> RunConfig:
    """Parse and validate configuration JSON text."""
    if not text.strip():
        raise ConfigError("empty configuration", 1, 1)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from None
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object", 1, 1)
    return from_dict(data, build)


def from_dict(data: dict, build: bool = True) -> RunConfig:
    unknown = sorted(set(data) - _KEYS)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    cfg = RunConfig(**data)
    _check_shape(cfg)
    if build:
        cfg.build()
    return cfg


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def _check_shape(cfg: RunConfig) -> None:
    if cfg.task is not None and cfg.task not in TASKS:
        raise ConfigError(f"task: unknown task {cfg.task!r}; expected one of {', '.join(TASKS)}")
    if not isinstance(cfg.algebra, str) and (
            not isinstance(cfg.algebra, list) or not all(isinstance(g, str) for g in cfg.algebra)):
        raise ConfigError("algebra: expected a list of generator names or 'Grassmann(q) x ...'")
    if not isinstance(cfg.chart, dict) or "m" not in cfg.chart or "n" not in cfg.chart:
        raise ConfigError("chart: expected an object with 'm' and 'n'")
    if not (isinstance(cfg.t_span, list) and len(cfg.t_span) == 2):
        raise ConfigError("t_span: expected [t0, t1]")
    if not isinstance(cfg.samples, int) or cfg.samples < 2:
        raise ConfigError("samples: expected an integer >= 2")
    for c in cfg.checks:
        if c not in CHECKS:
            raise ConfigError(f"checks: unknown check {c!r}")
    for k, v in cfg.expect.items():
        if not isinstance(v, (int, float)):
            raise ConfigError(f"expect.{k}: thresholds must be numbers")


def _expr(where: str, fn):
    try:
        return fn()
    except ParseError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    except (AlgebraError, ChartError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _build(cfg: RunConfig) -> Built:
    try:
        if isinstance(cfg.algebra, str):
            P = parse_algebra_spec(cfg.algebra)
        else:
            P = SmallAlgebra(cfg.algebra) if cfg.algebra else reals()
    except AlgebraError as exc:
        raise ConfigError(f"algebra: {exc}") from None
    names = set(P.generators)
    ch = cfg.chart
    m, n = int(ch["m"]), int(ch["n"])
    reserved = {f"x{i + 1}" for i in range(m)} | {f"th{j + 1}" for j in range(n)}
    clash = names & reserved
    if clash:
        raise ConfigError(f"algebra: generator names clash with coordinates: {sorted(clash)}")
    chart = _expr("chart", lambda: Chart(m, n, P, ch.get("domain")))

    consts: dict = {g: P.gen(g) for g in P.generators}
    for name, text in cfg.constants.items():
        if name in names or name in reserved:
            raise ConfigError(f"constants.{name}: name already used by a generator or coordinate")
        consts[name] = _expr(f"constants.{name}", lambda t=text: parse_element(str(t), P, consts))
        if consts[name].parity is None:
            raise ConfigError(f"constants.{name}: constant must have a definite parity")

    st = dict(cfg.stepper)
    stepper = _expr("stepper", lambda: StepperConfig(**st))
    out = Built(cfg, P, chart, consts, stepper)

    if cfg.field is not None:
        even = cfg.field.get("even", [])
        odd = cfg.field.get("odd", [])
        if len(even) != m or len(odd) != n:
            raise ConfigError(f"field: expected {m} even and {n} odd components")
        comps = []
        for k, t in enumerate(list(even) + list(odd)):
            slot = f"field.even[{k}]" if k < m else f"field.odd[{k - m}]"
            f = _expr(slot, lambda t=t: chart.parse(str(t), consts))
            if f.parity is None:
                raise ConfigError(f"{slot}: component is not homogeneous")
            comps.append(f)
        out.field = SuperVectorField(chart, comps[:m], comps[m:])
        if out.field.parity is None:
            raise ConfigError("field: components mix parities; the field must be even or odd")

    if cfg.metric is not None:
        N = m + n
        if len(cfg.metric) != N or any(len(r) != N for r in cfg.metric):
            raise ConfigError(f"metric: expected a {N}x{N} matrix")
        g = []
        for i, row in enumerate(cfg.metric):
            r = []
            for j, t in enumerate(row):
                f = _expr(f"metric[{i}][{j}]", lambda t=t: chart.parse(str(t), consts))
                want = (chart.parity(i) + chart.parity(j)) % 2
                if not f.is_zero() and f.parity != want:
                    kind = "even" if want == 0 else "odd"
                    raise ConfigError(f"metric[{i}][{j}]: entry {t!r} must be {kind} in this slot")
                r.append(f)
            g.append(r)
        out.metric = _expr("metric", lambda: SuperMetric(chart, g))

    out.connection = _connection(cfg.connection, "connection", chart, consts, out.metric)
    if cfg.torsion is not None:
        out.torsion = _connection(cfg.torsion, "torsion", chart, consts, None)

    if cfg.potential is not None:
        V = _expr("potential", lambda: chart.parse(str(cfg.potential), consts))
        if V.parity != 0:
            raise ConfigError("potential: must be even")
        out.potential = V

    if cfg.point is not None:
        ev = cfg.point.get("even", [])
        od = cfg.point.get("odd", [])
        if len(ev) != m or len(od) != n:
            raise ConfigError(f"point: expected {m} even and {n} odd coordinates")
        els = []
        for k, t in enumerate(list(ev) + list(od)):
            slot = f"point.even[{k}]" if k < m else f"point.odd[{k - m}]"
            a = _expr(slot, lambda t=t: parse_element(str(t), P, consts))
            want = 0 if k < m else 1
            if not a.is_zero() and a.parity != want:
                raise ConfigError(f"{slot}: coordinate must be {'even' if want == 0 else 'odd'}")
            els.append(a)
        out.point = _expr("point", lambda: SuperPoint.from_elements(chart, els[:m], els[m:]))

    if cfg.velocity is not None:
        if len(cfg.velocity) != m + n:
            raise ConfigError(f"velocity: expected {m + n} components")
        vel = []
        for k, t in enumerate(cfg.velocity):
            a = _expr(f"velocity[{k}]", lambda t=t: parse_element(str(t), P, consts))
            want = chart.parity(k)
            if not a.is_zero() and a.parity != want:
                raise ConfigError(f"velocity[{k}]: component must be {'even' if want == 0 else 'odd'}")
            vel.append(a)
        out.velocity = vel

    ref = cfg.reference
    unknown = sorted(set(ref) - {"christoffel", "scalar_curvature", "final"})
    if unknown:
        raise ConfigError(f"reference: unknown entries {', '.join(unknown)}")
    if "christoffel" in ref:
        gam = {}
        for key, t in ref["christoffel"].items():
            try:
                idx = tuple(int(s) for s in key.split(","))
            except ValueError:
                raise ConfigError(f"reference.christoffel: key {key!r} is not 'i,k,l'") from None
            if len(idx) != 3 or not all(0 <= x < m + n for x in idx):
                raise ConfigError(f"reference.christoffel: index {key!r} out of range")
            gam[idx] = _expr(f"reference.christoffel[{key}]", lambda t=t: chart.parse(str(t), consts))
        out.reference["christoffel"] = gam
    if "scalar_curvature" in ref:
        out.reference["scalar_curvature"] = _expr(
            "reference.scalar_curvature", lambda: chart.parse(str(ref["scalar_curvature"]), consts))
    if "final" in ref:
        fin = ref["final"]
        ev, od = fin.get("even", []), fin.get("odd", [])
        if len(ev) != m or len(od) != n:
            raise ConfigError(f"reference.final: expected {m} even and {n} odd coordinates")
        els = [_expr(f"reference.final[{k}]", lambda t=t: parse_element(str(t), P, consts))
               for k, t in enumerate(list(ev) + list(od))]
        out.reference["final"] = els
    return out


def _connection(spec, where, chart, consts, metric):
    if spec is None:
        return Connection.levi_civita(metric) if metric is not None else None
    if spec == "levi_civita":
        if metric is None:
            raise ConfigError(f"{where}: 'levi_civita' needs a metric")
        return Connection.levi_civita(metric)
    if spec == "trivial":
        return Connection.trivial(chart)
    if not isinstance(spec, dict) or "entries" not in spec:
        raise ConfigError(f"{where}: expected 'levi_civita', 'trivial' or an object with 'entries'")
    entries = {}
    N = chart.dim
    for e in spec["entries"]:
        if not (isinstance(e, list) and len(e) == 4):
            raise ConfigError(f"{where}.entries: each entry is [i, k, l, expression]")
        i, k, l, t = e
        if not all(isinstance(x, int) and 0 <= x < N for x in (i, k, l)):
            raise ConfigError(f"{where}.entries: index out of range in {e}")
        entries[(i, k, l)] = _expr(f"{where}[{i}][{k}][{l}]", lambda t=t: chart.parse(str(t), consts))
    return _expr(where, lambda: Connection.from_entries(chart, entries))
