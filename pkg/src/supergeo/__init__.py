"""Super manifolds over small Grassmann algebras: superfunctions, flows, Lie groups, metrics and mechanics."""
from .algebra import (
    AlgebraElement,
    AlgebraError,
    AlgebraHom,
    SmallAlgebra,
    ZeroBody,
    body_hom,
    grassmann,
    reals,
    rescaling_hom,
    tensor,
)
from .expr import DomainError, ParseError, parse_scalar
from .fields import Chart, ChartError, SuperFunction, SuperPoint, evaluate, generic_point, parse_element
from .morphisms import SuperMorphism, apply_point, compose, pullback, related
from .flows import (
    FlowError,
    StepperConfig,
    SuperVectorField,
    Trajectory,
    bracket,
    eval_flow_super_time,
    integrate_flow,
    integrate_flow_layered,
    random_polynomial_field,
)
from .lie import ChartGroup, GroupError, generic_points, group_exp
from .geometry import Connection, MetricError, SingularBody, SuperMetric, scalar_curvature, supermatrix_invert
from .mechanics import Bundle, Mechanics, exp_map, geodesic_field, integrate_geodesic
from .config import ConfigError, RunConfig, parse_config

__version__ = "0.1.0"
