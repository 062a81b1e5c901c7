"""Geodesics of exp(C r^2)(dx^2 + dy^2) for a real and a nilpotent constant C.

With C = a*b the metric is a first-order deformation of the flat one; the
a*b coefficient of the endpoint is the exact derivative of the real-C
endpoint with respect to C at C = 0.
"""
import numpy as np

from supergeo.algebra import grassmann
from supergeo.fields import Chart, SuperPoint
from supergeo.flows import StepperConfig
from supergeo.geometry import Connection, SuperMetric
from supergeo.mechanics import exp_map, geodesic_residual, integrate_geodesic

RK45 = StepperConfig("rk45", atol=1e-11, rtol=1e-11)
METRIC = "exp(C*(x1^2 + x2^2))"


def endpoint(C, algebra=None):
    c = Chart(2, 0, algebra) if algebra is not None else Chart(2, 0)
    g = SuperMetric.parse(c, [[METRIC, "0"], ["0", METRIC]], {"C": C})
    conn = Connection.levi_civita(g)
    p = SuperPoint.from_elements(c, [0.2, -0.1])
    traj = integrate_geodesic(p, [0.4, 0.3], conn, (0, 1), RK45, np.linspace(0, 1, 101))
    print(f"  geodesic equation residual {geodesic_residual(traj, conn):.1e}")
    return exp_map(p, [0.4, 0.3], conn, RK45)


if __name__ == "__main__":
    A = grassmann(2, "a")
    nil = endpoint(A.gen(0) * A.gen(1), A)
    print("nilpotent C: endpoint coefficients (body, a1a2) =",
          [(round(float(x.body), 8), round(float(x.coeffs[-1]), 8)) for x in nil.coords()])
    h = 1e-5
    plus, minus = endpoint(h), endpoint(-h)
    print("central difference in C:", np.round((plus.body - minus.body) / (2 * h), 8))
