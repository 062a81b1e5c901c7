"""A connection on the odd line R^{0|1} with Christoffel symbol C*th.

Curvature and torsion are computed symbolically; the parallel-section
equation has no solution whenever C != 0.
"""
from supergeo.algebra import grassmann
from supergeo.fields import Chart
from supergeo.flows import SuperVectorField
from supergeo.geometry import Connection, parallel_obstruction_01

if __name__ == "__main__":
    A = grassmann(2, "b")
    c = Chart(0, 1, A)
    conn = Connection.from_entries(c, {(0, 0, 0): "C*th1"}, constants={"C": 0.7})
    d = SuperVectorField.coordinate(c, 0)
    print("R(d, d) d   =", conn.curvature(d, d, [c.one()])[0])
    print("T(d, d)     =", conn.torsion(d, d).components[0])
    for b in (A.zero(), A.gen(0)):
        print(f"obstruction for b = {b}:", parallel_obstruction_01(conn, b))
