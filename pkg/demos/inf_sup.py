"""Discrete inf-sup constants with and without patch stabilization.

gamma_h is the smallest singular value of the system matrix measured in
the stabilized norm on the zero-mean pressure subspace. With beta = 0 the
P1/P1 Darcy pair loses stability as the mesh is refined; with beta > 0
the constant stays away from zero.

Run: python demos/inf_sup.py
"""
import warnings

from glpsfem import (
    StabilizationParams,
    assemble,
    darcy_reference_problem,
    inf_sup_estimate,
    stokes_reference_problem,
)
from glpsfem.verification import mesh_hierarchy

warnings.simplefilter("ignore", RuntimeWarning)
cases = [
    ("darcy beta=0", darcy_reference_problem(), StabilizationParams(0.0)),
    ("darcy beta=1", darcy_reference_problem(), StabilizationParams(1.0)),
    ("darcy beta=10", darcy_reference_problem(), StabilizationParams(10.0)),
    ("stokes zeta=2", stokes_reference_problem(), StabilizationParams(1.0, 2.0)),
    ("stokes zeta=5", stokes_reference_problem(), StabilizationParams(1.0, 5.0)),
]
meshes = [m for _, m, _ in mesh_hierarchy(4)]
print("case            " + " ".join(f"{m.n_cells:>9d}" for m in meshes))
for name, problem, params in cases:
    g = [inf_sup_estimate(assemble(m, params, problem)) for m in meshes]
    print(f"{name:15s} " + " ".join(f"{v:9.4f}" for v in g))
