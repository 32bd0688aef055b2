"""How large must the Nitsche penalty be?

The Stokes velocity form is grad-grad minus the two normal-flux terms
plus zeta/h_E times the boundary mass. It is coercive only if zeta is big
enough. On each boundary cell the local 3x3 form gives a sufficient test,
and its smallest eigenvalue changes sign at the threshold. This script
prints the local bound, the smallest eigenvalue of the global velocity
form and the resulting errors for a few values of zeta.

Run: python demos/stokes_penalty.py
"""
import warnings

import numpy as np

from glpsfem import (
    StabilizationParams,
    assemble,
    build_initial_mesh,
    compute_errors,
    solve,
    stokes_reference_problem,
    uniform_refine,
)
from glpsfem.assembly import nitsche_local_eigenvalues

warnings.simplefilter("ignore", RuntimeWarning)
problem = stokes_reference_problem()
small = uniform_refine(build_initial_mesh(2))
mesh = uniform_refine(uniform_refine(small))

print(" zeta  local-min  global-min   |u-uh|   |grad e|   |p-ph|")
for zeta in (1.0, 2.0, 3.0, 4.0, 8.0, 32.0):
    params = StabilizationParams(1.0, zeta)
    a = assemble(small, params, problem).blocks["a"].toarray()
    glob = np.linalg.eigvalsh(0.5 * (a + a.T)).min()
    loc = nitsche_local_eigenvalues(small, zeta).min()
    row = compute_errors(solve(assemble(mesh, params, problem)), problem, mesh, params)
    print(f"{zeta:5.1f} {loc:10.3f} {glob:11.3f} {row.err_u_l2:9.2e} "
          f"{row.err_u_h1:9.2e} {row.err_p_l2:9.2e}")

# The global form turns positive somewhat before the local bound does;
# the local test is cheap and never gives a false all-clear.
