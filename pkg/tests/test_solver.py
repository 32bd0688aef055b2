import numpy as np
import pytest
import scipy.linalg as sla

from glpsfem.assembly import assemble, darcy_reference_problem, linear_pressure_problem, stokes_reference_problem
from glpsfem.mesh import build_initial_mesh, uniform_refine
from glpsfem.solver import (
    MAX_INFSUP_CELLS,
    SingularSystemError,
    inf_sup_estimate,
    solve,
    symmetrized,
)
from glpsfem.stabilization import StabilizationParams


@pytest.mark.parametrize("mode", ["darcy", "stokes"])
def test_symmetrized_matrix_is_symmetric(mesh64, mode):
    prob = darcy_reference_problem() if mode == "darcy" else stokes_reference_problem()
    S, _ = symmetrized(assemble(mesh64, StabilizationParams.default(mode), prob))
    assert abs(S - S.T).max() < 1e-12 * abs(S).max()


def test_direct_and_minres_agree(mesh64):
    system = assemble(mesh64, StabilizationParams(10.0), darcy_reference_problem())
    a = solve(system)
    b = solve(system, method="minres")
    assert a.method == "direct" and b.method == "minres"
    np.testing.assert_allclose(b.pressure.coefficients, a.pressure.coefficients, atol=1e-8)
    assert abs(a.mean_violation) < 1e-13


def test_unknown_method(mesh16):
    system = assemble(mesh16, StabilizationParams(10.0), darcy_reference_problem())
    with pytest.raises(ValueError):
        solve(system, method="cg")


def test_unconstrained_system_is_rejected_with_diagnosis(mesh16):
    system = assemble(mesh16, StabilizationParams(10.0), darcy_reference_problem(), constrain=False)
    with pytest.raises(SingularSystemError, match="attach_mean_constraint"):
        solve(system)


@pytest.mark.parametrize("mode", ["darcy", "stokes"])
def test_patch_problem_solved_exactly(mesh64, mode):
    prob = linear_pressure_problem(mode, (1.0, 0.0))
    sol = solve(assemble(mesh64, StabilizationParams.default(mode), prob))
    x, y = mesh64.vertices.T
    np.testing.assert_allclose(sol.pressure.coefficients, x - 0.5, atol=1e-11)
    np.testing.assert_allclose(sol.velocity.coefficients, 0.0, atol=1e-11)
    assert abs(sol.multiplier) < 1e-11


def _inf_sup_oracle(system, N):
    # sigma_min^2 as the smallest generalized eigenvalue of (A^T N^-1 A, N)
    n = 3 * system.layout.n_vertices
    A = system.matrix[:n, :n].toarray()
    c = np.concatenate([np.zeros(2 * system.layout.n_vertices), system.blocks["mean"]])
    Z = sla.null_space(c[None, :])
    Az, Nz = Z.T @ A @ Z, Z.T @ N @ Z
    G = Az.T @ np.linalg.solve(Nz, Az)
    return np.sqrt(sla.eigh(G, Nz, eigvals_only=True).min())


@pytest.mark.parametrize("mode", ["darcy", "stokes"])
def test_inf_sup_against_generalized_eigenproblem(mesh16, mode):
    from glpsfem.assembly import glp_norm_matrix
    prob = darcy_reference_problem() if mode == "darcy" else stokes_reference_problem()
    system = assemble(mesh16, StabilizationParams.default(mode), prob)
    g = inf_sup_estimate(system)
    assert g > 0
    assert g == pytest.approx(_inf_sup_oracle(system, glp_norm_matrix(system).toarray()), rel=1e-8)


def test_inf_sup_refuses_large_meshes():
    mesh = build_initial_mesh(2)
    while mesh.n_cells <= MAX_INFSUP_CELLS:
        mesh = uniform_refine(mesh)
    system = assemble(mesh, StabilizationParams(10.0), darcy_reference_problem())
    with pytest.raises(ValueError, match="limit"):
        inf_sup_estimate(system)


def test_identity_perturbed_toy_system(mesh16):
    import scipy.sparse as sp
    from dataclasses import replace
    system = assemble(mesh16, StabilizationParams(10.0), darcy_reference_problem())
    n = system.layout.size
    rng = np.random.default_rng(3)
    E = sp.random(n, n, density=0.05, random_state=4, format="csr")
    M = (sp.identity(n) + 0.1 * (E + E.T)).tocsr()
    b = rng.standard_normal(n)
    toy = replace(system, matrix=M, rhs=b)
    sol = solve(toy)
    x = np.linalg.solve(M.toarray(), b)
    np.testing.assert_allclose(sol.pressure.coefficients, x[system.layout.p], atol=1e-12)
    np.testing.assert_allclose(sol.velocity.coefficients, x[system.layout.u], atol=1e-12)


def test_zero_rhs_gives_zero_and_is_deterministic(mesh64):
    from dataclasses import replace
    system = assemble(mesh64, StabilizationParams(10.0), darcy_reference_problem())
    sol = solve(replace(system, rhs=np.zeros_like(system.rhs)))
    assert not np.any(sol.velocity.coefficients) and not np.any(sol.pressure.coefficients)
    a, b = solve(system), solve(system)
    assert a.pressure.coefficients.tobytes() == b.pressure.coefficients.tobytes()


def test_inf_sup_regression_baseline(mesh16):
    g = inf_sup_estimate(assemble(mesh16, StabilizationParams(10.0), darcy_reference_problem()))
    assert g == pytest.approx(0.3766422862976649, rel=1e-8)


def test_stabilization_improves_inf_sup(mesh16, mesh64):
    for mesh in (mesh16, mesh64):
        g = [inf_sup_estimate(assemble(mesh, StabilizationParams(b), darcy_reference_problem()))
             for b in (0.0, 1.0, 10.0)]
        assert g[0] < g[1] and g[0] < g[2]


def test_inf_sup_rejects_indefinite_norm(mesh16):
    system = assemble(mesh16, StabilizationParams(10.0), darcy_reference_problem())
    n = 3 * mesh16.n_vertices
    with pytest.raises(ValueError, match="positive definite"):
        inf_sup_estimate(system, norm_matrix=-np.eye(n))
