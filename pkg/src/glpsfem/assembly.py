"""Stabilized Darcy and Stokes systems with a zero-mean pressure border.

Unknowns are ordered ``[u (2V, interleaved), p (V), lambda (1)]``. The
stored matrix represents the bilinear form with rows indexed by test
functions, so ``y @ K @ x`` evaluates ``A_h(x, y)``. The velocity-pressure
coupling appears as ``-B^T`` (velocity rows) and ``+B`` (pressure rows),
which makes the matrix structurally but not numerically symmetric.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.io
import scipy.sparse as sp

from .fe_space import (
    P1Space,
    interpolate,
    load_vector,
    quadrature_for,
    scalar_mass,
    scalar_stiffness,
)
from .mesh import TriMesh, build_initial_mesh
from .stabilization import (
    StabilizationParams,
    assemble_S_sb,
    assemble_S_si,
    boundary_edge_mass,
    divergence_operator,
)

__all__ = [
    "DofLayout",
    "SaddleSystem",
    "ManufacturedProblem",
    "darcy_reference_problem",
    "stokes_reference_problem",
    "linear_pressure_problem",
    "zero_problem",
    "assemble_darcy",
    "assemble_stokes",
    "assemble",
    "attach_mean_constraint",
    "consistency_residual",
    "interpolant_vector",
    "glp_norm_matrix",
    "write_matrix_market",
    "nitsche_local_eigenvalues",
]

PI = np.pi


# ---------------------------------------------------------------- problems


@dataclass
class ManufacturedProblem:
    """Exact solution and derived data of a test case.

    Vector callables return arrays with a trailing axis of length 2; the
    velocity Jacobian has shape (..., 2, 2) with rows indexed by component.
    The pressure is shifted to zero mean at construction.
    """

    name: str
    mode: str
    velocity: Callable
    velocity_jacobian: Callable
    pressure_raw: Callable
    pressure_gradient: Callable
    forcing: Callable
    source: Callable = None
    pressure_offset: float = field(default=None)

    def __post_init__(self):
        if self.mode not in ("darcy", "stokes"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.source is None:
            self.source = lambda x, y: np.zeros(np.broadcast(x, y).shape)
        if self.pressure_offset is None:
            self.pressure_offset = _domain_mean(self.pressure_raw)

    def pressure(self, x, y):
        return self.pressure_raw(x, y) - self.pressure_offset

    def divergence(self, x, y):
        J = self.velocity_jacobian(x, y)
        return J[..., 0, 0] + J[..., 1, 1]


def _domain_mean(g):
    from .fe_space import integrate

    return integrate(_reference_mesh(), g, degree=8)


_REF_MESH = []


def _reference_mesh():
    if not _REF_MESH:
        _REF_MESH.append(build_initial_mesh(16))
    return _REF_MESH[0]


def _vec(a, b):
    a, b = np.broadcast_arrays(a, b)
    return np.stack([a, b], axis=-1)


def _mat(a, b, c, d):
    a, b, c, d = np.broadcast_arrays(a, b, c, d)
    return np.stack([np.stack([a, b], -1), np.stack([c, d], -1)], -2)


def darcy_reference_problem() -> ManufacturedProblem:
    """Darcy benchmark on the unit square with u.n = 0 and div u = 0."""
    s, c = np.sin, np.cos

    def u(x, y):
        return _vec(-PI * s(2 * PI * y) * s(PI * x) ** 2, PI * s(2 * PI * x) * s(PI * y) ** 2)

    def du(x, y):
        return _mat(
            -PI**2 * s(2 * PI * x) * s(2 * PI * y),
            -2 * PI**2 * c(2 * PI * y) * s(PI * x) ** 2,
            2 * PI**2 * c(2 * PI * x) * s(PI * y) ** 2,
            PI**2 * s(2 * PI * x) * s(2 * PI * y),
        )

    def p(x, y):
        return s(2 * PI * x) * s(2 * PI * y)

    def dp(x, y):
        return _vec(2 * PI * c(2 * PI * x) * s(2 * PI * y), 2 * PI * s(2 * PI * x) * c(2 * PI * y))

    def f(x, y):
        return u(x, y) + dp(x, y)

    return ManufacturedProblem("darcy-sine", "darcy", u, du, p, dp, f, pressure_offset=0.0)


def stokes_reference_problem() -> ManufacturedProblem:
    """Divergence-free Stokes benchmark vanishing on the boundary."""
    s, c = np.sin, np.cos
    k = 2 * PI

    def u(x, y):
        return _vec(-c(k * x) * s(k * y) + s(k * y), s(k * x) * c(k * y) - s(k * x))

    def du(x, y):
        return _mat(
            k * s(k * x) * s(k * y),
            -k * c(k * x) * c(k * y) + k * c(k * y),
            k * c(k * x) * c(k * y) - k * c(k * x),
            -k * s(k * x) * s(k * y),
        )

    def p(x, y):
        return k * (c(k * y) - c(k * x))

    def dp(x, y):
        return _vec(k * k * s(k * x), -k * k * s(k * y))

    def f(x, y):
        # -laplace(u) + grad(p)
        return _vec(
            -2 * k * k * c(k * x) * s(k * y) + k * k * s(k * y) + k * k * s(k * x),
            2 * k * k * s(k * x) * c(k * y) - k * k * s(k * x) - k * k * s(k * y),
        )

    return ManufacturedProblem("stokes-trig", "stokes", u, du, p, dp, f, pressure_offset=0.0)


def linear_pressure_problem(mode: str = "darcy", grad=(1.0, 0.0)) -> ManufacturedProblem:
    """u = 0 with a linear zero-mean pressure; the discrete space contains it."""
    a, b = grad

    def zero_vec(x, y):
        return _vec(np.zeros_like(x * 1.0), np.zeros_like(y * 1.0))

    def zero_jac(x, y):
        z = np.zeros(np.broadcast(x, y).shape)
        return _mat(z, z, z, z)

    return ManufacturedProblem(
        "linear-pressure",
        mode,
        zero_vec,
        zero_jac,
        lambda x, y: a * (x - 0.5) + b * (y - 0.5),
        lambda x, y: _vec(a + 0 * x, b + 0 * y),
        lambda x, y: _vec(a + 0 * x, b + 0 * y),
        pressure_offset=0.0,
    )


def zero_problem(mode: str = "darcy") -> ManufacturedProblem:
    return linear_pressure_problem(mode, grad=(0.0, 0.0))


# ------------------------------------------------------------------ system


@dataclass(frozen=True)
class DofLayout:
    n_vertices: int
    constrained: bool = True

    @property
    def u(self) -> slice:
        return slice(0, 2 * self.n_vertices)

    @property
    def p(self) -> slice:
        return slice(2 * self.n_vertices, 3 * self.n_vertices)

    @property
    def multiplier(self) -> int:
        return 3 * self.n_vertices

    @property
    def size(self) -> int:
        return 3 * self.n_vertices + (1 if self.constrained else 0)


@dataclass
class SaddleSystem:
    """Assembled stabilized system.

    ``blocks`` keeps the individual operators (mass, stabilization,
    coupling, ...) so norms and diagnostics can reuse them.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    layout: DofLayout
    mode: str
    mesh: TriMesh
    params: StabilizationParams
    blocks: dict

    def form(self, trial, test) -> float:
        """A_h(trial, test) for full-length coefficient vectors."""
        return float(np.asarray(test) @ (self.matrix @ np.asarray(trial)))

    def split(self, x):
        x = np.asarray(x)
        lam = x[self.layout.multiplier] if self.layout.constrained else 0.0
        return x[self.layout.u], x[self.layout.p], lam


def _coupling(mesh: TriMesh) -> sp.csr_matrix:
    """(V, 2V) matrix B with B[a, j] = b_h(phi_a, psi_j)."""
    D = divergence_operator(mesh)
    vol = mesh.incidence @ sp.diags(mesh.areas / 3.0) @ D
    n = mesh.boundary_normals
    V = mesh.n_vertices
    bd = sp.csr_matrix((V, 2 * V))
    for comp in (0, 1):
        Mc = boundary_edge_mass(mesh, weight=n[:, comp])
        P = sp.csr_matrix(
            (np.ones(V), (np.arange(V), 2 * np.arange(V) + comp)), shape=(V, 2 * V)
        )
        bd = bd + Mc @ P
    return (vol - bd).tocsr()


def _vector(mat: sp.spmatrix) -> sp.csr_matrix:
    """Scalar operator -> interleaved 2-component operator."""
    return sp.kron(mat, sp.identity(2), format="csr")


def _nitsche_flux(mesh: TriMesh) -> sp.csr_matrix:
    """(V, V) matrix N[i, j] = sum_E int_E (grad phi_j . n) phi_i ds."""
    e = mesh.boundary_edges
    K = mesh.boundary_cells
    n = mesh.boundary_normals
    h = mesh.boundary_lengths
    g = P1Space(mesh).basis_gradients[K]
    dn = np.einsum("ejd,ed->ej", g, n)
    vals = 0.5 * h[:, None, None] * dn[:, None, :]
    vals = np.broadcast_to(vals, (len(e), 2, 3))
    rows = np.repeat(e, 3, axis=1).ravel()
    cols = np.tile(mesh.cells[K], (1, 2)).ravel()
    V = mesh.n_vertices
    return sp.csr_matrix((vals.ravel(), (rows, cols)), shape=(V, V))


def _build(mesh, params, mode, A_u, B, S_p, rhs_u, rhs_p, blocks, constrain):
    V = mesh.n_vertices
    K = sp.bmat([[A_u, -B.T], [B, S_p]], format="csr")
    rhs = np.concatenate([rhs_u, rhs_p])
    system = SaddleSystem(
        matrix=K,
        rhs=rhs,
        layout=DofLayout(V, constrained=False),
        mode=mode,
        mesh=mesh,
        params=params,
        blocks=blocks,
    )
    return attach_mean_constraint(system) if constrain else system


def assemble_darcy(
    mesh: TriMesh,
    params: StabilizationParams,
    problem: ManufacturedProblem,
    quad_degree: int = 6,
    constrain: bool = True,
) -> SaddleSystem:
    """Stabilized Darcy system.

    Velocity block: mass + divergence fluctuation + boundary normal
    penalty. Pressure block: gradient fluctuation. Data (f, v) and
    (phi, q) use the ``quad_degree`` rule; all matrix entries are exact.
    """
    vspace, pspace = P1Space(mesh, 2), P1Space(mesh)
    M = scalar_mass(mesh)
    M_u = _vector(M)
    S_u, S_p = assemble_S_si(mesh, params, "darcy")
    S_sb = assemble_S_sb(mesh)
    B = _coupling(mesh)
    blocks = dict(M_u=M_u, M_p=M, S_u=S_u, S_p=S_p, S_sb=S_sb, B=B, a=M_u)
    rhs_u = load_vector(vspace, problem.forcing, quad_degree)
    rhs_p = load_vector(pspace, problem.source, quad_degree)
    return _build(
        mesh, params, "darcy", (M_u + S_u + S_sb).tocsr(), B, S_p, rhs_u, rhs_p,
        blocks, constrain,
    )


def assemble_stokes(
    mesh: TriMesh,
    params: StabilizationParams,
    problem: ManufacturedProblem,
    quad_degree: int = 6,
    constrain: bool = True,
    probe: bool = True,
) -> SaddleSystem:
    """Stabilized Stokes system with Nitsche boundary terms.

    The normal derivative on a boundary edge is the constant gradient of
    the adjacent cell; the penalty is ``zeta / h_E``.
    """
    if not params.zeta > 0.0:
        raise ValueError(f"Stokes needs zeta > 0, got {params.zeta!r}")
    vspace, pspace = P1Space(mesh, 2), P1Space(mesh)
    M = scalar_mass(mesh)
    stiff = _vector(scalar_stiffness(mesh))
    N = _vector(_nitsche_flux(mesh))
    pen = _vector(boundary_edge_mass(mesh, weight=params.zeta / mesh.boundary_lengths))
    a = (stiff - N - N.T + pen).tocsr()
    S_u, S_p = assemble_S_si(mesh, params, "stokes")
    S_sb = assemble_S_sb(mesh)
    B = _coupling(mesh)
    A_u = (a + S_u + S_sb).tocsr()
    if probe:
        _coercivity_probe(mesh, A_u, params.zeta)
    blocks = dict(
        M_u=_vector(M), M_p=M, stiffness=stiff, nitsche=N, penalty=pen,
        S_u=S_u, S_p=S_p, S_sb=S_sb, B=B, a=a,
    )
    rhs_u = load_vector(vspace, problem.forcing, quad_degree)
    rhs_p = np.zeros(mesh.n_vertices)
    return _build(mesh, params, "stokes", A_u, B, S_p, rhs_u, rhs_p, blocks, constrain)


def nitsche_local_eigenvalues(mesh: TriMesh, zeta: float) -> np.ndarray:
    """Smallest eigenvalue of the scalar Nitsche form on each boundary cell.

    The local form is stiffness minus the two normal-flux terms plus the
    penalty, restricted to one cell. Nonnegative values on every boundary
    cell are sufficient for coercivity of the global Nitsche form.
    """
    cells = np.unique(mesh.boundary_cells)
    slot = np.searchsorted(cells, mesh.boundary_cells)
    g = P1Space(mesh).basis_gradients[cells]
    local = mesh.areas[cells, None, None] * np.einsum("kid,kjd->kij", g, g)
    h = mesh.boundary_lengths
    n = mesh.boundary_normals
    dn = np.einsum("ejd,ed->ej", P1Space(mesh).basis_gradients[mesh.boundary_cells], n)
    tri = mesh.cells[mesh.boundary_cells]
    on_edge = (tri[:, :, None] == mesh.boundary_edges[:, None, :]).any(axis=2)
    flux = 0.5 * h[:, None, None] * on_edge[:, :, None] * dn[:, None, :]
    pen = (zeta / h)[:, None, None] * (h[:, None, None] / 6.0) * (
        on_edge[:, :, None] & on_edge[:, None, :]
    ) * (1.0 + np.eye(3))[None]
    np.add.at(local, slot, pen - flux - flux.transpose(0, 2, 1))
    return np.linalg.eigvalsh(local)[:, 0]


def _coercivity_probe(mesh, A_u, zeta, samples=100, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((A_u.shape[0], samples))
    energy = np.einsum("is,is->s", X, A_u @ X)
    local_min = nitsche_local_eigenvalues(mesh, zeta).min()
    scale = np.abs(A_u.diagonal()).max()
    if np.any(energy <= 0.0) or local_min < -1e-12 * scale:
        warnings.warn(
            f"Stokes velocity form failed the positivity probe at zeta={zeta} "
            f"(min local Nitsche eigenvalue {local_min:.3e}); "
            "the penalty may be below the coercivity threshold",
            RuntimeWarning,
            stacklevel=3,
        )
        return False
    return True


def assemble(mesh, params, problem, quad_degree=6, constrain=True) -> SaddleSystem:
    if problem.mode == "darcy":
        return assemble_darcy(mesh, params, problem, quad_degree, constrain)
    return assemble_stokes(mesh, params, problem, quad_degree, constrain)


def attach_mean_constraint(system: SaddleSystem) -> SaddleSystem:
    """Border the system with the row/column of pressure basis integrals."""
    if system.layout.constrained:
        return system
    mesh = system.mesh
    V = mesh.n_vertices
    c = np.asarray(mesh.incidence @ (mesh.areas / 3.0)).ravel()
    col = np.concatenate([np.zeros(2 * V), c])
    K = sp.bmat(
        [[system.matrix, sp.csr_matrix(col[:, None])], [sp.csr_matrix(col[None, :]), None]],
        format="csr",
    )
    blocks = dict(system.blocks, mean=c)
    return replace(
        system,
        matrix=K,
        rhs=np.concatenate([system.rhs, [0.0]]),
        layout=DofLayout(V, constrained=True),
        blocks=blocks,
    )


def interpolant_vector(system: SaddleSystem, problem: ManufacturedProblem) -> np.ndarray:
    """Nodal interpolant of the exact solution as a full system vector."""
    mesh = system.mesh
    u = interpolate(P1Space(mesh, 2), problem.velocity).coefficients
    p = interpolate(P1Space(mesh), problem.pressure).coefficients
    x = np.zeros(system.layout.size)
    x[system.layout.u] = u
    x[system.layout.p] = p
    return x


def consistency_residual(
    mesh: TriMesh,
    params: StabilizationParams,
    problem: ManufacturedProblem,
    mode: str | None = None,
    quad_degree: int = 6,
) -> dict:
    """r = L - A_h(I(u, p), .) over all velocity and pressure basis functions.

    Returns the residual vector together with its split into the part
    produced by the interior patch stabilization and the remainder
    (interpolation and boundary effects).
    """
    mode = mode or problem.mode
    if mode != problem.mode:
        raise ValueError("mode does not match the problem")
    system = assemble(mesh, params, problem, quad_degree, constrain=False)
    x = interpolant_vector(system, problem)
    L = system.layout
    stab = np.zeros(L.size)
    stab[L.u] = system.blocks["S_u"] @ x[L.u]
    stab[L.p] = system.blocks["S_p"] @ x[L.p]
    r = system.rhs - system.matrix @ x
    return {
        "residual": r,
        "max_abs": float(np.abs(r).max()),
        "stabilization": -stab,
        "max_stabilization": float(np.abs(stab).max()),
        "interpolation": r + stab,
        "max_interpolation": float(np.abs(r + stab).max()),
    }


def glp_norm_matrix(system: SaddleSystem) -> sp.csr_matrix:
    """Gram matrix of the problem's stabilized triple norm on (u, p) dofs.

    Darcy: |u|^2 + |h^(1/2) div u|^2 + |p|^2 + S_h. Stokes:
    |grad u|^2 + |p|^2 + sum_E zeta/h_E |u|_E^2 + S_h.
    """
    b = system.blocks
    mesh = system.mesh
    if system.mode == "darcy":
        D = divergence_operator(mesh)
        H = D.T @ sp.diags(mesh.cell_diameters * mesh.areas) @ D
        Nu = b["M_u"] + H + b["S_u"] + b["S_sb"]
    else:
        Nu = b["stiffness"] + b["penalty"] + b["S_u"] + b["S_sb"]
    Np = b["M_p"] + b["S_p"]
    return sp.block_diag([Nu, Np], format="csr")


def write_matrix_market(system: SaddleSystem, directory, stem: str = "system"):
    """Write ``<stem>_matrix.mtx`` and ``<stem>_rhs.mtx`` (coordinate format)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    mpath = directory / f"{stem}_matrix.mtx"
    rpath = directory / f"{stem}_rhs.mtx"
    comment = f"glpsfem {system.mode} system, layout [u(2V) p(V) lambda], V={system.layout.n_vertices}"
    scipy.io.mmwrite(str(mpath), system.matrix.tocoo(), comment=comment, precision=17)
    scipy.io.mmwrite(
        str(rpath), sp.coo_matrix(system.rhs[:, None]), comment=comment, precision=17
    )
    return mpath, rpath
