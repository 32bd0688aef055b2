"""Error norms, observed orders and convergence tables."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assembly import ManufacturedProblem, assemble
from .fe_space import P1Space, cell_gradient, quadrature_for
from .mesh import TriMesh, build_initial_mesh, perturb_mesh, uniform_refine
from .solver import DiscreteSolution, solve
from .stabilization import StabilizationParams

__all__ = [
    "ErrorRow",
    "ErrorReport",
    "compute_errors",
    "convergence_study",
    "mesh_hierarchy",
    "order_of",
    "CSV_COLUMNS",
]

CSV_COLUMNS = [
    "level", "cells", "h_max",
    "err_u_l2", "order_u_l2",
    "err_u_h1", "order_u_h1",
    "err_p_l2", "order_p_l2",
    "err_triple", "order_triple",
]


def order_of(errors) -> list[float]:
    """Observed orders log2(e_k / e_{k+1}) between consecutive levels."""
    e = np.asarray(errors, dtype=float)
    if e.size < 2:
        raise ValueError("need at least two error values")
    if np.any(~(e > 0)):
        raise ValueError("errors must be strictly positive")
    return list(np.log2(e[:-1] / e[1:]))


@dataclass
class ErrorRow:
    level: int
    cells: int
    h_max: float
    h_nominal: float
    err_u_l2: float
    err_u_h1: float
    err_p_l2: float
    err_triple: float
    triple_terms: dict = field(default_factory=dict)


@dataclass
class ErrorReport:
    mode: str
    rows: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def orders(self, name: str) -> list[float]:
        if len(self.rows) < 2:
            return []
        e = self.column(name)
        # exact solutions give zero error; no order is defined then
        if np.any(e <= 0):
            return [math.nan] * (len(e) - 1)
        return order_of(e)

    def to_csv(self, path=None, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            for line in header_comment.splitlines():
                buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        names = ["err_u_l2", "err_u_h1", "err_p_l2", "err_triple"]
        orders = {n: [None] + self.orders(n) for n in names}
        for k, r in enumerate(self.rows):
            out = [r.level, r.cells, repr(float(r.h_max))]
            for n in names:
                o = orders[n][k]
                out += [repr(float(getattr(r, n))), "" if o is None else repr(float(o))]
            w.writerow(out)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def summary(self) -> str:
        lines = [f"{self.mode} convergence"]
        lines.append(
            f"{'lvl':>3} {'cells':>6} {'h':>8} {'|u-uh|':>11} {'ord':>6} "
            f"{'|grad e|':>11} {'ord':>6} {'|p-ph|':>11} {'ord':>6} {'triple':>11} {'ord':>6}"
        )
        names = ["err_u_l2", "err_u_h1", "err_p_l2", "err_triple"]
        orders = {n: [math.nan] + self.orders(n) for n in names}
        for k, r in enumerate(self.rows):
            s = f"{r.level:>3} {r.cells:>6} {r.h_nominal:>8.5f}"
            for n in names:
                s += f" {getattr(r, n):>11.4e} {orders[n][k]:>6.3f}"
            lines.append(s)
        return "\n".join(lines)


def _patch_fluctuation_energy(mesh, beta_a, w, weights):
    """sum_a beta_a int_{M_a} (w - mean_{M_a} w)^2 for quadrature values.

    ``w`` has shape (K, nq) or (K, nq, d); components are summed.
    """
    if w.ndim == 2:
        w = w[..., None]
    pt = mesh.patches
    cell_int = np.einsum("kq,kqd->kd", weights, w)
    owner = pt.owner
    patch_int = np.zeros((mesh.n_vertices, w.shape[2]))
    np.add.at(patch_int, owner, cell_int[pt.cells])
    mean = patch_int / pt.measure[:, None]
    diff = w[pt.cells] - mean[owner][:, None, :]
    per_entry = np.einsum("mq,mqd->m", weights[pt.cells], diff**2)
    return float(np.sum(beta_a[owner] * per_entry))


def _edge_points(mesh, degree):
    rule = quadrature_for(degree, "edge")
    e = mesh.boundary_edges
    a, b = mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]]
    t = rule.points
    pts = a[:, None, :] * (1 - t)[None, :, None] + b[:, None, :] * t[None, :, None]
    w = mesh.boundary_lengths[:, None] * rule.weights[None, :]
    return rule, pts, w


def compute_errors(
    solution: DiscreteSolution,
    problem: ManufacturedProblem,
    mesh: TriMesh,
    params: StabilizationParams,
    mode: str | None = None,
    quad_degree: int = 6,
    level: int = 0,
    h_nominal: float = math.nan,
) -> ErrorRow:
    """L2, broken H1-seminorm, pressure L2 and triple-norm errors.

    Non-polynomial exact fields are sampled at cell quadrature points; the
    patch means in the stabilization part are computed from per-cell
    integrals and then area-combined.
    """
    mode = mode or problem.mode
    rule = quadrature_for(quad_degree)
    space = P1Space(mesh)
    pts = space.cell_points(rule)
    w = space.cell_weights(rule)
    x, y = pts[..., 0], pts[..., 1]

    eu = problem.velocity(x, y) - solution.velocity.at_quadrature(rule)
    jac_h, div_h = cell_gradient(solution.velocity)
    eJ = problem.velocity_jacobian(x, y) - jac_h[:, None]
    ediv = problem.divergence(x, y) - div_h[:, None]
    ep = problem.pressure(x, y) - solution.pressure.at_quadrature(rule)
    egp = problem.pressure_gradient(x, y) - cell_gradient(solution.pressure)[:, None]

    u_l2 = float(np.sum(w * np.sum(eu**2, axis=-1)))
    u_h1 = float(np.sum(w * np.sum(eJ**2, axis=(-2, -1))))
    p_l2 = float(np.sum(w * ep**2))

    beta_a = params.beta_a(mesh)
    s_div = _patch_fluctuation_energy(mesh, beta_a, ediv, w)
    s_grad = _patch_fluctuation_energy(mesh, beta_a, egp, w)

    erule, epts, ew = _edge_points(mesh, quad_degree)
    ex, ey = epts[..., 0], epts[..., 1]
    ub = problem.velocity(ex, ey)
    uh_b = _edge_trace(solution.velocity.nodal, mesh, erule)
    eub = ub - uh_b
    n = mesh.boundary_normals
    s_sb = float(np.sum(ew * np.einsum("eqd,ed->eq", eub, n) ** 2))

    terms = {"u_l2": u_l2, "p_l2": p_l2, "S_si_div": s_div, "S_si_grad": s_grad, "S_sb": s_sb}
    if mode == "darcy":
        terms["h_div"] = float(np.sum(mesh.cell_diameters[:, None] * w * ediv**2))
    else:
        terms.pop("u_l2")
        terms["grad_u"] = u_h1
        pen = params.zeta / mesh.boundary_lengths
        terms["penalty"] = float(np.sum(pen[:, None] * ew * np.sum(eub**2, axis=-1)))
    triple = math.sqrt(sum(terms.values()))
    return ErrorRow(
        level=level,
        cells=mesh.n_cells,
        h_max=float(mesh.cell_diameters.max()),
        h_nominal=h_nominal,
        err_u_l2=math.sqrt(u_l2),
        err_u_h1=math.sqrt(u_h1),
        err_p_l2=math.sqrt(p_l2),
        err_triple=triple,
        triple_terms={k: math.sqrt(v) for k, v in terms.items()},
    )


def _edge_trace(nodal, mesh, erule):
    e = mesh.boundary_edges
    t = erule.points
    return nodal[e[:, 0]][:, None] * (1 - t)[None, :, None] + nodal[e[:, 1]][:, None] * t[None, :, None]


def mesh_hierarchy(levels: int, n0: int = 2, perturb: bool = False, seed: int = 0):
    """Yield ``(level, mesh, nominal_h)`` for the red-refined criss-cross family."""
    mesh = build_initial_mesh(n0)
    for k in range(levels):
        if k > 0:
            mesh = uniform_refine(mesh)
        h_nom = 1.0 / (2 * n0 * 2**k)
        yield k, (perturb_mesh(mesh, seed=seed + k) if perturb else mesh), h_nom


def convergence_study(
    mode: str,
    levels: int,
    params: StabilizationParams,
    problem: ManufacturedProblem,
    quad_degree: int = 6,
    perturb: bool = False,
    n0: int = 2,
    keep_solutions: bool = False,
):
    """Solve on ``levels`` meshes and tabulate errors and orders.

    Returns the :class:`ErrorReport`; with ``keep_solutions`` also the list
    of ``(mesh, system, solution)`` per level.
    """
    if levels < 1:
        raise ValueError("levels must be at least 1")
    if problem.mode != mode:
        raise ValueError(f"problem is for {problem.mode!r}, not {mode!r}")
    report = ErrorReport(mode)
    kept = []
    for k, mesh, h_nom in mesh_hierarchy(levels, n0, perturb):
        try:
            system = assemble(mesh, params, problem, quad_degree)
            sol = solve(system)
        except Exception as exc:
            raise RuntimeError(f"level {k} ({mesh.n_cells} cells): {exc}") from exc
        report.rows.append(
            compute_errors(sol, problem, mesh, params, mode, quad_degree, k, h_nom)
        )
        if keep_solutions:
            kept.append((mesh, system, sol))
    return (report, kept) if keep_solutions else report
