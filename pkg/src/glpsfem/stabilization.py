"""Overlapping vertex-patch stabilization.

For P1 fields both the divergence of the velocity and the pressure
gradient are constant per cell, so every patch fluctuation term reduces to
an area-weighted variance of cell values around the patch mean. With
``s_a = sum_l |K_l| w_l`` the patch energy is

    beta_a * (sum_l |K_l| w_l**2 - s_a**2 / |M_a|)

and both pieces assemble as sparse products without quadrature.
"""
from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fe_space import P1Space
from .mesh import TriMesh

__all__ = [
    "StabilizationParams",
    "PatchFluctuation",
    "patch_mean",
    "divergence_operator",
    "gradient_operators",
    "assemble_S_si",
    "assemble_S_sb",
]

DEFAULTS = {"darcy": (10.0, 0.0), "stokes": (1.0, 2.0)}


@dataclass(frozen=True)
class StabilizationParams:
    """Global stabilization constants; the patch weight is beta * h_a."""

    beta: float = 10.0
    zeta: float = 0.0

    def __post_init__(self):
        if not self.beta >= 0.0:
            raise ValueError(f"beta must be nonnegative, got {self.beta!r}")
        if not self.zeta >= 0.0:
            raise ValueError(f"zeta must be nonnegative, got {self.zeta!r}")

    @classmethod
    def default(cls, mode: str) -> "StabilizationParams":
        beta, zeta = DEFAULTS[mode]
        return cls(beta, zeta)

    def beta_a(self, mesh: TriMesh) -> np.ndarray:
        return self.beta * mesh.patches.h


class PatchFluctuation:
    """Patch means and fluctuations of piecewise-constant cell data."""

    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        self.patches = mesh.patches

    def mean(self, a: int, w) -> float:
        cells = self.patches.members(a)
        vals = _patch_values(cells, w, self.mesh.n_cells)
        areas = self.mesh.areas[cells]
        return float(areas @ vals / self.patches.measure[a])

    def apply(self, a: int, w) -> np.ndarray:
        """kappa_a(w) on the cells of patch ``a``."""
        cells = self.patches.members(a)
        return _patch_values(cells, w, self.mesh.n_cells) - self.mean(a, w)


def _patch_values(cells, w, n_cells):
    if isinstance(w, Mapping):
        missing = [int(c) for c in cells if c not in w]
        if missing:
            raise KeyError(f"no value supplied for patch cells {missing}")
        return np.array([w[c] for c in cells], dtype=float)
    w = np.asarray(w, dtype=float)
    if w.shape != (n_cells,):
        raise ValueError(f"expected {n_cells} cell values, got shape {w.shape}")
    vals = w[cells]
    if np.any(np.isnan(vals)):
        raise ValueError("missing (NaN) value on a patch cell")
    return vals


def patch_mean(mesh: TriMesh, a: int, w) -> float:
    """Area-weighted mean of cell values ``w`` over the patch of vertex ``a``.

    ``w`` is either a length-K array or a mapping ``cell -> value`` that
    covers at least the patch cells.
    """
    return PatchFluctuation(mesh).mean(a, w)


def divergence_operator(mesh: TriMesh) -> sp.csr_matrix:
    """(K, 2V) map from interleaved velocity dofs to cellwise divergence."""
    g = P1Space(mesh).basis_gradients
    K = mesh.n_cells
    rows = np.repeat(np.arange(K), 6)
    cols = np.stack([2 * mesh.cells, 2 * mesh.cells + 1], axis=2).ravel()
    return sp.csr_matrix((g.ravel(), (rows, cols)), shape=(K, 2 * mesh.n_vertices))


def gradient_operators(mesh: TriMesh) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """(K, V) maps from scalar dofs to the x and y cell gradient."""
    g = P1Space(mesh).basis_gradients
    K = mesh.n_cells
    rows = np.repeat(np.arange(K), 3)
    cols = mesh.cells.ravel()
    shape = (K, mesh.n_vertices)
    return tuple(
        sp.csr_matrix((g[:, :, d].ravel(), (rows, cols)), shape=shape) for d in (0, 1)
    )


def _fluctuation_form(mesh, beta_a, ops):
    inc = mesh.incidence
    area = mesh.areas
    cell_w = area * (inc.T @ beta_a)
    patch_w = beta_a / mesh.patches.measure
    P = inc @ sp.diags(area)
    S = None
    for L in ops:
        PL = P @ L
        term = L.T @ sp.diags(cell_w) @ L - PL.T @ sp.diags(patch_w) @ PL
        S = term if S is None else S + term
    S = S.tocsr()
    return ((S + S.T) * 0.5).tocsr()


def assemble_S_si(mesh: TriMesh, params: StabilizationParams, mode: str = "darcy"):
    """Interior patch stabilization.

    Returns ``(S_u, S_p)``: the (2V, 2V) divergence-fluctuation block and
    the (V, V) gradient-fluctuation block. The form is identical for both
    problems; ``mode`` is validated only.
    """
    if mode not in ("darcy", "stokes"):
        raise ValueError(f"unknown mode {mode!r}")
    beta_a = params.beta_a(mesh)
    S_u = _fluctuation_form(mesh, beta_a, [divergence_operator(mesh)])
    S_p = _fluctuation_form(mesh, beta_a, list(gradient_operators(mesh)))
    return S_u, S_p


def boundary_edge_mass(mesh: TriMesh, weight=None) -> sp.csr_matrix:
    """(V, V) matrix of sum_E w_E * int_E phi_i phi_j ds."""
    e = mesh.boundary_edges
    h = mesh.boundary_lengths
    w = h if weight is None else h * weight
    local = (np.ones((2, 2)) + np.eye(2)) / 6.0
    vals = w[:, None, None] * local[None]
    rows = np.repeat(e, 2, axis=1).ravel()
    cols = np.tile(e, (1, 2)).ravel()
    V = mesh.n_vertices
    return sp.csr_matrix((vals.ravel(), (rows, cols)), shape=(V, V))


def assemble_S_sb(mesh: TriMesh) -> sp.csr_matrix:
    """Boundary normal-flux penalty sum_E int_E (u.n)(v.n) ds on (2V, 2V)."""
    e = mesh.boundary_edges
    h = mesh.boundary_lengths
    n = mesh.boundary_normals
    nn = np.einsum("ec,ed->ecd", n, n)
    local = (np.ones((2, 2)) + np.eye(2)) / 6.0
    # (edge, node_i, comp_c, node_j, comp_d)
    vals = h[:, None, None, None, None] * local[None, :, None, :, None] * nn[:, None, :, None, :]
    dofs = np.stack([2 * e, 2 * e + 1], axis=2).reshape(len(e), 4)
    rows = np.repeat(dofs, 4, axis=1).ravel()
    cols = np.tile(dofs, (1, 4)).ravel()
    N = 2 * mesh.n_vertices
    return sp.csr_matrix((vals.reshape(len(e), 16).ravel(), (rows, cols)), shape=(N, N))
