"""Conforming triangulations of the unit square.

The structured family used throughout is the criss-cross pattern: an
``n x n`` grid of squares, each cut by both diagonals into four triangles.
Red refinement (split every triangle through its edge midpoints) then
produces the usual 16, 64, 256, ... cell hierarchy starting from ``n = 2``.

Examples
--------
>>> from glpsfem.mesh import build_initial_mesh, uniform_refine
>>> m = uniform_refine(build_initial_mesh(2))
>>> m.n_cells
64
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

__all__ = [
    "TriMesh",
    "PatchTable",
    "build_initial_mesh",
    "uniform_refine",
    "vertex_patch_tables",
    "perturb_mesh",
    "write_vtk",
]


@dataclass(frozen=True)
class PatchTable:
    """Vertex patch data.

    ``cells[ptr[a]:ptr[a+1]]`` lists the cells sharing vertex ``a``.
    """

    ptr: np.ndarray
    cells: np.ndarray
    measure: np.ndarray
    h: np.ndarray

    def members(self, a: int) -> np.ndarray:
        return self.cells[self.ptr[a]:self.ptr[a + 1]]

    @property
    def card(self) -> np.ndarray:
        return np.diff(self.ptr)

    @property
    def owner(self) -> np.ndarray:
        """Patch (vertex) index for every entry of ``cells``."""
        return np.repeat(np.arange(len(self.ptr) - 1), self.card)


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangulation with edge classification and patch metadata.

    Parameters
    ----------
    vertices : (V, 2) float array
    cells : (K, 3) int array, counterclockwise
    """

    vertices: np.ndarray
    cells: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        c = np.ascontiguousarray(self.cells, dtype=np.int64)
        v.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "cells", c)
        if np.any(self.signed_areas <= 0.0):
            raise ValueError("cells must have strictly positive (CCW) area")

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.cells]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return self.signed_areas

    @cached_property
    def cell_diameters(self) -> np.ndarray:
        """h_K, the longest edge of each triangle."""
        p = self.vertices[self.cells]
        lens = np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)
        return lens.max(axis=1)

    @cached_property
    def _edge_data(self):
        # local edge j of a cell runs from vertex j to vertex j+1 (CCW)
        loc = np.stack([self.cells, np.roll(self.cells, -1, axis=1)], axis=2)
        loc = loc.reshape(-1, 2)
        key = np.sort(loc, axis=1)
        edges, inverse, counts = np.unique(
            key, axis=0, return_inverse=True, return_counts=True
        )
        inverse = inverse.ravel()
        if np.any(counts > 2):
            raise ValueError("non-manifold edge: shared by more than two cells")
        cell_edges = inverse.reshape(-1, 3)
        # owning cell and CCW-oriented copy for boundary edges
        owner = np.full(len(edges), -1)
        owner[inverse[::-1]] = (np.arange(loc.shape[0]) // 3)[::-1]
        oriented = np.empty_like(edges)
        oriented[inverse] = loc
        return edges, counts, cell_edges, owner, oriented

    @property
    def edges(self) -> np.ndarray:
        """(E, 2) vertex pairs, sorted within each row."""
        return self._edge_data[0]

    @property
    def cell_edges(self) -> np.ndarray:
        """(K, 3) edge index of local edge ``j`` (vertex j -> j+1)."""
        return self._edge_data[2]

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        return self._edge_data[1] == 1

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        e = self.edges
        return np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1)

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        """(B, 2) boundary edges, oriented counterclockwise around the domain."""
        _, _, _, _, oriented = self._edge_data
        return oriented[self.boundary_mask]

    @cached_property
    def boundary_cells(self) -> np.ndarray:
        """Cell adjacent to each boundary edge (same order as ``boundary_edges``)."""
        return self._edge_data[3][self.boundary_mask]

    @cached_property
    def boundary_lengths(self) -> np.ndarray:
        e = self.boundary_edges
        return np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1)

    @cached_property
    def boundary_normals(self) -> np.ndarray:
        """Outward unit normals of ``boundary_edges``."""
        e = self.boundary_edges
        t = self.vertices[e[:, 1]] - self.vertices[e[:, 0]]
        n = np.column_stack([t[:, 1], -t[:, 0]])
        return n / np.linalg.norm(n, axis=1)[:, None]

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    @cached_property
    def patches(self) -> PatchTable:
        return vertex_patch_tables(self)

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        """(V, K) vertex-cell incidence matrix with unit entries."""
        rows = self.cells.ravel()
        cols = np.repeat(np.arange(self.n_cells), 3)
        return sp.csr_matrix(
            (np.ones(rows.size), (rows, cols)), shape=(self.n_vertices, self.n_cells)
        )

    def min_angle(self) -> float:
        p = self.vertices[self.cells]
        angles = []
        for j in range(3):
            a = p[:, (j + 1) % 3] - p[:, j]
            b = p[:, (j + 2) % 3] - p[:, j]
            cosv = np.sum(a * b, axis=1) / (
                np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
            )
            angles.append(np.arccos(np.clip(cosv, -1.0, 1.0)))
        return float(np.min(angles))

    def quasi_uniformity(self) -> float:
        """Smallest zeta with 1/zeta <= h_a / h_l <= zeta over all patches."""
        pt = self.patches
        ratio = pt.h[pt.owner] / self.cell_diameters[pt.cells]
        return float(max(ratio.max(), 1.0 / ratio.min()))


def build_initial_mesh(n: int) -> TriMesh:
    """Criss-cross triangulation of [0, 1]^2 with ``4 n^2`` cells."""
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    g = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(g, g, indexing="xy")
    grid = np.column_stack([X.ravel(), Y.ravel()])
    c = (g[:-1] + g[1:]) / 2
    CX, CY = np.meshgrid(c, c, indexing="xy")
    centers = np.column_stack([CX.ravel(), CY.ravel()])
    vertices = np.vstack([grid, centers])

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    i, j = i.ravel(), j.ravel()
    sw = j * (n + 1) + i
    se = sw + 1
    nw = sw + (n + 1)
    ne = nw + 1
    ctr = (n + 1) ** 2 + j * n + i
    cells = np.concatenate(
        [
            np.column_stack([ctr, sw, se]),
            np.column_stack([ctr, se, ne]),
            np.column_stack([ctr, ne, nw]),
            np.column_stack([ctr, nw, sw]),
        ]
    )
    return TriMesh(vertices, cells)


def uniform_refine(mesh: TriMesh) -> TriMesh:
    """Red refinement: four congruent children per triangle."""
    V = mesh.n_vertices
    e = mesh.edges
    mids = 0.5 * (mesh.vertices[e[:, 0]] + mesh.vertices[e[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])
    v0, v1, v2 = mesh.cells.T
    m01, m12, m20 = (mesh.cell_edges + V).T
    cells = np.concatenate(
        [
            np.column_stack([v0, m01, m20]),
            np.column_stack([m01, v1, m12]),
            np.column_stack([m20, m12, v2]),
            np.column_stack([m01, m12, m20]),
        ]
    )
    return TriMesh(vertices, cells)


def vertex_patch_tables(mesh: TriMesh) -> PatchTable:
    """Cells, measure |M_a| and local size h_a of every vertex patch.

    h_a is the arithmetic mean of the diameters of the patch cells.
    """
    inc = mesh.incidence.tocsr()
    inc.sort_indices()
    ptr = inc.indptr.copy()
    cells = inc.indices.copy()
    if np.any(np.diff(ptr) == 0):
        raise ValueError("mesh has a vertex not attached to any cell")
    measure = inc @ mesh.areas
    h = (inc @ mesh.cell_diameters) / np.diff(ptr)
    return PatchTable(ptr=ptr, cells=cells, measure=measure, h=h)


def perturb_mesh(mesh: TriMesh, fraction: float = 0.2, seed: int = 0) -> TriMesh:
    """Displace interior vertices randomly by at most ``fraction`` of the
    shortest incident edge."""
    if not 0.0 <= fraction < 0.5:
        raise ValueError("fraction must lie in [0, 0.5)")
    rng = np.random.default_rng(seed)
    e = mesh.edges
    hmin = np.full(mesh.n_vertices, np.inf)
    np.minimum.at(hmin, e[:, 0], mesh.edge_lengths)
    np.minimum.at(hmin, e[:, 1], mesh.edge_lengths)
    interior = np.ones(mesh.n_vertices, dtype=bool)
    interior[mesh.boundary_vertices] = False
    r = fraction * hmin * np.sqrt(rng.uniform(size=mesh.n_vertices))
    theta = rng.uniform(0.0, 2 * np.pi, size=mesh.n_vertices)
    shift = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    shift[~interior] = 0.0
    return TriMesh(mesh.vertices + shift, mesh.cells)


def write_vtk(path, mesh: TriMesh, point_data=None, title="glpsfem"):
    """Write a legacy ASCII VTK unstructured grid.

    ``point_data`` maps names to arrays of shape (V,) (scalars) or
    (V, 2) (vectors, padded with a zero z-component).
    """
    path = Path(path)
    V, K = mesh.n_vertices, mesh.n_cells
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {V} double")
    lines += [f"{x!r} {y!r} 0.0" for x, y in mesh.vertices]
    lines.append(f"CELLS {K} {4 * K}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.cells]
    lines.append(f"CELL_TYPES {K}")
    lines += ["5"] * K
    if point_data:
        lines.append(f"POINT_DATA {V}")
        for name, arr in point_data.items():
            arr = np.asarray(arr, dtype=float)
            if arr.ndim == 1:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [repr(float(s)) for s in arr]
            else:
                lines.append(f"VECTORS {name} double")
                lines += [f"{float(a)!r} {float(b)!r} 0.0" for a, b in arr]
    path.write_text("\n".join(lines) + "\n")
    return path
