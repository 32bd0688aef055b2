"""P1 conforming spaces and quadrature on triangles and edges."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import roots_jacobi

from .mesh import TriMesh

__all__ = [
    "QuadratureRule",
    "quadrature_for",
    "P1Space",
    "FEFunction",
    "eval_at",
    "cell_gradient",
    "interpolate",
    "l2_project_scalar",
    "scalar_mass",
    "scalar_stiffness",
    "integrate",
    "load_vector",
]


@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights on the reference element.

    Triangle points are given in reference coordinates (xi, eta) on
    {xi, eta >= 0, xi + eta <= 1}; edge points are parameters t in [0, 1].
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int
    domain: str

    @property
    def barycentric(self) -> np.ndarray:
        if self.domain != "triangle":
            raise ValueError("barycentric coordinates only exist on triangles")
        xi, eta = self.points.T
        return np.column_stack([1.0 - xi - eta, xi, eta])


def _orbit(w, a, b=None):
    if b is None:
        c = 1.0 - 2.0 * a
        pts = [(a, a), (c, a), (a, c)]
    else:
        c = 1.0 - a - b
        pts = [(a, b), (b, a), (a, c), (c, a), (b, c), (c, b)]
    return pts, [w] * len(pts)


# Dunavant (1985), degree 6, 12 points; weights normalised to sum 1
_DUNAVANT6 = [
    (0.116786275726379, 0.249286745170910),
    (0.050844906370207, 0.063089014491502),
    (0.082851075618374, 0.053145049844817, 0.310352451033784),
]


def _dunavant6():
    pts, wts = [], []
    for row in _DUNAVANT6:
        p, w = _orbit(*row)
        pts += p
        wts += w
    return np.array(pts), 0.5 * np.array(wts)


def _collapsed_gauss(degree):
    # conical product rule: Gauss-Jacobi(1,0) in the collapsed direction
    m = degree // 2 + 1
    x, wx = np.polynomial.legendre.leggauss(m)
    s, ws = roots_jacobi(m, 1.0, 0.0)
    t = (x + 1) / 2
    r = (s + 1) / 2
    xi = np.outer(r, np.ones(m))
    eta = np.outer(1 - r, t)
    w = np.outer(ws / 4.0, wx / 2.0)
    return np.column_stack([xi.ravel(), eta.ravel()]), w.ravel()


@lru_cache(maxsize=None)
def quadrature_for(degree: int, domain: str = "triangle") -> QuadratureRule:
    """Quadrature rule exact for polynomials of total degree ``degree``.

    Supported degrees are 1 to 8. On triangles degree 1 is the centroid
    rule, degree 2 the 3-point interior rule, degree 6 the 12-point
    Dunavant rule and every other degree a collapsed Gauss product rule.
    Edges use Gauss-Legendre.
    """
    if int(degree) != degree or not 1 <= degree <= 8:
        raise ValueError(f"unsupported quadrature degree {degree!r} (need 1..8)")
    degree = int(degree)
    if domain == "edge":
        m = degree // 2 + 1
        x, w = np.polynomial.legendre.leggauss(m)
        return QuadratureRule((x + 1) / 2, w / 2, degree, "edge")
    if domain != "triangle":
        raise ValueError(f"unknown domain {domain!r}")
    if degree == 1:
        pts, w = np.array([[1 / 3, 1 / 3]]), np.array([0.5])
    elif degree == 2:
        pts = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
        w = np.full(3, 1 / 6)
    elif degree == 6:
        pts, w = _dunavant6()
    else:
        pts, w = _collapsed_gauss(degree)
    return QuadratureRule(pts, w, degree, "triangle")


class P1Space:
    """Continuous piecewise-linear space, scalar or 2-vector valued.

    Vector dofs are interleaved: dof ``2*a + c`` is component ``c`` at
    vertex ``a``.
    """

    def __init__(self, mesh: TriMesh, components: int = 1):
        if components not in (1, 2):
            raise ValueError("components must be 1 or 2")
        self.mesh = mesh
        self.components = components

    @property
    def dof_count(self) -> int:
        return self.components * self.mesh.n_vertices

    @cached_property
    def cell_dofs(self) -> np.ndarray:
        c = self.mesh.cells
        if self.components == 1:
            return c
        return np.stack([2 * c, 2 * c + 1], axis=2).reshape(len(c), 6)

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """(K, 3, 2) constant gradients of the three vertex basis functions."""
        return _p1_gradients(self.mesh)

    def function(self, coefficients=None) -> "FEFunction":
        if coefficients is None:
            coefficients = np.zeros(self.dof_count)
        return FEFunction(self, np.asarray(coefficients, dtype=float))

    def cell_points(self, rule: QuadratureRule) -> np.ndarray:
        """(K, nq, 2) physical quadrature points."""
        p = self.mesh.vertices[self.mesh.cells]
        return np.einsum("qi,kid->kqd", rule.barycentric, p)

    def cell_weights(self, rule: QuadratureRule) -> np.ndarray:
        """(K, nq) physical weights."""
        return 2.0 * self.mesh.areas[:, None] * rule.weights[None, :]


def _p1_gradients(mesh: TriMesh) -> np.ndarray:
    p = mesh.vertices[mesh.cells]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = 2.0 * mesh.areas
    g1 = np.column_stack([d2[:, 1], -d2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-d1[:, 1], d1[:, 0]]) / det[:, None]
    return np.stack([-g1 - g2, g1, g2], axis=1)


@dataclass
class FEFunction:
    space: P1Space
    coefficients: np.ndarray

    def __post_init__(self):
        if self.coefficients.shape != (self.space.dof_count,):
            raise ValueError(
                f"expected {self.space.dof_count} coefficients, "
                f"got shape {self.coefficients.shape}"
            )

    @property
    def nodal(self) -> np.ndarray:
        """Vertex values, (V,) or (V, 2)."""
        if self.space.components == 1:
            return self.coefficients
        return self.coefficients.reshape(-1, 2)

    def at_quadrature(self, rule: QuadratureRule) -> np.ndarray:
        """Values at physical quadrature points: (K, nq) or (K, nq, 2)."""
        vals = self.nodal[self.space.mesh.cells]
        return np.einsum("qi,ki...->kq...", rule.barycentric, vals)


def eval_at(fn: FEFunction, cell: int, point, tol: float = 1e-12):
    """Value of ``fn`` at ``point`` inside ``cell``."""
    mesh = fn.space.mesh
    p = mesh.vertices[mesh.cells[cell]]
    T = np.column_stack([p[1] - p[0], p[2] - p[0]])
    xi = np.linalg.solve(T, np.asarray(point, dtype=float) - p[0])
    lam = np.array([1.0 - xi.sum(), xi[0], xi[1]])
    if np.any(lam < -tol):
        raise ValueError(f"point {point!r} lies outside cell {cell}")
    return lam @ fn.nodal[mesh.cells[cell]]


def cell_gradient(fn: FEFunction, cell=None):
    """Constant gradient on each cell.

    Scalar fields give shape (K, 2). Vector fields give the Jacobian
    (K, 2, 2), rows indexed by component, plus the divergence (K,).
    A single ``cell`` index selects one entry.
    """
    sp_ = fn.space
    g = sp_.basis_gradients
    vals = fn.nodal[sp_.mesh.cells]
    if sp_.components == 1:
        out = np.einsum("ki,kid->kd", vals, g)
        return out if cell is None else out[cell]
    jac = np.einsum("kic,kid->kcd", vals, g)
    div = jac[:, 0, 0] + jac[:, 1, 1]
    if cell is None:
        return jac, div
    return jac[cell], div[cell]


def interpolate(space: P1Space, g: Callable) -> FEFunction:
    """Nodal interpolant. ``g(x, y)`` returns a scalar or a 2-tuple."""
    x, y = space.mesh.vertices.T
    vals = _as_field(g(x, y), x.shape, space.components)
    return space.function(vals.ravel().copy())


def _as_field(vals, shape, components):
    """Broadcast a scalar, a 2-tuple or a (..., 2) array to ``shape``."""
    if components == 1:
        return np.broadcast_to(np.asarray(vals, dtype=float), shape)
    if isinstance(vals, (tuple, list)):
        return np.stack([np.broadcast_to(np.asarray(v, dtype=float), shape) for v in vals], -1)
    return np.broadcast_to(np.asarray(vals, dtype=float), shape + (2,))


def scalar_mass(mesh: TriMesh) -> sp.csr_matrix:
    """Exact P1 mass matrix."""
    local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    vals = mesh.areas[:, None, None] * local[None]
    return _scatter(mesh.cells, vals, mesh.n_vertices)


def scalar_stiffness(mesh: TriMesh) -> sp.csr_matrix:
    g = _p1_gradients(mesh)
    vals = mesh.areas[:, None, None] * np.einsum("kid,kjd->kij", g, g)
    return _scatter(mesh.cells, vals, mesh.n_vertices)


def _scatter(dofs, vals, n, m=None):
    rows = np.repeat(dofs, dofs.shape[1], axis=1).ravel()
    cols = np.tile(dofs, (1, dofs.shape[1])).ravel()
    return sp.csr_matrix((vals.ravel(), (rows, cols)), shape=(n, m or n))


def integrate(mesh: TriMesh, g: Callable, degree: int = 6) -> float:
    """Integral of ``g(x, y)`` over the domain with a cellwise rule."""
    space = P1Space(mesh)
    rule = quadrature_for(degree)
    pts = space.cell_points(rule)
    return float(np.sum(space.cell_weights(rule) * g(pts[..., 0], pts[..., 1])))


def load_vector(space: P1Space, g: Callable, degree: int = 6) -> np.ndarray:
    """Entries (g, phi_i) for every dof of ``space``."""
    rule = quadrature_for(degree)
    pts = space.cell_points(rule)
    w = space.cell_weights(rule)
    lam = rule.barycentric
    vals = _as_field(g(pts[..., 0], pts[..., 1]), w.shape, space.components)
    if space.components == 1:
        local = np.einsum("kq,kq,qi->ki", w, vals, lam)
    else:
        local = np.einsum("kq,kqc,qi->kic", w, vals, lam).reshape(len(w), 6)
    out = np.zeros(space.dof_count)
    np.add.at(out, space.cell_dofs.ravel(), local.ravel())
    return out


def l2_project_scalar(space: P1Space, g: Callable, degree: int = 6) -> FEFunction:
    """L2-orthogonal projection onto the scalar P1 space (consistent mass)."""
    if space.components != 1:
        raise ValueError("l2_project_scalar needs a scalar space")
    M = scalar_mass(space.mesh).tocsc()
    b = load_vector(space, g, degree)
    coeffs = spla.spsolve(M, b)
    assert np.all(np.isfinite(coeffs)), "singular mass matrix"
    return space.function(coeffs)
