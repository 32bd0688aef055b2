"""Direct solution of the bordered systems and inf-sup estimation."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import SaddleSystem, glp_norm_matrix
from .fe_space import FEFunction, P1Space

__all__ = [
    "SingularSystemError",
    "DiscreteSolution",
    "solve",
    "symmetrized",
    "inf_sup_estimate",
    "MAX_INFSUP_CELLS",
]

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
MAX_INFSUP_CELLS = 1024


class SingularSystemError(RuntimeError):
    """The factorization found the system singular or rank deficient."""


@dataclass
class DiscreteSolution:
    velocity: FEFunction
    pressure: FEFunction
    multiplier: float
    residual: float
    method: str = "splu"

    @property
    def mean_violation(self) -> float:
        mesh = self.pressure.space.mesh
        c = mesh.incidence @ (mesh.areas / 3.0)
        return float(c @ self.pressure.coefficients)


def symmetrized(system: SaddleSystem):
    """Return (S, r) with pressure and multiplier rows negated.

    ``S`` is numerically symmetric and indefinite; it has the same
    solution as the stored form matrix.
    """
    L = system.layout
    sign = np.ones(L.size)
    sign[2 * L.n_vertices:] = -1.0
    D = sp.diags(sign)
    return (D @ system.matrix).tocsc(), sign * system.rhs


def _relative_residual(A, x, b):
    nb = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    return r / nb if nb > 0 else r


def _diagnose(system: SaddleSystem) -> str:
    L = system.layout
    if not L.constrained:
        probe = np.zeros(L.size)
        probe[L.p] = 1.0
        if np.linalg.norm(system.matrix @ probe) < 1e-10 * max(1.0, sp.linalg.norm(system.matrix)):
            return (
                "constant pressure lies in the null space; "
                "attach the zero-mean constraint (attach_mean_constraint)"
            )
    return "matrix is numerically rank deficient"


def solve(system: SaddleSystem, method: str = "direct") -> DiscreteSolution:
    """Solve the bordered system.

    ``method="direct"`` uses a sparse LU factorization of the symmetrized
    matrix and falls back to diagonally preconditioned MINRES if the
    residual check fails; ``method="minres"`` forces the iterative path.
    """
    A, b = symmetrized(system)
    if not system.layout.constrained:
        raise SingularSystemError(_diagnose(system))
    x = None
    used = method
    if method == "direct":
        try:
            lu = spla.splu(A, permc_spec="COLAMD")
            x = lu.solve(b)
        except RuntimeError as exc:
            raise SingularSystemError(f"{_diagnose(system)} ({exc})") from exc
        if not np.all(np.isfinite(x)):
            raise SingularSystemError(_diagnose(system))
        if _relative_residual(A, x, b) > RESIDUAL_TOL:
            log.warning("direct residual too large, retrying with MINRES")
            x, used = None, "minres"
    elif method != "minres":
        raise ValueError(f"unknown method {method!r}")
    if x is None:
        x = _minres(A, b)
    res = _relative_residual(A, x, b)
    if res > RESIDUAL_TOL:
        raise SingularSystemError(
            f"linear solve did not reach relative residual {RESIDUAL_TOL:g} "
            f"(got {res:.3e}); {_diagnose(system)}"
        )
    u, p, lam = system.split(x)
    mesh = system.mesh
    return DiscreteSolution(
        velocity=P1Space(mesh, 2).function(u.copy()),
        pressure=P1Space(mesh).function(p.copy()),
        multiplier=float(lam),
        residual=float(res),
        method=used,
    )


def _minres(A, b):
    d = np.abs(A.diagonal())
    d[d == 0] = 1.0
    M = sp.diags(1.0 / d)
    x, info = spla.minres(A, b, M=M, rtol=1e-14, maxiter=20 * A.shape[0])
    if info != 0:
        log.warning("MINRES stopped with info=%d", info)
    return x


def _constrained_basis(system: SaddleSystem) -> np.ndarray:
    """Orthonormal basis of {(u, p) : mean(p) = 0} as a dense matrix."""
    L = system.layout
    V = L.n_vertices
    c = np.asarray(system.mesh.incidence @ (system.mesh.areas / 3.0)).ravel()
    Zp = sla.null_space(c[None, :])
    Z = np.zeros((3 * V, 2 * V + Zp.shape[1]))
    Z[: 2 * V, : 2 * V] = np.eye(2 * V)
    Z[2 * V:, 2 * V:] = Zp
    return Z


def inf_sup_estimate(system: SaddleSystem, norm_matrix=None) -> float:
    """Discrete inf-sup constant of the assembled form in its triple norm.

    Computes the smallest singular value of ``N^(-1/2) A N^(-1/2)`` on the
    zero-mean pressure subspace, where ``N`` is the Gram matrix of the
    problem's triple norm. Dense; meant for meshes up to 1024 cells.
    """
    mesh = system.mesh
    if mesh.n_cells > MAX_INFSUP_CELLS:
        raise ValueError(
            f"inf-sup estimate is dense; mesh has {mesh.n_cells} cells "
            f"(limit {MAX_INFSUP_CELLS})"
        )
    n = 3 * system.layout.n_vertices
    A = system.matrix[:n, :n].toarray()
    N = glp_norm_matrix(system) if norm_matrix is None else norm_matrix
    N = N.toarray() if sp.issparse(N) else np.asarray(N)
    Z = _constrained_basis(system)
    Az = Z.T @ A @ Z
    Nz = Z.T @ N @ Z
    try:
        C = sla.cholesky(Nz, lower=True)
    except sla.LinAlgError as exc:
        w = sla.eigvalsh(Nz)
        raise ValueError(
            f"norm matrix is not positive definite (min eigenvalue {w.min():.3e})"
        ) from exc
    X = sla.solve_triangular(C, Az, lower=True)
    X = sla.solve_triangular(C, X.T, lower=True).T
    return float(sla.svdvals(X).min())
