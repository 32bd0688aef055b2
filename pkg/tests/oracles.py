"""Independent brute-force reference implementations used by the tests.

Everything here is written with explicit Python loops over cells, patches
and boundary edges and evaluates fields pointwise through its own affine
maps. Nothing is shared with the package beyond the mesh arrays.
"""
import numpy as np

# Strang-Fix 6-point degree-4 rule on the reference triangle (area 1/2).
_A, _B = 0.445948490915965, 0.091576213509771
_WA, _WB = 0.223381589678011 / 2, 0.109951743655322 / 2
TRI_POINTS = np.array(
    [[_A, _A], [1 - 2 * _A, _A], [_A, 1 - 2 * _A],
     [_B, _B], [1 - 2 * _B, _B], [_B, 1 - 2 * _B]]
)
TRI_WEIGHTS = np.array([_WA] * 3 + [_WB] * 3)
GAUSS_T = (np.array([-np.sqrt(3 / 5), 0.0, np.sqrt(3 / 5)]) + 1) / 2
GAUSS_W = np.array([5 / 9, 8 / 9, 5 / 9]) / 2


def affine(verts):
    """Return (x0, J) with x = x0 + J @ xi."""
    v = np.asarray(verts, dtype=float)
    return v[0], np.column_stack([v[1] - v[0], v[2] - v[0]])


def local_basis(verts):
    """Coefficients c (3, 3) with phi_i(x, y) = c[i,0] + c[i,1] x + c[i,2] y."""
    V = np.column_stack([np.ones(3), np.asarray(verts, dtype=float)])
    return np.linalg.inv(V).T


def cell_quadrature(verts):
    x0, J = affine(verts)
    det = abs(np.linalg.det(J))
    pts = x0 + TRI_POINTS @ J.T
    return pts, TRI_WEIGHTS * det


def _fields(mesh, cell, u, p):
    tri = mesh.cells[cell]
    c = local_basis(mesh.vertices[tri])
    ux = np.array([u[2 * a] for a in tri])
    uy = np.array([u[2 * a + 1] for a in tri])
    pv = np.array([p[a] for a in tri])
    grad_ux = c[:, 1:].T @ ux
    grad_uy = c[:, 1:].T @ uy
    grad_p = c[:, 1:].T @ pv

    def value(x, y):
        phi = c[:, 0] + c[:, 1] * x + c[:, 2] * y
        return phi @ ux, phi @ uy, phi @ pv

    return value, grad_ux, grad_uy, grad_p


def patches(mesh):
    out = {a: [] for a in range(mesh.n_vertices)}
    for k, tri in enumerate(mesh.cells):
        for a in tri:
            out[int(a)].append(k)
    return out


def cell_area(mesh, k):
    _, J = affine(mesh.vertices[mesh.cells[k]])
    return abs(np.linalg.det(J)) / 2


def cell_diameter(mesh, k):
    v = mesh.vertices[mesh.cells[k]]
    return max(np.linalg.norm(v[i] - v[j]) for i in range(3) for j in range(i))


def patch_energy(mesh, beta, cellwise_a, cellwise_b=None):
    """sum_a beta h_a int_{M_a} (w_a - mean)(v_a - mean) for cellwise constants.

    ``cellwise_a`` maps each cell to a vector of constants (one per
    component); the energy sums over components.
    """
    cellwise_b = cellwise_a if cellwise_b is None else cellwise_b
    total = 0.0
    for a, cells in patches(mesh).items():
        areas = np.array([cell_area(mesh, k) for k in cells])
        h_a = np.mean([cell_diameter(mesh, k) for k in cells])
        wa = np.array([cellwise_a[k] for k in cells], dtype=float).reshape(len(cells), -1)
        wb = np.array([cellwise_b[k] for k in cells], dtype=float).reshape(len(cells), -1)
        ma = areas @ wa / areas.sum()
        mb = areas @ wb / areas.sum()
        total += beta * h_a * np.sum(areas[:, None] * (wa - ma) * (wb - mb))
    return total


def boundary_edges(mesh):
    """Yield (i, j, cell, normal, length) for edges on the unit-square boundary."""
    count = {}
    for k, tri in enumerate(mesh.cells):
        for s in range(3):
            key = tuple(sorted((int(tri[s]), int(tri[(s + 1) % 3]))))
            count.setdefault(key, []).append(k)
    for (i, j), cells in count.items():
        if len(cells) != 1:
            continue
        a, b = mesh.vertices[i], mesh.vertices[j]
        mid = (a + b) / 2
        t = b - a
        n = np.array([t[1], -t[0]]) / np.linalg.norm(t)
        cen = mesh.vertices[mesh.cells[cells[0]]].mean(axis=0)
        if n @ (mid - cen) < 0:
            n = -n
        yield i, j, cells[0], n, np.linalg.norm(t)


def _edge_samples(mesh, i, j):
    a, b = mesh.vertices[i], mesh.vertices[j]
    return [a + t * (b - a) for t in GAUSS_T]


def darcy_form(mesh, beta, trial, test):
    """A_h((u, p), (v, q)) for the Darcy system, term by term."""
    V = mesh.n_vertices
    u, p = trial[: 2 * V], trial[2 * V: 3 * V]
    v, q = test[: 2 * V], test[2 * V: 3 * V]
    total = 0.0
    div_u, div_v, gp, gq = {}, {}, {}, {}
    for k in range(mesh.n_cells):
        fu, gux, guy, gpk = _fields(mesh, k, u, p)
        fv, gvx, gvy, gqk = _fields(mesh, k, v, q)
        div_u[k], div_v[k] = gux[0] + guy[1], gvx[0] + gvy[1]
        gp[k], gq[k] = gpk, gqk
        pts, w = cell_quadrature(mesh.vertices[mesh.cells[k]])
        for (x, y), wq in zip(pts, w):
            ux, uy, pp = fu(x, y)
            vx, vy, qq = fv(x, y)
            total += wq * (ux * vx + uy * vy)
            total -= wq * pp * div_v[k]
            total += wq * qq * div_u[k]
    for i, j, k, n, h in boundary_edges(mesh):
        fu = _fields(mesh, k, u, p)[0]
        fv = _fields(mesh, k, v, q)[0]
        for (x, y), wq in zip(_edge_samples(mesh, i, j), GAUSS_W * h):
            ux, uy, pp = fu(x, y)
            vx, vy, qq = fv(x, y)
            un, vn = ux * n[0] + uy * n[1], vx * n[0] + vy * n[1]
            total += wq * (vn * pp - un * qq)
            total += wq * un * vn
    total += patch_energy(mesh, beta, div_u, div_v)
    total += patch_energy(mesh, beta, gp, gq)
    return total


def stokes_form(mesh, beta, zeta, trial, test):
    """B_h((u, p), (v, q)) for the Stokes system with Nitsche terms."""
    V = mesh.n_vertices
    u, p = trial[: 2 * V], trial[2 * V: 3 * V]
    v, q = test[: 2 * V], test[2 * V: 3 * V]
    total = 0.0
    div_u, div_v, gp, gq = {}, {}, {}, {}
    grads = {}
    for k in range(mesh.n_cells):
        fu, gux, guy, gpk = _fields(mesh, k, u, p)
        fv, gvx, gvy, gqk = _fields(mesh, k, v, q)
        grads[k] = (gux, guy, gvx, gvy)
        div_u[k], div_v[k] = gux[0] + guy[1], gvx[0] + gvy[1]
        gp[k], gq[k] = gpk, gqk
        pts, w = cell_quadrature(mesh.vertices[mesh.cells[k]])
        for (x, y), wq in zip(pts, w):
            _, _, pp = fu(x, y)
            _, _, qq = fv(x, y)
            total += wq * (gux @ gvx + guy @ gvy)
            total -= wq * pp * div_v[k]
            total += wq * qq * div_u[k]
    for i, j, k, n, h in boundary_edges(mesh):
        fu = _fields(mesh, k, u, p)[0]
        fv = _fields(mesh, k, v, q)[0]
        gux, guy, gvx, gvy = grads[k]
        dnu = np.array([gux @ n, guy @ n])
        dnv = np.array([gvx @ n, gvy @ n])
        for (x, y), wq in zip(_edge_samples(mesh, i, j), GAUSS_W * h):
            ux, uy, pp = fu(x, y)
            vx, vy, qq = fv(x, y)
            uu, vv = np.array([ux, uy]), np.array([vx, vy])
            total -= wq * (dnu @ vv + dnv @ uu)
            total += wq * zeta / h * (uu @ vv)
            total += wq * (vv @ n * pp - uu @ n * qq)
            total += wq * (uu @ n) * (vv @ n)
    total += patch_energy(mesh, beta, div_u, div_v)
    total += patch_energy(mesh, beta, gp, gq)
    return total
