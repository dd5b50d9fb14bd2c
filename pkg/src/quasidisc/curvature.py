"""Principal curvatures, the u-function PDE and the Schauder diagnostic on a disc mesh.

For a plane P with dual p, the function u = <x, p> restricted to a surface
satisfies Hess u - u E = <p, N> B.  Fitting Hess u from the 2-ring of a
vertex therefore recovers the shape operator B without differentiating the
normal field.  Three probe planes through the vertex are used; their duals
are the parallel transports of e1, e2, e3 from the origin, so sum <p_k, N>^2 = 1
and B = sum <p_k, N> Hess u_k.
"""

import csv
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import dijkstra

from .errors import OutOfDomainError
from .hyperbolic import mink_inner, plane_signed_sinh_distance, to_poincare
from .mesh import boundary_sphere_distance, edge_lengths, k_rings, laplace_beltrami, unique_edges

FLAG_OK = "ok"
FLAG_BOUNDARY = "boundary"
FLAG_DEGENERATE = "degenerate"
FLAG_BRANCH = "branch"

_J = np.array([1.0, 1.0, 1.0, -1.0])


def _basis(xi, cubic):
    u, v = xi[..., 0], xi[..., 1]
    cols = [u, v, 0.5 * u * u, u * v, 0.5 * v * v]
    if cubic:
        cols += [u**3, u * u * v, u * v * v, v**3]
    return np.stack(cols, axis=-1)


def _batched_lstsq(design, values, mask, ridge=1e-12):
    """Solve masked least squares per row; returns (coef, condition numbers)."""
    w = mask[..., None].astype(float)
    a = design * w
    ata = np.einsum("nkp,nkq->npq", a, a)
    atb = np.einsum("nkp,nk...->np...", a, values * mask.reshape(mask.shape + (1,) * (values.ndim - 2)))
    diag = np.einsum("npp->np", ata)
    unused = diag <= 1e-300
    d = 1.0 / np.sqrt(np.where(unused, 1.0, diag))
    ata_s = ata * d[:, :, None] * d[:, None, :]
    ata_s[unused] = 0.0
    ata_s += unused[:, :, None] * np.eye(ata.shape[-1])[None]
    cond = np.linalg.cond(ata_s)
    ata_s = ata_s + ridge * np.eye(ata.shape[-1])
    if atb.ndim == 2:
        coef = np.linalg.solve(ata_s, (atb * d)[..., None])[..., 0] * d
    else:
        coef = np.linalg.solve(ata_s, atb * d[..., None]) * d[..., None]
    return coef, cond


def _padded_neighbourhoods(mesh, ring):
    n = mesh.n_vertices
    r = k_rings(mesh.faces, n, ring)
    counts = np.diff(r.indptr)
    kmax = int(counts.max())
    idx = np.zeros((n, kmax), dtype=int)
    mask = np.zeros((n, kmax), dtype=bool)
    for i in range(n):
        nb = r.indices[r.indptr[i]:r.indptr[i + 1]]
        idx[i, :len(nb)] = nb
        mask[i, :len(nb)] = True
        idx[i, len(nb):] = i
    return idx, mask, counts


def transported_frame(x):
    """Columns of boost_to(x) for every row of x: an orthonormal tangent frame (n, 3, 4)."""
    xs, x4 = x[:, :3], x[:, 3]
    f = np.zeros((len(x), 3, 4))
    f[:, :, :3] = np.eye(3)[None] + xs[:, :, None] * xs[:, None, :] / (1.0 + x4)[:, None, None]
    f[:, :, 3] = xs
    return f


def tangent_frame(x, n):
    """Orthonormal pair (e1, e2) in T_x H^3 orthogonal to the unit normal n."""
    cols = transported_frame(x)
    dots = np.abs(np.einsum("nkd,nd->nk", cols * _J, n))
    order = np.argsort(dots, axis=1)
    pick = lambda j: cols[np.arange(len(x)), order[:, j]]  # noqa: E731
    a = pick(0)
    a = a - mink_inner(a, n)[:, None] * n
    e1 = a / np.sqrt(mink_inner(a, a))[:, None]
    b = pick(1)
    b = b - mink_inner(b, n)[:, None] * n - mink_inner(b, e1)[:, None] * e1
    e2 = b / np.sqrt(mink_inner(b, b))[:, None]
    return e1, e2


def log_coordinates(x, y, e1, e2):
    """Tangent-plane coordinates of exp_x^-1(y) in the frame (e1, e2); x (n,4), y (n,k,4)."""
    c = -np.einsum("nkd,nd->nk", y * _J, x)
    v = y - c[..., None] * x[:, None, :]
    sh = np.sqrt(np.maximum(c * c - 1.0, 0.0))
    d = np.arccosh(np.maximum(c, 1.0))
    f = np.where(sh > 1e-300, d / np.where(sh > 0, sh, 1.0), 1.0)
    xi1 = np.einsum("nkd,nd->nk", v * _J, e1) * f
    xi2 = np.einsum("nkd,nd->nk", v * _J, e2) * f
    return np.stack([xi1, xi2], axis=-1)


@dataclass
class CurvatureReport:
    k1: np.ndarray
    k2: np.ndarray
    lam: np.ndarray
    flags: np.ndarray
    core: np.ndarray
    branch_gap: np.ndarray
    fit_k1: np.ndarray
    fit_k2: np.ndarray
    resolution: float
    margin: float

    @property
    def valid(self):
        return self.flags == FLAG_OK

    @property
    def supLambda(self):
        sel = self.valid & self.core
        return float(np.max(self.lam[sel])) if sel.any() else float("nan")

    @property
    def fit_lambda(self):
        return 0.5 * (np.abs(self.fit_k1) + np.abs(self.fit_k2))

    def trace_defect(self):
        sel = self.valid & self.core
        return float(np.max(np.abs(self.k1 + self.k2)[sel])) if sel.any() else float("nan")

    def estimator_agreement(self, floor=0.01):
        """max relative gap between the two estimators over core vertices with lambda > floor."""
        sel = self.valid & self.core & (self.lam > floor)
        if not sel.any():
            return 0.0
        fl = self.fit_lambda
        return float(np.max(np.abs(self.lam[sel] - fl[sel]) / self.lam[sel]))

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["vertexId", "lambda", "flag"])
            for i, (lam, flag) in enumerate(zip(self.lam, self.flags)):
                w.writerow([i, "nan" if not np.isfinite(lam) else f"{lam:.12e}", flag])


def _sym_eig(h):
    a, b, c = h[..., 0, 0], 0.5 * (h[..., 0, 1] + h[..., 1, 0]), h[..., 1, 1]
    m = 0.5 * (a + c)
    r = np.sqrt((0.5 * (a - c)) ** 2 + b * b)
    return m - r, m + r


def _hessians(coef):
    h = np.empty(coef.shape[:1] + coef.shape[2:] + (2, 2))
    c = np.moveaxis(coef, 1, -1)
    h[..., 0, 0] = c[..., 2]
    h[..., 0, 1] = h[..., 1, 0] = c[..., 3]
    h[..., 1, 1] = c[..., 4]
    return h


def principal_curvatures(mesh, margin=1.0, ring=2, branch_tol=0.05):
    """CurvatureReport from the u-function identity, with a quadratic-fit cross-check.

    ``margin`` is the hyperbolic distance from the truncation sphere below
    which vertices are excluded from supLambda (they still get values).
    """
    x = mesh.vertices
    n_vec = mesh.normals
    n = len(x)
    idx, mask, counts = _padded_neighbourhoods(mesh, ring)
    y = x[idx]
    e1, e2 = tangent_frame(x, n_vec)
    xi = log_coordinates(x, y, e1, e2)
    cubic = counts >= 12
    flags = np.full(n, FLAG_OK, dtype=object)
    flags[~mesh.interior] = FLAG_BOUNDARY

    probes = transported_frame(x)  # (n, 3, 4), planes through x
    u = np.einsum("nkd,njd->nkj", y * _J, probes)  # (n, k, 3)
    design = np.where(cubic[:, None, None], _basis(xi, True), np.concatenate(
        [_basis(xi, False), np.zeros(xi.shape[:2] + (4,))], axis=-1))
    coef, cond = _batched_lstsq(design, u, mask)
    degenerate = (cond > 1e12) | (counts < 6)
    hess = _hessians(coef)  # (n, 3, 2, 2)
    pn = np.einsum("nkd,nd->nk", probes * _J, n_vec)  # <p_k, N>
    b = np.einsum("nk,nkab->nab", pn, hess)
    k1, k2 = _sym_eig(b)
    grad2 = coef[:, 0, :] ** 2 + coef[:, 1, :] ** 2
    branch_gap = np.max(np.abs(np.sqrt(np.maximum(1.0 - grad2, 0.0)) - np.abs(pn)), axis=1)

    # independent estimator: move x to the origin and N to e3, fit the height in the Poincare ball
    fk1, fk2 = _quadratic_fit_curvatures(x, n_vec, y, mask, cubic)

    interior = mesh.interior
    flags[interior & degenerate] = FLAG_DEGENERATE
    flags[interior & ~degenerate & (branch_gap > branch_tol)] = FLAG_BRANCH
    bad = flags != FLAG_OK
    k1 = np.where(bad, np.nan, k1)
    k2 = np.where(bad, np.nan, k2)
    lam = 0.5 * (np.abs(k1) + np.abs(k2))
    if mesh.epsilon is not None:
        core = boundary_sphere_distance(mesh) >= margin
    else:
        core = np.ones(n, bool)
    lengths = edge_lengths(x, mesh.faces)
    return CurvatureReport(k1, k2, lam, flags.astype(str), core & interior, branch_gap,
                           np.where(bad, np.nan, fk1), np.where(bad, np.nan, fk2),
                           float(np.mean(lengths)), float(margin))


def _inverse_boost(x):
    """Lorentz inverse of boost_to(x), batched: J B^T J."""
    f = np.zeros((len(x), 4, 4))
    cols = transported_frame(x)
    f[:, :, :3] = np.swapaxes(cols, 1, 2)
    f[:, :3, 3] = x[:, :3]
    f[:, 3, 3] = x[:, 3]
    return (_J[None, :, None] * np.swapaxes(f, 1, 2)) * _J[None, None, :]


def _quadratic_fit_curvatures(x, n_vec, y, mask, cubic):
    t = _inverse_boost(x)
    ny = np.einsum("nab,nb->na", t, n_vec)[:, :3]
    ny /= np.linalg.norm(ny, axis=1)[:, None]
    # Householder reflection sending ny to e3
    v = ny - np.array([0.0, 0.0, 1.0])
    vn = np.einsum("na,na->n", v, v)
    hh = np.broadcast_to(np.eye(3), (len(x), 3, 3)).copy()
    ok = vn > 1e-24
    hh[ok] -= 2.0 * v[ok, :, None] * v[ok, None, :] / vn[ok, None, None]
    yy = np.einsum("nab,nkb->nka", t, y)
    b = to_poincare(yy)
    b = np.einsum("nab,nkb->nka", hh, b)
    design = np.where(cubic[:, None, None], _basis(b[..., :2], True), np.concatenate(
        [_basis(b[..., :2], False), np.zeros(b.shape[:2] + (4,))], axis=-1))
    coef, _ = _batched_lstsq(design, b[..., 2], mask)
    g = coef[:, :2]
    hess = _hessians(coef[:, :, None])[:, 0]
    w = np.sqrt(1.0 + np.sum(g * g, axis=1))
    first = np.eye(2)[None] + g[:, :, None] * g[:, None, :]
    shape = np.linalg.solve(first, hess / w[:, None, None])
    shape = 0.5 * (shape + np.swapaxes(shape, 1, 2))
    e1, e2 = _sym_eig(shape)
    # the Poincare metric is 4|db|^2 at the origin with vanishing gradient of the factor
    return 0.5 * e1, 0.5 * e2


def pde_residual(mesh, plane, per_vertex=False):
    """max over interior vertices of |Lap_S u - 2u| / (1 + |u|) with u the sinh-distance to ``plane``."""
    u = plane_signed_sinh_distance(mesh.vertices, plane)
    lap, _ = laplace_beltrami(mesh)
    r = np.abs(lap @ u - 2.0 * u) / (1.0 + np.abs(u))
    r = np.where(mesh.interior, r, 0.0)
    return (float(np.max(r)), r) if per_vertex else float(np.max(r))


def mesh_distances(mesh, source, limit=np.inf):
    """Graph (Dijkstra) distances along hyperbolic edge lengths from ``source``."""
    e = unique_edges(mesh.faces)
    a, b = mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]]
    w = 2.0 * np.arcsinh(np.sqrt(np.maximum(np.sum((a - b) ** 2 * _J, axis=1), 0.0)) / 2.0)
    from scipy.sparse import coo_matrix

    n = mesh.n_vertices
    g = coo_matrix((np.concatenate([w, w]), (np.concatenate([e[:, 0], e[:, 1]]),
                                             np.concatenate([e[:, 1], e[:, 0]]))), shape=(n, n)).tocsr()
    return dijkstra(g, directed=False, indices=source, limit=limit)


def schauder_ratio(mesh, vertex, plane, radius, alpha=0.5, safety=0.5):
    """||u||_{C^{2,alpha}(B_{R/2})} / ||u||_{C^0(B_R)} for u the sinh-distance to ``plane``.

    Balls are mesh-graph balls around ``vertex``; derivatives come from local
    fits in log-map coordinates.  Returns 0 when u vanishes on B_R.
    """
    dist = mesh_distances(mesh, vertex, limit=radius + safety + 1.0)
    if np.any(dist[mesh.boundary] <= radius + safety):
        raise OutOfDomainError("geodesic ball reaches the mesh boundary")
    u = plane_signed_sinh_distance(mesh.vertices, plane)
    big = dist <= radius
    c0 = float(np.max(np.abs(u[big])))
    if c0 < 1e-14:
        return 0.0
    half = np.flatnonzero(dist <= radius / 2)
    x = mesh.vertices
    idx, mask, counts = _padded_neighbourhoods(mesh, 2)
    idx, mask, counts = idx[half], mask[half], counts[half]
    xs = x[half]
    e1, e2 = tangent_frame(xs, mesh.normals[half])
    xi = log_coordinates(xs, x[idx], e1, e2)
    du = u[idx] - u[half][:, None]
    design = _basis(xi, True)
    coef, _ = _batched_lstsq(design, du, mask)
    grad = np.hypot(coef[:, 0], coef[:, 1])
    hess = _hessians(coef[:, :, None])[:, 0]
    hnorm = np.sqrt(np.sum(hess**2, axis=(1, 2)))
    c2 = float(np.max(np.abs(u[half])) + np.max(grad) + np.max(hnorm))
    holder = 0.0
    if len(half) > 1:
        pts = x[half]
        dd = 2.0 * np.arcsinh(np.sqrt(np.maximum(
            np.sum((pts[:, None] - pts[None]) ** 2 * _J, axis=-1), 0.0)) / 2.0)
        np.fill_diagonal(dd, np.inf)
        holder = float(np.max(np.abs(hnorm[:, None] - hnorm[None]) / dd**alpha))
    return (c2 + holder) / c0
