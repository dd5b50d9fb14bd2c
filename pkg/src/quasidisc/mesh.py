"""Triangulated discs on the hyperboloid and their discrete geometry."""

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import Delaunay

from .errors import DomainError, SeedingError
from .hyperbolic import (
    from_poincare,
    mink_inner,
    mink_norm2,
    normalize_point,
    sphere_from_complex,
    to_klein,
    to_poincare,
)


@dataclass
class SolverConfig:
    epsilon: float = 0.02
    tol: float = 1e-6
    max_iter: int = 200
    n_vertices: int = 10000
    armijo: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 30
    flip_every: int = 50
    min_angle_deg: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 1e-4 < self.epsilon < 0.2:
            raise DomainError("epsilon must lie in (1e-4, 0.2)")
        if self.tol <= 0:
            raise DomainError("tol must be positive")
        if self.n_vertices < 50:
            raise DomainError("need at least 50 vertices")

    @property
    def boundary_radius(self):
        """Hyperbolic distance from the centre to the truncation sphere of Euclidean radius 1 - epsilon."""
        return 2.0 * np.arctanh(1.0 - self.epsilon)


@dataclass
class SolveInfo:
    converged: bool
    iterations: int
    residual: float
    max_displacement: float
    area_history: list = field(default_factory=list)
    flips: int = 0


@dataclass
class TriMesh:
    vertices: np.ndarray  # (n, 4) hyperboloid points
    faces: np.ndarray  # (m, 3), counter-clockwise in the parameter disc
    boundary: np.ndarray  # boundary loop, in order
    param: np.ndarray = None  # (n, 2) Poincare-disc coordinates of the seed
    epsilon: float = None
    info: SolveInfo = None
    _normals: np.ndarray = field(default=None, repr=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def interior(self):
        mask = np.ones(len(self.vertices), bool)
        mask[self.boundary] = False
        return mask

    @property
    def normals(self):
        if self._normals is None:
            self._normals = vertex_normals(self.vertices, self.faces)
        return self._normals

    def with_vertices(self, vertices, **kw):
        return replace(self, vertices=vertices, _normals=None, **kw)

    def euler_characteristic(self):
        e = unique_edges(self.faces)
        return self.n_vertices - len(e) + len(self.faces)

    def boundary_loops(self):
        """Number of boundary loops, from edges used by exactly one face."""
        e = np.sort(np.vstack([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]]), axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        bd = uniq[counts == 1]
        if len(bd) == 0:
            return 0
        adj = {}
        for a, b in bd:
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
        seen, loops = set(), 0
        for start in adj:
            if start in seen:
                continue
            loops += 1
            stack = [start]
            while stack:
                v = stack.pop()
                if v in seen:
                    continue
                seen.add(v)
                stack.extend(adj[v])
        return loops

    def min_angle(self):
        return float(np.min(face_angles(edge_lengths(self.vertices, self.faces))))

    # -- OFF io --------------------------------------------------------------

    def to_off(self, path):
        k = to_klein(self.vertices)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("OFF\n# model: klein\n")
            fh.write(f"# boundary: {' '.join(map(str, self.boundary))}\n")
            if self.epsilon is not None:
                fh.write(f"# epsilon: {float(self.epsilon)!r}\n")
            fh.write(f"{len(k)} {len(self.faces)} 0\n")
            for p in k:
                fh.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
            for f in self.faces:
                fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")

    @classmethod
    def from_off(cls, path):
        boundary, eps, model = None, None, "klein"
        rows = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                s = line.strip()
                if s.startswith("#"):
                    key, _, val = s[1:].partition(":")
                    key = key.strip()
                    if key == "boundary":
                        boundary = np.array(val.split(), dtype=int)
                    elif key == "epsilon":
                        eps = float(val)
                    elif key == "model":
                        model = val.strip()
                    continue
                if s:
                    rows.append(s)
        if rows[0] != "OFF":
            raise ValueError("not an OFF file")
        if model != "klein":
            raise ValueError(f"unsupported vertex model {model!r}")
        nv, nf, _ = map(int, rows[1].split())
        verts = np.array([list(map(float, r.split())) for r in rows[2:2 + nv]])
        faces = np.array([list(map(int, r.split()))[1:4] for r in rows[2 + nv:2 + nv + nf]])
        v = np.hstack([verts, np.ones((nv, 1))]) / np.sqrt(1.0 - np.sum(verts**2, axis=1))[:, None]
        if boundary is None:
            boundary = _boundary_from_faces(faces)
        return cls(v, faces, boundary, epsilon=eps)


def _boundary_from_faces(faces):
    e = np.vstack([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    key = np.sort(e, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    directed = e[counts[inv] == 1]
    nxt = dict(directed)
    start = directed[0, 0]
    loop = [start]
    while nxt[loop[-1]] != start:
        loop.append(nxt[loop[-1]])
    return np.array(loop)


# -- discrete geometry ---------------------------------------------------------------


def unique_edges(faces):
    e = np.vstack([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    return np.unique(np.sort(e, axis=1), axis=0)


def edge_lengths(x, faces):
    """Hyperbolic lengths (m, 3); column i is the edge opposite corner i."""
    a, b, c = x[faces[:, 0]], x[faces[:, 1]], x[faces[:, 2]]

    def d(p, q):
        return 2.0 * np.arcsinh(np.sqrt(np.maximum(mink_norm2(p - q), 0.0)) / 2.0)

    return np.column_stack([d(b, c), d(c, a), d(a, b)])


def face_angles(lengths):
    """Angles of the Euclidean triangles with the given side lengths."""
    l0, l1, l2 = lengths.T
    c0 = (l1**2 + l2**2 - l0**2) / (2 * l1 * l2)
    c1 = (l2**2 + l0**2 - l1**2) / (2 * l2 * l0)
    c2 = (l0**2 + l1**2 - l2**2) / (2 * l0 * l1)
    return np.arccos(np.clip(np.column_stack([c0, c1, c2]), -1.0, 1.0))


def _tangent_gram(a, b, c):
    """Gram determinant of the tangent vectors at a pointing to b and c, i.e. -det G(a, b, c)."""
    u = b + mink_inner(a, b)[:, None] * a
    v = c + mink_inner(a, c)[:, None] * a
    return np.maximum(mink_norm2(u) * mink_norm2(v) - mink_inner(u, v) ** 2, 0.0)


def face_areas(x, faces):
    """Areas of the geodesic triangles: tan(A/2) = sqrt(-det G) / (1 - <a,b> - <b,c> - <c,a>)."""
    a, b, c = x[faces[:, 0]], x[faces[:, 1]], x[faces[:, 2]]
    g = _tangent_gram(a, b, c)
    den = 1.0 - mink_inner(a, b) - mink_inner(b, c) - mink_inner(c, a)
    return 2.0 * np.arctan2(np.sqrt(g), den)


def total_area(x, faces):
    return float(np.sum(face_areas(x, faces)))


def area_gradient(x, faces):
    """Riemannian gradient of the total area at every vertex, as tangent vectors (n, 4)."""
    a, b, c = x[faces[:, 0]], x[faces[:, 1]], x[faces[:, 2]]
    gab, gbc, gca = mink_inner(a, b), mink_inner(b, c), mink_inner(c, a)
    g = _tangent_gram(a, b, c)
    sq = np.sqrt(g)
    den = 1.0 - gab - gbc - gca
    k = 2.0 / (den**2 + g)
    grad = np.zeros_like(x)
    # adj(G)_{ij} for the Gram matrix with unit diagonal -1
    adj_ab = gca * gbc + gab
    adj_bc = gab * gca + gbc
    adj_ca = gab * gbc + gca
    corners = (
        (0, a, b, c, adj_ab, adj_ca),
        (1, b, c, a, adj_bc, adj_ab),
        (2, c, a, b, adj_ca, adj_bc),
    )
    safe = np.where(sq > 0, sq, 1.0)
    for col, p, q, r, adj_pq, adj_pr in corners:
        dg = -2.0 * (adj_pq[:, None] * q + adj_pr[:, None] * r)
        dd = -(q + r)
        dsq = dg / (2.0 * safe[:, None])
        gp = k[:, None] * (den[:, None] * dsq - sq[:, None] * dd)
        np.add.at(grad, faces[:, col], gp)
    # project onto the tangent spaces
    return grad + mink_inner(grad, x)[:, None] * x


def face_normals(x, faces):
    """Unit spacelike normals n with <n, y> proportional to -det[a, b, c, y].

    With faces counter-clockwise in the parameter disc, the flat seed has normal +e3.
    """
    a, b, c = x[faces[:, 0]], x[faces[:, 1]], x[faces[:, 2]]
    m = np.stack([a, b, c], axis=1)  # (m, 3, 4)
    cof = np.empty((len(faces), 4))
    for k in range(4):
        cols = [j for j in range(4) if j != k]
        cof[:, k] = (-1) ** (k + 4) * np.linalg.det(m[:, :, cols])
    n = cof.copy()
    n[:, 3] = -n[:, 3]  # raise the index with J
    return n / np.sqrt(np.maximum(mink_norm2(n), 1e-300))[:, None]


def vertex_normals(x, faces):
    fn = face_normals(x, faces) * face_areas(x, faces)[:, None]
    n = np.zeros_like(x)
    for col in range(3):
        np.add.at(n, faces[:, col], fn)
    n = n + mink_inner(n, x)[:, None] * x
    return n / np.sqrt(np.maximum(mink_norm2(n), 1e-300))[:, None]


def chord_lengths(x, faces):
    """Minkowski chord lengths 2 sinh(d/2) (m, 3); column i is the edge opposite corner i."""
    a, b, c = x[faces[:, 0]], x[faces[:, 1]], x[faces[:, 2]]

    def d(p, q):
        return np.sqrt(np.maximum(mink_norm2(p - q), 0.0))

    return np.column_stack([d(b, c), d(c, a), d(a, b)])


def cotan_laplacian(lengths, faces, n):
    """Stiffness K (K = -L, positive semidefinite on Delaunay meshes) and vertex areas.

    Areas are circumcentric Voronoi areas, 1/4 sum_j w_ij l_ij^2, so the
    operator is exact on quadratics with isotropic Hessian.  Vertices whose
    Voronoi area is not positive fall back to the mixed area.
    """
    ang = face_angles(lengths)
    cot = 1.0 / np.tan(ang)
    i0, i1, i2 = faces.T
    rows = np.concatenate([i1, i2, i2, i0, i0, i1])
    cols = np.concatenate([i2, i1, i0, i2, i1, i0])
    w = 0.5 * np.concatenate([cot[:, 0], cot[:, 0], cot[:, 1], cot[:, 1], cot[:, 2], cot[:, 2]])
    W = sp.coo_matrix((w, (rows, cols)), shape=(n, n)).tocsr()
    K = sp.diags(np.asarray(W.sum(axis=1)).ravel()) - W
    vor, mixed = _corner_areas(lengths, faces, n, ang)
    area = np.where(vor > 0, vor, mixed)
    return K.tocsr(), area


def _corner_areas(lengths, faces, n, ang):
    l2 = lengths**2
    s = 0.5 * lengths.sum(axis=1)
    area = np.sqrt(np.maximum(s * (s - lengths[:, 0]) * (s - lengths[:, 1]) * (s - lengths[:, 2]), 0.0))
    cot = 1.0 / np.tan(ang)
    # Voronoi share of corner i: (|e_j|^2 cot_j + |e_k|^2 cot_k) / 8 with e_j opposite corner j
    vor = np.column_stack([
        (l2[:, 1] * cot[:, 1] + l2[:, 2] * cot[:, 2]) / 8.0,
        (l2[:, 2] * cot[:, 2] + l2[:, 0] * cot[:, 0]) / 8.0,
        (l2[:, 0] * cot[:, 0] + l2[:, 1] * cot[:, 1]) / 8.0,
    ])
    obtuse = ang > np.pi / 2
    any_obtuse = obtuse.any(axis=1)
    share = np.where(any_obtuse[:, None], np.where(obtuse, area[:, None] / 2, area[:, None] / 4), vor)
    out_vor = np.zeros(n)
    out_mixed = np.zeros(n)
    for col in range(3):
        np.add.at(out_vor, faces[:, col], vor[:, col])
        np.add.at(out_mixed, faces[:, col], share[:, col])
    return out_vor, out_mixed


def mixed_voronoi_areas(lengths, faces, n):
    return _corner_areas(lengths, faces, n, face_angles(lengths))[1]


def mesh_laplacian(x, faces):
    """(K, A) of the polyhedral surface in Minkowski space spanned by the vertices.

    The faces are spacelike affine triangles, so their intrinsic geometry is
    Euclidean with side lengths the chords 2 sinh(d/2) of the hyperbolic edges.
    """
    return cotan_laplacian(chord_lengths(x, faces), faces, len(x))


def laplace_beltrami(mesh):
    """Sparse operator L with (L u)_i ~ (Delta_S u)(x_i), from the induced edge lengths."""
    K, A = mesh_laplacian(mesh.vertices, mesh.faces)
    return -(sp.diags(1.0 / A) @ K), A


def adjacency(faces, n):
    e = unique_edges(faces)
    m = sp.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    return ((m + m.T) > 0).astype(np.int8).tocsr()


def k_rings(faces, n, k=2):
    """CSR matrix whose row i marks the vertices within k edges of i (excluding i)."""
    a = adjacency(faces, n)
    r = a.copy()
    for _ in range(k - 1):
        r = ((r + r @ a) > 0).astype(np.int8)
    r = r.tolil()
    r.setdiag(0)
    r = r.tocsr()
    r.eliminate_zeros()
    return r


# -- intrinsic Delaunay flips -------------------------------------------------------------


def delaunay_flip(mesh, max_passes=20):
    """Flip interior edges whose opposite angles sum past pi.  Returns (faces, flips)."""
    faces = mesh.faces.copy()
    x = mesh.vertices
    total = 0
    for _ in range(max_passes):
        ang = face_angles(edge_lengths(x, faces))
        opp = {}
        for f, tri in enumerate(faces):
            for i in range(3):
                a, b = tri[(i + 1) % 3], tri[(i + 2) % 3]
                opp.setdefault((min(a, b), max(a, b)), []).append((f, i))
        flipped = 0
        touched = set()
        for (a, b), lst in opp.items():
            if len(lst) != 2:
                continue
            (f1, i1), (f2, i2) = lst
            if f1 in touched or f2 in touched:
                continue
            if ang[f1, i1] + ang[f2, i2] <= np.pi + 1e-12:
                continue
            c, d = faces[f1, i1], faces[f2, i2]
            # keep orientation: f1 = (c, a', b') in cyclic order
            t1 = list(faces[f1])
            k = t1.index(c)
            p, q = t1[(k + 1) % 3], t1[(k + 2) % 3]
            faces[f1] = (c, p, d)
            faces[f2] = (d, q, c)
            touched.update((f1, f2))
            flipped += 1
        total += flipped
        if not flipped:
            break
    return faces, total


# -- seeding --------------------------------------------------------------------------


def disc_parameter_points(n_vertices, radius):
    """Rings of constant hyperbolic spacing in the Poincare disc; returns (points, boundary index)."""
    area = 2 * np.pi * (np.cosh(radius) - 1.0)
    spacing = np.sqrt(area / (np.sqrt(3) / 2 * n_vertices))
    n_rings = max(2, int(round(radius / spacing)))
    spacing = radius / n_rings
    pts = [np.zeros((1, 2))]
    for k in range(1, n_rings + 1):
        rk = k * spacing
        nk = max(6, int(round(2 * np.pi * np.sinh(rk) / spacing)))
        phi = 2 * np.pi * (np.arange(nk) + 0.5 * (k % 2)) / nk if k < n_rings else 2 * np.pi * np.arange(nk) / nk
        r = np.tanh(rk / 2)
        pts.append(np.column_stack([r * np.cos(phi), r * np.sin(phi)]))
    n_b = len(pts[-1])
    p = np.vstack(pts)
    return p, np.arange(len(p) - n_b, len(p))


def _param_laplacian(param, faces):
    d = lambda i, j: np.linalg.norm(param[faces[:, i]] - param[faces[:, j]], axis=1)  # noqa: E731
    lengths = np.column_stack([d(1, 2), d(2, 0), d(0, 1)])
    K, _ = cotan_laplacian(lengths, faces, len(param))
    return K


def seed_mesh(gamma, config):
    """Disc mesh whose boundary sits on the sphere of radius 1 - epsilon above the quasicircle."""
    if not 1e-4 < config.epsilon < 0.2:
        raise DomainError("epsilon must lie in (1e-4, 0.2)")
    param, bidx = disc_parameter_points(config.n_vertices, config.boundary_radius)
    try:
        tri = Delaunay(param)
    except Exception as exc:  # scipy raises QhullError
        raise SeedingError(f"triangulation failed: {exc}") from exc
    faces = tri.simplices.copy()
    p = param[faces]
    orient = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    faces[orient < 0] = faces[orient < 0][:, [0, 2, 1]]
    if np.any(np.abs(orient) < 1e-14):
        raise SeedingError("degenerate triangle in the seed triangulation")

    theta = np.arctan2(param[bidx, 1], param[bidx, 0])
    z = gamma.source(np.exp(1j * theta))
    ball_b = (1.0 - config.epsilon) * sphere_from_complex(z)

    K = _param_laplacian(param, faces)
    n = len(param)
    interior = np.ones(n, bool)
    interior[bidx] = False
    ii = np.flatnonzero(interior)
    Kii = K[ii][:, ii].tocsc()
    Kib = K[ii][:, bidx]
    ball = np.zeros((n, 3))
    ball[bidx] = ball_b
    lu = spla.splu(Kii)
    for c in range(3):
        ball[ii, c] = lu.solve(-(Kib @ ball_b[:, c]))
    if np.any(np.sum(ball**2, axis=1) >= 1.0):
        raise SeedingError("harmonic extension left the ball")
    mesh = TriMesh(from_poincare(ball), faces, bidx, param=param, epsilon=config.epsilon)
    if mesh.euler_characteristic() != 1:
        raise SeedingError("seed is not a disc")
    return mesh


def boundary_sphere_distance(mesh):
    """Hyperbolic distance from each vertex to the truncation sphere |b| = 1 - epsilon."""
    r_eps = 2.0 * np.arctanh(1.0 - mesh.epsilon)
    d0 = np.arccosh(np.maximum(mesh.vertices[:, 3], 1.0))
    return np.abs(r_eps - d0)


def poincare_coords(mesh):
    return to_poincare(mesh.vertices)


def renormalize(mesh):
    return mesh.with_vertices(normalize_point(mesh.vertices))
