"""Conformal charts of discs in the Poincare ball and the harmonic-map residual.

A chart stores samples of sigma: D -> B^3 together with its first
derivatives and flat Laplacian at a set of nodes.  Charts come from a
closed-form map (finite differences on a Cartesian grid), from a disc mesh
(discrete conformal parametrisation followed by local polynomial fits), or
from the fixed-point relaxation of the harmonic-map system on a polar grid.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize
from scipy.spatial import cKDTree

from .errors import ChartError, DivergenceError, DomainError
from .hyperbolic import from_poincare, to_poincare
from .mesh import chord_lengths, face_areas, mesh_laplacian


@dataclass
class ConformalChart:
    z: np.ndarray  # (n,) complex nodes
    sigma: np.ndarray  # (n, 3)
    dx: np.ndarray  # (n, 3)
    dy: np.ndarray  # (n, 3)
    lap: np.ndarray  # (n, 3) flat Laplacian of sigma
    tol: float = 0.05
    factor: np.ndarray = None  # e^{2f} when measured independently of the derivatives

    @property
    def density(self):
        """Conformal factor 2 / (1 - |sigma|^2) of the Poincare ball at each sample."""
        return 2.0 / (1.0 - np.sum(self.sigma**2, axis=1))

    @property
    def energy_density(self):
        """||d sigma||^2 in the hyperbolic metric."""
        return self.density**2 * (np.sum(self.dx**2, axis=1) + np.sum(self.dy**2, axis=1))

    @property
    def exp2f(self):
        """e^{2f}; defaults to ||d sigma||^2 / 2."""
        return 0.5 * self.energy_density if self.factor is None else self.factor

    def factor_defect(self):
        """max |2 e^{2f} - ||d sigma||^2| / ||d sigma||^2."""
        e = self.energy_density
        return float(np.max(np.abs(2.0 * self.exp2f - e) / e))

    def conformality_defect(self):
        """|<s_x, s_y>| / (|s_x||s_y|) + ||s_x| - |s_y|| / mean(|s_x|, |s_y|), per node."""
        a = np.linalg.norm(self.dx, axis=1)
        b = np.linalg.norm(self.dy, axis=1)
        c = np.abs(np.sum(self.dx * self.dy, axis=1))
        return c / (a * b) + np.abs(a - b) / (0.5 * (a + b))

    def check(self):
        d = float(np.max(self.conformality_defect()))
        if not np.isfinite(d) or d > self.tol:
            raise ChartError(f"conformality defect {d:.3g} exceeds chart tolerance {self.tol}")
        f = self.factor_defect()
        if not np.isfinite(f) or f > self.tol:
            raise ChartError(f"2 e^2f differs from ||d sigma||^2 by {f:.3g}")
        return d

    # -- constructors ------------------------------------------------------------

    @classmethod
    def from_function(cls, fn, spacing=1e-2, radius=0.9, tol=0.05):
        """Sample a map given on complex arguments; derivatives by central differences."""
        if not 0 < radius < 1:
            raise DomainError("chart radius must lie in (0, 1)")
        h = spacing
        k = int(np.floor(radius / h))
        g = h * np.arange(-k, k + 1)
        zz = g[None, :] + 1j * g[:, None]
        inside = np.abs(zz) <= radius - h
        z = zz[inside]
        s0 = np.asarray(fn(z))
        sxp, sxm = np.asarray(fn(z + h)), np.asarray(fn(z - h))
        syp, sym = np.asarray(fn(z + 1j * h)), np.asarray(fn(z - 1j * h))
        dx = (sxp - sxm) / (2 * h)
        dy = (syp - sym) / (2 * h)
        lap = (sxp + sxm + syp + sym - 4 * s0) / h**2
        return cls(z, s0, dx, dy, lap, tol)

    @classmethod
    def from_mesh(cls, mesh, spacing=2e-2, margin=1.0, neighbours=24, tol=0.05, param=None):
        """Resample a disc mesh through its discrete conformal parametrisation.

        The mesh is mapped conformally onto the unit disc and the chart
        variable is z = (1 - epsilon) w, so a flat disc gets its standard
        chart.  Nodes are restricted to |z| < tanh((R - margin) / 2), where R
        is the hyperbolic radius of the truncation sphere.  e^{2f} is measured
        as the ratio of surface area to the hyperbolic area of the image
        triangles, averaged over the faces nearest each node.
        """
        w = conformal_parameter(mesh) if param is None else param
        eps = mesh.epsilon if mesh.epsilon is not None else 0.0
        zv = (1.0 - eps) * w
        r_trunc = 2.0 * np.arctanh(1.0 - eps) if eps > 0 else 2.0 * np.arctanh(np.max(np.abs(zv)))
        r_chart = np.tanh(max(r_trunc - margin, 0.1) / 2.0)
        k = int(np.floor(r_chart / spacing))
        g = spacing * np.arange(-k, k + 1)
        zz = (g[None, :] + 1j * g[:, None]).ravel()
        z = zz[np.abs(zz) <= r_chart]
        ball = to_poincare(mesh.vertices)
        coef = _local_fit(zv, ball, z, neighbours)
        ratio = _area_ratio(mesh, zv, z, 2 * neighbours)
        factor = ratio * 4.0 / (1.0 - np.abs(z) ** 2) ** 2
        return cls(z, coef[:, 0], coef[:, 1], coef[:, 2], coef[:, 3] + coef[:, 5], tol, factor)


def _area_ratio(mesh, zv, targets, k):
    """Surface area over hyperbolic image area of the faces around each target, Gaussian weighted."""
    f = mesh.faces
    surf = face_areas(mesh.vertices, f)
    flat = np.column_stack([zv.real, zv.imag, np.zeros(len(zv))])
    image = face_areas(from_poincare(flat), f)
    cen = zv[f].mean(axis=1)
    tree = cKDTree(np.column_stack([cen.real, cen.imag]))
    dist, idx = tree.query(np.column_stack([targets.real, targets.imag]), k=k)
    h = dist[:, k // 2][:, None]
    w = np.exp(-((dist / h) ** 2))
    return np.sum(w * surf[idx], axis=1) / np.sum(w * image[idx], axis=1)


def _local_fit(nodes, values, targets, k):
    """Weighted quadratic fits of ``values`` around each target; returns (t, 6, 3) coefficients.

    Basis: 1, dx, dy, dx^2/2, dx dy, dy^2/2.
    """
    pts = np.column_stack([nodes.real, nodes.imag])
    tree = cKDTree(pts)
    tp = np.column_stack([targets.real, targets.imag])
    dist, idx = tree.query(tp, k=k)
    h = dist[:, k // 2][:, None]
    w = np.exp(-((dist / h) ** 2))
    dx = pts[idx, 0] - tp[:, 0:1]
    dy = pts[idx, 1] - tp[:, 1:2]
    basis = np.stack([np.ones_like(dx), dx, dy, 0.5 * dx * dx, dx * dy, 0.5 * dy * dy], axis=-1)
    # scale columns by the local spacing for conditioning
    sc = np.stack([np.ones_like(h[:, 0]), h[:, 0], h[:, 0], h[:, 0] ** 2, h[:, 0] ** 2, h[:, 0] ** 2], axis=-1)
    a = basis / sc[:, None, :] * np.sqrt(w)[..., None]
    b = values[idx] * np.sqrt(w)[..., None]
    ata = np.einsum("tkp,tkq->tpq", a, a)
    atb = np.einsum("tkp,tkc->tpc", a, b)
    coef = np.linalg.solve(ata, atb) / sc[..., None]
    return coef


def conformal_parameter(mesh, center=None, max_iter=2000, gtol=1e-10):
    """Discrete conformal map of the mesh onto the unit disc (complex, per vertex).

    Boundary angles minimise the Dirichlet energy of the harmonic extension
    (cotangent weights of the induced metric), which for a disc is a
    conformal map once the energy equals the image area.  The vertex
    ``center`` (default: nearest to the hyperboloid origin) is pinned to 0
    and the mean angular offset to the seed angles is pinned to 0.
    """
    x = mesh.vertices
    n = len(x)
    b = np.asarray(mesh.boundary)
    inner = mesh.interior
    ii = np.flatnonzero(inner)
    K, _ = mesh_laplacian(x, mesh.faces)
    K = K.tocsr()
    kii = K[ii][:, ii].tocsc()
    kib = K[ii][:, b]
    kbb = K[b][:, b]
    lu = spla.splu(kii)
    if center is None:
        center = int(np.argmin(x[:, 3] + np.where(inner, 0.0, np.inf)))
    pos = np.full(n, -1)
    pos[ii] = np.arange(len(ii))
    if pos[center] < 0:
        raise DomainError("centre vertex must be interior")
    e = np.zeros(len(ii))
    e[pos[center]] = 1.0
    hc = -(kib.T @ lu.solve(e))  # w_center = hc . w_boundary

    if mesh.param is not None:
        theta0 = np.arctan2(mesh.param[b, 1], mesh.param[b, 0])
    else:
        kb = to_poincare(x[b])
        theta0 = np.arctan2(kb[:, 1], kb[:, 0])
    theta0 = np.unwrap(theta0)
    nb = len(b)
    mu = 10.0 * nb

    def energy(phi):
        wb = np.exp(1j * phi)
        wi = lu.solve(-(kib @ wb.real)) + 1j * lu.solve(-(kib @ wb.imag))
        kw = kbb @ wb + kib.T @ wi  # (K w)_b; interior rows vanish
        ed = 0.5 * float(np.real(np.vdot(wb, kw)))
        wc = np.dot(hc, wb)
        off = np.mean(phi - theta0)
        val = ed + 0.5 * mu * abs(wc) ** 2 + 0.5 * mu * off**2
        g = np.real(np.conj(1j * wb) * kw)
        g += mu * np.real(np.conj(wc) * hc * 1j * wb)
        g += mu * off / nb
        return val, g

    res = minimize(energy, theta0, jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter, "gtol": gtol, "ftol": 1e-15})
    phi = res.x
    if np.any(np.diff(phi) <= 0) and not np.all(np.diff(phi) < 0):
        raise DivergenceError("boundary parametrisation lost monotonicity")
    wb = np.exp(1j * phi)
    w = np.zeros(n, dtype=complex)
    w[b] = wb
    w[ii] = lu.solve(-(kib @ wb.real)) + 1j * lu.solve(-(kib @ wb.imag))
    return w


def conformal_distortion(mesh, w):
    """Per-face ratio of singular values of the affine map from a face to its image."""
    lengths = chord_lengths(mesh.vertices, mesh.faces)
    f = mesh.faces
    # place each face isometrically in the plane
    l0, l1, l2 = lengths.T
    ax = (l1**2 + l2**2 - l0**2) / (2 * l2)
    ay = np.sqrt(np.maximum(l1**2 - ax**2, 0.0))
    # corners: 0 at origin, 1 at (l2, 0), 2 at (ax, ay)
    p1 = np.column_stack([l2, np.zeros_like(l2)])
    p2 = np.column_stack([ax, ay])
    q1 = w[f[:, 1]] - w[f[:, 0]]
    q2 = w[f[:, 2]] - w[f[:, 0]]
    src = np.stack([p1, p2], axis=-1)  # (m, 2, 2) columns
    dst = np.stack([np.column_stack([q1.real, q1.imag]), np.column_stack([q2.real, q2.imag])], axis=-1)
    jac = dst @ np.linalg.inv(src)
    s = np.linalg.svd(jac, compute_uv=False)
    return s[:, 0] / s[:, 1]


# -- residuals -----------------------------------------------------------------------


def christoffel_term(sigma, dx, dy):
    """Gamma^l_jk (s_x^j s_x^k + s_y^j s_y^k) for the Poincare ball metric 4|db|^2/(1-|b|^2)^2."""
    grad_phi = 2.0 * sigma / (1.0 - np.sum(sigma**2, axis=-1, keepdims=True))
    out = np.zeros_like(sigma)
    for d in (dx, dy):
        out += 2.0 * np.sum(d * grad_phi, axis=-1, keepdims=True) * d
        out -= np.sum(d * d, axis=-1, keepdims=True) * grad_phi
    return out


def harmonic_residual(chart, check=True):
    """max over nodes of |Lap sigma + Gamma(d sigma, d sigma)|_h / ||d sigma||^2.

    The tension is measured in the hyperbolic metric at sigma, so the ratio
    is invariant under rescaling of the chart variable.
    """
    if check:
        chart.check()
    tension = chart.lap + christoffel_term(chart.sigma, chart.dx, chart.dy)
    num = chart.density * np.linalg.norm(tension, axis=1)
    return float(np.max(num / chart.energy_density))


def conformal_factor_bounds(chart, delta=1.0):
    """(upper, lower) slacks of the Ahlfors-type bounds, relative to the Poincare density.

    upper = min (1 - e^{2f} (1-|z|^2)^2 / 4), lower = min (e^{2f} (1-|z|^2)^2 / 4 - 1/delta^2).
    With curvature in [-delta^2, -1] both are nonnegative on a complete disc;
    delta = sqrt(1 + sup lambda^2) for a minimal surface.
    """
    if delta <= 0:
        raise DomainError("delta must be positive")
    ratio = chart.exp2f * (1.0 - np.abs(chart.z) ** 2) ** 2 / 4.0
    return float(np.min(1.0 - ratio)), float(np.min(ratio - 1.0 / delta**2))


# -- relaxation solver ------------------------------------------------------------------


def relax_harmonic(boundary, n_r=64, n_theta=128, r_max=0.98, tol=1e-10, max_iter=200):
    """Solve the harmonic-map system on a polar grid by fixed-point iteration.

    ``boundary(theta)`` returns (n_theta, 3) Poincare-ball points for the
    circle |z| = r_max.  Each sweep solves Lap sigma = -Gamma(sigma) with the
    previous sigma on the right.  Returns a chart on the interior nodes.
    """
    dr = r_max / n_r
    r = dr * np.arange(1, n_r + 1)
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    dth = th[1]
    lap = _polar_laplacian(r, n_theta, dr, dth)
    nint = (n_r - 1) * n_theta + 1  # centre + rings 1..n_r-1
    bvals = np.asarray(boundary(th), dtype=float)
    z = np.concatenate([[0.0], (r[:-1, None] * np.exp(1j * th[None, :])).ravel()])
    # start from the flat harmonic extension
    a = lap[:, :nint].tocsc()
    bcols = lap[:, nint:]
    lu = spla.splu(a)
    sigma = np.column_stack([lu.solve(-(bcols @ bvals[:, c])) for c in range(3)])
    for it in range(max_iter):
        dx, dy = _polar_gradient(sigma, bvals, r, n_theta, dr, dth)
        rhs = -christoffel_term(sigma, dx, dy)
        new = np.column_stack([lu.solve(rhs[:, c] - bcols @ bvals[:, c]) for c in range(3)])
        if not np.all(np.isfinite(new)) or np.any(np.sum(new**2, axis=1) >= 1.0):
            raise DivergenceError("relaxation left the ball")
        step = float(np.max(np.abs(new - sigma)))
        sigma = new
        if step < tol:
            break
    else:
        raise DivergenceError(f"relaxation did not converge in {max_iter} sweeps")
    dx, dy = _polar_gradient(sigma, bvals, r, n_theta, dr, dth)
    lap_s = np.column_stack([lap[:, :nint] @ sigma[:, c] + bcols @ bvals[:, c] for c in range(3)])
    return ConformalChart(z, sigma, dx, dy, lap_s)


def _polar_laplacian(r, n_theta, dr, dth):
    """Five-point polar Laplacian; unknowns are the centre then rings 1..n_r (last ring is data)."""
    n_r = len(r)
    n = 1 + n_r * n_theta
    idx = lambda i, j: 1 + (i * n_theta) + (j % n_theta)  # noqa: E731
    rows, cols, vals = [], [], []
    # centre: average of the first ring
    rows += [0] * (n_theta + 1)
    cols += [0] + [idx(0, j) for j in range(n_theta)]
    vals += [-4.0 / dr**2] + [4.0 / (n_theta * dr**2)] * n_theta
    for i in range(n_r - 1):
        ri = r[i]
        rp, rm = ri + dr / 2, ri - dr / 2
        for j in range(n_theta):
            k = idx(i, j)
            rows += [k] * 5
            inner = 0 if i == 0 else idx(i - 1, j)
            cols += [k, idx(i + 1, j), inner, idx(i, j + 1), idx(i, j - 1)]
            vals += [-(rp + rm) / (ri * dr**2) - 2.0 / (ri * dth) ** 2,
                     rp / (ri * dr**2), rm / (ri * dr**2),
                     1.0 / (ri * dth) ** 2, 1.0 / (ri * dth) ** 2]
    m = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    keep = 1 + (n_r - 1) * n_theta
    return m[:keep]


def _polar_gradient(sigma, bvals, r, n_theta, dr, dth):
    n_r = len(r)
    rings = np.concatenate([sigma[1:].reshape(n_r - 1, n_theta, 3), bvals[None]], axis=0)
    centre = sigma[0]
    ext = np.concatenate([np.broadcast_to(centre, (1, n_theta, 3)), rings], axis=0)
    s_r = (ext[2:] - ext[:-2]) / (2 * dr)  # rings 1..n_r-1
    s_t = (np.roll(rings[:-1], -1, 1) - np.roll(rings[:-1], 1, 1)) / (2 * dth)
    th = dth * np.arange(n_theta)
    c, s = np.cos(th)[None, :, None], np.sin(th)[None, :, None]
    rr = r[:-1, None, None]
    dx = c * s_r - s * s_t / rr
    dy = s * s_r + c * s_t / rr
    # centre derivatives from the first ring by least squares on cos/sin modes
    first = rings[0]
    cx = 2.0 / n_theta * np.sum(first * np.cos(th)[:, None], axis=0) / r[0]
    cy = 2.0 / n_theta * np.sum(first * np.sin(th)[:, None], axis=0) / r[0]
    dx = np.concatenate([cx[None], dx.reshape(-1, 3)])
    dy = np.concatenate([cy[None], dy.reshape(-1, 3)])
    return dx, dy
