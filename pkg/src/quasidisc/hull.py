"""Polyhedral outer approximation of the convex hull of a quasicircle."""

from dataclasses import dataclass

import numpy as np

from .errors import ResolutionError
from .hyperbolic import SupportPlane, sphere_from_complex


@dataclass
class ConvexHullProxy:
    """Half-spaces n . y >= c in the Klein ball, each containing every sample of the curve."""

    normals: np.ndarray  # (k, 3) unit Euclidean normals
    offsets: np.ndarray  # (k,)
    samples: np.ndarray  # (m, 3) points of the curve on the unit sphere

    @property
    def planes(self):
        return [SupportPlane.from_klein(n, c) for n, c in zip(self.normals, self.offsets)]

    @property
    def duals(self):
        """(k, 4) de Sitter duals, oriented so the curve is on the positive side."""
        c = self.offsets[:, None]
        return np.hstack([self.normals, c]) / np.sqrt(1.0 - c**2)

    def signed_sinh_distances(self, x):
        """(n, k) sinh of the signed distance from hyperboloid points to each plane."""
        return np.einsum("nd,kd->nk", x * np.array([1.0, 1.0, 1.0, -1.0]), self.duals)

    def sample_slack(self):
        """min over samples and planes of n . s - c; nonnegative by construction."""
        return float(np.min(self.samples @ self.normals.T - self.offsets[None]))

    def contains_klein(self, y, tol=0.0):
        return np.all(y @ self.normals.T - self.offsets[None] >= -tol, axis=1)


def build_hull_proxy(samples, n_planes, n_tilts=5, rng=None):
    """Support planes through pairs of curve samples, pushed out until the curve is one-sided.

    For a chord (s_i, s_j) the normals orthogonal to it form a circle; ``n_tilts``
    of them are taken on each side, including the two extreme directions.
    Offsets are the minimum of n . s over all samples, so every sample is on
    the nonnegative side.
    """
    s = np.asarray(samples, dtype=float)
    m = len(s)
    if m < 8:
        raise ResolutionError("need at least 8 curve samples to build a hull proxy")
    n_pairs = max(1, int(np.ceil(n_planes / (2 * n_tilts))))
    rng = rng if rng is not None else np.random.default_rng(0)
    # pairs spread around the curve: i and i + m/2 shifts plus random chords
    i = (np.arange(n_pairs) * m) // n_pairs
    j = (i + m // 2 + rng.integers(-m // 8, m // 8 + 1, size=n_pairs)) % m
    normals = []
    for a, b in zip(i, j):
        d = s[b] - s[a]
        if np.linalg.norm(d) < 1e-12:
            continue
        d /= np.linalg.norm(d)
        mid = 0.5 * (s[a] + s[b])
        u = mid - np.dot(mid, d) * d
        if np.linalg.norm(u) < 1e-9:
            u = np.cross(d, [0.0, 0.0, 1.0])
        u /= np.linalg.norm(u)
        v = np.cross(d, u)
        for phi in np.linspace(-np.pi / 2, np.pi / 2, n_tilts):
            for sign in (1.0, -1.0):
                normals.append(sign * (np.cos(phi) * v + np.sin(phi) * u))
    normals = np.array(normals)[:n_planes]
    offsets = np.min(s @ normals.T, axis=0)
    ok = offsets > -1.0 + 1e-12
    if not ok.any():
        raise ResolutionError("no plane separates the curve from the rest of the sphere")
    return ConvexHullProxy(normals[ok], offsets[ok], s)


def curve_samples(gamma, n=4096):
    """Unit-sphere points of the curve, resampled from its source map when available."""
    if getattr(gamma, "source", None) is not None and len(gamma.points) < n:
        theta = 2 * np.pi * np.arange(n) / n
        z = gamma.source(np.exp(1j * theta))
    else:
        z = np.asarray(gamma.points)
    return sphere_from_complex(z)


def hull_containment(mesh, gamma, n_planes=256, proxy=None):
    """Most negative sinh-distance of a mesh vertex to a support plane (0 when contained)."""
    proxy = proxy or build_hull_proxy(curve_samples(gamma), n_planes)
    d = proxy.signed_sinh_distances(mesh.vertices)
    return float(min(np.min(d), 0.0)) if d.size else 0.0



