"""Hyperbolic 3-space in the hyperboloid model.

Points are numpy arrays whose last axis has length 4, read as vectors of
Minkowski space R^{3,1} with the form  <x, y> = x1 y1 + x2 y2 + x3 y3 - x4 y4.
Every function broadcasts over leading axes, so a whole mesh can be passed
as an ``(n, 4)`` array.

Boundary at infinity: a null direction (s, 1) with s on the unit sphere.
The sphere is identified with the Riemann sphere by stereographic projection
from the north pole (0, 0, 1), so the unit disc of C is the lower hemisphere,
the unit circle is the equator and z = infinity is the north pole.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, DomainError, InvalidFrameError, NumericalConsistencyError

J = np.diag([1.0, 1.0, 1.0, -1.0])
ORIGIN = np.array([0.0, 0.0, 0.0, 1.0])

HYPERBOLOID_TOL = 1e-10
FRAME_TOL = 1e-9
AT_INFINITY = complex(np.inf, 0.0)


def mink_inner(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2] - a[..., 3] * b[..., 3]


def mink_norm2(a):
    return mink_inner(a, a)


def normalize_point(x):
    """Push a timelike vector back onto the upper sheet of the hyperboloid."""
    x = np.asarray(x, dtype=float)
    q = -mink_norm2(x)
    if np.any(q <= 0) or not np.all(np.isfinite(x)):
        raise NumericalConsistencyError("vector is not timelike; cannot renormalize")
    y = x / np.sqrt(q)[..., None]
    return np.where(y[..., 3:4] < 0, -y, y)


def normalize_spacelike(v):
    v = np.asarray(v, dtype=float)
    q = mink_norm2(v)
    if np.any(q <= 0):
        raise NumericalConsistencyError("vector is not spacelike")
    return v / np.sqrt(q)[..., None]


def check_hpoint(x, tol=HYPERBOLOID_TOL):
    """Validate HPoint invariants and return ``x`` as a float array."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 4:
        raise NumericalConsistencyError("points must have 4 Minkowski components")
    if not np.all(np.isfinite(x)):
        raise NumericalConsistencyError("non-finite coordinates")
    if np.any(np.abs(mink_norm2(x) + 1.0) > tol * np.maximum(1.0, x[..., 3] ** 2)):
        raise NumericalConsistencyError("point is off the hyperboloid <x,x> = -1")
    if np.any(x[..., 3] <= 0):
        raise NumericalConsistencyError("point is on the lower sheet")
    return x


def hyp_distance(p, q):
    """Hyperbolic distance, cosh d = |<p, q>|.

    Evaluated as 2 asinh(|p - q| / 2) for accuracy at short range, which is
    the same quantity since <p - q, p - q> = -2 - 2 <p, q>.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    ip = mink_inner(p, q)
    if np.any(np.abs(ip) < 1.0 - 1e-8):
        raise NumericalConsistencyError("|<p,q>| < 1: inputs are not hyperboloid points")
    chord2 = np.maximum(mink_norm2(p - q), 0.0)
    return 2.0 * np.arcsinh(np.sqrt(chord2) / 2.0)


@dataclass(frozen=True)
class SupportPlane:
    """Totally geodesic plane p^perp with a chosen positive side.

    ``p`` is a unit spacelike vector; ``orientation`` is +1 or -1 and
    multiplies every signed distance, so the positive side is the one where
    ``orientation * <x, p> > 0``.
    """

    p: np.ndarray
    orientation: int = 1

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if abs(mink_norm2(p) - 1.0) > 1e-10:
            raise NumericalConsistencyError("plane dual must satisfy <p,p> = 1")
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        object.__setattr__(self, "p", p)

    @classmethod
    def from_dual(cls, p, orientation=1):
        return cls(normalize_spacelike(p), orientation)

    @classmethod
    def from_klein(cls, normal, offset):
        """Plane {y : normal . y = offset} in the Klein ball, positive where normal . y > offset."""
        n = np.asarray(normal, dtype=float)
        n = n / np.linalg.norm(n)
        if abs(offset) >= 1.0:
            raise DomainError("plane misses the Klein ball")
        return cls(np.append(n, offset) / np.sqrt(1.0 - offset**2), 1)

    @classmethod
    def through(cls, x, normal):
        """Plane through ``x`` orthogonal to the tangent vector ``normal``."""
        x = np.asarray(x, dtype=float)
        n = np.asarray(normal, dtype=float)
        n = n + mink_inner(n, x) * x
        return cls(normalize_spacelike(n), 1)

    def oriented_toward(self, ref):
        s = float(mink_inner(ref, self.p))
        return SupportPlane(self.p, 1 if s >= 0 else -1)

    @property
    def dual(self):
        return self.orientation * self.p

    def transformed(self, m):
        return SupportPlane(np.asarray(m) @ self.p, self.orientation)


def plane_signed_sinh_distance(x, plane):
    """sinh of the signed distance from ``x`` to ``plane``; zero exactly on it."""
    return mink_inner(x, plane.dual)


def normal_flow(x, n, rho):
    """Point at signed distance ``rho`` along the geodesic with unit velocity ``n``."""
    x = np.asarray(x, dtype=float)
    n = np.asarray(n, dtype=float)
    if np.any(np.abs(mink_norm2(n) - 1.0) > FRAME_TOL) or np.any(np.abs(mink_inner(x, n)) > FRAME_TOL):
        raise InvalidFrameError("n must be a unit tangent vector at x")
    rho = np.asarray(rho, dtype=float)[..., None]
    return normalize_point(np.cosh(rho) * x + np.sinh(rho) * n)


def project_to_plane(x, plane):
    """Foot of the perpendicular from ``x`` to ``plane``."""
    x = np.asarray(x, dtype=float)
    a = mink_inner(x, plane.p)[..., None]
    return normalize_point((x - a * plane.p) / np.sqrt(1.0 + a * a))


def parallel_planes_distance_profile(r, w, with_sinh=False):
    """Distance d from P- of the point of P+ above a point at distance r from the foot.

    P- and P+ are orthogonal to a common geodesic segment of length w;
    tanh d = cosh r tanh w.  With ``with_sinh`` also returns
    sinh d = cosh r sinh w / sqrt(1 - sinh^2 r sinh^2 w), computed separately.
    """
    r = np.asarray(r, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(r < 0) or np.any(w < 0):
        raise DomainError("r and w must be nonnegative")
    t = np.cosh(r) * np.tanh(w)
    if np.any(t >= 1.0):
        raise DivergenceError("cosh r tanh w >= 1: the perpendicular never meets P+")
    d = np.arctanh(t)
    if not with_sinh:
        return d
    s = np.cosh(r) * np.sinh(w) / np.sqrt(1.0 - np.sinh(r) ** 2 * np.sinh(w) ** 2)
    return d, s


# -- isometries ---------------------------------------------------------------


def is_isometry(m, tol=1e-9):
    m = np.asarray(m, dtype=float)
    return bool(np.allclose(m.T @ J @ m, J, atol=tol) and m[3, 3] > 0)


def boost_to(x):
    """Pure boost sending the origin to ``x``; equals parallel transport along [o, x]."""
    x = np.asarray(x, dtype=float)
    xs, x4 = x[:3], x[3]
    m = np.eye(4)
    m[:3, :3] += np.outer(xs, xs) / (1.0 + x4)
    m[:3, 3] = xs
    m[3, :3] = xs
    m[3, 3] = x4
    return m


def rotation_isometry(r):
    m = np.eye(4)
    m[:3, :3] = r
    return m


def translation_isometry(direction, t):
    """Boost of length ``t`` along the unit spatial vector ``direction``."""
    v = np.asarray(direction, dtype=float)
    v = v / np.linalg.norm(v)
    return boost_to(np.append(np.sinh(t) * v, np.cosh(t)))


def random_isometry(rng, scale=1.0):
    """Random element of SO+(3,1): a rotation followed by a boost."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    direction = rng.normal(size=3)
    return translation_isometry(direction, scale * rng.uniform(0, 1)) @ rotation_isometry(q)


def random_points(rng, n, scale=1.5):
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    t = scale * rng.uniform(0, 1, size=n)[:, None]
    return np.hstack([np.sinh(t) * v, np.cosh(t)])


# -- models ---------------------------------------------------------------------


def to_klein(x):
    x = np.asarray(x, dtype=float)
    return x[..., :3] / x[..., 3:4]


def from_klein(k):
    k = np.asarray(k, dtype=float)
    s = 1.0 - np.sum(k * k, axis=-1, keepdims=True)
    if np.any(s <= 0):
        raise DomainError("Klein point outside the open unit ball")
    return np.concatenate([k, np.ones_like(s)], axis=-1) / np.sqrt(s)


def to_poincare(x):
    x = np.asarray(x, dtype=float)
    return x[..., :3] / (1.0 + x[..., 3:4])


def from_poincare(b):
    b = np.asarray(b, dtype=float)
    r2 = np.sum(b * b, axis=-1, keepdims=True)
    if np.any(r2 >= 1):
        raise DomainError("Poincare point outside the open unit ball")
    return np.concatenate([2.0 * b, 1.0 + r2], axis=-1) / (1.0 - r2)


def sphere_from_complex(z):
    """Inverse stereographic projection C-hat -> S^2 (disc -> lower hemisphere)."""
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape + (3,))
    inf = ~np.isfinite(z)
    zf = np.where(inf, 0.0, z)
    m = np.abs(zf) ** 2
    out[..., 0] = 2 * zf.real / (m + 1)
    out[..., 1] = 2 * zf.imag / (m + 1)
    r = np.abs(zf)
    out[..., 2] = (r - 1) * (r + 1) / (m + 1)  # exact zero on the unit circle
    out[inf] = (0.0, 0.0, 1.0)
    return out


def complex_from_sphere(s):
    """Stereographic projection from the north pole; the pole goes to AT_INFINITY."""
    s = np.asarray(s, dtype=float)
    s = s / np.linalg.norm(s, axis=-1, keepdims=True)
    den = 1.0 - s[..., 2]
    pole = den < 1e-15
    safe = np.where(pole, 1.0, den)
    z = (s[..., 0] + 1j * s[..., 1]) / safe
    return np.where(pole, AT_INFINITY, z)


def null_ray_from_complex(z):
    return np.concatenate([sphere_from_complex(z), np.ones(np.shape(z) + (1,))], axis=-1)


def complex_from_null_ray(v):
    v = np.asarray(v, dtype=float)
    if np.any(np.abs(mink_norm2(v)) > 1e-9 * np.maximum(1.0, v[..., 3] ** 2)) or np.any(v[..., 3] <= 0):
        raise NumericalConsistencyError("not a future-pointing null vector")
    return complex_from_sphere(v[..., :3] / v[..., 3:4])


MODELS = ("hyperboloid", "klein", "poincare_ball", "boundary_C")


def model_convert(x, source, target):
    """Convert between hyperboloid, Klein ball, Poincare ball and the boundary chart.

    Interior points travel among the first three models.  Boundary points
    are given either as complex numbers (``boundary_C``), unit-sphere points
    (``klein``/``poincare_ball``, both models agree on the sphere) or null
    rays (``hyperboloid``); pass ``source='boundary_C'`` or a sphere/ray
    together with ``target='boundary_C'``.
    """
    if source not in MODELS or target not in MODELS:
        raise ValueError(f"unknown model; expected one of {MODELS}")
    if source == target:
        return np.array(x, copy=True)
    if source == "boundary_C":
        if target == "hyperboloid":
            return null_ray_from_complex(x)
        return sphere_from_complex(x)
    if target == "boundary_C":
        x = np.asarray(x, dtype=float)
        if source == "hyperboloid":
            return complex_from_null_ray(x)
        if np.any(np.abs(np.linalg.norm(x, axis=-1) - 1.0) > 1e-9):
            raise DomainError("boundary conversion needs a point on the unit sphere")
        return complex_from_sphere(x)
    h = {"hyperboloid": lambda v: check_hpoint(v, tol=1e-8),
         "klein": from_klein,
         "poincare_ball": from_poincare}[source](x)
    return {"hyperboloid": lambda v: v, "klein": to_klein, "poincare_ball": to_poincare}[target](h)
