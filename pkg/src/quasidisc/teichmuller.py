"""Conformal maps of the exterior disc, quasicircles and the Bers norm.

A quasicircle is produced as the image of the unit circle under a
normalized Laurent map  psi(z) = z + sum_k c_k z^-k,  conformal on
|z| > 1.  All derivatives are evaluated term by term, so the Schwarzian
and the Bers norm involve no finite differences.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CriticalPointError,
    DegenerateCompositionError,
    DivergenceError,
    DomainError,
    NotUnivalentError,
    OutOfCertificateError,
    ResolutionError,
)

MAX_ORDER = 16


# -- maps -------------------------------------------------------------------------


@dataclass(frozen=True)
class MoebiusTransform:
    a: complex
    b: complex
    c: complex
    d: complex

    def __post_init__(self):
        det = self.a * self.d - self.b * self.c
        if abs(det) < 1e-300:
            raise DomainError("singular Moebius matrix")
        if abs(det - 1) > 1e-12:
            s = np.sqrt(complex(det))
            for name in "abcd":
                object.__setattr__(self, name, complex(getattr(self, name)) / s)

    @classmethod
    def random(cls, rng, scale=1.0):
        a, b, c, d = scale * (rng.normal(size=4) + 1j * rng.normal(size=4))
        return cls(a, b, c, d)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return (self.a * z + self.b) / (self.c * z + self.d)

    def derivatives(self, z):
        z = np.asarray(z, dtype=complex)
        w = self.c * z + self.d
        return (self.a * z + self.b) / w, 1 / w**2, -2 * self.c / w**3, 6 * self.c**2 / w**4

    def schwarzian_at_infinity(self):
        return 0j


@dataclass(frozen=True)
class Composite:
    """outer o inner, differentiated by the chain rule up to third order."""

    outer: object
    inner: object

    def __call__(self, z):
        return self.outer(self.inner(z))

    def derivatives(self, z):
        g0, g1, g2, g3 = self.inner.derivatives(z)
        _, f1, f2, f3 = self.outer.derivatives(g0)
        return (
            self.outer(g0),
            f1 * g1,
            f2 * g1**2 + f1 * g2,
            f3 * g1**3 + 3 * f2 * g1 * g2 + f1 * g3,
        )

    def schwarzian_at_infinity(self):
        """Defined when the outer map is Moebius, which leaves the Schwarzian unchanged."""
        if isinstance(self.outer, MoebiusTransform) and hasattr(self.inner, "schwarzian_at_infinity"):
            return self.inner.schwarzian_at_infinity()
        raise AttributeError("schwarzian_at_infinity")


@dataclass(frozen=True)
class UnivalenceCertificate:
    resolution: int
    radii: tuple
    min_abs_derivative: float


@dataclass(frozen=True)
class UnivalenceFailure:
    resolution: int
    witness: tuple  # (z1, z2) with psi(z1) ~ psi(z2), or (z, z) at a critical point
    reason: str

    def __bool__(self):
        return False


@dataclass(frozen=True)
class LaurentMap:
    """psi(z) = z + sum_{k=1..m} c_k z^-k on |z| > 1 (fixes infinity, psi'(inf) = 1)."""

    coefficients: tuple
    certificate: object = field(default=None, compare=False)

    def __post_init__(self):
        c = tuple(complex(x) for x in self.coefficients)
        if len(c) > MAX_ORDER:
            raise DomainError(f"at most {MAX_ORDER} Laurent coefficients are supported")
        if not all(np.isfinite(x) for x in c):
            raise DomainError("non-finite coefficient")
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def identity(cls):
        return cls(())

    @classmethod
    def ellipse(cls, t):
        return cls((t,))

    @classmethod
    def certified(cls, coefficients, resolution=128):
        psi = cls(coefficients)
        cert = univalence_grid_check(psi, resolution)
        if not cert:
            raise NotUnivalentError(f"map is not univalent ({cert.reason}); witness {cert.witness}")
        return cls(psi.coefficients, cert)

    @property
    def order(self):
        return len(self.coefficients)

    def __call__(self, z):
        return self.derivatives(z)[0]

    def derivatives(self, z):
        """(psi, psi', psi'', psi''') evaluated exactly from the series."""
        z = np.asarray(z, dtype=complex)
        inv = 1.0 / z
        f0 = z.copy()
        f1 = np.ones_like(z)
        f2 = np.zeros_like(z)
        f3 = np.zeros_like(z)
        p = inv.copy()  # z^-k
        for k, c in enumerate(self.coefficients, start=1):
            if c != 0:
                f0 = f0 + c * p
                f1 = f1 - k * c * p * inv
                f2 = f2 + k * (k + 1) * c * p * inv**2
                f3 = f3 - k * (k + 1) * (k + 2) * c * p * inv**3
            p = p * inv
        return f0, f1, f2, f3

    def schwarzian_at_infinity(self):
        """lim z^4 S_psi(z) as z -> infinity, which is -6 c_1."""
        return -6.0 * self.coefficients[0] if self.coefficients else 0j

    def area_sum(self):
        return sum(k * abs(c) for k, c in enumerate(self.coefficients, start=1))

    def dumps(self):
        return "".join(f"{k} {float(c.real)!r} {float(c.imag)!r}\n" for k, c in enumerate(self.coefficients, start=1))

    @classmethod
    def loads(cls, text):
        coeffs = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            k, re, im = line.split()
            coeffs[int(k)] = complex(float(re), float(im))
        m = max(coeffs, default=0)
        if any(k < 1 for k in coeffs):
            raise DomainError("Laurent indices start at 1")
        return cls(tuple(coeffs.get(k, 0j) for k in range(1, m + 1)))

    def save(self, path):
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def random_univalent_map(rng, order=6, budget=0.95):
    """Random Laurent map with sum k|c_k| <= budget < 1, hence univalent."""
    raw = rng.normal(size=order) + 1j * rng.normal(size=order)
    raw *= rng.uniform(0, 1, size=order) ** 2
    weights = np.arange(1, order + 1) * np.abs(raw)
    scale = budget * rng.uniform(0.05, 1.0) / weights.sum()
    return LaurentMap(tuple(raw * scale))


# -- Schwarzian and densities ---------------------------------------------------


def schwarzian(f, z):
    """S_f = (f''/f')' - (f''/f')^2 / 2, from exact derivatives.

    Moebius maps return exact zeros, avoiding cancellation where the
    derivatives are tiny.
    """
    if isinstance(f, MoebiusTransform):
        with np.errstate(divide="ignore", invalid="ignore"):
            _, d1, _, _ = f.derivatives(z)
        if np.any(~np.isfinite(d1)):
            raise CriticalPointError("z is the pole of the Moebius map")
        return np.zeros(np.shape(z), dtype=complex)
    _, d1, d2, d3 = f.derivatives(z)
    if np.any(np.abs(d1) < 1e-14):
        raise CriticalPointError("f'(z) = 0")
    a1 = d2 / d1
    return d3 / d1 - 1.5 * a1 * a1


def poincare_density(z, domain="disc"):
    """Density of the curvature -1 metric: 2/(1-|z|^2) on the disc, 2/(|z|^2-1) outside."""
    m = np.abs(np.asarray(z, dtype=complex)) ** 2
    if domain == "disc":
        if np.any(m >= 1):
            raise DivergenceError("point not inside the unit disc")
        return 2.0 / (1.0 - m)
    if domain == "exterior_disc":
        if np.any(m <= 1):
            raise DivergenceError("point not outside the unit disc")
        return 2.0 / (m - 1.0)
    raise DomainError(f"unknown domain {domain!r}")


# -- univalence ----------------------------------------------------------------


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _segment_hits(p, q, same_ring_skip, tol=1e-13):
    """Pairs (i, j) of crossing or touching segments p[i]->q[i] and p[j]->q[j]."""
    hits = []
    n = len(p)
    scale = max(1.0, float(np.max(np.abs(np.concatenate([p, q])))))
    eps = tol * scale * scale
    for i in range(n - 1):
        j = np.arange(i + 1, n)
        j = j[~same_ring_skip(i, j)]
        if j.size == 0:
            continue
        a, b, c, d = p[i], q[i], p[j], q[j]
        # bounding-box rejection first
        lo_x = np.minimum(c.real, d.real)
        hi_x = np.maximum(c.real, d.real)
        lo_y = np.minimum(c.imag, d.imag)
        hi_y = np.maximum(c.imag, d.imag)
        box = (np.maximum(lo_x, min(a.real, b.real)) <= np.minimum(hi_x, max(a.real, b.real)) + 1e-14) & (
            np.maximum(lo_y, min(a.imag, b.imag)) <= np.minimum(hi_y, max(a.imag, b.imag)) + 1e-14
        )
        if not np.any(box):
            continue
        j, c, d = j[box], c[box], d[box]
        o1 = _orient(a.real, a.imag, b.real, b.imag, c.real, c.imag)
        o2 = _orient(a.real, a.imag, b.real, b.imag, d.real, d.imag)
        o3 = _orient(c.real, c.imag, d.real, d.imag, a.real, a.imag)
        o4 = _orient(c.real, c.imag, d.real, d.imag, b.real, b.imag)
        hit = (o1 * o2 <= eps) & (o3 * o4 <= eps)
        for jj in j[hit]:
            hits.append((i, int(jj)))
        if hits:
            return hits
    return hits


def polygon_self_intersections(points):
    """Index pairs of non-adjacent edges of the closed polygon that meet."""
    pts = np.asarray(points, dtype=complex)
    n = len(pts)
    p, q = pts, np.roll(pts, -1)

    def skip(i, j):
        return (j == i) | (j == (i + 1) % n) | (j == (i - 1) % n) | ((i == 0) & (j == n - 1))

    return _segment_hits(p, q, skip)


def _signed_area(points):
    x, y = points.real, points.imag
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def univalence_grid_check(psi, resolution=128):
    """Certify injectivity of ``psi`` on the closed exterior disc, or return a witness.

    Rings |z| = r from 1 out to a radius R0 beyond which the series tail
    already forces injectivity (sum k|c_k| R0^-(k+1) < 1) are mapped; the
    map is univalent on the sampled annulus when every ring image is a
    simple, positively oriented polygon, the ring images are pairwise
    disjoint, and psi' does not vanish on the grid.
    """
    if resolution < 64:
        raise DomainError("resolution must be >= 64")
    coeffs = np.asarray(psi.coefficients, dtype=complex)
    if coeffs.size == 0:
        return UnivalenceCertificate(resolution, (1.0,), 1.0)
    k = np.arange(1, coeffs.size + 1)
    r0 = 1.0
    while np.sum(k * np.abs(coeffs) * r0 ** (-(k + 1.0))) >= 0.5:
        r0 *= 1.25
    n_near = max(4, int(np.log2(resolution)))
    radii = np.unique(np.concatenate([[1.0], 1.0 + 2.0 ** -np.arange(n_near, 0, -1), np.geomspace(1.5, max(r0, 1.5), 6)]))
    theta = 2 * np.pi * np.arange(resolution) / resolution
    zs = radii[:, None] * np.exp(1j * theta)[None, :]
    w, d1, _, _ = psi.derivatives(zs)
    d1abs = np.abs(d1)
    if np.min(d1abs) < 1e-10:
        i = np.unravel_index(np.argmin(d1abs), d1abs.shape)
        return UnivalenceFailure(resolution, (complex(zs[i]), complex(zs[i])), "vanishing derivative")
    for ring in range(len(radii)):
        if _signed_area(w[ring]) <= 0:
            return UnivalenceFailure(resolution, _nearest_pair(psi, zs, w), f"orientation reversed on |z|={radii[ring]:.4g}")
    p = w.ravel()
    q = np.roll(w, -1, axis=1).ravel()
    m = resolution

    def skip(i, j):
        ri, ci = divmod(i, m)
        rj, cj = np.divmod(j, m)
        same = rj == ri
        adj = (cj == ci) | (cj == (ci + 1) % m) | (cj == (ci - 1) % m)
        return same & adj

    hits = _segment_hits(p, q, skip)
    if hits:
        i, j = hits[0]
        return UnivalenceFailure(resolution, (complex(zs.ravel()[i]), complex(zs.ravel()[j])), "ring images intersect")
    return UnivalenceCertificate(resolution, tuple(float(r) for r in radii), float(np.min(d1abs)))


def _nearest_pair(psi, zs, w):
    """Two well-separated grid points with the closest images."""
    z = zs.ravel()
    v = w.ravel()
    best = (np.inf, None)
    for i in range(len(z)):
        far = np.abs(z - z[i]) > 0.1
        if not np.any(far):
            continue
        dist = np.where(far, np.abs(v - v[i]), np.inf)
        j = int(np.argmin(dist))
        if dist[j] < best[0]:
            best = (dist[j], (complex(z[i]), complex(z[j])))
    return best[1]


def ensure_univalent(psi, resolution=128):
    if psi.certificate is not None:
        return psi
    cert = univalence_grid_check(psi, resolution)
    if not cert:
        raise NotUnivalentError(f"map is not univalent ({cert.reason})")
    return LaurentMap(psi.coefficients, cert)


# -- quasicircles ------------------------------------------------------------------


@dataclass(frozen=True)
class Quasicircle:
    theta: np.ndarray
    points: np.ndarray
    source: LaurentMap
    bers_norm: float = float("nan")
    k_upper: float = float("nan")

    def __len__(self):
        return len(self.points)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["theta", "re", "im"])
            for t, z in zip(self.theta, self.points):
                wr.writerow([repr(float(t)), repr(float(z.real)), repr(float(z.imag))])

    @staticmethod
    def read_csv(path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return data[:, 0], data[:, 1] + 1j * data[:, 2]


def sample_quasicircle(psi, n, with_norm=True):
    """Equally spaced samples psi(exp(i theta_j)), checked to form a simple polygon."""
    if n < 4:
        raise DomainError("need at least 4 samples")
    theta = 2 * np.pi * np.arange(n) / n
    pts = psi(np.exp(1j * theta))
    gaps = np.abs(pts - np.roll(pts, -1))
    scale = np.max(np.abs(pts))
    dup = np.abs(pts[:, None] - pts[None, :]) < 1e-12 * scale if n <= 4096 else None
    if dup is not None and np.count_nonzero(dup) > n:
        raise NotUnivalentError("boundary samples repeat: curve is not simple")
    if np.min(gaps) < 1e-14 * scale or polygon_self_intersections(pts):
        raise NotUnivalentError("boundary polygon self-intersects")
    if _signed_area(pts) <= 0:
        raise NotUnivalentError("boundary polygon is negatively oriented")
    b = k = float("nan")
    if with_norm:
        psi = ensure_univalent(psi)
        b = bers_norm(psi).value
        k = ahlfors_weill_K(b) if b < 0.5 else float("inf")
    return Quasicircle(theta, pts, psi, b, k)


# -- Bers norm ------------------------------------------------------------------------


@dataclass(frozen=True)
class BersNorm:
    value: float
    grid_bound: float
    gap: float
    levels: int
    argmax: complex

    def __float__(self):
        return self.value


def _weighted_schwarzian(f, w):
    """(1 - |w|^2)^2 / 4 * |S_f(1/w)| / |w|^4, the Bers density in the inverted chart."""
    w = np.asarray(w, dtype=complex)
    out = np.empty(w.shape)
    zero = np.abs(w) < 1e-12
    if np.any(zero):
        try:
            lim = abs(f.schwarzian_at_infinity()) / 4.0
        except AttributeError:
            big = 1e4  # larger values lose the limit to cancellation
            lim = abs(schwarzian(f, big) * big**4) / 4.0
        out[zero] = lim
    nz = ~zero
    if np.any(nz):
        wn = w[nz]
        z = 1.0 / wn
        m = np.abs(wn) ** 2
        out[nz] = (1.0 - m) ** 2 / 4.0 * np.abs(schwarzian(f, z)) / m**2
    return out


def bers_density(f, z):
    """rho(z)^-2 |S_f(z)| on |z| > 1, rho the exterior Poincare density."""
    z = np.asarray(z, dtype=complex)
    return (np.abs(z) ** 2 - 1.0) ** 2 / 4.0 * np.abs(schwarzian(f, z))


def _bers_grid(level, n_angle=512, n_graded=10):
    """Grid in the inverted chart w = 1/z: graded toward |w| = 1, uniform inside, plus w = 0."""
    n_ang = n_angle * 2**level
    j = np.arange(1, n_graded + 2 * level + 1)
    outer = 1.0 / (1.0 + 2.0 ** (-j.astype(float)))
    inner = np.linspace(0.0, 1.0 / 1.5, 16 * 2**level, endpoint=False)[1:]
    radii = np.unique(np.concatenate([inner, outer]))
    phi = 2 * np.pi * np.arange(n_ang) / n_ang
    w = (radii[:, None] * np.exp(1j * phi)[None, :]).ravel()
    return np.concatenate([[0j], w])


def _polish(f, w0, radius=0.05, shrink=3.0, xtol=1e-11):
    """Local maximization of the Bers density by a shrinking 7 x 7 patch search around w0."""
    g = np.linspace(-1.0, 1.0, 7)
    offsets = (g[None, :] + 1j * g[:, None]).ravel()
    centre = complex(w0)
    best = float(_weighted_schwarzian(f, np.array([centre]))[0])
    r = radius
    while r > xtol:
        patch = centre + r * offsets
        patch = patch[np.abs(patch) < 1.0]
        vals = _weighted_schwarzian(f, patch)
        i = int(np.argmax(vals))
        if vals[i] > best:
            best, centre = float(vals[i]), complex(patch[i])
        else:
            r /= shrink
    return best, centre


def _separated_peaks(w, vals, k=4, pool=64, sep=0.05):
    """Indices of up to ``k`` of the largest samples, pairwise at least ``sep`` apart."""
    picks = []
    for i in np.argsort(vals)[::-1][:pool]:
        if all(abs(w[i] - w[j]) > sep for j in picks):
            picks.append(int(i))
            if len(picks) == k:
                break
    return picks


def bers_norm(f, max_levels=4, rtol=1e-4, n_angle=512, atol=1e-12):
    """sup over |z| > 1 of rho^-2 |S_f|, with grid refinement and local polishing.

    Each level doubles the angular and radial sampling; the grid maximum is
    polished by a local search from the best samples.  Refinement stops when
    two successive levels agree within ``rtol`` (relative); values below
    ``atol`` count as zero, so Moebius maps do not chase rounding noise.
    """
    if isinstance(f, LaurentMap):
        f = ensure_univalent(f)
        if not f.coefficients or all(c == 0 for c in f.coefficients):
            return BersNorm(0.0, 0.0, 0.0, 1, 0j)
    prev = None
    for level in range(max_levels):
        w = _bers_grid(level, n_angle)
        vals = _weighted_schwarzian(f, w)
        order = _separated_peaks(w, vals)
        grid_bound = float(vals[order[0]])
        best, arg = grid_bound, complex(w[order[0]])
        for i in order:
            v, a = _polish(f, complex(w[i]))
            if v > best:
                best, arg = v, a
        if prev is not None:
            gap = abs(best - prev) / max(abs(best), atol)
            if gap <= rtol or best == 0.0:
                return BersNorm(float(best), grid_bound, float(gap), level + 1, 1.0 / arg if arg != 0 else complex(np.inf, 0))
        prev = best
    raise ResolutionError("Bers norm refinement did not converge", partial=prev)


# -- dilatation algebra -------------------------------------------------------------------


def ahlfors_weill_K(bers):
    """(1 + 2b)/(1 - 2b): upper bound on the dilatation of a quasiconformal extension."""
    if bers < 0:
        raise DomainError("Bers norm is nonnegative")
    if bers >= 0.5:
        raise OutOfCertificateError("no extension bound for Bers norm >= 1/2")
    return (1.0 + 2.0 * bers) / (1.0 - 2.0 * bers)


def teich_distance_from_K(k):
    if k < 1:
        raise DomainError("maximal dilatation is at least 1")
    return 0.5 * math.log(k)


@dataclass(frozen=True)
class BeltramiField:
    z: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=complex)
        if mu.shape != np.shape(self.z):
            raise DomainError("mu and grid have different shapes")
        if mu.size and np.max(np.abs(mu)) >= 1:
            raise DomainError("Beltrami coefficient must satisfy sup |mu| < 1")
        object.__setattr__(self, "mu", mu)

    @property
    def k(self):
        return float(np.max(np.abs(self.mu))) if self.mu.size else 0.0


def max_dilatation_K(field_):
    k = field_.k
    return (1.0 + k) / (1.0 - k)


def compose_dilatation(mu_f, mu_g, df_phase):
    """Complex dilatation of g o f^-1 sampled at the points of f's grid.

    ``df_phase`` holds d_z f at the samples (only its argument matters).
    """
    if np.shape(mu_f.z) != np.shape(mu_g.z) or not np.allclose(mu_f.z, mu_g.z):
        raise DomainError("grids are not aligned")
    dz = np.asarray(df_phase, dtype=complex)
    den = 1.0 - np.conj(mu_f.mu) * mu_g.mu
    if np.any(np.abs(den) < 1e-12):
        raise DegenerateCompositionError("1 - conj(mu_f) mu_g vanishes")
    phase = dz / np.conj(dz)
    return BeltramiField(mu_f.z, phase * (mu_g.mu - mu_f.mu) / den)


@dataclass(frozen=True)
class QuadDiffSample:
    """Samples h(z) of a quadratic differential h dz^2 on a Cartesian grid."""

    x: np.ndarray
    y: np.ndarray
    h: np.ndarray
    domain: str = "disc"
    check_tol: float = 1e-6

    def __post_init__(self):
        if self.domain not in ("disc", "exterior_disc"):
            raise DomainError("domain must be 'disc' or 'exterior_disc'")
        if self.check_tol is not None and self.cauchy_riemann_residual() > self.check_tol:
            raise DomainError("samples fail the discrete Cauchy-Riemann check")

    @classmethod
    def from_function(cls, fn, x, y, domain="disc", check_tol=1e-6):
        zz = x[None, :] + 1j * y[:, None]
        return cls(x, y, fn(zz), domain, check_tol)

    def cauchy_riemann_residual(self):
        """max |d_x h + i d_y h| / max |d_x h| over interior nodes (second order)."""
        h = np.asarray(self.h)
        dx = self.x[1] - self.x[0]
        dy = self.y[1] - self.y[0]
        hx = (h[1:-1, 2:] - h[1:-1, :-2]) / (2 * dx)
        hy = (h[2:, 1:-1] - h[:-2, 1:-1]) / (2 * dy)
        zz = self.x[None, 1:-1] + 1j * self.y[1:-1, None]
        m = np.abs(zz) ** 2
        inside = (m < 1) if self.domain == "disc" else (m > 1)
        if not np.any(inside):
            return 0.0
        num = np.abs(hx + 1j * hy)[inside]
        den = max(float(np.max(np.abs(hx[inside]))), 1e-300)
        return float(np.max(num)) / den

    def sup_norm(self):
        zz = self.x[None, :] + 1j * self.y[:, None]
        m = np.abs(zz) ** 2
        inside = (m < 1) if self.domain == "disc" else (m > 1)
        rho = poincare_density(zz[inside], self.domain)
        return float(np.max(np.abs(np.asarray(self.h)[inside]) / rho**2))
