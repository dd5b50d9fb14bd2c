"""Data at infinity of the equidistant foliation attached to a quasicircle.

Fields are sampled on a log-polar grid z = exp(s + i theta) of the exterior
disc and expressed in the coordinate zeta = psi(z) of the image domain
Omega.  I* is the hyperbolic metric of Omega, exp(2 eta) |dzeta|^2, and the
traceless part of B* is read off the Schwarzian of psi written in the zeta
coordinate.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import HypothesisViolationError, LeafDegeneracyError, OutOfRegimeError, ResolutionError
from .teichmuller import bers_norm, ensure_univalent, schwarzian


@dataclass(frozen=True)
class LogPolarGrid:
    """Square log-polar cells: spacing 2 pi / n_theta in both s and theta."""

    n_theta: int = 512
    s_min: float = None
    s_max: float = 6.0

    @property
    def spacing(self):
        return 2 * np.pi / self.n_theta

    def nodes(self):
        h = self.spacing
        s0 = h if self.s_min is None else self.s_min
        n_s = int(np.floor((self.s_max - s0) / h + 1e-9)) + 1
        s = s0 + h * np.arange(n_s)
        theta = h * np.arange(self.n_theta)
        return s, theta


def refinement_grid(level):
    """Grid used for the consistency study at refinement ``level`` (0, 1, 2, ...)."""
    return LogPolarGrid(n_theta=128 * 2**level, s_min=None, s_max=3.0 + 1.5 * level)


def gauss_grid(level):
    """Grid for the curvature refinement study: a fixed annulus 0.5 <= s <= 3.

    Near |z| = 1 a log-polar cell of width h spans about h/s in hyperbolic
    length, so rings with s ~ h are never resolved; far out, exp(-2 eta)
    amplifies rounding in the second differences.  The fixed annulus keeps
    both effects out of the convergence study.
    """
    return LogPolarGrid(n_theta=128 * 2**level, s_min=0.5, s_max=3.0)


@dataclass
class DataAtInfinity:
    grid: LogPolarGrid
    s: np.ndarray
    theta: np.ndarray
    z: np.ndarray
    zeta: np.ndarray
    dpsi: np.ndarray
    eta: np.ndarray
    h: np.ndarray
    a: np.ndarray

    @property
    def supA(self):
        return float(np.max(self.a))

    def first_form(self):
        """I* as 2x2 matrices in the real frame of zeta."""
        e = np.exp(2 * self.eta)
        out = np.zeros(self.eta.shape + (2, 2))
        out[..., 0, 0] = e
        out[..., 1, 1] = e
        return out

    def traceless_shape(self):
        """B0* = -exp(-2 eta) [[Re h, -Im h], [-Im h, -Re h]], eigenvalues +-a."""
        k = -np.exp(-2 * self.eta)
        out = np.empty(self.eta.shape + (2, 2))
        out[..., 0, 0] = k * self.h.real
        out[..., 0, 1] = -k * self.h.imag
        out[..., 1, 0] = -k * self.h.imag
        out[..., 1, 1] = -k * self.h.real
        return out

    def shape_operator(self):
        """B* = B0* + E/2, so tr B* = 1."""
        return self.traceless_shape() + 0.5 * np.eye(2)

    def to_csv(self, path):
        cols = np.column_stack([self.z.real.ravel(), self.z.imag.ravel(), self.eta.ravel(),
                                self.h.real.ravel(), self.h.imag.ravel(), self.a.ravel()])
        np.savetxt(path, cols, delimiter=",", header="re(z),im(z),eta,re(h),im(h),a",
                   comments="", fmt="%.17g")


def forms_at_infinity(psi, grid=None):
    psi = ensure_univalent(psi)
    grid = grid or LogPolarGrid()
    if grid.n_theta < 16:
        raise ResolutionError("log-polar grid needs at least 16 angular samples")
    s, theta = grid.nodes()
    z = np.exp(s[:, None] + 1j * theta[None, :])
    zeta, d1, _, _ = psi.derivatives(z)
    rho = 2.0 / (np.abs(z) ** 2 - 1.0)
    eta = np.log(rho / np.abs(d1))
    h = schwarzian(psi, z) / d1**2
    a = np.exp(-2 * eta) * np.abs(h)
    return DataAtInfinity(grid, s, theta, z, zeta, d1, eta, h, a)


def _a_at(psi, s, theta):
    z = np.exp(s + 1j * theta)
    _, d1, _, _ = psi.derivatives(z)
    eta = np.log(2.0 / (np.abs(z) ** 2 - 1.0) / np.abs(d1))
    return float(np.exp(-2 * eta) * np.abs(schwarzian(psi, z) / d1**2))


def polished_supA(psi, data):
    """supA refined off the grid by a local search of a(s, theta) from the grid argmax.

    The grid maximum misses an interior supremum by O(h^2); this recovers it
    from the same eta and h formulas, evaluated at arbitrary points.
    """
    i, j = np.unravel_index(np.argmax(data.a), data.a.shape)
    if data.a[i, j] == 0:
        return 0.0
    res = minimize(lambda v: -_a_at(psi, v[0], v[1]) if v[0] > 0 else 0.0,
                   [data.s[i], data.theta[j]], method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-16, "maxiter": 4000})
    return max(data.supA, -float(res.fun))


def _second_difference(f, axis, h, order, periodic):
    if order == 2:
        if periodic:
            return (np.roll(f, -1, axis) - 2 * f + np.roll(f, 1, axis)) / h**2
        out = np.full(f.shape, np.nan)
        sl = [slice(None)] * f.ndim
        sl[axis] = slice(1, -1)
        out[tuple(sl)] = (np.diff(f, 2, axis=axis)) / h**2
        return out
    if order == 4:
        if periodic:
            r = lambda k: np.roll(f, k, axis)  # noqa: E731
            return (-r(-2) + 16 * r(-1) - 30 * f + 16 * r(1) - r(2)) / (12 * h**2)
        out = np.full(f.shape, np.nan)
        f = np.moveaxis(f, axis, 0)
        val = (-f[4:] + 16 * f[3:-1] - 30 * f[2:-2] + 16 * f[1:-3] - f[:-4]) / (12 * h**2)
        o = np.moveaxis(out, axis, 0)
        o[2:-2] = val
        return out
    raise ValueError("order must be 2 or 4")


def gaussian_curvature(data, order=2):
    """Discrete curvature of I* from the chart Laplacian of eta.

    K = -exp(-2 eta) Lap_zeta(eta), and Lap_zeta = |psi'|^-2 |z|^-2 Lap_(s,theta).
    Nodes without a full stencil are NaN.
    """
    h = data.grid.spacing
    lap = _second_difference(data.eta, 0, h, order, False) + _second_difference(data.eta, 1, h, order, True)
    scale = np.abs(data.dpsi) ** -2 * np.abs(data.z) ** -2
    return -np.exp(-2 * data.eta) * scale * lap


def gauss_residual(data, order=2):
    """max |tr B* + K_{I*}| = max |1 + K_{I*}| over nodes with a full stencil."""
    k = gaussian_curvature(data, order)
    return float(np.nanmax(np.abs(1.0 + k)))


def codazzi_residual(data):
    """Discrete d_zbar h relative to |d_z h| (second order); h holomorphic makes it a diagnostic only."""
    h = data.grid.spacing
    f = data.h * data.dpsi**2  # S_psi in the z-chart, holomorphic in z
    fs = (f[2:, :] - f[:-2, :]) / (2 * h)
    ft = (np.roll(f, -1, 1) - np.roll(f, 1, 1))[1:-1] / (2 * h)
    # in log-polar coordinates d_zbar = (zbar)^-1 (d_s + i d_theta) / 2
    dbar = np.abs(fs + 1j * ft)
    dz = np.abs(fs - 1j * ft)
    return float(np.max(dbar) / max(np.max(dz), 1e-300))


@dataclass
class LeafForms:
    rho: float
    first: np.ndarray
    second: np.ndarray
    shape: np.ndarray


def leaf_forms(data, rho):
    """I_rho, II_rho and B_rho rebuilt from (I*, B*) at every sample."""
    istar = data.first_form()
    bstar = data.shape_operator()
    e = np.eye(2)
    plus = np.exp(rho) * e + np.exp(-rho) * bstar
    minus = -np.exp(rho) * e + np.exp(-rho) * bstar
    det = np.linalg.det(plus)
    if np.any(np.abs(det) < 1e-12):
        raise LeafDegeneracyError(f"e^rho E + e^-rho B* is singular at rho={rho}", rho=rho)
    two = istar @ bstar
    three = istar @ bstar @ bstar
    first = 0.5 * np.exp(2 * rho) * istar + two + 0.5 * np.exp(-2 * rho) * three
    second = 0.5 * np.swapaxes(plus, -1, -2) @ istar @ minus
    shape = np.linalg.solve(plus, minus)
    return LeafForms(rho, first, second, shape)


def leaf_eigenvalues(a, rho):
    """Principal curvatures of the leaf at signed distance rho where B* has eigenvalues 1/2 +- a."""
    a = np.asarray(a, dtype=float)
    if np.any(a < 0):
        raise HypothesisViolationError("a is an absolute eigenvalue and must be >= 0")
    if np.any(a >= 0.5):
        raise HypothesisViolationError("eigenvalue bound requires a < 1/2")
    e2 = 2 * np.exp(2 * np.asarray(rho, dtype=float))
    d1, d2 = e2 + (2 * a + 1), e2 + (1 - 2 * a)
    assert np.all(d1 > 0) and np.all(d2 > 0)
    return (-e2 + (2 * a + 1)) / d1, (-e2 + (1 - 2 * a)) / d2


@dataclass(frozen=True)
class WidthReport:
    supA: float
    rho1: float
    rho2: float
    width: float

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=False)


def foliation_width(supA):
    """Distance between the first concave leaf (rho1) and the last convex leaf (rho2)."""
    if supA < 0:
        raise OutOfRegimeError("supA must be nonnegative")
    if supA >= 0.5:
        raise OutOfRegimeError("foliation width is finite only for supA < 1/2")
    rho1 = 0.5 * np.log(supA + 0.5)
    rho2 = 0.5 * np.log(0.5 - supA)
    return WidthReport(float(supA), float(rho1), float(rho2), float(np.arctanh(2 * supA)))


def det_b0_bers_consistency(psi, grid=None, bers=None):
    """|sup a^2 - ||psi||_B^2| / max(||psi||_B^2, 1e-12) for the given grid."""
    psi = ensure_univalent(psi)
    data = forms_at_infinity(psi, grid or refinement_grid(2))
    b = float(bers_norm(psi).value if bers is None else bers)
    s2 = data.supA**2
    if b == 0.0 and s2 < 1e-24:
        return 0.0
    return abs(s2 - b * b) / max(b * b, 1e-12)
