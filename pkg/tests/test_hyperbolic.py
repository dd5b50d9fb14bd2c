import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quasidisc.errors import DivergenceError, InvalidFrameError, NumericalConsistencyError
from quasidisc.hyperbolic import (
    ORIGIN,
    AT_INFINITY,
    SupportPlane,
    check_hpoint,
    from_klein,
    from_poincare,
    hyp_distance,
    is_isometry,
    mink_inner,
    model_convert,
    normal_flow,
    parallel_planes_distance_profile,
    plane_signed_sinh_distance,
    project_to_plane,
    random_isometry,
    random_points,
    sphere_from_complex,
    to_klein,
    to_poincare,
)

E1 = np.array([1.0, 0, 0, 0])
E3 = np.array([0.0, 0, 1, 0])

# arctanh(cosh 0.5 tanh 0.5), 30-digit mpmath evaluation
PROFILE_HALF_HALF = 0.577842170034544573685625394154


def lifted(t):
    return np.array([0.0, 0.0, np.sinh(t), np.cosh(t)])


def test_mink_inner_signature():
    assert mink_inner(ORIGIN, ORIGIN) == -1
    assert mink_inner(E1, E1) == 1
    assert mink_inner([1, 0, 0, 1], [0, 1, 0, 1]) == -1


def test_hyp_distance_examples():
    assert hyp_distance(ORIGIN, ORIGIN) == 0
    assert hyp_distance(ORIGIN, lifted(1.0)) == pytest.approx(1.0, abs=1e-12)


def test_hyp_distance_rejects_off_hyperboloid():
    with pytest.raises(NumericalConsistencyError):
        hyp_distance(E1, E1 * 0.5)


def test_distance_isometry_invariant_and_cosh_identity():
    rng = np.random.default_rng(1)
    p, q = random_points(rng, 500), random_points(rng, 500)
    d = hyp_distance(p, q)
    np.testing.assert_allclose(np.cosh(d), np.abs(mink_inner(p, q)), rtol=1e-10)
    for _ in range(20):
        m = random_isometry(rng)
        assert is_isometry(m)
        np.testing.assert_allclose(hyp_distance(p @ m.T, q @ m.T), d, atol=1e-9)


def test_signed_sinh_distance_examples():
    plane = SupportPlane.from_dual(E3)
    assert plane_signed_sinh_distance(ORIGIN, plane) == 0
    assert plane_signed_sinh_distance(lifted(0.7), plane) == pytest.approx(np.sinh(0.7), rel=1e-14)
    assert plane_signed_sinh_distance(lifted(0.7), SupportPlane(E3, -1)) == pytest.approx(-np.sinh(0.7))


def test_signed_distance_against_brute_force_projection():
    rng = np.random.default_rng(7)
    for _ in range(5):
        m = random_isometry(rng)
        plane = SupportPlane.from_dual(m @ E3)
        x = random_points(rng, 1)[0]
        # fine geodesic net on the plane: image of a polar grid on x3 = 0
        r = np.linspace(0, 4, 801)
        th = np.linspace(0, 2 * np.pi, 721)
        rr, tt = np.meshgrid(r, th)
        net = np.stack([np.sinh(rr) * np.cos(tt), np.sinh(rr) * np.sin(tt), 0 * rr, np.cosh(rr)], -1) @ m.T
        # refine around the best net point
        i = np.unravel_index(np.argmin(hyp_distance(x, net)), rr.shape)
        r2 = np.linspace(max(r[i[1]] - 0.01, 0), r[i[1]] + 0.01, 201)
        t2 = np.linspace(th[i[0]] - 0.01, th[i[0]] + 0.01, 201)
        rr, tt = np.meshgrid(r2, t2)
        net = np.stack([np.sinh(rr) * np.cos(tt), np.sinh(rr) * np.sin(tt), 0 * rr, np.cosh(rr)], -1) @ m.T
        dmin = hyp_distance(x, net).min()
        s = plane_signed_sinh_distance(x, plane)
        assert abs(abs(np.arcsinh(s)) - dmin) < 1e-4


def test_signed_distance_transforms_with_dual():
    rng = np.random.default_rng(3)
    x = random_points(rng, 100)
    plane = SupportPlane.from_dual(np.array([0.3, -0.2, 1.0, 0.4]))
    m = random_isometry(rng)
    np.testing.assert_allclose(plane_signed_sinh_distance(x @ m.T, plane.transformed(m)),
                               plane_signed_sinh_distance(x, plane), atol=1e-9)


def test_normal_flow_examples():
    np.testing.assert_allclose(normal_flow(ORIGIN, E3, 0.0), ORIGIN)
    np.testing.assert_allclose(normal_flow(ORIGIN, E3, 1.0), lifted(1.0), atol=1e-14)
    for rho in (0.3, -0.3, 2.0, -2.0):
        assert hyp_distance(ORIGIN, normal_flow(ORIGIN, E3, rho)) == pytest.approx(abs(rho), abs=1e-12)


def test_normal_flow_frame_check():
    with pytest.raises(InvalidFrameError):
        normal_flow(ORIGIN, 2 * E3, 1.0)
    with pytest.raises(InvalidFrameError):
        normal_flow(lifted(1.0), E3, 1.0)


def test_normal_flow_commutes_with_isometry():
    rng = np.random.default_rng(4)
    m = random_isometry(rng)
    x, n = m @ ORIGIN, m @ E3
    np.testing.assert_allclose(normal_flow(x, n, 0.8), m @ normal_flow(ORIGIN, E3, 0.8), atol=1e-9)


def test_model_examples():
    np.testing.assert_allclose(model_convert(ORIGIN, "hyperboloid", "klein"), 0)
    r = 0.5
    np.testing.assert_allclose(model_convert([0, 0, r], "klein", "hyperboloid"), np.array([0, 0, r, 1]) / np.sqrt(1 - r * r))
    # z = 0 in the disc goes to the lower pole of the ideal sphere
    np.testing.assert_allclose(model_convert(0j, "boundary_C", "klein"), [0, 0, -1], atol=1e-15)
    assert model_convert([0.0, 0.0, 1.0], "klein", "boundary_C") == AT_INFINITY
    assert model_convert(complex(np.inf), "boundary_C", "klein")[2] == 1


@settings(max_examples=60, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_model_round_trips(a, b, c):
    x = from_poincare(np.array([a, b, c]) / (1 + np.sqrt(a * a + b * b + c * c)) * 0.999)
    check_hpoint(x)
    np.testing.assert_allclose(from_klein(to_klein(x)), x, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(from_poincare(to_poincare(x)), x, rtol=1e-10, atol=1e-10)
    for m in ("klein", "poincare_ball"):
        y = model_convert(x, "hyperboloid", m)
        np.testing.assert_allclose(model_convert(y, m, "hyperboloid"), x, rtol=1e-10, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False))
def test_boundary_round_trip(z):
    ray = model_convert(z, "boundary_C", "hyperboloid")
    back = model_convert(ray, "hyperboloid", "boundary_C")
    assert abs(back - z) <= 1e-10 * max(1.0, abs(z)) ** 2


def test_unit_circle_is_equator():
    z = np.exp(1j * np.linspace(0, 2 * np.pi, 17))
    assert np.max(np.abs(sphere_from_complex(z)[:, 2])) < 1e-15


def test_parallel_planes_profile():
    assert parallel_planes_distance_profile(0.0, 0.7) == pytest.approx(0.7, abs=1e-15)
    assert parallel_planes_distance_profile(1.3, 0.0) == 0
    d, s = parallel_planes_distance_profile(0.5, 0.5, with_sinh=True)
    assert d == pytest.approx(PROFILE_HALF_HALF, abs=1e-12)
    assert np.sinh(d) == pytest.approx(s, abs=1e-12)
    with pytest.raises(DivergenceError):
        parallel_planes_distance_profile(2.0, 1.0)


def test_parallel_planes_profile_matches_construction():
    # P- = {x3 = 0}; P+ orthogonal to l'(w) through l(w); walk from p' along the normal of P-
    rng = np.random.default_rng(5)
    for _ in range(50):
        r, w = rng.uniform(0, 1), rng.uniform(0, 0.5)
        if np.cosh(r) * np.tanh(w) >= 0.99:
            continue
        d = parallel_planes_distance_profile(r, w)
        p = np.array([np.sinh(r), 0, 0, np.cosh(r)])
        q = normal_flow(p, E3, d)
        assert abs(mink_inner(q, [0, 0, np.cosh(w), np.sinh(w)])) < 1e-12


def test_parallel_planes_profile_monotone():
    r = np.linspace(0, 1, 50)
    assert np.all(np.diff(parallel_planes_distance_profile(r, 0.4)) > 0)
    w = np.linspace(0, 0.5, 50)
    assert np.all(np.diff(parallel_planes_distance_profile(0.6, w)) > 0)


def test_project_to_plane():
    plane = SupportPlane.from_dual(E3)
    np.testing.assert_allclose(project_to_plane(lifted(0.9), plane), ORIGIN, atol=1e-15)
    x = np.array([np.sinh(0.4), 0, 0, np.cosh(0.4)])
    np.testing.assert_allclose(project_to_plane(x, plane), x, atol=1e-15)


def test_projection_is_one_lipschitz():
    rng = np.random.default_rng(6)
    plane = SupportPlane.from_dual(random_isometry(rng) @ E3)
    x, y = random_points(rng, 1000), random_points(rng, 1000)
    px, py = project_to_plane(x, plane), project_to_plane(y, plane)
    assert np.max(np.abs(plane_signed_sinh_distance(px, plane))) < 1e-9
    assert np.all(hyp_distance(px, py) <= hyp_distance(x, y) + 1e-9)
