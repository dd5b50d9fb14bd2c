import numpy as np
import pytest

from quasidisc.curvature import pde_residual, principal_curvatures, schauder_ratio
from quasidisc.errors import DomainError, OutOfDomainError, RemeshRequiredError, ResolutionError
from quasidisc.hull import build_hull_proxy, curve_samples, hull_containment
from quasidisc.hyperbolic import (
    SupportPlane,
    mink_inner,
    normal_flow,
    sphere_from_complex,
    to_poincare,
    translation_isometry,
)
from quasidisc.mesh import (
    SolverConfig,
    TriMesh,
    area_gradient,
    boundary_sphere_distance,
    seed_mesh,
    total_area,
)
from quasidisc.solver import mean_curvature_residual, minimize_area
from quasidisc.teichmuller import LaurentMap, sample_quasicircle

E3 = np.array([0.0, 0.0, 1.0, 0.0])
# planes disjoint from the equatorial disc, one level and one tilted
DISJOINT = SupportPlane.from_klein([0, 0, 1], 0.3)
TILTED = SupportPlane.from_klein([1, 0, 0.2], 0.5)


def equidistant(mesh, t):
    """Flat mesh pushed a distance t along e3; every point lies at distance t from the equatorial plane."""
    return mesh.with_vertices(normal_flow(mesh.vertices, np.broadcast_to(E3, mesh.vertices.shape), t))


# -- seeding ---------------------------------------------------------------------------


def test_seed_circle_is_flat(solved):
    _, seed, _ = solved(0.0)
    ball = to_poincare(seed.vertices)
    assert np.max(np.abs(ball[:, 2])) < 1e-12
    np.testing.assert_allclose(np.linalg.norm(ball[seed.boundary], axis=1), 0.98, atol=1e-9)
    assert seed.euler_characteristic() == 1 and seed.boundary_loops() == 1


def test_seed_ellipse_boundary(solved):
    gamma, seed, _ = solved(0.1)
    assert seed.euler_characteristic() == 1 and seed.boundary_loops() == 1
    ball = to_poincare(seed.vertices[seed.boundary])
    theta = np.arctan2(seed.param[seed.boundary, 1], seed.param[seed.boundary, 0])
    target = 0.98 * sphere_from_complex(gamma.source(np.exp(1j * theta)))
    np.testing.assert_allclose(ball, target, atol=1e-9)
    assert np.all(boundary_sphere_distance(seed)[seed.boundary] < 1e-9)


def test_seed_epsilon_range():
    with pytest.raises(DomainError):
        SolverConfig(epsilon=0.3)
    cfg = SolverConfig(n_vertices=500)
    cfg.epsilon = 1e-5  # bypass the constructor check
    with pytest.raises(DomainError):
        seed_mesh(sample_quasicircle(LaurentMap.identity(), 64, with_norm=False), cfg)


def test_off_round_trip(tmp_path, solved):
    _, _, mesh = solved(0.1, 2500)
    mesh.to_off(tmp_path / "m.off")
    text = (tmp_path / "m.off").read_text().splitlines()
    assert text[0] == "OFF" and text[1] == "# model: klein"
    back = TriMesh.from_off(tmp_path / "m.off")
    np.testing.assert_allclose(back.vertices, mesh.vertices, rtol=1e-12, atol=1e-12)
    np.testing.assert_array_equal(back.faces, mesh.faces)
    np.testing.assert_array_equal(back.boundary, mesh.boundary)
    assert back.epsilon == mesh.epsilon


# -- area and solver -------------------------------------------------------------------


def test_area_gradient_matches_finite_differences(solved):
    _, seed, _ = solved(0.1, 2500)
    x, f = seed.vertices, seed.faces
    g = area_gradient(x, f)
    rng = np.random.default_rng(0)
    for i in rng.choice(np.flatnonzero(seed.interior), 10, replace=False):
        for direction in (seed.normals[i], None):
            if direction is None:
                v = rng.normal(size=4)
                v = v + mink_inner(v, x[i]) * x[i]
                direction = v / np.sqrt(mink_inner(v, v))
            h = 1e-6
            xp, xm = x.copy(), x.copy()
            xp[i] = normal_flow(x[i], direction, h)
            xm[i] = normal_flow(x[i], direction, -h)
            fd = (total_area(xp, f) - total_area(xm, f)) / (2 * h)
            assert fd == pytest.approx(mink_inner(g[i], direction), abs=1e-6)


def test_circle_is_a_fixed_point(solved):
    _, seed, mesh = solved(0.0)
    assert mesh.info.converged and mesh.info.iterations == 0
    # force iterations anyway: every step should leave the flat disc in place
    cfg = SolverConfig(tol=1e-14, max_iter=3)
    again = minimize_area(seed, cfg)
    assert again.info.iterations >= 1
    assert again.info.max_displacement < 1e-6
    assert np.max(np.abs(again.vertices - seed.vertices)) < 1e-6


def test_minimise_small_perturbation(solved):
    _, seed, mesh = solved(0.05)
    assert mesh.info.converged
    assert mean_curvature_residual(mesh) < SolverConfig().tol
    assert principal_curvatures(mesh).supLambda < 0.5
    assert mesh.info.area_history[-1] < total_area(seed.vertices, seed.faces)


def test_area_is_monotone(solved):
    _, _, mesh = solved(0.1)
    hist = np.array(mesh.info.area_history)
    assert len(hist) > 2
    assert np.all(np.diff(hist) <= 0)
    # the boundary never moves
    _, seed, _ = solved(0.1)
    np.testing.assert_array_equal(mesh.vertices[mesh.boundary], seed.vertices[seed.boundary])


def test_remesh_required():
    cfg = SolverConfig(n_vertices=2500, min_angle_deg=60.0)
    gamma = sample_quasicircle(LaurentMap((0.1,)), 256, with_norm=False)
    with pytest.raises(RemeshRequiredError):
        minimize_area(seed_mesh(gamma, cfg), cfg)


def test_non_convergence_is_flagged(solved):
    _, seed, _ = solved(0.1)
    out = minimize_area(seed, SolverConfig(max_iter=1))
    assert not out.info.converged and out.info.iterations == 1


# -- principal curvatures --------------------------------------------------------------


def test_flat_disc_curvature(solved):
    _, _, mesh = solved(0.0)
    rep = principal_curvatures(mesh)
    assert rep.supLambda < 5e-3
    assert np.all(rep.valid[rep.core])


def test_equidistant_surface_curvature(solved):
    _, seed, _ = solved(0.0, 40000)
    for t in (0.2, 0.5):
        rep = principal_curvatures(equidistant(seed, t))
        sel = rep.core & rep.valid
        target = -np.tanh(t)
        for k in (rep.k1, rep.k2, rep.fit_k1, rep.fit_k2):
            assert np.max(np.abs(k[sel] / target - 1)) < 0.02


def test_equidistant_curvature_converges(solved):
    errs = []
    for n in (2500, 10000, 40000):
        _, seed, _ = solved(0.0, n)
        rep = principal_curvatures(equidistant(seed, 0.2))
        sel = rep.core & rep.valid
        errs.append(np.max(np.abs(rep.k1[sel] / -np.tanh(0.2) - 1)))
    errs = np.array(errs)
    assert np.all(errs[:-1] / errs[1:] > 3)


def test_estimator_agreement_and_trace(solved):
    _, _, mesh = solved(0.1)
    rep = principal_curvatures(mesh)
    assert rep.estimator_agreement() < 0.10
    assert rep.trace_defect() < 5e-2
    assert 0.1 < rep.supLambda < 0.2


def test_curvature_csv(tmp_path, solved):
    _, _, mesh = solved(0.1, 2500)
    rep = principal_curvatures(mesh)
    rep.to_csv(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "vertexId,lambda,flag"
    assert len(lines) == mesh.n_vertices + 1
    assert lines[mesh.boundary[0] + 1].endswith(",boundary")


# -- PDE residual ----------------------------------------------------------------------


def test_pde_residual_own_plane(solved):
    _, _, mesh = solved(0.0)
    assert pde_residual(mesh, SupportPlane.from_dual(E3)) <= 1e-12


@pytest.mark.parametrize("plane", [DISJOINT, TILTED], ids=["level", "tilted"])
def test_pde_residual_disjoint_plane_refines(solved, plane):
    res = [pde_residual(solved(0.0, n)[2], plane) for n in (2500, 10000, 40000)]
    assert res[1] < 5e-2
    assert res[0] > res[1] > res[2]


def test_pde_residual_negative_control(solved):
    _, seed, _ = solved(0.0)
    for t in (0.2, 0.5):
        assert pde_residual(equidistant(seed, t), DISJOINT) > 0.2


# -- convex hull -----------------------------------------------------------------------


def test_hull_circle(solved):
    gamma, _, mesh = solved(0.0)
    assert abs(hull_containment(mesh, gamma)) < 1e-9


def test_hull_ellipse_refines(solved):
    vals = []
    for n in (2500, 10000, 40000):
        gamma, seed, mesh = solved(0.1, n)
        vals.append(hull_containment(mesh, gamma))
        # the harmonic seed bulges out of the hull; the minimiser does not
        assert hull_containment(seed, gamma) < vals[-1]
    assert vals[1] > -1e-2
    assert np.all(np.diff(np.abs(vals)) <= 0)


def test_hull_translated_mesh(solved):
    gamma, _, mesh = solved(0.1)
    moved = mesh.with_vertices((translation_isometry([0, 0, 1], 0.3) @ mesh.vertices.T).T)
    assert hull_containment(moved, gamma) < -0.1


def test_hull_proxy_contains_samples(solved):
    gamma, _, _ = solved(0.1)
    proxy = build_hull_proxy(curve_samples(gamma), 256)
    assert proxy.sample_slack() >= 0
    assert len(proxy.planes) <= 256
    with pytest.raises(ResolutionError):
        build_hull_proxy(curve_samples(gamma)[:4], 16)


# -- Schauder ratio --------------------------------------------------------------------


def _centre(mesh):
    return int(np.argmin(mesh.vertices[:, 3]))


def test_schauder_stable_under_refinement(solved):
    r = [schauder_ratio(m, _centre(m), DISJOINT, 1.5) for m in (solved(0.0, n)[2] for n in (2500, 10000, 40000))]
    assert np.all(np.isfinite(r)) and min(r) > 0
    assert max(r) / min(r) < 1.2


def test_schauder_bounded_over_family(solved):
    r = [schauder_ratio(m, _centre(m), DISJOINT, 1.5) for m in (solved(c)[2] for c in (0.02, 0.05, 0.1))]
    assert np.all(np.isfinite(r)) and max(r) < 10


def test_schauder_degenerate_and_domain(solved):
    _, _, mesh = solved(0.0)
    assert schauder_ratio(mesh, _centre(mesh), SupportPlane.from_dual(E3), 1.5) == 0.0
    with pytest.raises(OutOfDomainError):
        schauder_ratio(mesh, _centre(mesh), DISJOINT, 4.5)
