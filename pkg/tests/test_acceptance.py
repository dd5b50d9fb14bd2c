"""End-to-end acceptance criteria 1-10.

Each test prints one ``criterion N: PASS|FAIL`` line (also collected in the
terminal summary) and then asserts the criterion, including its time budget.
Meshes are built fresh here so the timings are honest.
"""

import math
import time

import numpy as np
import pytest
import sympy

from quasidisc.curvature import pde_residual, principal_curvatures
from quasidisc.hull import hull_containment
from quasidisc.hyperbolic import (
    SupportPlane,
    from_poincare,
    hyp_distance,
    mink_inner,
    normal_flow,
    parallel_planes_distance_profile,
)
from quasidisc.infinity import (
    det_b0_bers_consistency,
    foliation_width,
    forms_at_infinity,
    gauss_grid,
    gauss_residual,
    leaf_eigenvalues,
    refinement_grid,
)
from quasidisc.mesh import SolverConfig, edge_lengths, seed_mesh
from quasidisc.report import export
from quasidisc.solver import minimize_area
from quasidisc.sweep import SweepSpec, run_sweep, verify_bound
from quasidisc.teichmuller import (
    Composite,
    LaurentMap,
    MoebiusTransform,
    bers_norm,
    random_univalent_map,
    sample_quasicircle,
    schwarzian,
)

RESULTS = []
E3 = np.array([0.0, 0.0, 1.0, 0.0])
DISJOINT = SupportPlane.from_klein([0, 0, 1], 0.3)


def verdict(n, ok, elapsed, budget, detail):
    ok = bool(ok) and elapsed < budget
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({elapsed:.1f} s of {budget:g} s) {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def solve(c1, n_vertices):
    cfg = SolverConfig(n_vertices=n_vertices)
    gamma = sample_quasicircle(LaurentMap((c1,) if c1 else ()), 1024, with_norm=False)
    seed = seed_mesh(gamma, cfg)
    return gamma, seed, minimize_area(seed, cfg)


@pytest.fixture(scope="module")
def default_sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    t0 = time.perf_counter()
    rep = run_sweep(SweepSpec())
    elapsed = time.perf_counter() - t0
    export(rep, "csv", out / "first.csv")
    return rep, elapsed, out


def test_criterion_1_closed_formulas():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    n = 1000
    # distance against the Poincare-ball formula
    a = rng.normal(size=(n, 3))
    b = rng.normal(size=(n, 3))
    a *= (rng.uniform(0, 0.95, n) / np.linalg.norm(a, axis=1))[:, None]
    b *= (rng.uniform(0, 0.95, n) / np.linalg.norm(b, axis=1))[:, None]
    ball = np.arccosh(1 + 2 * np.sum((a - b) ** 2, 1) / ((1 - np.sum(a * a, 1)) * (1 - np.sum(b * b, 1))))
    err_d = np.max(np.abs(hyp_distance(from_poincare(a), from_poincare(b)) - ball) / np.maximum(ball, 1))
    # parallel-planes profile: both closed forms against the geometric construction
    r, w = rng.uniform(0, 1, n), rng.uniform(0, 0.5, n)
    keep = np.cosh(r) * np.tanh(w) < 0.99
    r, w = r[keep], w[keep]
    d, s = parallel_planes_distance_profile(r, w, with_sinh=True)
    p = np.column_stack([np.sinh(r), 0 * r, 0 * r, np.cosh(r)])
    q = normal_flow(p, np.broadcast_to(E3, p.shape), d)
    err_p = np.max(np.abs(mink_inner(q, np.column_stack([0 * w, 0 * w, np.cosh(w), np.sinh(w)]))))
    err_s = np.max(np.abs(np.sinh(d) - s) / np.maximum(s, 1))
    # width: arctanh(2A) equals the distance between the extreme leaves
    A = rng.uniform(0, 0.49, n)
    err_w = max(abs(foliation_width(x).width - 0.5 * math.log((0.5 + x) / (0.5 - x))) for x in A)
    # leaf eigenvalues against the eigenvalues of the leaf shape operator
    rho = rng.uniform(-2, 2, n)
    phi = rng.uniform(0, np.pi, n)
    err_e = 0.0
    for x, rh, ph in zip(A, rho, phi):
        rot = np.array([[np.cos(ph), -np.sin(ph)], [np.sin(ph), np.cos(ph)]])
        bstar = rot @ np.diag([0.5 + x, 0.5 - x]) @ rot.T
        shape = np.linalg.solve(np.exp(rh) * np.eye(2) + np.exp(-rh) * bstar,
                                -np.exp(rh) * np.eye(2) + np.exp(-rh) * bstar)
        ev = np.sort(np.linalg.eigvals(shape).real)
        err_e = max(err_e, np.max(np.abs(ev - np.sort(leaf_eigenvalues(x, rh)))))
    err = max(err_d, err_p, err_s, err_w, err_e)
    elapsed = time.perf_counter() - t0
    assert verdict(1, err < 1e-9, elapsed, 1.0, f"max error {err:.2e} over {n} inputs per formula")


def test_criterion_2_schwarzian():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    z = 1.5 * np.exp(2j * np.pi * rng.uniform(size=100))
    moeb = max(float(np.max(np.abs(schwarzian(MoebiusTransform.random(rng), z)))) for _ in range(20))
    zs = sympy.symbols("z")
    f = zs + 1 / zs
    d1, d2, d3 = (sympy.diff(f, zs, k) for k in (1, 2, 3))
    exact = complex((d3 / d1 - sympy.Rational(3, 2) * (d2 / d1) ** 2).subs(zs, 2))
    sym = abs(schwarzian(LaurentMap((1.0,)), 2.0) - exact)
    psi = LaurentMap((0.2, 0.05 - 0.03j, 0.01))
    base = schwarzian(psi, z)
    inv = 0.0
    for _ in range(100):
        comp = Composite(MoebiusTransform.random(rng), psi)
        if np.min(np.abs(comp.derivatives(z)[1])) < 1e-6:
            continue
        inv = max(inv, float(np.max(np.abs(schwarzian(comp, z) - base) / np.maximum(np.abs(base), 1))))
    elapsed = time.perf_counter() - t0
    ok = moeb < 1e-12 and sym < 1e-10 and inv < 1e-8
    assert verdict(2, ok, elapsed, 1.0, f"Moebius {moeb:.1e}, S(2) error {sym:.1e}, invariance {inv:.1e}")


def test_criterion_3_nehari():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    norms = []
    for _ in range(100):
        psi = LaurentMap.certified(random_univalent_map(rng, order=int(rng.integers(1, 8))).coefficients)
        norms.append(bers_norm(psi).value)
    elapsed = time.perf_counter() - t0
    assert verdict(3, max(norms) <= 1.5 + 1e-6, elapsed, 30, f"max Bers norm {max(norms):.6f} over 100 maps")


def test_criterion_4_det_consistency():
    t0 = time.perf_counter()
    finest, monotone = [], True
    for c in (0.05, 0.1, 0.2):
        psi = LaurentMap.certified((c,))
        b = bers_norm(psi).value
        gaps = [det_b0_bers_consistency(psi, refinement_grid(k), bers=b) for k in range(4)]
        finest.append(gaps[-1])
        monotone &= bool(np.all(np.diff(gaps) < 0))
    elapsed = time.perf_counter() - t0
    ok = max(finest) < 1e-4 and monotone
    assert verdict(4, ok, elapsed, 30, f"finest gaps {', '.join(f'{g:.1e}' for g in finest)}, decreasing={monotone}")


def test_criterion_5_gauss_residual():
    t0 = time.perf_counter()
    finest, orders = [], []
    for c in (0.05, 0.1, 0.2):
        psi = LaurentMap.certified((c,))
        res = np.array([gauss_residual(forms_at_infinity(psi, gauss_grid(k))) for k in range(4)])
        finest.append(res[-1])
        orders.append(float(np.min(np.log2(res[:-1] / res[1:]))))
    elapsed = time.perf_counter() - t0
    ok = max(finest) < 1e-4 and min(orders) > 1.8
    assert verdict(5, ok, elapsed, 30,
                   f"finest |1+K| {max(finest):.1e}, min observed order {min(orders):.2f}")


def test_criterion_6_circle():
    t0 = time.perf_counter()
    gamma, seed, mesh = solve(0.0, 10000)
    forced = minimize_area(seed, SolverConfig(tol=1e-14, max_iter=3))
    disp = max(forced.info.max_displacement, float(np.max(np.abs(forced.vertices - seed.vertices))))
    lam = principal_curvatures(mesh).supLambda
    hull = hull_containment(mesh, gamma)
    pde = pde_residual(mesh, SupportPlane.from_dual(E3))
    elapsed = time.perf_counter() - t0
    ok = disp < 1e-6 and lam < 5e-3 and abs(hull) < 1e-9 and pde <= 1e-12
    assert verdict(6, ok, elapsed, 60, f"displacement {disp:.1e}, supLambda {lam:.1e}, hull {hull:.1e}, pde {pde:.1e}")


def test_criterion_7_pde_residual(default_sweep):
    rep, _, _ = default_sweep
    t0 = time.perf_counter()
    sweep_max = max(r.pde_residual for r in rep.converged_rows())
    res, h = [], []
    for n in (2500, 10000, 40000):
        _, _, mesh = solve(0.1, n)
        res.append(pde_residual(mesh, DISJOINT))
        h.append(float(np.mean(edge_lengths(mesh.vertices, mesh.faces))))
    order = np.log(np.array(res[:-1]) / res[1:]) / np.log(np.array(h[:-1]) / h[1:])
    elapsed = time.perf_counter() - t0
    ok = sweep_max < 5e-2 and len(rep.converged_rows()) == len(rep.records) and np.all(order >= 1)
    assert verdict(7, ok, elapsed, 180, f"sweep max {sweep_max:.2e}, refinement {', '.join(f'{r:.2e}' for r in res)}, "
                                        f"orders {', '.join(f'{o:.2f}' for o in order)}")


def test_criterion_8_hull(default_sweep):
    rep, _, _ = default_sweep
    t0 = time.perf_counter()
    sweep_min = min(r.hull_violation for r in rep.converged_rows())
    shrinking = True
    detail = []
    for c in (0.1, 0.2):
        vals = [hull_containment(mesh, gamma) for gamma, _, mesh in (solve(c, n) for n in (2500, 10000, 40000))]
        shrinking &= bool(np.all(np.diff(np.abs(vals)) <= 0))
        detail.append(f"c1={c}: {', '.join(f'{v:.1e}' for v in vals)}")
    elapsed = time.perf_counter() - t0
    ok = sweep_min >= -5e-2 and shrinking
    assert verdict(8, ok, elapsed, 60, f"sweep min {sweep_min:.1e}; " + "; ".join(detail))


def test_criterion_9_curvature_bound(default_sweep):
    rep, elapsed, _ = default_sweep
    rows = sorted(rep.converged_rows(), key=lambda r: r.bers_norm)
    summary = verify_bound(rep)
    fit = rep.fit
    for line in summary.lines():
        print("   ", line)
    ok = summary.passed and rows[0].sup_lambda < 0.1 and fit.slope > 0
    assert verdict(9, ok, elapsed, 480,
                   f"C_fit {fit.slope:.4f} [{fit.low:.4f}, {fit.high:.4f}] rms {fit.rms:.1e}, "
                   f"C'_fit {rep.c_log_fit:.4f}, smallest-row supLambda {rows[0].sup_lambda:.4f}")


def test_criterion_10_determinism(default_sweep):
    _, first_time, out = default_sweep
    t0 = time.perf_counter()
    export(run_sweep(SweepSpec()), "csv", out / "second.csv")
    elapsed = time.perf_counter() - t0
    same = (out / "first.csv").read_bytes() == (out / "second.csv").read_bytes()
    assert verdict(10, same, elapsed, 2 * first_time, "byte-identical CSV" if same else "CSV differs")
