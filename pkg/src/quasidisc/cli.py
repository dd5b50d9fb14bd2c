"""Command-line entry point: generate, solve, verify, sweep.

Exit codes: 0 pass, 1 verification failure, 2 usage error, 3 numerical
non-convergence.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import DomainError, InsufficientRowsError, QuasidiscError, SweepFailureError
from .mesh import SolverConfig, TriMesh, seed_mesh
from .sweep import DEFAULT_T, SweepSpec, monotone_in_bers, parse_pattern, run_sweep, verify_bound
from .teichmuller import LaurentMap, sample_quasicircle

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NONCONV = 0, 1, 2, 3

log = logging.getLogger("quasidisc")

PDE_LIMIT = 5e-2
HULL_LIMIT = -5e-2


def read_config(path):
    """``key = value`` lines with ``#`` comments; keys may use dashes or underscores."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            key, sep, val = s.partition("=")
            if not sep or not key.strip():
                raise ValueError(f"{path}:{n}: expected 'key = value'")
            out[key.strip().replace("-", "_")] = val.strip()
    return out


def _floats(text):
    return tuple(float(v) for v in str(text).replace(",", " ").split())


def _add_map_args(p):
    p.add_argument("--pattern", default="1", help="Laurent coefficient pattern c_1,c_2,... scaled by t")
    p.add_argument("--t", type=float, default=0.1, help="family parameter")
    p.add_argument("--map", dest="map_file", default=None, help="LaurentMap file (overrides --pattern/--t)")


def _add_solver_args(p):
    d = SolverConfig()
    p.add_argument("--epsilon", type=float, default=d.epsilon, help="truncation epsilon")
    p.add_argument("--vertices", type=int, default=d.n_vertices, help="target vertex count")
    p.add_argument("--tol", type=float, default=d.tol, help="mean curvature tolerance")
    p.add_argument("--max-iter", type=int, default=d.max_iter)
    p.add_argument("--seed", type=int, default=d.seed)


def build_parser():
    parser = argparse.ArgumentParser(prog="quasidisc", description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=None, help="key = value file supplying defaults")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a quasicircle of a Laurent family")
    _add_map_args(g)
    g.add_argument("--n-boundary", type=int, default=1024)
    g.add_argument("--out", default="quasicircle.csv")
    g.add_argument("--svg", default=None)
    g.add_argument("--map-out", default=None, help="also save the LaurentMap")

    s = sub.add_parser("solve", help="compute one minimal disc")
    _add_map_args(s)
    _add_solver_args(s)
    s.add_argument("--n-boundary", type=int, default=1024)
    s.add_argument("--out", default="disc.off")
    s.add_argument("--curvature-csv", default=None)
    s.add_argument("--plot", default=None, help="PNG of the principal curvature")

    v = sub.add_parser("verify", help="residual suite on a mesh")
    v.add_argument("--mesh", required=True)
    _add_map_args(v)
    v.add_argument("--n-boundary", type=int, default=1024)
    v.add_argument("--n-planes", type=int, default=256)

    w = sub.add_parser("sweep", help="run a family sweep and check the curvature bounds")
    w.add_argument("--pattern", default="1")
    w.add_argument("--t-values", type=_floats, default=None, help="explicit parameters, e.g. '0.02,0.04'")
    w.add_argument("--t-min", type=float, default=None)
    w.add_argument("--t-max", type=float, default=None)
    w.add_argument("--steps", type=int, default=None)
    _add_solver_args(w)
    w.add_argument("--n-boundary", type=int, default=1024)
    w.add_argument("--n-planes", type=int, default=256)
    w.add_argument("--workers", type=int, default=1)
    w.add_argument("--out-dir", default="sweep_out")
    w.add_argument("--no-plots", action="store_true")
    return parser, sub


def _apply_config(parser, sub, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        values = read_config(known.config)
    except (OSError, ValueError) as exc:
        parser.error(f"config: {exc}")
    for name, sp in sub.choices.items():
        actions = {a.dest: a for a in sp._actions}
        defaults = {}
        for key, raw in values.items():
            a = actions.get(key)
            if a is None:
                continue
            if isinstance(a, argparse._StoreTrueAction):
                defaults[key] = raw.lower() in ("1", "true", "yes", "on")
            else:
                try:
                    defaults[key] = a.type(raw) if a.type else raw
                except ValueError:
                    parser.error(f"config: bad value for {key}: {raw!r}")
        sp.set_defaults(**defaults)
    known_keys = {a.dest for sp in sub.choices.values() for a in sp._actions} | {"log_level"}
    unknown = sorted(set(values) - known_keys)
    if unknown:
        parser.error(f"config: unknown keys {', '.join(unknown)}")


def _laurent(args):
    if args.map_file:
        return LaurentMap.load(args.map_file)
    return LaurentMap(tuple(args.t * c for c in parse_pattern(args.pattern)))


def _solver(args):
    return SolverConfig(epsilon=args.epsilon, n_vertices=args.vertices, tol=args.tol,
                        max_iter=args.max_iter, seed=args.seed)


def cmd_generate(args):
    from .report import export

    psi = LaurentMap.certified(_laurent(args).coefficients)
    gamma = sample_quasicircle(psi, args.n_boundary)
    export(gamma, "csv", args.out)
    if args.svg:
        export(gamma, "svg", args.svg)
    if args.map_out:
        psi.save(args.map_out)
    print(f"bers_norm={gamma.bers_norm:.10g} k_upper={gamma.k_upper:.10g} samples={len(gamma)} -> {args.out}")
    return EXIT_OK


def cmd_solve(args):
    from .curvature import principal_curvatures
    from .solver import minimize_area

    cfg = _solver(args)
    psi = LaurentMap.certified(_laurent(args).coefficients)
    gamma = sample_quasicircle(psi, args.n_boundary, with_norm=False)
    mesh = minimize_area(seed_mesh(gamma, cfg), cfg)
    mesh.to_off(args.out)
    info = mesh.info
    print(f"vertices={mesh.n_vertices} iterations={info.iterations} residual={info.residual:.3g} "
          f"converged={info.converged} -> {args.out}")
    if args.curvature_csv or args.plot:
        curv = principal_curvatures(mesh)
        print(f"sup_lambda={curv.supLambda:.10g}")
        if args.curvature_csv:
            curv.to_csv(args.curvature_csv)
        if args.plot:
            from .plotting import plot_curvature

            plot_curvature(mesh, curv.lam, args.plot)
    return EXIT_OK if info.converged else EXIT_NONCONV


def cmd_verify(args):
    from .chart import ConformalChart, harmonic_residual
    from .curvature import pde_residual, principal_curvatures
    from .hull import hull_containment
    from .hyperbolic import SupportPlane
    from .solver import mean_curvature_residual

    mesh = TriMesh.from_off(args.mesh)
    psi = LaurentMap.certified(_laurent(args).coefficients)
    gamma = sample_quasicircle(psi, args.n_boundary, with_norm=False)
    curv = principal_curvatures(mesh)
    core = np.flatnonzero(curv.core)
    centre = core[np.argmin(mesh.vertices[core, 3])] if len(core) else int(np.argmin(mesh.vertices[:, 3]))
    plane = SupportPlane.from_dual(mesh.normals[centre])
    out = {
        "mean_curvature_residual": mean_curvature_residual(mesh),
        "sup_lambda": curv.supLambda,
        "pde_residual": pde_residual(mesh, plane),
        "hull_violation": hull_containment(mesh, gamma, n_planes=args.n_planes),
    }
    try:
        out["harmonic_residual"] = harmonic_residual(ConformalChart.from_mesh(mesh))
    except QuasidiscError as exc:
        out["harmonic_residual"] = None
        out["harmonic_error"] = str(exc)
    ok = out["pde_residual"] < PDE_LIMIT and out["hull_violation"] >= HULL_LIMIT
    out["passed"] = bool(ok)
    print(json.dumps(out, indent=2))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_sweep(args):
    from .report import export

    kw = {}
    if args.t_values is not None:
        kw["t_values"] = args.t_values
    elif args.t_min is None and args.t_max is None and args.steps is None:
        kw["t_values"] = DEFAULT_T
    else:
        for key in ("t_min", "t_max", "steps"):
            if getattr(args, key) is not None:
                kw[key] = getattr(args, key)
    try:
        spec = SweepSpec(pattern=parse_pattern(args.pattern), solver=_solver(args), n_boundary=args.n_boundary,
                         n_planes=args.n_planes, workers=args.workers, output_dir=args.out_dir, **kw)
        spec.check_feasible()
    except (DomainError, ValueError) as exc:
        print(f"error: invalid sweep: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = run_sweep(spec)
    export(report, "csv", out / "report.csv")
    export(report, "json", out / "report.json")
    export(report, "svg", out / "report.svg")
    if not args.no_plots:
        from .plotting import render_report

        render_report(report, out)
    for r in report.records:
        if r.error:
            print(f"t={r.t:g}: {r.error}")
    fit = report.fit
    if fit is not None:
        print(f"C_fit={fit.slope:.6g} (95% band {fit.low:.6g}..{fit.high:.6g}, rms residual {fit.rms:.3g})")
    print(f"sup_lambda monotone in bers_norm: {monotone_in_bers(report)}")
    try:
        summary = verify_bound(report)
    except InsufficientRowsError as exc:
        print(f"verification: {exc}")
        return EXIT_FAIL
    for line in summary.lines():
        print(line)
    print("PASS" if summary.passed else "FAIL")
    return EXIT_OK if summary.passed else EXIT_FAIL


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "verify": cmd_verify, "sweep": cmd_sweep}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, sub = build_parser()
    _apply_config(parser, sub, argv)
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except SweepFailureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QuasidiscError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
