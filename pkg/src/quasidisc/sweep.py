"""Parameter sweeps over quasicircle families and the curvature bound checks.

A family is a fixed coefficient pattern scaled by a real parameter t, so
psi_t(z) = z + t * sum_k pattern[k] z^-(k+1).  Each row runs the whole
pipeline and records its residuals; a failing stage is recorded on the row
and the sweep moves on.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats

from .chart import ConformalChart, harmonic_residual
from .curvature import principal_curvatures, pde_residual
from .errors import DomainError, InsufficientRowsError, QuasidiscError, SweepFailureError
from .hull import hull_containment
from .hyperbolic import SupportPlane
from .infinity import foliation_width
from .mesh import SolverConfig, seed_mesh
from .solver import minimize_area
from .teichmuller import (
    LaurentMap,
    ahlfors_weill_K,
    bers_norm,
    sample_quasicircle,
    teich_distance_from_K,
)

log = logging.getLogger(__name__)

COLUMNS = ("t", "bers_norm", "k_upper", "teich_dist", "sup_lambda", "width",
           "pde_residual", "hull_violation", "harmonic_residual", "converged")

DEFAULT_T = (0.02, 0.04, 0.06, 0.08, 0.10)


def parse_pattern(text):
    """'1' or '1,0,0.5' or '0.3+0.1j,1' -> tuple of complex coefficients."""
    try:
        out = tuple(complex(s.strip().replace(" ", "")) for s in str(text).split(",") if s.strip())
    except ValueError as exc:
        raise DomainError(f"bad coefficient pattern {text!r}") from exc
    if not out or not any(out):
        raise DomainError("coefficient pattern must have a nonzero entry")
    return out


@dataclass(frozen=True)
class SweepSpec:
    """A family psi_t = z + t * pattern and the resolution used for every row.

    Either give ``t_values`` or the range ``t_min, t_max, steps``.  Explicit
    value lists may be of any length; ranges need at least 3 steps.
    """

    pattern: tuple = (1.0,)
    t_values: tuple = None
    t_min: float = 0.02
    t_max: float = 0.10
    steps: int = 5
    solver: SolverConfig = field(default_factory=SolverConfig)
    n_boundary: int = 1024
    n_planes: int = 256
    n_probes: int = 4
    margin: float = 1.0
    chart_spacing: float = 2e-2
    workers: int = 1
    output_dir: str = None

    def __post_init__(self):
        object.__setattr__(self, "pattern", tuple(complex(c) for c in self.pattern))
        if not any(self.pattern):
            raise DomainError("coefficient pattern must have a nonzero entry")
        if self.t_values is None:
            if self.steps < 3:
                raise DomainError("a parameter range needs at least 3 steps")
            if not self.t_max > self.t_min:
                raise DomainError("t_max must exceed t_min")
            ts = np.linspace(self.t_min, self.t_max, self.steps)
            object.__setattr__(self, "t_values", tuple(float(round(t, 12)) for t in ts))
        else:
            object.__setattr__(self, "t_values", tuple(float(t) for t in self.t_values))
            if not self.t_values:
                raise DomainError("empty parameter list")
        if any(not math.isfinite(t) or t < 0 for t in self.t_values):
            raise DomainError("parameters must be finite and nonnegative")
        if self.n_boundary < 64 or self.n_planes < 8 or self.n_probes < 1 or self.workers < 1:
            raise DomainError("resolution settings too small")

    def laurent(self, t):
        return LaurentMap(tuple(t * c for c in self.pattern))

    def check_feasible(self):
        """The largest parameter must keep the Bers norm below 1/2."""
        t = max(self.t_values)
        if t == 0:
            return 0.0
        b = bers_norm(LaurentMap.certified(self.laurent(t).coefficients)).value
        if b >= 0.5:
            raise DomainError(f"Bers norm {b:.4g} at t={t} is not below 1/2")
        return b


@dataclass
class SweepRecord:
    t: float
    bers_norm: float = float("nan")
    k_upper: float = float("nan")
    teich_dist: float = float("nan")
    sup_lambda: float = float("nan")
    width: float = float("nan")
    pde_residual: float = float("nan")
    hull_violation: float = float("nan")
    harmonic_residual: float = float("nan")
    converged: bool = False
    error: str = ""

    def values(self):
        return [getattr(self, c) for c in COLUMNS]


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    v = float(v)
    return "" if not math.isfinite(v) else format(v, ".10g")


@dataclass(frozen=True)
class LineFit:
    """y = slope * x through the origin."""

    slope: float
    stderr: float
    low: float
    high: float
    rms: float
    n: int

    @classmethod
    def through_origin(cls, x, y, level=0.95):
        x, y = np.asarray(x, float), np.asarray(y, float)
        n = len(x)
        sxx = float(np.dot(x, x))
        if n == 0 or sxx == 0:
            return None
        slope = float(np.dot(x, y) / sxx)
        res = y - slope * x
        rms = float(np.sqrt(np.mean(res**2)))
        if n > 1:
            se = float(np.sqrt(np.dot(res, res) / (n - 1) / sxx))
            q = float(stats.t.ppf(0.5 + level / 2, n - 1))
        else:
            se, q = float("nan"), float("nan")
        return cls(slope, se, slope - q * se, slope + q * se, rms, n)


def bound_curve(c, b):
    """C b / sqrt(1 - C b^2); infinite where 1 - C b^2 <= 0."""
    b = np.asarray(b, float)
    d = 1.0 - c * b * b
    return np.where(d > 0, c * b / np.sqrt(np.maximum(d, 1e-300)), np.inf)


def log_k_curve(c, b):
    """C' log K_upper written as a function of the Bers norm."""
    b = np.asarray(b, float)
    return c * np.log((1 + 2 * b) / (1 - 2 * b))


@dataclass
class VerificationReport:
    records: list
    spec: SweepSpec = None

    def converged_rows(self):
        return [r for r in self.records if r.converged]

    def _fit_rows(self):
        return [r for r in self.converged_rows() if r.bers_norm > 0]

    @property
    def fit(self):
        """supLambda against bersNorm, through the origin."""
        rows = self._fit_rows()
        return LineFit.through_origin([r.bers_norm for r in rows], [r.sup_lambda for r in rows])

    @property
    def log_k_fit(self):
        """supLambda against log K_upper, through the origin."""
        rows = self._fit_rows()
        return LineFit.through_origin([math.log(r.k_upper) for r in rows], [r.sup_lambda for r in rows])

    @property
    def c_fit(self):
        f = self.fit
        return float("nan") if f is None else f.slope

    @property
    def c_log_fit(self):
        f = self.log_k_fit
        return float("nan") if f is None else f.slope

    def fitted_curves(self, n=64):
        """(name, b, value) polylines: the curvature bound and its log K analogue."""
        if self.fit is None:
            return []
        bmax = max(r.bers_norm for r in self._fit_rows())
        b = np.linspace(0.0, min(1.1 * bmax, 0.499), n)
        c = self.c_fit
        out = [("bound", b, bound_curve(c, b))]
        out.append(("log_k", b, log_k_curve(self.c_log_fit, b)))
        return [(name, bb[np.isfinite(v)], v[np.isfinite(v)]) for name, bb, v in out]

    def csv_text(self):
        lines = [",".join(COLUMNS)]
        for r in self.records:
            lines.append(",".join(_fmt(v) for v in r.values()))
        return "\n".join(lines) + "\n"

    def to_dict(self):
        def clean(v):
            if isinstance(v, (bool, np.bool_)):
                return bool(v)
            if isinstance(v, float) and not math.isfinite(v):
                return None
            return v

        fits = {}
        for name, f in (("sup_lambda_vs_bers_norm", self.fit), ("sup_lambda_vs_log_k", self.log_k_fit)):
            fits[name] = None if f is None else {k: clean(v) for k, v in asdict(f).items()}
        return {
            "columns": list(COLUMNS),
            "records": [{c: clean(getattr(r, c)) for c in COLUMNS} for r in self.records],
            "errors": {_fmt(r.t): r.error for r in self.records if r.error},
            "fits": fits,
        }


def _probe_planes(mesh, curv, n, seed):
    """Tangent planes at ``n`` core vertices chosen by a seeded generator, the centre first."""
    core = np.flatnonzero(curv.core)
    if len(core) == 0:
        core = np.flatnonzero(mesh.interior)
    x = mesh.vertices
    centre = core[np.argmin(x[core, 3])]
    rng = np.random.default_rng(seed)
    others = rng.choice(core, size=min(n - 1, len(core)), replace=False) if n > 1 else []
    picks = [centre] + [int(i) for i in others]
    normals = mesh.normals
    return [SupportPlane.from_dual(normals[i]) for i in picks]


def run_row(spec, t):
    """One sweep row.  Stage errors are captured in ``record.error``."""
    rec = SweepRecord(t=float(t))
    stage = "certify"
    try:
        psi = LaurentMap.certified(spec.laurent(t).coefficients)
        stage = "bers_norm"
        b = bers_norm(psi).value
        rec.bers_norm = b
        rec.k_upper = ahlfors_weill_K(b)
        rec.teich_dist = teich_distance_from_K(rec.k_upper)
        rec.width = foliation_width(b).width
        stage = "seed"
        gamma = sample_quasicircle(psi, spec.n_boundary, with_norm=False)
        mesh = seed_mesh(gamma, spec.solver)
        stage = "solve"
        mesh = minimize_area(mesh, spec.solver)
        stage = "curvature"
        curv = principal_curvatures(mesh, margin=spec.margin)
        rec.sup_lambda = curv.supLambda
        stage = "pde_residual"
        planes = _probe_planes(mesh, curv, spec.n_probes, spec.solver.seed)
        rec.pde_residual = max(pde_residual(mesh, p) for p in planes)
        stage = "hull"
        rec.hull_violation = hull_containment(mesh, gamma, n_planes=spec.n_planes)
        stage = "harmonic"
        chart = ConformalChart.from_mesh(mesh, spacing=spec.chart_spacing, margin=spec.margin)
        rec.harmonic_residual = harmonic_residual(chart)
        values = [rec.bers_norm, rec.k_upper, rec.teich_dist, rec.sup_lambda, rec.width,
                  rec.pde_residual, rec.hull_violation, rec.harmonic_residual]
        rec.converged = bool(mesh.info.converged and all(math.isfinite(v) for v in values))
        if not mesh.info.converged:
            rec.error = f"solve: not converged (residual {mesh.info.residual:.3g})"
    except (QuasidiscError, np.linalg.LinAlgError, FloatingPointError) as exc:
        rec.converged = False
        rec.error = f"{stage}: {type(exc).__name__}: {exc}"
        log.warning("row t=%g failed at %s: %s", t, stage, exc)
    return rec


def run_sweep(spec):
    """Run every row of ``spec`` and assemble the report in parameter order."""
    spec.check_feasible()
    ts = list(spec.t_values)
    if spec.workers > 1 and len(ts) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            records = list(pool.map(run_row, [spec] * len(ts), ts))
    else:
        records = [run_row(spec, t) for t in ts]
    report = VerificationReport(records, spec)
    if not report.converged_rows():
        raise SweepFailureError("no row of the sweep converged")
    return report


@dataclass
class BoundSummary:
    passed: bool
    checks: dict
    margins: list
    c_fit: float
    c_log_fit: float
    vacuous: bool = False

    def lines(self):
        out = [f"C_fit = {self.c_fit:.6g}", f"C'_fit (log K) = {self.c_log_fit:.6g}"]
        for name, ok in self.checks.items():
            out.append(f"{name}: {'pass' if ok else 'FAIL'}")
        for m in self.margins:
            out.append("t={t:.6g} bound_margin={bound:.4g} log_k_margin={log_k:.4g}".format(**m))
        return out


def verify_bound(report, slack=0.2, circle_tol=5e-3, constants=None):
    """Check the fitted curvature bounds row by row.

    (i)   supLambda <= B(C) with B(C) = C b / sqrt(1 - C b^2) and C = (1 + slack) C_fit;
    (ii)  supLambda / b does not blow up as b -> 0: the ratio on the smallest
          row is at most (1 + slack) times the median ratio;
    (iii) supLambda <= (1 + slack) C'_fit log K_upper.
    Margins are bound minus supLambda.  Rows with b = 0 (the round circle)
    only have to satisfy supLambda < ``circle_tol``.  ``constants`` = (C, C')
    replaces the report's own fits, e.g. to check a run against a reference sweep.
    """
    conv = report.converged_rows()
    if not conv:
        raise InsufficientRowsError("no converged rows")
    circle = [r for r in conv if r.bers_norm == 0]
    rows = [r for r in conv if r.bers_norm > 0]
    circle_ok = all(r.sup_lambda < circle_tol for r in circle)
    if not rows:
        return BoundSummary(circle_ok, {"circle": circle_ok}, [], 0.0, 0.0, vacuous=True)
    if len(rows) < 3:
        raise InsufficientRowsError(f"need at least 3 converged rows with positive Bers norm, have {len(rows)}")
    c, cl = (report.c_fit, report.c_log_fit) if constants is None else map(float, constants)
    b = np.array([r.bers_norm for r in rows])
    lam = np.array([r.sup_lambda for r in rows])
    logk = np.log(np.array([r.k_upper for r in rows]))
    bound = bound_curve((1 + slack) * c, b)
    logb = (1 + slack) * cl * logk
    ratio = lam / b
    order = np.argsort(b)
    checks = {
        "bound": bool(np.all(lam <= bound)),
        "no_blowup": bool(ratio[order[0]] <= (1 + slack) * np.median(ratio)),
        "log_k": bool(np.all(lam <= logb)),
        "fit_positive": bool(math.isfinite(c) and c > 0),
    }
    if circle:
        checks["circle"] = circle_ok
    margins = [{"t": r.t, "bound": float(bound[i] - lam[i]), "log_k": float(logb[i] - lam[i])}
               for i, r in enumerate(rows)]
    return BoundSummary(all(checks.values()), checks, margins, c, cl)


def monotone_in_bers(report):
    """Soft check: supLambda nondecreasing in bersNorm over converged rows."""
    rows = sorted(report.converged_rows(), key=lambda r: r.bers_norm)
    lam = [r.sup_lambda for r in rows]
    return all(b >= a for a, b in zip(lam, lam[1:]))


def epsilon_study(psi, epsilons=(0.05, 0.02, 0.01), config=None, margin=1.0):
    """supLambda of the minimal disc at each truncation epsilon; returns (eps, supLambda) pairs."""
    config = config or SolverConfig()
    gamma = sample_quasicircle(psi, 1024, with_norm=False)
    out = []
    for eps in epsilons:
        cfg = replace(config, epsilon=eps)
        mesh = minimize_area(seed_mesh(gamma, cfg), cfg)
        out.append((eps, principal_curvatures(mesh, margin=margin).supLambda))
    return out


def multiplicity_probe(psi, config=None, n_seeds=3, amplitude=0.2, rng=None):
    """Solve from perturbed seeds and count distinct converged surfaces.

    Interior seed vertices are pushed along their normals by a smooth random
    profile.  Surfaces whose vertices stay within 1e-3 (hyperbolic) of the
    first solution are counted as the same.  Informational only.
    """
    from .hyperbolic import hyp_distance, normal_flow, normalize_point

    config = config or SolverConfig()
    rng = np.random.default_rng(config.seed) if rng is None else rng
    gamma = sample_quasicircle(psi, 1024, with_norm=False)
    seed = seed_mesh(gamma, config)
    sols = []
    for k in range(n_seeds):
        m = seed
        if k:
            p = m.param
            a = rng.normal(size=3)
            prof = amplitude * (a[0] + a[1] * p[:, 0] + a[2] * p[:, 1]) * (1 - np.sum(p**2, axis=1))
            x = m.vertices.copy()
            ii = m.interior
            x[ii] = normalize_point(normal_flow(x[ii], m.normals[ii], prof[ii]))
            m = m.with_vertices(x)
        sols.append(minimize_area(m, config))
    ref = sols[0].vertices
    distinct = 1
    gaps = []
    for s in sols[1:]:
        if len(s.vertices) != len(ref):
            distinct += 1
            continue
        g = float(np.max(hyp_distance(ref, s.vertices)))
        gaps.append(g)
        if g > 1e-3:
            distinct += 1
    return {"distinct": distinct, "max_gaps": gaps, "converged": [s.info.converged for s in sols]}


def records_from_csv(text):
    """Inverse of ``VerificationReport.csv_text`` (error strings are not stored in CSV)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or tuple(lines[0].split(",")) != COLUMNS:
        raise DomainError("not a sweep CSV")
    out = []
    for ln in lines[1:]:
        vals = ln.split(",")
        kw = {}
        for c, v in zip(COLUMNS, vals):
            if c == "converged":
                kw[c] = v == "true"
            else:
                kw[c] = float(v) if v else float("nan")
        out.append(SweepRecord(**kw))
    return out


__all__ = ["COLUMNS", "DEFAULT_T", "SweepSpec", "SweepRecord", "VerificationReport", "LineFit",
           "BoundSummary", "run_row", "run_sweep", "verify_bound", "bound_curve", "log_k_curve",
           "monotone_in_bers", "epsilon_study", "multiplicity_probe", "records_from_csv", "parse_pattern"]
