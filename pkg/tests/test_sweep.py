import json
import math
import xml.etree.ElementTree as ET
from dataclasses import replace

import numpy as np
import pytest

from quasidisc.errors import DomainError, InsufficientRowsError, SweepFailureError
from quasidisc.mesh import SolverConfig
from quasidisc.report import export
from quasidisc.sweep import (
    COLUMNS,
    LineFit,
    SweepRecord,
    SweepSpec,
    VerificationReport,
    bound_curve,
    monotone_in_bers,
    parse_pattern,
    records_from_csv,
    run_sweep,
    verify_bound,
)

SMALL = SolverConfig(n_vertices=2500)
SVG = "{http://www.w3.org/2000/svg}"


def small_spec(**kw):
    base = dict(t_values=(0.02, 0.06, 0.1), solver=SMALL, n_boundary=256, n_planes=64)
    base.update(kw)
    return SweepSpec(**base)


@pytest.fixture(scope="module")
def report():
    return run_sweep(small_spec())


def record(t, b, lam, converged=True):
    from quasidisc.infinity import foliation_width
    from quasidisc.teichmuller import ahlfors_weill_K

    k = ahlfors_weill_K(b)
    return SweepRecord(t, b, k, 0.5 * math.log(k), lam, foliation_width(b).width, 0.01, 0.0, 0.01, converged)


def synthetic(scale=1.0):
    return VerificationReport([record(t, 1.5 * t, scale * 1.52 * t) for t in (0.02, 0.04, 0.06, 0.08, 0.1)])


# -- sweep specification -------------------------------------------------------------


def test_spec_validation():
    assert SweepSpec().t_values == (0.02, 0.04, 0.06, 0.08, 0.1)
    with pytest.raises(DomainError):
        SweepSpec(steps=2)
    with pytest.raises(DomainError):
        SweepSpec(t_min=0.1, t_max=0.05)
    with pytest.raises(DomainError):
        SweepSpec(pattern=(0,))
    with pytest.raises(DomainError):
        SweepSpec(t_values=(-0.1,))
    with pytest.raises(DomainError):
        SweepSpec(t_values=(0.1, 0.4)).check_feasible()  # Bers norm 0.6
    assert parse_pattern("1, 0.5j") == (1, 0.5j)


# -- rows and fits ---------------------------------------------------------------------


def test_circle_only_sweep():
    rep = run_sweep(small_spec(t_values=(0.0,)))
    (r,) = rep.records
    assert r.converged and r.bers_norm == 0 and r.width == 0
    assert r.sup_lambda < 5e-3
    summary = verify_bound(rep)
    assert summary.passed and summary.vacuous


def test_sweep_rows(report):
    assert [r.t for r in report.records] == [0.02, 0.06, 0.1]
    for r in report.records:
        assert r.converged and not r.error
        assert all(math.isfinite(v) for v in r.values()[:-1])
        assert r.width == pytest.approx(np.arctanh(2 * r.bers_norm), abs=1e-6)
        assert r.bers_norm == pytest.approx(1.5 * r.t, rel=1e-6)
        assert r.pde_residual < 5e-2 and r.hull_violation >= -5e-2
    assert monotone_in_bers(report)
    fit = report.fit
    assert fit.slope > 0 and fit.low <= fit.slope <= fit.high and fit.n == 3


def test_verify_bound_passes(report):
    summary = verify_bound(report)
    assert summary.passed and not summary.vacuous
    assert len(summary.margins) == 3
    assert all(m["bound"] >= 0 and m["log_k"] >= 0 for m in summary.margins)
    assert any(line.startswith("C_fit") for line in summary.lines())


def test_verify_bound_needs_rows(report):
    with pytest.raises(InsufficientRowsError):
        verify_bound(VerificationReport(report.records[:2]))
    with pytest.raises(InsufficientRowsError):
        verify_bound(VerificationReport([replace(r, converged=False) for r in report.records]))


def test_doubled_sup_lambda_fails():
    honest = synthetic()
    assert verify_bound(honest).passed
    doubled = synthetic(2.0)
    summary = verify_bound(doubled, constants=(honest.c_fit, honest.c_log_fit))
    assert not summary.passed
    assert all(m["bound"] < 0 and m["log_k"] < 0 for m in summary.margins)
    # doubling only the smallest row is caught by the blow-up check against the report's own fit
    recs = synthetic().records
    recs[0] = replace(recs[0], sup_lambda=2 * recs[0].sup_lambda)
    summary = verify_bound(VerificationReport(recs))
    assert not summary.passed and not summary.checks["no_blowup"]


def test_non_converged_rows_are_excluded():
    recs = synthetic().records + [record(0.12, 0.18, 5.0, converged=False)]
    rep = VerificationReport(recs)
    assert rep.c_fit == pytest.approx(synthetic().c_fit)
    assert verify_bound(rep).passed


def test_line_fit_through_origin():
    x = np.array([1.0, 2.0, 3.0])
    fit = LineFit.through_origin(x, 2 * x)
    assert fit.slope == pytest.approx(2) and fit.rms < 1e-12
    fit = LineFit.through_origin(x, [2.1, 3.9, 6.05])
    assert fit.slope == pytest.approx(np.dot(x, [2.1, 3.9, 6.05]) / np.dot(x, x))
    assert fit.low < fit.slope < fit.high
    assert bound_curve(1.0, 0.0) == 0


def test_sweep_failure():
    with pytest.raises(SweepFailureError):
        run_sweep(small_spec(t_values=(0.05,), solver=SolverConfig(n_vertices=2500, max_iter=1)))


def test_failed_row_is_recorded():
    rep = run_sweep(small_spec(t_values=(0.0, 0.05), solver=SolverConfig(n_vertices=2500, max_iter=1)))
    bad = rep.records[1]
    assert not bad.converged and bad.error.startswith("solve")
    line = rep.csv_text().splitlines()[2]
    assert line.endswith(",false")


def test_parallel_rows_match_serial(report):
    par = run_sweep(small_spec(workers=2))
    assert par.csv_text() == report.csv_text()


def test_determinism(report):
    assert run_sweep(small_spec()).csv_text() == report.csv_text()


# -- exports ---------------------------------------------------------------------------


def test_empty_report_csv(tmp_path):
    export(VerificationReport([]), "csv", tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text() == ",".join(COLUMNS) + "\n"
    assert ",".join(COLUMNS) == "t,bers_norm,k_upper,teich_dist,sup_lambda,width,pde_residual,hull_violation,harmonic_residual,converged"


def test_one_row_csv(tmp_path):
    r = SweepRecord(0.1, 0.15, 1.857142857142857, 0.3095196042031118, 0.1523, 0.3095196042031118,
                    0.0103, 0.0, 0.0135, True)
    export(VerificationReport([r]), "csv", tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert len(lines) == 2
    assert lines[1] == "0.1,0.15,1.857142857,0.3095196042,0.1523,0.3095196042,0.0103,0,0.0135,true"
    back = records_from_csv((tmp_path / "r.csv").read_text())
    assert back[0].converged and back[0].sup_lambda == 0.1523


def test_json_mirrors_columns(tmp_path, report):
    export(report, "json", tmp_path / "r.json")
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["columns"] == list(COLUMNS)
    for rec, row in zip(data["records"], report.records):
        assert list(rec) == list(COLUMNS)
        assert rec["sup_lambda"] == row.sup_lambda
    assert data["fits"]["sup_lambda_vs_bers_norm"]["slope"] == report.c_fit


def test_svg_structure(tmp_path, report):
    recs = report.records + [replace(report.records[0], t=0.2, converged=False)]
    rep = VerificationReport(recs)
    export(rep, "svg", tmp_path / "r.svg")
    root = ET.parse(tmp_path / "r.svg").getroot()
    assert len(root.findall(f"{SVG}polyline")) == len(rep.fitted_curves()) == 2
    markers = [c for c in root.findall(f"{SVG}circle") if c.get("class") == "marker"]
    assert len(markers) == len(rep.converged_rows()) == 3


def test_unwritable_path(tmp_path, report):
    with pytest.raises(OSError):
        export(report, "csv", tmp_path / "missing" / "r.csv")
    with pytest.raises(DomainError):
        export(report, "off", tmp_path / "r.off")
