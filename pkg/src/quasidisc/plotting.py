"""Matplotlib figures for sweep reports (written to files, never shown)."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_bound(report, path):
    """supLambda against the Bers norm with both fitted curves."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    conv = report.converged_rows()
    ax.plot([r.bers_norm for r in conv], [r.sup_lambda for r in conv], "ko", label="converged rows")
    for name, b, v in report.fitted_curves():
        label = (f"C b / sqrt(1 - C b^2), C = {report.c_fit:.3g}" if name == "bound"
                 else f"C' log K, C' = {report.c_log_fit:.3g}")
        ax.plot(b, v, "-", label=label)
    ax.set_xlabel("Bers norm")
    ax.set_ylabel("sup lambda")
    ax.grid(alpha=0.3)
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_residuals(report, path):
    """Per-row residuals on a log scale."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    rows = report.converged_rows()
    t = [r.t for r in rows]
    for name, key in (("PDE", "pde_residual"), ("harmonic", "harmonic_residual")):
        vals = np.array([getattr(r, key) for r in rows])
        ax.semilogy(t, np.maximum(vals, 1e-16), "o-", label=name)
    hv = np.array([abs(r.hull_violation) for r in rows])
    ax.semilogy(t, np.maximum(hv, 1e-16), "s--", label="|hull violation|")
    ax.set_xlabel("t")
    ax.set_ylabel("residual")
    ax.grid(alpha=0.3, which="both")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_curvature(mesh, lam, path):
    """Principal curvature over the Poincare projection of the mesh."""
    from .hyperbolic import to_poincare

    b = to_poincare(mesh.vertices)
    fig, ax = plt.subplots(figsize=(5.5, 5))
    vals = np.where(np.isfinite(lam), lam, np.nan)
    tc = ax.tripcolor(b[:, 0], b[:, 1], mesh.faces, vals, shading="gouraud", cmap="viridis")
    fig.colorbar(tc, ax=ax, label="lambda")
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def render_report(report, directory):
    """Write the report figures into ``directory``; returns the written paths."""
    d = Path(directory)
    return [plot_bound(report, d / "bound.png"), plot_residuals(report, d / "residuals.png")]
