"""Flat-file exports: CSV, JSON, SVG for sweep reports, OFF for meshes, CSV/SVG for curves."""

import json
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .errors import DomainError
from .mesh import TriMesh
from .sweep import VerificationReport
from .teichmuller import Quasicircle

FORMATS = ("csv", "json", "off", "svg")

_W, _H, _PAD = 640, 480, 56


def _write(path, text):
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def report_json(report):
    return json.dumps(report.to_dict(), indent=2, sort_keys=False) + "\n"


class _Axes:
    """Affine map from data coordinates to the SVG canvas."""

    def __init__(self, xmax, ymax):
        self.xmax = xmax if xmax > 0 else 1.0
        self.ymax = ymax if ymax > 0 else 1.0

    def __call__(self, x, y):
        px = _PAD + (_W - 2 * _PAD) * np.asarray(x, float) / self.xmax
        py = _H - _PAD - (_H - 2 * _PAD) * np.asarray(y, float) / self.ymax
        return px, py


def report_svg(report):
    """Scatter of supLambda against bersNorm with the fitted curves.

    One <polyline> per fitted curve and one <circle class="marker"> per
    converged row; axes and ticks are plain <line> and <text> elements.
    """
    conv = report.converged_rows()
    curves = report.fitted_curves()
    xs = [r.bers_norm for r in conv] + [float(np.max(b)) for _, b, _ in curves if len(b)]
    ys = [r.sup_lambda for r in conv] + [float(np.max(v)) for _, _, v in curves if len(v)]
    ax = _Axes(1.05 * max(xs, default=1.0), 1.1 * max(ys, default=1.0))
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
           f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>']
    x0, y0 = ax(0, 0)
    x1, _ = ax(ax.xmax, 0)
    _, y1 = ax(0, ax.ymax)
    out.append(f'<line class="axis" x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y0:.2f}" stroke="black"/>')
    out.append(f'<line class="axis" x1="{x0:.2f}" y1="{y0:.2f}" x2="{x0:.2f}" y2="{y1:.2f}" stroke="black"/>')
    for k in range(5):
        tx, ty = ax.xmax * k / 4, ax.ymax * k / 4
        px, _ = ax(tx, 0)
        _, py = ax(0, ty)
        out.append(f'<text x="{px:.2f}" y="{y0 + 18:.2f}" font-size="11" text-anchor="middle">{tx:.3g}</text>')
        out.append(f'<text x="{x0 - 6:.2f}" y="{py + 4:.2f}" font-size="11" text-anchor="end">{ty:.3g}</text>')
    out.append(f'<text x="{_W / 2:.0f}" y="{_H - 12}" font-size="13" text-anchor="middle">Bers norm</text>')
    out.append(f'<text x="16" y="{_H / 2:.0f}" font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 16 {_H / 2:.0f})">sup lambda</text>')
    colours = {"bound": "#c0392b", "log_k": "#2471a3"}
    for name, b, v in curves:
        px, py = ax(b, v)
        pts = " ".join(f"{a:.2f},{c:.2f}" for a, c in zip(px, py))
        out.append(f'<polyline class="fit" data-name="{escape(name)}" points="{pts}" fill="none" '
                   f'stroke="{colours.get(name, "gray")}" stroke-width="1.5"/>')
    for r in conv:
        px, py = ax(r.bers_norm, r.sup_lambda)
        out.append(f'<circle class="marker" cx="{float(px):.2f}" cy="{float(py):.2f}" r="4" fill="black"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def curve_svg(points):
    pts = np.asarray(points, complex)
    r = max(float(np.max(np.abs(pts))), 1e-12) * 1.1
    s = (min(_W, _H) / 2 - 8) / r
    px, py = _W / 2 + s * pts.real, _H / 2 - s * pts.imag
    path = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}">\n'
            f'<polygon points="{path}" fill="none" stroke="black"/>\n</svg>\n')


def export(obj, fmt, path):
    """Write ``obj`` (report, mesh or curve) to ``path`` in ``fmt``."""
    fmt = fmt.lower()
    if fmt not in FORMATS:
        raise DomainError(f"unknown format {fmt!r}")
    if isinstance(obj, VerificationReport):
        if fmt == "csv":
            return _write(path, obj.csv_text())
        if fmt == "json":
            return _write(path, report_json(obj))
        if fmt == "svg":
            return _write(path, report_svg(obj))
    elif isinstance(obj, TriMesh):
        if fmt == "off":
            try:
                obj.to_off(path)
            except OSError as exc:
                raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
            return Path(path)
    elif isinstance(obj, Quasicircle) or isinstance(obj, np.ndarray):
        pts = obj.points if isinstance(obj, Quasicircle) else obj
        if fmt == "csv":
            if isinstance(obj, Quasicircle):
                obj.to_csv(path)
                return Path(path)
            lines = ["re,im"] + [f"{float(z.real):.17g},{float(z.imag):.17g}" for z in np.asarray(pts, complex)]
            return _write(path, "\n".join(lines) + "\n")
        if fmt == "svg":
            return _write(path, curve_svg(pts))
    raise DomainError(f"cannot export {type(obj).__name__} as {fmt}")
