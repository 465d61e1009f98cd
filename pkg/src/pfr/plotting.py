"""Error-curve figures: a byte-deterministic SVG and a matplotlib PNG.

Both take table rows (dicts, e.g. from :func:`read_table`) and draw one line
per value of the ``series`` column with a logarithmic y-axis.  Rows sharing
``(series, x)`` (several seeds) are averaged.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

from .errors import InvalidArgumentError, ParseError

__all__ = ["PlotSpec", "read_table", "series_points", "render_svg", "render_png"]

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
FLOOR = 1e-300


@dataclass(frozen=True)
class PlotSpec:
    x: str = "N"
    y: str = "l2_error"
    series: str = "lambda"
    title: str = ""
    width: int = 640
    height: int = 420


def read_table(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError(f"{path}: empty table")
        return list(reader)


def series_points(rows, spec: PlotSpec) -> dict[float, list[tuple[float, float]]]:
    """``{series value: [(x, mean y), ...]}`` sorted by series then x."""
    if not rows:
        raise InvalidArgumentError("cannot plot an empty table")
    missing = [c for c in (spec.x, spec.y, spec.series) if c not in rows[0]]
    if missing:
        raise InvalidArgumentError(f"table lacks columns: {', '.join(missing)}")
    acc: dict = {}
    for r in rows:
        try:
            key, x, y = float(r[spec.series]), float(r[spec.x]), float(r[spec.y])
        except (TypeError, ValueError) as exc:
            raise InvalidArgumentError(f"non-numeric table entry: {exc}") from exc
        acc.setdefault(key, {}).setdefault(x, []).append(y)
    return {
        key: [(x, sum(ys) / len(ys)) for x, ys in sorted(by_x.items())]
        for key, by_x in sorted(acc.items(), key=lambda kv: -kv[0])
    }


def _log_range(values):
    pos = [v for v in values if v > 0 and math.isfinite(v)]
    if not pos:
        return 0, 1
    lo = math.floor(math.log10(min(pos)))
    hi = math.ceil(math.log10(max(pos)))
    return lo, max(hi, lo + 1)


def render_svg(rows, spec: PlotSpec = PlotSpec(), path=None) -> str:
    """SVG text with one ``<polyline>`` per series; also written to ``path`` if given.

    Zero or negative values are drawn at the bottom of the axis.
    """
    pts = series_points(rows, spec)
    xs = [x for line in pts.values() for x, _ in line]
    ys = [y for line in pts.values() for _, y in line]
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x1 = x0 + 1.0
    d0, d1 = _log_range(ys)

    W, H = spec.width, spec.height
    left, right, top, bottom = 70, 150, 30, 50
    pw, ph = W - left - right, H - top - bottom

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        ly = math.log10(max(y, 10.0**d0)) if y > 0 else d0
        return top + (d1 - ly) / (d1 - d0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
    ]
    if spec.title:
        out.append(f'<text x="{W / 2:.2f}" y="18" text-anchor="middle">{escape(spec.title)}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    step = max(1, math.ceil((d1 - d0) / 10))
    for d in range(d0, d1 + 1, step):
        y = sy(10.0**d)
        out.append(f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.2f}" text-anchor="end">1e{d}</text>')
    for x in _ticks(x0, x1):
        px = sx(x)
        out.append(f'<line x1="{px:.2f}" y1="{top + ph}" x2="{px:.2f}" y2="{top + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{px:.2f}" y="{top + ph + 16}" text-anchor="middle">{x:g}</text>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{H - 10}" text-anchor="middle">{escape(spec.x)}</text>')
    out.append(f'<text x="14" y="{top + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {top + ph / 2:.2f})">{escape(spec.y)}</text>')
    for i, (key, line) in enumerate(pts.items()):
        colour = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in line)
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{coords}"/>')
        ly = top + 14 + 16 * i
        out.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 30}" y2="{ly}" '
                   f'stroke="{colour}" stroke-width="1.5"/>')
        out.append(f'<text x="{left + pw + 34}" y="{ly + 4}">{escape(spec.series)}={key:g}</text>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    return text


def _ticks(x0, x1, target=8):
    raw = (x1 - x0) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 5, 10) if m * mag >= raw)
    start = math.ceil(x0 / step) * step
    n = int(math.floor((x1 - start) / step + 1e-9)) + 1
    return [start + k * step for k in range(n)]


def render_png(rows, spec: PlotSpec = PlotSpec(), path="error_curve.png", dpi: int = 100) -> str:
    """Same figure drawn with matplotlib's Agg canvas (no global pyplot state)."""
    from matplotlib.backends.backend_agg import FigureCanvasAgg
    from matplotlib.figure import Figure

    pts = series_points(rows, spec)
    fig = Figure(figsize=(spec.width / dpi, spec.height / dpi), dpi=dpi)
    FigureCanvasAgg(fig)
    ax = fig.add_subplot()
    for key, line in pts.items():
        xs = [x for x, _ in line]
        ys = [max(y, FLOOR) for _, y in line]
        ax.semilogy(xs, ys, marker=".", label=f"{spec.series}={key:g}")
    ax.set_xlabel(spec.x)
    ax.set_ylabel(spec.y)
    if spec.title:
        ax.set_title(spec.title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    return str(path)
