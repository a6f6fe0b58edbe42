"""Figures for comparison reports.

:func:`render` writes a standalone SVG 1.1 document by hand so the bytes are
a pure function of the report.  Data map to pixels through :class:`Axes`::

    px = left + (x - x_lo) / (x_hi - x_lo) * plot_width
    py = top + (y_hi - y) / (y_hi - y_lo) * plot_height

:func:`render_figure` draws the same content with matplotlib for raster or
PDF output.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .analysis import ComparisonReport, MethodEntry
from .errors import EmptyReport, IOFailure
from .fitting import FittedCurve, Polyline
from .model import MetricKind

CURVE_SAMPLES = 256
PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)
AXIS_LABELS = {
    MetricKind.L0: "L0 distance",
    MetricKind.L1: "L1 distance",
    MetricKind.L2: "L2 distance",
    MetricKind.LINF: "Linf distance",
    MetricKind.ASR: "attack success rate (%)",
    MetricKind.QUERIES: "queries",
}


@dataclass(frozen=True)
class PlotStyle:
    width: int = 720
    height: int = 420
    margin_left: int = 64
    margin_right: int = 200
    margin_top: int = 24
    margin_bottom: int = 52
    palette: tuple[str, ...] = PALETTE
    marker_radius: float = 3.0
    x_label: str | None = None
    y_label: str | None = None
    precision: int = 4
    ticks: int = 6

    @property
    def plot_width(self) -> float:
        return self.width - self.margin_left - self.margin_right

    @property
    def plot_height(self) -> float:
        return self.height - self.margin_top - self.margin_bottom


@dataclass(frozen=True)
class Axes:
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    style: PlotStyle

    def px(self, x: float) -> float:
        lo, hi = self.x_range
        return self.style.margin_left + (x - lo) / (hi - lo) * self.style.plot_width

    def py(self, y: float) -> float:
        lo, hi = self.y_range
        return self.style.margin_top + (hi - y) / (hi - lo) * self.style.plot_height


def colors_for(methods: Sequence[str], palette: Sequence[str] = PALETTE) -> dict[str, str]:
    """Colour by position of the method name in sorted order."""
    return {m: palette[i % len(palette)] for i, m in enumerate(sorted(methods))}


def curve_samples(curve: FittedCurve, x_range: tuple[float, float]) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(curve, Polyline):
        lo, hi = curve.span
        xs = [lo] + [x for x, _ in curve.points if lo < x < hi] + [hi]
        xs = sorted(set(xs))
        return np.array(xs), np.array([curve.extended(x) for x in xs])
    xs = np.linspace(x_range[0], x_range[1], CURVE_SAMPLES)
    return xs, np.asarray(curve(xs), dtype=float)


def y_range_for(report: ComparisonReport) -> tuple[float, float]:
    values = []
    for e in report.entries:
        values.extend(curve_samples(e.curve, report.spec.range)[1].tolist())
        values.extend(e.series.ys)
    lo, hi = min(values), max(values)
    if report.spec.y_axis is MetricKind.ASR:
        return min(0.0, lo), max(100.0, hi)
    lo = min(0.0, lo)
    hi = hi if hi > lo else lo + 1.0
    return lo, hi + 0.05 * (hi - lo)


def _num(value: float, precision: int) -> str:
    text = f"{value:.{precision}f}"
    if text.lstrip("-").strip("0.") == "":
        text = text.lstrip("-")
    return text


def _tick_label(value: float) -> str:
    text = f"{value:.3f}".rstrip("0").rstrip(".")
    return "0" if text in ("", "-0") else text


def render(report: ComparisonReport, style: PlotStyle | None = None) -> bytes:
    """SVG document for ``report``: curves, samples, AUC legend, crossings, violations."""
    if not report.entries:
        raise EmptyReport("report has no fitted methods to draw")
    style = style or PlotStyle()
    spec = report.spec
    axes = Axes(spec.range, y_range_for(report), style)
    n = lambda v: _num(v, style.precision)  # noqa: E731
    colors = colors_for([e.method for e in report.entries], style.palette)
    x0, x1 = style.margin_left, style.margin_left + style.plot_width
    y0, y1 = style.margin_top, style.margin_top + style.plot_height

    out = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{style.width}" '
        f'height="{style.height}" viewBox="0 0 {style.width} {style.height}" '
        'font-family="sans-serif" font-size="11">',
        f'<rect class="background" x="0" y="0" width="{style.width}" height="{style.height}" fill="#ffffff"/>',
    ]

    out.append('<g class="violations">')
    for e in report.entries:
        for v in e.bound_violations:
            out.append(f'<rect class="violation" data-method="{escape(e.method)}" x="{n(axes.px(v.start))}" '
                       f'y="{n(y0)}" width="{n(axes.px(v.end) - axes.px(v.start))}" '
                       f'height="{n(y1 - y0)}" fill="{colors[e.method]}" fill-opacity="0.12"/>')
    out.append('</g>')

    out.append('<g class="axes" stroke="#000000" stroke-width="1">')
    out.append(f'<line class="axis" x1="{n(x0)}" y1="{n(y1)}" x2="{n(x1)}" y2="{n(y1)}"/>')
    out.append(f'<line class="axis" x1="{n(x0)}" y1="{n(y0)}" x2="{n(x0)}" y2="{n(y1)}"/>')
    out.append('</g>')
    out.append('<g class="ticks" fill="#000000">')
    for i in range(style.ticks):
        xv = spec.range[0] + i * spec.width / (style.ticks - 1)
        px = axes.px(xv)
        out.append(f'<line class="tick" x1="{n(px)}" y1="{n(y1)}" x2="{n(px)}" y2="{n(y1 + 4)}" stroke="#000000"/>')
        out.append(f'<text class="tick-label" x="{n(px)}" y="{n(y1 + 16)}" text-anchor="middle">'
                   f'{_tick_label(xv)}</text>')
        yv = axes.y_range[0] + i * (axes.y_range[1] - axes.y_range[0]) / (style.ticks - 1)
        py = axes.py(yv)
        out.append(f'<line class="tick" x1="{n(x0 - 4)}" y1="{n(py)}" x2="{n(x0)}" y2="{n(py)}" stroke="#000000"/>')
        out.append(f'<text class="tick-label" x="{n(x0 - 7)}" y="{n(py + 4)}" text-anchor="end">'
                   f'{_tick_label(yv)}</text>')
    out.append('</g>')
    x_label = style.x_label or AXIS_LABELS[spec.x_axis]
    y_label = style.y_label or AXIS_LABELS[spec.y_axis]
    out.append(f'<text class="axis-label" x="{n((x0 + x1) / 2)}" y="{n(style.height - 12)}" '
               f'text-anchor="middle">{escape(x_label)}</text>')
    out.append(f'<text class="axis-label" x="14" y="{n((y0 + y1) / 2)}" text-anchor="middle" '
               f'transform="rotate(-90 14 {n((y0 + y1) / 2)})">{escape(y_label)}</text>')

    out.append('<g class="curves" fill="none" stroke-width="1.5">')
    for e in report.entries:
        xs, ys = curve_samples(e.curve, spec.range)
        d = " ".join(f"{'M' if i == 0 else 'L'}{n(axes.px(x))} {n(axes.py(y))}"
                     for i, (x, y) in enumerate(zip(xs, ys)))
        out.append(f'<path class="curve" data-method="{escape(e.method)}" d="{d}" stroke="{colors[e.method]}"/>')
    out.append('</g>')

    out.append('<g class="samples">')
    for e in report.entries:
        for p in e.series.points:
            out.append(f'<circle class="sample" data-method="{escape(e.method)}" cx="{n(axes.px(p.x))}" '
                       f'cy="{n(axes.py(p.y))}" r="{n(style.marker_radius)}" fill="{colors[e.method]}"/>')
    out.append('</g>')

    out.append('<g class="crossings" stroke="#555555" stroke-dasharray="4 3">')
    for c in report.crossings:
        px = axes.px(c.x)
        out.append(f'<line class="crossing" data-methods="{escape(c.method_a)},{escape(c.method_b)}" '
                   f'x1="{n(px)}" y1="{n(y0)}" x2="{n(px)}" y2="{n(y1)}"/>')
    out.append('</g>')

    out.append('<g class="legend">')
    lx = x1 + 16
    for i, e in enumerate(report.entries):
        ly = y0 + 8 + 18 * i
        out.append(f'<g class="legend-row" data-method="{escape(e.method)}">'
                   f'<line x1="{n(lx)}" y1="{n(ly)}" x2="{n(lx + 18)}" y2="{n(ly)}" '
                   f'stroke="{colors[e.method]}" stroke-width="2"/>'
                   f'<text x="{n(lx + 24)}" y="{n(ly + 4)}">{escape(legend_label(e, style.precision))}</text></g>')
    out.append('</g>')
    out.append('</svg>')
    return ("\n".join(out) + "\n").encode("utf-8")


def legend_label(entry: MethodEntry, precision: int = 4) -> str:
    return f"{entry.rank}. {entry.method} (AUC {_num(entry.auc, precision)})"


def write_svg(report: ComparisonReport, path: str | os.PathLike | None, style: PlotStyle | None = None) -> bytes:
    """Render and write to ``path``; ``None`` or ``"-"`` means standard output."""
    data = render(report, style)
    if path is None or str(path) == "-":
        import sys
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
        return data
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_bytes(data)
    except OSError as exc:
        raise IOFailure(f"cannot write figure {path}: {exc}") from None
    return data


def render_figure(report: ComparisonReport, path: str | os.PathLike, dpi: int = 150) -> Path:
    """Matplotlib rendering; the format follows the file suffix (png, pdf, svg)."""
    if not report.entries:
        raise EmptyReport("report has no fitted methods to draw")
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    spec = report.spec
    colors = colors_for([e.method for e in report.entries])
    fig, ax = plt.subplots(figsize=(7.2, 4.2))
    try:
        for e in report.entries:
            xs, ys = curve_samples(e.curve, spec.range)
            ax.plot(xs, ys, color=colors[e.method], label=legend_label(e))
            ax.scatter(e.series.xs, e.series.ys, s=12, color=colors[e.method])
            for v in e.bound_violations:
                ax.axvspan(v.start, v.end, color=colors[e.method], alpha=0.12, lw=0)
        for c in report.crossings:
            ax.axvline(c.x, color="#555555", ls="--", lw=0.8)
        if spec.y_axis is MetricKind.ASR:
            ax.axhline(0, color="#999999", lw=0.6)
            ax.axhline(100, color="#999999", lw=0.6)
        ax.set_xlim(*spec.range)
        ax.set_xlabel(AXIS_LABELS[spec.x_axis])
        ax.set_ylabel(AXIS_LABELS[spec.y_axis])
        better = "higher" if report.direction.value == "maximize" else "lower"
        ax.set_title(f"r={spec.resolution}, d={spec.order}; AUC: the {better} is better", fontsize=10)
        ax.legend(fontsize=8, loc="best")
        fig.tight_layout()
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, dpi=dpi, metadata={"Date": None} if path.suffix.lower() in (".svg", ".pdf") else None)
    except OSError as exc:
        raise IOFailure(f"cannot write figure {path}: {exc}") from None
    finally:
        plt.close(fig)
    return path
