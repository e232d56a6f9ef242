"""Self-contained SVG figures: boxplots, histograms and log-log lines."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["boxplot_svg", "histogram_svg", "loglog_svg", "plot_record"]

WIDTH, HEIGHT = 640, 400
MARGIN = 50


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Canvas:
    def __init__(self, title: str, xlim, ylim):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        ]
        lo, hi = ylim
        if hi <= lo:
            lo, hi = lo - 1.0, hi + 1.0
        pad = 0.05 * (hi - lo)
        self.ylim = (lo - pad, hi + pad)
        self.xlim = xlim

    def x(self, v: float) -> float:
        lo, hi = self.xlim
        return MARGIN + (v - lo) / (hi - lo) * (WIDTH - 2 * MARGIN)

    def y(self, v: float) -> float:
        lo, hi = self.ylim
        return HEIGHT - MARGIN - (v - lo) / (hi - lo) * (HEIGHT - 2 * MARGIN)

    def line(self, x1, y1, x2, y2, color="black", width=1.0, dash=None):
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
            f'stroke="{color}" stroke-width="{width}"{extra}/>'
        )

    def rect(self, x, y, w, h, fill="none", stroke="black"):
        self.parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(max(w, 0))}" height="{_fmt(max(h, 0))}" '
            f'fill="{fill}" stroke="{stroke}"/>'
        )

    def text(self, x, y, label, anchor="middle"):
        self.parts.append(f'<text x="{_fmt(x)}" y="{_fmt(y)}" text-anchor="{anchor}">{escape(label)}</text>')

    def cross(self, x, y, size=5, color="red"):
        self.line(x - size, y - size, x + size, y + size, color, 2)
        self.line(x - size, y + size, x + size, y - size, color, 2)

    def axes(self, xlabel: str, ylabel: str, yticks=5, ylabels=None):
        left, bottom = MARGIN, HEIGHT - MARGIN
        self.line(left, bottom, WIDTH - MARGIN, bottom)
        self.line(left, MARGIN, left, bottom)
        lo, hi = self.ylim
        for t in np.linspace(lo, hi, yticks):
            yy = self.y(t)
            self.line(left - 4, yy, left, yy)
            label = ylabels(t) if ylabels else f"{t:.3g}"
            self.text(left - 6, yy + 4, label, anchor="end")
        self.text(WIDTH / 2, HEIGHT - 12, xlabel)
        self.parts.append(
            f'<text x="14" y="{HEIGHT / 2}" text-anchor="middle" '
            f'transform="rotate(-90 14 {HEIGHT / 2})">{escape(ylabel)}</text>'
        )

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _box_stats(values: np.ndarray):
    q1, med, q3 = np.percentile(values, [25, 50, 75])
    iqr = q3 - q1
    inside = values[(values >= q1 - 1.5 * iqr) & (values <= q3 + 1.5 * iqr)]
    low, high = float(inside.min()), float(inside.max())
    outliers = values[(values < low) | (values > high)]
    return q1, med, q3, low, high, outliers


def boxplot_svg(matrix, theory=None, title: str = "", labels=None) -> str:
    """One box per column with whiskers at 1.5 IQR and red crosses at
    ``theory`` values."""
    matrix = np.asarray(matrix, dtype=float)
    k = matrix.shape[1]
    values = [matrix.ravel()]
    if theory is not None:
        values.append(np.asarray(theory, dtype=float))
    allv = np.concatenate(values)
    allv = allv[np.isfinite(allv)]
    canvas = _Canvas(title, (0.0, float(k)), (float(allv.min()), float(allv.max())))
    canvas.axes("coefficient", "value")
    canvas.line(MARGIN, canvas.y(0.0), WIDTH - MARGIN, canvas.y(0.0), "gray", 0.5, "4 3")
    labels = labels or [f"b{j}" for j in range(k)]
    half = 0.3 * (canvas.x(1.0) - canvas.x(0.0))
    for j in range(k):
        cx = canvas.x(j + 0.5)
        q1, med, q3, low, high, outliers = _box_stats(matrix[:, j])
        canvas.rect(cx - half, canvas.y(q3), 2 * half, canvas.y(q1) - canvas.y(q3), fill="#dde6f5")
        canvas.line(cx - half, canvas.y(med), cx + half, canvas.y(med), "orange", 2)
        canvas.line(cx, canvas.y(q3), cx, canvas.y(high))
        canvas.line(cx, canvas.y(q1), cx, canvas.y(low))
        canvas.line(cx - half / 2, canvas.y(high), cx + half / 2, canvas.y(high))
        canvas.line(cx - half / 2, canvas.y(low), cx + half / 2, canvas.y(low))
        for v in outliers:
            canvas.parts.append(f'<circle cx="{_fmt(cx)}" cy="{_fmt(canvas.y(v))}" r="2.5" fill="none" stroke="black"/>')
        if theory is not None and math.isfinite(theory[j]):
            canvas.cross(cx, canvas.y(theory[j]))
        canvas.text(cx, HEIGHT - MARGIN + 15, labels[j])
    return canvas.render()


def histogram_svg(values, marker=None, bins: int = 20, title: str = "") -> str:
    """Histogram of ``values`` with an optional red vertical marker."""
    values = np.asarray(values, dtype=float)
    edges = np.histogram_bin_edges(np.append(values, [] if marker is None else [marker]), bins=bins)
    counts, _ = np.histogram(values, bins=edges)
    canvas = _Canvas(title, (float(edges[0]), float(edges[-1])), (0.0, float(counts.max())))
    canvas.axes("error", "count")
    for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
        canvas.rect(canvas.x(lo), canvas.y(c), canvas.x(hi) - canvas.x(lo), canvas.y(0.0) - canvas.y(c), "#dde6f5")
    for t in np.linspace(edges[0], edges[-1], 5):
        canvas.text(canvas.x(t), HEIGHT - MARGIN + 15, f"{t:.3g}")
    if marker is not None:
        mx = canvas.x(marker)
        canvas.line(mx, MARGIN, mx, HEIGHT - MARGIN, "red", 2)
    return canvas.render()


def loglog_svg(xs, ys, title: str = "", slope=None) -> str:
    """Line through ``(xs, ys)`` on log-log axes."""
    lx = np.log10(np.asarray(xs, dtype=float))
    ly = np.log10(np.asarray(ys, dtype=float))
    span = lx.max() - lx.min() or 1.0
    canvas = _Canvas(title, (lx.min() - 0.05 * span, lx.max() + 0.05 * span), (float(ly.min()), float(ly.max())))
    canvas.axes("n", "mean error", ylabels=lambda t: f"{10 ** t:.3g}")
    pts = " ".join(f"{_fmt(canvas.x(a))},{_fmt(canvas.y(b))}" for a, b in zip(lx, ly))
    canvas.parts.append(f'<polyline points="{pts}" fill="none" stroke="steelblue" stroke-width="2"/>')
    for a, b, x in zip(lx, ly, xs):
        canvas.parts.append(f'<circle cx="{_fmt(canvas.x(a))}" cy="{_fmt(canvas.y(b))}" r="3" fill="steelblue"/>')
        canvas.text(canvas.x(a), HEIGHT - MARGIN + 15, f"{x:g}")
    if slope is not None:
        canvas.text(WIDTH - MARGIN, MARGIN + 10, f"slope {slope:.3f}", anchor="end")
    return canvas.render()


def plot_record(record) -> str:
    """The figure matching an experiment record."""
    if record.experiment_id == "errors":
        ex = record.extras
        return histogram_svg(ex["errors"], marker=ex["center"], title="local error f_hat(xi) - f(xi)")
    if record.experiment_id == "convergence":
        ex = record.extras
        return loglog_svg(ex["sizes"], ex["mean_error"], title="mean |beta_hat - beta|", slope=ex["slope"])
    beta = None if record.theory is None or record.theory.beta is None else record.theory.beta
    return boxplot_svg(record.per_rep_beta_hat, beta, title=record.experiment_id)
