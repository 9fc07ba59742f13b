"""Static SVG line charts from harness CSV files.

One ``<path>`` per series (estimator, or estimator plus swept parameter);
axes and ticks are ``<line>``/``<text>`` elements only, so counting paths
counts series.
"""

from __future__ import annotations

import csv
import math
from xml.sax.saxutils import escape

from compgrad.errors import ConfigError

LOG_METRICS = {"sqrt_error", "mse", "variance", "bias"}
ALPHA_METRICS = {"alpha", "alpha_mean"}
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")
SERIES_KEYS = ("estimator", "mode")
X_KEYS = ("theta", "T", "N", "x", "iteration", "d")


class PlotError(ConfigError):
    """The CSV cannot be plotted (no rows, missing columns)."""


def read_table(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = list(reader)
    if not header:
        raise PlotError(f"{path}: no header")
    if not rows:
        raise PlotError(f"{path}: no data rows")
    return header, rows


def _float(v):
    try:
        return float(v)
    except (TypeError, ValueError):
        return math.nan


def build_series(header, rows, metric, x_column=None):
    """``{label: [(x, mean y), ...]}`` with repeated x values (trials) averaged."""
    if metric not in header:
        raise PlotError(f"missing column {metric!r}; available: {', '.join(header)}")
    x_column = x_column or next((k for k in X_KEYS if k in header), None)
    if x_column is None or x_column not in header:
        raise PlotError(f"missing x column; expected one of {X_KEYS}")
    series_key = next((k for k in SERIES_KEYS if k in header), None)
    extra = [k for k in ("c", "gamma") if k in header]
    acc = {}
    for row in rows:
        label = row[series_key] if series_key else metric
        for k in extra:
            if row.get(k):
                label += f" {k}={row[k]}"
        x, y = _float(row[x_column]), _float(row[metric])
        if math.isnan(x) or math.isnan(y):
            continue
        acc.setdefault(label, {}).setdefault(x, []).append(y)
    series = {lab: sorted((x, sum(ys) / len(ys)) for x, ys in pts.items()) for lab, pts in acc.items()}
    if not series:
        raise PlotError(f"no finite values in column {metric!r}")
    return x_column, series


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def _fmt(v):
    return f"{v:.3g}"


def render_svg(series, x_label, y_label, log_y=False, y_range=None, title="", width=640, height=400):
    left, right, top, bottom = 70, 160, 30, 50
    pw, ph = width - left - right, height - top - bottom
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    if log_y:
        ys = [y for y in ys if y > 0]
        if not ys:
            log_y = False
            ys = [y for pts in series.values() for _, y in pts]
    x_lo, x_hi = min(xs), max(xs)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_range is not None:
        y_lo, y_hi = y_range
    elif log_y:
        y_lo, y_hi = math.log10(min(ys)), math.log10(max(ys))
    else:
        y_lo, y_hi = min(ys), max(ys)
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5

    def px(x):
        return left + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y):
        v = math.log10(y) if log_y else y
        return top + (1.0 - (v - y_lo) / (y_hi - y_lo)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{left + pw / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>')
    out.append(f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>')
    for t in _ticks(x_lo, x_hi):
        x = px(t)
        out.append(f'<line x1="{x:.1f}" y1="{top + ph}" x2="{x:.1f}" y2="{top + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{x:.1f}" y="{top + ph + 16}" text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(y_lo, y_hi):
        y = top + (1.0 - (t - y_lo) / (y_hi - y_lo)) * ph
        label = _fmt(10**t) if log_y else _fmt(t)
        out.append(f'<line x1="{left - 4}" y1="{y:.1f}" x2="{left}" y2="{y:.1f}" stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end">{label}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">{escape(x_label)}</text>')
    y_title = f"{y_label} (log)" if log_y else y_label
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(y_title)}</text>')
    for i, (label, pts) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = [(x, y) for x, y in pts if not (log_y and y <= 0)]
        d = " ".join(f"{'M' if j == 0 else 'L'}{px(x):.2f},{py(y):.2f}" for j, (x, y) in enumerate(pts))
        out.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5">'
                   f'<title>{escape(label)}</title></path>')
        ly = top + 14 * i + 8
        out.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 34}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(csv_path, metric, output_path, log_y=None, x_column=None, title=None):
    """Write an SVG of ``metric`` against the CSV's sweep column, one line per estimator."""
    header, rows = read_table(csv_path)
    x_col, series = build_series(header, rows, metric, x_column)
    if log_y is None:
        log_y = metric in LOG_METRICS
    y_range = (0.0, 1.0) if metric in ALPHA_METRICS else None
    svg = render_svg(series, x_col, metric, log_y=log_y, y_range=y_range, title=title or "")
    with open(output_path, "w", encoding="utf-8") as fh:
        fh.write(svg)
    return output_path
