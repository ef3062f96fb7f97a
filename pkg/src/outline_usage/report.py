"""SVG alignment heatmaps and Markdown/CSV comparison tables."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .metrics import TABLE_COLUMNS, MetricReport


@dataclass(frozen=True)
class HeatmapSpec:
    matrix: np.ndarray
    low_color: str = "#f7fbff"
    high_color: str = "#08306b"
    cell_size: int = 14
    row_label: str = "outline bullet"
    col_label: str = "sentence index"
    normalize: str = "row"  # "row" or "global"
    title: str | None = None


def _hex_to_rgb(color: str) -> tuple[int, int, int]:
    c = color.lstrip("#")
    if len(c) != 6:
        raise ValueError(f"expected #rrggbb color, got {color!r}")
    return int(c[0:2], 16), int(c[2:4], 16), int(c[4:6], 16)


def _lerp_color(lo: tuple, hi: tuple, t: float) -> str:
    r, g, b = (round(a + (b_ - a) * t) for a, b_ in zip(lo, hi))
    return f"#{r:02x}{g:02x}{b:02x}"


def _scaled(values: np.ndarray, normalize: str) -> np.ndarray:
    if normalize == "global":
        lo = np.full((values.shape[0], 1), values.min())
        hi = np.full((values.shape[0], 1), values.max())
    elif normalize == "row":
        lo = values.min(axis=1, keepdims=True)
        hi = values.max(axis=1, keepdims=True)
    else:
        raise ValueError("normalize must be 'row' or 'global'")
    span = hi - lo
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(span > 0, (values - lo) / np.where(span > 0, span, 1), 0.0)
    return t


def render_heatmap(spec: HeatmapSpec) -> str:
    """One ``<rect class="cell">`` per matrix entry, rows = bullets, columns = sentences."""
    values = np.asarray(getattr(spec.matrix, "distributions", spec.matrix), dtype=float)
    if values.ndim != 2 or values.size == 0:
        raise ValueError("heatmap needs a non-empty 2-D matrix")
    rows, cols = values.shape
    cs = spec.cell_size
    left, top = 40, 30 if spec.title else 10
    width = left + cols * cs + 10
    height = top + rows * cs + 40
    lo, hi = _hex_to_rgb(spec.low_color), _hex_to_rgb(spec.high_color)
    t = _scaled(values, spec.normalize)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">',
    ]
    if spec.title:
        out.append(f'<text x="{left}" y="18" font-size="12">{escape(spec.title)}</text>')
    out.append('<g class="cells">')
    for a in range(rows):
        for k in range(cols):
            out.append(
                f'<rect class="cell" x="{left + k * cs}" y="{top + a * cs}" width="{cs}" '
                f'height="{cs}" fill="{_lerp_color(lo, hi, float(t[a, k]))}">'
                f"<title>bullet {a}, sentence {k}: {values[a, k]:.6g}</title></rect>"
            )
    out.append("</g>")

    x0, y0, x1, y1 = left, top, left + cols * cs, top + rows * cs
    out.append('<g class="axes" stroke="#333" stroke-width="1">')
    out.append(f'<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}"/>')
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/>')
    out.append("</g>")
    out.append('<g class="labels">')
    for a in range(rows):
        out.append(f'<text x="{x0 - 6}" y="{y0 + a * cs + cs * 0.7:.1f}" text-anchor="end">{a + 1}</text>')
    step = max(1, cols // 10)
    for k in range(0, cols, step):
        out.append(f'<text x="{x0 + k * cs + cs / 2:.1f}" y="{y1 + 12}" text-anchor="middle">{k}</text>')
    out.append(f'<text x="{(x0 + x1) / 2:.1f}" y="{y1 + 30}" text-anchor="middle">{escape(spec.col_label)}</text>')
    out.append(
        f'<text x="12" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 12 {(y0 + y1) / 2:.1f})">{escape(spec.row_label)}</text>'
    )
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def format_cell(value: float | None) -> str:
    """Two decimals, dropping a single trailing zero (3.21, 8.1, 41.5)."""
    if value is None:
        return "-"
    s = f"{value:.2f}"
    return s[:-1] if s.endswith("0") else s


def _aggregate(report: MetricReport | Mapping) -> Mapping[str, float]:
    if isinstance(report, MetricReport):
        return report.aggregate
    return report.get("aggregate", report)


def render_table(
    reports: Sequence[MetricReport | Mapping], labels: Sequence[str]
) -> tuple[str, str]:
    """Markdown pipe table and RFC-4180 CSV, one row per labeled corpus."""
    if len(reports) != len(labels):
        raise ValueError(f"{len(reports)} reports but {len(labels)} labels")
    header = ["Method", *(h for h, _ in TABLE_COLUMNS)]
    aggs = [_aggregate(r) for r in reports]

    md = ["| " + " | ".join(header) + " |", "|" + "|".join(["---"] * len(header)) + "|"]
    for label, agg in zip(labels, aggs):
        cells = [format_cell(agg.get(k)) for _, k in TABLE_COLUMNS]
        md.append("| " + " | ".join([label.replace("|", "\\|"), *cells]) + " |")

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for label, agg in zip(labels, aggs):
        w.writerow([label, *("" if agg.get(k) is None else repr(float(agg[k])) for _, k in TABLE_COLUMNS)])
    return "\n".join(md) + "\n", buf.getvalue()
