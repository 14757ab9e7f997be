"""Plot and table rendering for evaluation and training artifacts.

``render_svg`` writes a small hand-built SVG (rect/line/polyline/text only)
so golden-file comparisons are byte-exact. ``save_figure`` renders the same
series through matplotlib for a raster copy next to the CSV outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

from .metrics import ConfusionCounts, accuracy, f1, precision, recall

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")
TICKS = 5
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 60, 20, 30, 50


@dataclass(frozen=True)
class PlotSeries:
    name: str
    points: tuple[tuple[float, float], ...]
    x_label: str = "x"
    y_label: str = "y"

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", tuple((float(x), float(y)) for x, y in self.points))
        for x, y in self.points:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ValueError(f"series {self.name!r} has a non-finite point ({x}, {y})")


def _num(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def render_svg(
    series: Sequence[PlotSeries],
    x_range: tuple[float, float] = (0.0, 1.0),
    y_range: tuple[float, float] = (0.0, 1.0),
    size: tuple[int, int] = (640, 480),
    title: str = "",
) -> str:
    if not series:
        raise ValueError("nothing to plot: empty series list")
    if any(not s.points for s in series):
        raise ValueError("every series needs at least one point")
    (x0, x1), (y0, y1) = x_range, y_range
    if not (x0 < x1 and y0 < y1):
        raise ValueError(f"invalid plot ranges {x_range}, {y_range}")
    width, height = size
    left, right = MARGIN_LEFT, width - MARGIN_RIGHT
    top, bottom = MARGIN_TOP, height - MARGIN_BOTTOM

    def sx(x: float) -> float:
        return left + (x - x0) / (x1 - x0) * (right - left)

    def sy(y: float) -> float:
        return bottom - (y - y0) / (y1 - y0) * (bottom - top)

    clamped = 0
    body = []
    for n, s in enumerate(series):
        coords = []
        for x, y in s.points:
            cx, cy = min(max(x, x0), x1), min(max(y, y0), y1)
            clamped += (cx, cy) != (x, y)
            coords.append(f"{_num(sx(cx))},{_num(sy(cy))}")
        color = PALETTE[n % len(PALETTE)]
        body.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{" ".join(coords)}"/>'
        )

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<!-- clamped points: {clamped} -->",
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>',
    ]
    for k in range(TICKS + 1):
        xv = x0 + (x1 - x0) * k / TICKS
        yv = y0 + (y1 - y0) * k / TICKS
        px, py = _num(sx(xv)), _num(sy(yv))
        out.append(f'<line x1="{px}" y1="{bottom}" x2="{px}" y2="{bottom + 5}" stroke="black"/>')
        out.append(f'<text x="{px}" y="{bottom + 18}" font-size="11" text-anchor="middle">{xv:.3g}</text>')
        out.append(f'<line x1="{left - 5}" y1="{py}" x2="{left}" y2="{py}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{py}" font-size="11" text-anchor="end">{yv:.3g}</text>')
    x_label, y_label = escape(series[0].x_label), escape(series[0].y_label)
    out.append(f'<text x="{(left + right) // 2}" y="{height - 12}" font-size="12" text-anchor="middle">{x_label}</text>')
    out.append(
        f'<text x="14" y="{(top + bottom) // 2}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 14 {(top + bottom) // 2})">{y_label}</text>'
    )
    if title:
        out.append(f'<text x="{(left + right) // 2}" y="18" font-size="13" text-anchor="middle">{escape(title)}</text>')
    out.extend(body)
    for n, s in enumerate(series):
        ly = top + 10 + 16 * n
        color = PALETTE[n % len(PALETTE)]
        out.append(f'<rect x="{right - 120}" y="{ly - 8}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{right - 105}" y="{ly + 1}" font-size="11">{escape(s.name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_confusion_table(c: ConfusionCounts, class_names: tuple[str, str] = ("No Weapon", "Weapon")) -> str:
    """2x2 table, rows are true labels and columns predicted labels.

    ``class_names[0]`` is the positive class, so the first row holds
    ``TP, FN`` and the second ``FP, TN``.
    """
    pos, neg = class_names
    cells = [[c.tp, c.fn_], [c.fp, c.tn]]
    corner = "true \\ pred"
    label_w = max(len(corner), len(pos), len(neg))
    col_w = max(len(pos), len(neg), *(len(str(v)) for row in cells for v in row))
    lines = [
        f"{corner:<{label_w}}  {pos:>{col_w}}  {neg:>{col_w}}",
        f"{pos:<{label_w}}  {cells[0][0]:>{col_w}}  {cells[0][1]:>{col_w}}",
        f"{neg:<{label_w}}  {cells[1][0]:>{col_w}}  {cells[1][1]:>{col_w}}",
        "",
    ]
    p = precision(c) if c.tp + c.fp else None
    r = recall(c) if c.tp + c.fn_ else None
    acc = accuracy(c) if c.tp + c.fp + c.fn_ + c.tn else None
    f = f1(p, r) if p is not None and r is not None else None
    for name, v in (("accuracy", acc), ("precision", p), ("recall", r), ("f1", f)):
        lines.append(f"{name:<10} {'undefined' if v is None else f'{v:.3f}'}")
    return "\n".join(lines) + "\n"


def save_figure(
    series: Sequence[PlotSeries],
    path: Path | str,
    x_range: tuple[float, float] | None = (0.0, 1.0),
    y_range: tuple[float, float] | None = (0.0, 1.0),
    title: str = "",
    logy: bool = False,
) -> Path:
    """Render ``series`` with matplotlib (Agg) and save to ``path``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for s in series:
        xs, ys = zip(*s.points)
        ax.plot(xs, ys, label=s.name, marker="o" if len(xs) == 1 else None)
    if x_range:
        ax.set_xlim(*x_range)
    if y_range:
        ax.set_ylim(*y_range)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(series[0].x_label)
    ax.set_ylabel(series[0].y_label)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path
