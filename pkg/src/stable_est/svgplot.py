"""Deterministic log-log SVG rendering of sweep curves."""

from __future__ import annotations

import math
from typing import List, Sequence
from xml.sax.saxutils import escape

import numpy as np

from . import bounds as bd
from .core import StableEstError
from .risk import RiskCurve
from .stability import format_order

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 20, 50
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _label(curve: RiskCurve) -> str:
    return f"{curve.problem} p={format_order(curve.p)} n={curve.n}"


def _thresholds(curves: Sequence[RiskCurve]) -> List[tuple]:
    out = []
    for c in curves:
        order = format_order(c.p)
        t = bd.threshold(c.problem, order, c.n, c.r, p=c.p)
        if t is None and c.problem == "bounded":
            t = bd.threshold("bounded", "p", c.n, c.r, p=c.p)
        if t is not None and (t, order) not in out:
            out.append((t, order))
    return out


def _ticks(lo: float, hi: float) -> List[int]:
    return list(range(math.floor(lo), math.ceil(hi) + 1))


def render(curves: Sequence[RiskCurve]) -> str:
    """The SVG document as a string; identical inputs give identical bytes."""
    if not curves:
        raise StableEstError("nothing to plot", code="empty-input")
    xs, ys = [], []
    for c in curves:
        b, m = c.column("beta"), c.column("sup_mse")
        keep = (b > 0) & (m > 0)
        xs.extend(np.log10(b[keep]))
        ys.extend(np.log10(m[keep]))
    marks = _thresholds(curves)
    xs.extend(math.log10(t) for t, _ in marks if t > 0)
    if not ys:
        raise StableEstError("no positive values to plot", code="empty-input")
    x0, x1 = math.floor(min(xs)), math.ceil(max(xs))
    y0, y1 = math.floor(min(ys)), math.ceil(max(ys))
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(lx):
        return LEFT + (lx - x0) / (x1 - x0) * pw

    def py(ly):
        return TOP + (y1 - ly) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect x="0" y="0" width="100%" height="100%" fill="white"/>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{px(t):.2f}" y1="{TOP + ph}" x2="{px(t):.2f}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{px(t):.2f}" y="{TOP + ph + 18}" font-size="11" text-anchor="middle">1e{t}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{LEFT - 5}" y1="{py(t):.2f}" x2="{LEFT}" y2="{py(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{py(t) + 4:.2f}" font-size="11" text-anchor="end">1e{t}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 10}" font-size="13" text-anchor="middle">stability budget beta</text>')
    out.append(
        f'<text x="16" y="{TOP + ph / 2:.2f}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 16 {TOP + ph / 2:.2f})">witnessed sup-risk (MSE)</text>'
    )
    for t, order in marks:
        if t <= 0:
            continue
        x = px(math.log10(t))
        out.append(
            f'<line class="threshold" x1="{x:.2f}" y1="{TOP}" x2="{x:.2f}" y2="{TOP + ph}" '
            f'stroke="gray" stroke-dasharray="5,4"/>'
        )
        out.append(f'<text x="{x + 3:.2f}" y="{TOP + 12}" font-size="10" fill="gray">p={escape(order)}</text>')
    for i, c in enumerate(curves):
        color = COLORS[i % len(COLORS)]
        b, m = c.column("beta"), c.column("sup_mse")
        keep = (b > 0) & (m > 0)
        pts = " ".join(f"{px(a):.2f},{py(v):.2f}" for a, v in zip(np.log10(b[keep]), np.log10(m[keep])))
        out.append(f'<polyline class="curve" points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = TOP + 15 + 18 * i
        out.append(f'<line x1="{LEFT + pw + 10}" y1="{ly}" x2="{LEFT + pw + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{LEFT + pw + 35}" y="{ly + 4}" font-size="11">{escape(_label(c))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_curves(curves: Sequence[RiskCurve], out_svg) -> None:
    text = render(curves)  # render first so a failure writes nothing
    with open(out_svg, "w", newline="\n") as fh:
        fh.write(text)
