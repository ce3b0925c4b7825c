"""Minimal self-contained SVG log-log plots (no plotting dependencies)."""

from __future__ import annotations

import math
from typing import Optional

from .experiments import RateFit

_W, _H = 640, 480
_ML, _MR, _MT, _MB = 70, 20, 40, 55


def _decade_ticks(lo: float, hi: float):
    first = math.ceil(lo - 1e-9)
    last = math.floor(hi + 1e-9)
    return [d for d in range(first, last + 1)]


class _Axes:
    def __init__(self, xlog, ylog):
        pad_x = 0.05 * max(max(xlog) - min(xlog), 1e-9)
        pad_y = 0.08 * max(max(ylog) - min(ylog), 1e-9)
        self.x0, self.x1 = min(xlog) - pad_x, max(xlog) + pad_x
        self.y0, self.y1 = min(ylog) - pad_y, max(ylog) + pad_y

    def px(self, xl: float) -> float:
        return _ML + (xl - self.x0) / (self.x1 - self.x0) * (_W - _ML - _MR)

    def py(self, yl: float) -> float:
        return _H - _MB - (yl - self.y0) / (self.y1 - self.y0) * (_H - _MT - _MB)


def loglog_plot(points, fit: Optional[RateFit] = None, title: str = "",
                xlabel: str = "", ylabel: str = "") -> str:
    """Render (x, y, yerr) triples on log-log axes with one-sigma error bars.

    ``yerr`` entries may be 0 or None.  When a rate fit is supplied its line
    is drawn across the x-range and the slope annotated.
    """
    pts = [(float(x), float(y), (float(e) if e else 0.0)) for x, y, e in points]
    if not pts or any(x <= 0 or y <= 0 for x, y, _ in pts):
        raise ValueError("log-log plots need positive coordinates")
    xlog = [math.log10(x) for x, _, _ in pts]
    ylog = [math.log10(y) for _, y, _ in pts]
    # include error-bar extents in the y-range where representable
    y_hi = [math.log10(y + e) for _, y, e in pts]
    y_lo = [math.log10(max(y - e, y * 1e-3)) for _, y, e in pts]
    ax = _Axes(xlog, y_lo + y_hi + ylog)

    parts: list[str] = []
    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">'
    )
    parts.append(f'<rect width="{_W}" height="{_H}" fill="white"/>')
    frame = (_ML, _MT, _W - _MR, _H - _MB)
    parts.append(
        f'<rect x="{frame[0]}" y="{frame[1]}" width="{frame[2] - frame[0]}" '
        f'height="{frame[3] - frame[1]}" fill="none" stroke="black"/>'
    )
    if title:
        parts.append(
            f'<text x="{_W / 2:.1f}" y="24" text-anchor="middle" '
            f'font-size="14">{title}</text>'
        )
    for d in _decade_ticks(ax.x0, ax.x1):
        x = ax.px(d)
        parts.append(
            f'<line x1="{x:.2f}" y1="{frame[3]}" x2="{x:.2f}" y2="{frame[3] + 6}" '
            'stroke="black"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{frame[3] + 20}" text-anchor="middle">'
            f"1e{d}</text>"
        )
    for d in _decade_ticks(ax.y0, ax.y1):
        y = ax.py(d)
        parts.append(
            f'<line x1="{frame[0] - 6}" y1="{y:.2f}" x2="{frame[0]}" y2="{y:.2f}" '
            'stroke="black"/>'
        )
        parts.append(
            f'<text x="{frame[0] - 10}" y="{y + 4:.2f}" text-anchor="end">'
            f"1e{d}</text>"
        )
    if xlabel:
        parts.append(
            f'<text x="{_W / 2:.1f}" y="{_H - 12}" text-anchor="middle">'
            f"{xlabel}</text>"
        )
    if ylabel:
        parts.append(
            f'<text x="18" y="{_H / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 18 {_H / 2:.1f})">{ylabel}</text>'
        )
    if fit is not None:
        ln10 = math.log(10.0)
        xs = [min(xlog), max(xlog)]
        ys = [(fit.intercept + fit.slope * xl * ln10) / ln10 for xl in xs]
        parts.append(
            f'<line x1="{ax.px(xs[0]):.2f}" y1="{ax.py(ys[0]):.2f}" '
            f'x2="{ax.px(xs[1]):.2f}" y2="{ax.py(ys[1]):.2f}" '
            'stroke="#cc3333" stroke-dasharray="6,4"/>'
        )
        parts.append(
            f'<text x="{frame[2] - 8}" y="{frame[1] + 18}" text-anchor="end" '
            f'fill="#cc3333">slope = {fit.slope:.3f} &#177; '
            f"{fit.stderr_slope:.3f}</text>"
        )
    for (x, y, e), xl, yl in zip(pts, xlog, ylog):
        if e > 0.0:
            top = math.log10(y + e)
            bot = math.log10(max(y - e, y * 1e-3))
            xp = ax.px(xl)
            parts.append(
                f'<line x1="{xp:.2f}" y1="{ax.py(bot):.2f}" x2="{xp:.2f}" '
                f'y2="{ax.py(top):.2f}" stroke="#3355bb"/>'
            )
            for yy in (top, bot):
                parts.append(
                    f'<line x1="{xp - 4:.2f}" y1="{ax.py(yy):.2f}" '
                    f'x2="{xp + 4:.2f}" y2="{ax.py(yy):.2f}" stroke="#3355bb"/>'
                )
        parts.append(
            f'<circle cx="{ax.px(xl):.2f}" cy="{ax.py(yl):.2f}" r="4" '
            'fill="#3355bb"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
