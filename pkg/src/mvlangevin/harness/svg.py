"""Minimal deterministic SVG 1.1 line plots: polylines, log or linear axes.

CSV is the primary artifact; these plots exist so a run is inspectable
without external tooling.  Output bytes depend only on the data passed in
(fixed palette, fixed float formatting, no timestamps).
"""

from __future__ import annotations

import math

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd",
           "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")

_MARGIN = (64, 16, 30, 46)  # left, right, top, bottom


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _linear_ticks(lo: float, hi: float, target: int = 5):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-12 * step:
        ticks.append(t)
        t += step
    return ticks


def _log_ticks(lo: float, hi: float):
    lo_e = math.floor(math.log10(lo))
    hi_e = math.ceil(math.log10(hi))
    return [10.0**e for e in range(lo_e, hi_e + 1) if lo <= 10.0**e <= hi]


def line_plot(series, *, log_x: bool = False, log_y: bool = False,
              title: str = "", xlabel: str = "", ylabel: str = "",
              width: int = 720, height: int = 480) -> str:
    """Render series = [(label, xs, ys), ...] to an SVG document string.

    Points with non-positive coordinates on a log axis are dropped.
    """
    ml, mr, mt, mb = _MARGIN
    pw, ph = width - ml - mr, height - mt - mb
    clean = []
    for label, xs, ys in series:
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        keep = np.isfinite(xs) & np.isfinite(ys)
        if log_x:
            keep &= xs > 0
        if log_y:
            keep &= ys > 0
        clean.append((label, xs[keep], ys[keep]))
    all_x = np.concatenate([xs for _, xs, _ in clean if xs.size]) if clean else np.array([])
    all_y = np.concatenate([ys for _, _, ys in clean if ys.size]) if clean else np.array([])
    if all_x.size == 0:
        all_x = np.array([0.0, 1.0])
        all_y = np.array([0.0, 1.0])
    x0, x1 = float(all_x.min()), float(all_x.max())
    y0, y1 = float(all_y.min()), float(all_y.max())
    if log_x:
        x0, x1 = math.log10(x0), math.log10(x1)
    if log_y:
        y0, y1 = math.log10(y0), math.log10(y1)
    if x1 <= x0:
        x1 = x0 + 1.0
    if y1 <= y0:
        y1 = y0 + 1.0
    pad_y = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad_y, y1 + pad_y

    def px(x):
        v = math.log10(x) if log_x else x
        return ml + (v - x0) / (x1 - x0) * pw

    def py(y):
        v = math.log10(y) if log_y else y
        return mt + ph - (v - y0) / (y1 - y0) * ph

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" '
        f'stroke="black" stroke-width="1"/>',
    ]
    if title:
        parts.append(f'<text x="{width / 2:.1f}" y="{mt - 8}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="14">{title}</text>')
    # ticks
    xt = _log_ticks(10.0**x0, 10.0**x1) if log_x else _linear_ticks(x0, x1)
    yt = _log_ticks(10.0**y0, 10.0**y1) if log_y else _linear_ticks(y0, y1)
    for t in xt:
        X = px(t)
        parts.append(f'<line x1="{X:.2f}" y1="{mt + ph}" x2="{X:.2f}" '
                     f'y2="{mt + ph + 5}" stroke="black" stroke-width="1"/>')
        parts.append(f'<text x="{X:.2f}" y="{mt + ph + 18}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11">{_fmt(t)}</text>')
    for t in yt:
        Y = py(t)
        parts.append(f'<line x1="{ml - 5}" y1="{Y:.2f}" x2="{ml}" y2="{Y:.2f}" '
                     f'stroke="black" stroke-width="1"/>')
        parts.append(f'<text x="{ml - 8}" y="{Y + 4:.2f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11">{_fmt(t)}</text>')
    if xlabel:
        parts.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="12">{xlabel}</text>')
    if ylabel:
        parts.append(f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="12" '
                     f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{ylabel}</text>')
    for i, (label, xs, ys) in enumerate(clean):
        color = PALETTE[i % len(PALETTE)]
        if xs.size:
            pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
            parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                         f'stroke-width="1.5"/>')
        ly = mt + 16 + 16 * i
        parts.append(f'<line x1="{ml + pw - 150}" y1="{ly - 4}" x2="{ml + pw - 126}" '
                     f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{ml + pw - 120}" y="{ly}" font-family="sans-serif" '
                     f'font-size="11">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
