"""Minimal deterministic SVG emitter for order-parameter figures.

Draws pool-method curves (dashed; the deepest curve dot-dashed as the
asymptote) with protocol estimates overlaid as markers carrying 1.96 SE
error bars.  Output is plain text with fixed formatting, so identical
inputs give byte-identical files.
"""
from __future__ import annotations

import numpy as np

from .pool import PoolCurves

_WIDTH, _HEIGHT = 640.0, 440.0
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 70.0, 20.0, 20.0, 50.0
_PALETTE = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


class PlotError(ValueError):
    pass


def _scale(lo: float, hi: float, lo_px: float, hi_px: float):
    span = hi - lo if hi > lo else 1.0

    def to_px(v: float) -> float:
        return lo_px + (v - lo) * (hi_px - lo_px) / span

    return to_px


def render_curves(
    curves: PoolCurves,
    estimates: list[dict] | None = None,
    title: str = "order parameter",
) -> str:
    """Build the SVG document; ``estimates`` rows need t, theta, z_hat, se."""
    estimates = estimates or []
    cur_thetas = [float(th) for th in curves.thetas]
    missing = sorted(
        {e["theta"] for e in estimates
         if not any(abs(e["theta"] - th) < 1e-9 for th in cur_thetas)}
    )
    if missing:
        raise PlotError(
            "estimate theta values absent from the curves grid: "
            + ", ".join(f"{v!r}" for v in missing)
        )

    x_lo, x_hi = min(cur_thetas), max(cur_thetas)
    y_vals = [v for v in curves.z_mean.ravel() if np.isfinite(v)]
    y_vals += [e["z_hat"] + 1.96 * e["se"] for e in estimates]
    y_vals += [e["z_hat"] - 1.96 * e["se"] for e in estimates]
    y_lo, y_hi = min(0.0, min(y_vals)), max(0.55, max(y_vals))
    to_x = _scale(x_lo, x_hi, _MARGIN_L, _WIDTH - _MARGIN_R)
    to_y = _scale(y_lo, y_hi, _HEIGHT - _MARGIN_B, _MARGIN_T)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH:.0f}" '
        f'height="{_HEIGHT:.0f}" viewBox="0 0 {_WIDTH:.0f} {_HEIGHT:.0f}">',
        f'<rect x="0" y="0" width="{_WIDTH:.0f}" height="{_HEIGHT:.0f}" fill="white"/>',
        f'<text x="{_WIDTH / 2:.0f}" y="14" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{title}</text>',
    ]
    # Axes box and ticks.
    parts.append(
        f'<rect x="{_fmt(_MARGIN_L)}" y="{_fmt(_MARGIN_T)}" '
        f'width="{_fmt(_WIDTH - _MARGIN_L - _MARGIN_R)}" '
        f'height="{_fmt(_HEIGHT - _MARGIN_T - _MARGIN_B)}" '
        'fill="none" stroke="black" stroke-width="1"/>'
    )
    for i in range(5):
        xv = x_lo + i * (x_hi - x_lo) / 4
        px = to_x(xv)
        parts.append(
            f'<line x1="{_fmt(px)}" y1="{_fmt(_HEIGHT - _MARGIN_B)}" '
            f'x2="{_fmt(px)}" y2="{_fmt(_HEIGHT - _MARGIN_B + 5)}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{_fmt(px)}" y="{_fmt(_HEIGHT - _MARGIN_B + 18)}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="11">{xv:.3f}</text>'
        )
        yv = y_lo + i * (y_hi - y_lo) / 4
        py = to_y(yv)
        parts.append(
            f'<line x1="{_fmt(_MARGIN_L - 5)}" y1="{_fmt(py)}" '
            f'x2="{_fmt(_MARGIN_L)}" y2="{_fmt(py)}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{_fmt(_MARGIN_L - 8)}" y="{_fmt(py + 4)}" '
            f'text-anchor="end" font-family="sans-serif" font-size="11">{yv:.2f}</text>'
        )
    parts.append(
        f'<text x="{_WIDTH / 2:.0f}" y="{_HEIGHT - 8:.0f}" text-anchor="middle" '
        'font-family="sans-serif" font-size="12">measurement strength (rad)</text>'
    )
    parts.append(
        f'<text x="16" y="{_HEIGHT / 2:.0f}" text-anchor="middle" '
        'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {_HEIGHT / 2:.0f})">Z estimate</text>'
    )

    # Dashed curves per depth; the deepest gets a dot-dashed asymptote style.
    order = np.argsort(curves.thetas)
    for j, t in enumerate(curves.ts):
        color = _PALETTE[j % len(_PALETTE)]
        dash = "8,3,2,3" if j == len(curves.ts) - 1 and len(curves.ts) > 1 else "6,4"
        pts = " ".join(
            f"{_fmt(to_x(curves.thetas[i]))},{_fmt(to_y(curves.z_mean[i, j]))}"
            for i in order
            if np.isfinite(curves.z_mean[i, j])
        )
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="1.5" stroke-dasharray="{dash}"/>'
        )
        parts.append(
            f'<text x="{_fmt(_WIDTH - _MARGIN_R - 4)}" '
            f'y="{_fmt(_MARGIN_T + 14 + 13 * j)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11" fill="{color}">t={int(t)}</text>'
        )

    # Estimate markers with 1.96 SE bars, colored by depth.
    t_list = [int(t) for t in curves.ts]
    for e in sorted(estimates, key=lambda d: (d["t"], d["theta"])):
        color = _PALETTE[t_list.index(int(e["t"])) % len(_PALETTE)] \
            if int(e["t"]) in t_list else "#333333"
        px = to_x(e["theta"])
        half = 1.96 * e["se"]
        parts.append(
            f'<line x1="{_fmt(px)}" y1="{_fmt(to_y(e["z_hat"] - half))}" '
            f'x2="{_fmt(px)}" y2="{_fmt(to_y(e["z_hat"] + half))}" '
            f'stroke="{color}" stroke-width="1.2"/>'
        )
        parts.append(
            f'<circle cx="{_fmt(px)}" cy="{_fmt(to_y(e["z_hat"]))}" r="3" '
            f'fill="{color}"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
