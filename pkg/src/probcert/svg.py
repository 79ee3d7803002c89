"""Deterministic SVG rendering of 2-D ellipsoids and point clouds."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import linalg
from .ellipsoid import Ellipsoid
from .errors import NotTwoDimensional

WIDTH = 640
HEIGHT = 640
COLORS = ("#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e")


def _fmt(v: float) -> str:
    s = f"{v:.4f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _axes(e: Ellipsoid):
    """Semi-axis lengths (major first) and the major axis angle in degrees."""
    w, v = linalg.eig_sym(e.shape)
    radii = np.sqrt(np.maximum(w[::-1], 0.0))
    major = v[:, -1]
    if major[0] < 0 or (major[0] == 0 and major[1] < 0):
        major = -major
    return radii, math.degrees(math.atan2(major[1], major[0]))


def _extent(e: Ellipsoid):
    half = np.sqrt(np.diag(e.shape))
    return e.center - half, e.center + half


def render_svg_string(ellipses, points=()) -> str:
    ellipses = list(ellipses)
    pts = np.asarray(points, dtype=float).reshape(-1, 2) if len(points) else np.zeros((0, 2))
    for e in ellipses:
        if e.dim != 2:
            raise NotTwoDimensional(f"cannot draw a {e.dim}-dimensional ellipsoid")
    if len(points) and np.asarray(points).reshape(len(points), -1).shape[1] != 2:
        raise NotTwoDimensional("points must be 2-vectors")

    lows = [pts.min(axis=0)] if pts.size else []
    highs = [pts.max(axis=0)] if pts.size else []
    for e in ellipses:
        lo, hi = _extent(e)
        lows.append(lo)
        highs.append(hi)
    if lows:
        lo, hi = np.min(lows, axis=0), np.max(highs, axis=0)
    else:
        lo, hi = np.array([-1.0, -1.0]), np.array([1.0, 1.0])
    span = np.maximum(hi - lo, 1e-9)
    lo = lo - 0.1 * span
    hi = hi + 0.1 * span
    span = hi - lo
    scale = min(WIDTH / span[0], HEIGHT / span[1])

    def to_px(p):
        return (p[0] - lo[0]) * scale, HEIGHT - (p[1] - lo[1]) * scale

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        '<g id="points" fill="#555555" fill-opacity="0.5">',
    ]
    for p in pts:
        x, y = to_px(p)
        out.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="1.2"/>')
    out.append("</g>")
    out.append('<g id="ellipses" fill="none" stroke-width="2">')
    for i, e in enumerate(ellipses):
        (r1, r2), angle = _axes(e)
        cx, cy = to_px(e.center)
        # the y axis is flipped in screen space, so the rotation changes sign
        out.append(
            f'<ellipse cx="{_fmt(cx)}" cy="{_fmt(cy)}" rx="{_fmt(r1 * scale)}" ry="{_fmt(r2 * scale)}" '
            f'transform="rotate({_fmt(-angle)} {_fmt(cx)} {_fmt(cy)})" stroke="{COLORS[i % len(COLORS)]}"/>'
        )
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_svg(ellipses, points, path) -> Path:
    """Write the figure to ``path`` (via a temporary file and rename) and return the path."""
    from .cli import write_atomic

    path = Path(path)
    write_atomic(path, render_svg_string(ellipses, points))
    return path
