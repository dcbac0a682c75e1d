"""Minimal SVG emission for precision-recall curves (no plotting deps)."""

from __future__ import annotations

from pathlib import Path

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]

_W, _H, _M = 480, 480, 50  # canvas and margin


def _px(r: float, p: float) -> tuple[float, float]:
    x = _M + r * (_W - 2 * _M)
    y = _H - _M - p * (_H - 2 * _M)
    return x, y


def write_pr_curves(curves: dict[str, list[tuple[float, float]]], path) -> None:
    """curves maps method name -> list of (recall, precision) points."""
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<line x1="{_M}" y1="{_H - _M}" x2="{_W - _M}" y2="{_H - _M}" stroke="black"/>',
        f'<line x1="{_M}" y1="{_M}" x2="{_M}" y2="{_H - _M}" stroke="black"/>',
        f'<text x="{_W // 2}" y="{_H - 12}" text-anchor="middle" font-size="13">recall</text>',
        f'<text x="14" y="{_H // 2}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 14 {_H // 2})">precision</text>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        x, y = _px(tick, tick)
        parts.append(f'<text x="{x:.0f}" y="{_H - _M + 16}" text-anchor="middle" '
                     f'font-size="10">{tick:g}</text>')
        parts.append(f'<text x="{_M - 6}" y="{y:.0f}" text-anchor="end" '
                     f'font-size="10">{tick:g}</text>')
    for i, (name, pts) in enumerate(curves.items()):
        color = _COLORS[i % len(_COLORS)]
        coords = [_px(r, p) for r, p in sorted(pts)]
        if coords:
            d = "M " + " L ".join(f"{x:.2f} {y:.2f}" for x, y in coords)
            parts.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = _M + 14 * (i + 1)
        parts.append(f'<line x1="{_W - _M - 110}" y1="{ly - 4}" x2="{_W - _M - 90}" '
                     f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{_W - _M - 84}" y="{ly}" font-size="11">{name}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts))
