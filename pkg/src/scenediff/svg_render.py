"""Top-down SVG rendering of scenes, for eyeballing layouts.

World coordinates have x to the right and y away from the viewer; the SVG
y axis points down, so world points map through (x, -y). Each object draws
as its rotated footprint rectangle with a heading tick toward its local +x
and a category label at its center. Output is a plain string with fixed
float formatting, so equal scenes render to identical bytes.
"""

from __future__ import annotations

import math

from .config import SceneConfig
from .scene import Scene

_PALETTE = (
    "#4e79a7", "#f28e2b", "#59a14f", "#e15759",
    "#b07aa1", "#76b7b2", "#edc948", "#9c755f",
)
_VIEW_MARGIN = 0.6


def _fmt(v: float) -> str:
    return f"{v:.4f}"


def render_svg(scene: Scene, config: SceneConfig, *, pixels: int = 640) -> str:
    """Render the scene to an SVG document string."""
    xs, ys = [], []
    for obj in scene.objects:
        reach = math.hypot(obj.size[0], obj.size[1]) / 2.0
        xs += [obj.location[0] - reach, obj.location[0] + reach]
        ys += [obj.location[1] - reach, obj.location[1] + reach]
    x0, x1 = min(xs) - _VIEW_MARGIN, max(xs) + _VIEW_MARGIN
    y0, y1 = min(ys) - _VIEW_MARGIN, max(ys) + _VIEW_MARGIN
    # world y flips, so the viewBox top edge is -y1
    view = f"{_fmt(x0)} {_fmt(-y1)} {_fmt(x1 - x0)} {_fmt(y1 - y0)}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{view}" '
        f'width="{pixels}" height="{pixels}">',
        f'<rect x="{_fmt(x0)}" y="{_fmt(-y1)}" width="{_fmt(x1 - x0)}" '
        f'height="{_fmt(y1 - y0)}" fill="#fafafa" stroke="#cccccc" stroke-width="0.02"/>',
    ]
    for obj in scene.objects:
        color = _PALETTE[obj.category % len(_PALETTE)]
        cx, cy = obj.location[0], -obj.location[1]
        w, h = obj.size[0], obj.size[1]
        angle = -math.degrees(obj.rotation)
        parts.append(
            f'<g transform="translate({_fmt(cx)} {_fmt(cy)}) rotate({_fmt(angle)})">'
            f'<rect x="{_fmt(-w / 2)}" y="{_fmt(-h / 2)}" width="{_fmt(w)}" '
            f'height="{_fmt(h)}" fill="{color}" fill-opacity="0.55" '
            f'stroke="{color}" stroke-width="0.03"/>'
            f'<line x1="0" y1="0" x2="{_fmt(w / 2)}" y2="0" '
            f'stroke="{color}" stroke-width="0.04"/>'
            f"</g>"
        )
        label = config.category_names[obj.category]
        parts.append(
            f'<text x="{_fmt(cx)}" y="{_fmt(cy)}" font-size="0.18" '
            f'font-family="sans-serif" text-anchor="middle" '
            f'dominant-baseline="middle" fill="#222222">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
