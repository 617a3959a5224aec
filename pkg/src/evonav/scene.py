"""Tiny retained-mode 2D scene model with SVG and PNG writers.

The feedback renderers build a Scene (a flat tuple of primitives in
paint order) and hand it to ``svg_document`` for the canonical vector
output and to ``png_bytes`` for the raster copy.  Keeping one shape
list behind both writers guarantees the two formats always show the
same geometry.

Output stability: SVG attributes are emitted in a fixed order with
coordinates formatted "%.2f", and the PNG is drawn with Pillow's
embedded default font, so repeated renders of the same scene are
byte-identical.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from xml.sax.saxutils import escape, quoteattr

from PIL import Image, ImageDraw, ImageFont


@dataclass(frozen=True)
class RectShape:
    x: float
    y: float
    width: float
    height: float
    fill: str | None = None
    stroke: str | None = None
    stroke_width: float = 1.0
    css_class: str | None = None


@dataclass(frozen=True)
class PolylineShape:
    points: tuple[tuple[float, float], ...]
    stroke: str
    stroke_width: float = 1.0
    css_class: str | None = None


@dataclass(frozen=True)
class LineShape:
    x1: float
    y1: float
    x2: float
    y2: float
    stroke: str
    stroke_width: float = 1.0


@dataclass(frozen=True)
class CircleShape:
    cx: float
    cy: float
    r: float
    fill: str | None = None
    stroke: str | None = None
    stroke_width: float = 1.0
    css_class: str | None = None


@dataclass(frozen=True)
class TextShape:
    x: float
    y: float
    text: str
    size: float = 12.0
    fill: str = "#000000"
    # one of "start", "middle", "end"; y is the text baseline
    anchor: str = "start"


@dataclass(frozen=True)
class GroupShape:
    """Named group; children render in order. Exists so structural
    markers like legend entries survive into the SVG as elements."""

    children: tuple = ()
    css_class: str | None = None


Shape = RectShape | PolylineShape | LineShape | CircleShape | TextShape | GroupShape


@dataclass(frozen=True)
class Scene:
    width: float
    height: float
    background: str = "#ffffff"
    shapes: tuple[Shape, ...] = field(default_factory=tuple)


def _fmt(v: float) -> str:
    return "%.2f" % v


def _svg_shape(shape: Shape) -> str:
    if isinstance(shape, GroupShape):
        inner = "".join(_svg_shape(c) for c in shape.children)
        cls = f" class={quoteattr(shape.css_class)}" if shape.css_class else ""
        return f"<g{cls}>{inner}</g>"
    if isinstance(shape, RectShape):
        parts = [
            f'<rect x="{_fmt(shape.x)}" y="{_fmt(shape.y)}"'
            f' width="{_fmt(shape.width)}" height="{_fmt(shape.height)}"'
        ]
        parts.append(f' fill="{shape.fill}"' if shape.fill else ' fill="none"')
        if shape.stroke:
            parts.append(
                f' stroke="{shape.stroke}" stroke-width="{_fmt(shape.stroke_width)}"'
            )
        if shape.css_class:
            parts.append(f" class={quoteattr(shape.css_class)}")
        parts.append("/>")
        return "".join(parts)
    if isinstance(shape, PolylineShape):
        pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in shape.points)
        cls = f" class={quoteattr(shape.css_class)}" if shape.css_class else ""
        return (
            f'<polyline points="{pts}" fill="none" stroke="{shape.stroke}"'
            f' stroke-width="{_fmt(shape.stroke_width)}"{cls}/>'
        )
    if isinstance(shape, LineShape):
        return (
            f'<line x1="{_fmt(shape.x1)}" y1="{_fmt(shape.y1)}"'
            f' x2="{_fmt(shape.x2)}" y2="{_fmt(shape.y2)}"'
            f' stroke="{shape.stroke}" stroke-width="{_fmt(shape.stroke_width)}"/>'
        )
    if isinstance(shape, CircleShape):
        parts = [f'<circle cx="{_fmt(shape.cx)}" cy="{_fmt(shape.cy)}" r="{_fmt(shape.r)}"']
        parts.append(f' fill="{shape.fill}"' if shape.fill else ' fill="none"')
        if shape.stroke:
            parts.append(
                f' stroke="{shape.stroke}" stroke-width="{_fmt(shape.stroke_width)}"'
            )
        if shape.css_class:
            parts.append(f" class={quoteattr(shape.css_class)}")
        parts.append("/>")
        return "".join(parts)
    if isinstance(shape, TextShape):
        return (
            f'<text x="{_fmt(shape.x)}" y="{_fmt(shape.y)}"'
            f' font-size="{_fmt(shape.size)}" font-family="sans-serif"'
            f' fill="{shape.fill}" text-anchor="{shape.anchor}">'
            f"{escape(shape.text)}</text>"
        )
    raise TypeError(f"unknown shape {type(shape).__name__}")


def svg_document(scene: Scene) -> str:
    w, h = _fmt(scene.width), _fmt(scene.height)
    body = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}"'
        f' viewBox="0 0 {w} {h}">',
        f'<rect x="0.00" y="0.00" width="{w}" height="{h}" fill="{scene.background}"/>',
    ]
    body.extend(_svg_shape(s) for s in scene.shapes)
    body.append("</svg>")
    return "\n".join(body) + "\n"


def _draw_shape(draw: ImageDraw.ImageDraw, font, shape: Shape) -> None:
    if isinstance(shape, GroupShape):
        for c in shape.children:
            _draw_shape(draw, font, c)
    elif isinstance(shape, RectShape):
        box = (shape.x, shape.y, shape.x + shape.width, shape.y + shape.height)
        draw.rectangle(
            box,
            fill=shape.fill,
            outline=shape.stroke,
            width=max(1, round(shape.stroke_width)) if shape.stroke else 1,
        )
    elif isinstance(shape, PolylineShape):
        if len(shape.points) == 1:
            x, y = shape.points[0]
            draw.ellipse((x - 1, y - 1, x + 1, y + 1), fill=shape.stroke)
        else:
            draw.line(
                list(shape.points),
                fill=shape.stroke,
                width=max(1, round(shape.stroke_width)),
            )
    elif isinstance(shape, LineShape):
        draw.line(
            (shape.x1, shape.y1, shape.x2, shape.y2),
            fill=shape.stroke,
            width=max(1, round(shape.stroke_width)),
        )
    elif isinstance(shape, CircleShape):
        box = (shape.cx - shape.r, shape.cy - shape.r, shape.cx + shape.r, shape.cy + shape.r)
        draw.ellipse(
            box,
            fill=shape.fill,
            outline=shape.stroke,
            width=max(1, round(shape.stroke_width)) if shape.stroke else 1,
        )
    elif isinstance(shape, TextShape):
        x = shape.x
        if shape.anchor in ("middle", "end"):
            w = draw.textlength(shape.text, font=font)
            x -= w if shape.anchor == "end" else w / 2
        # TextShape.y is a baseline; Pillow anchors at the ascender top
        ascent, _ = font.getmetrics()
        draw.text((x, shape.y - ascent), shape.text, fill=shape.fill, font=font)
    else:
        raise TypeError(f"unknown shape {type(shape).__name__}")


def png_bytes(scene: Scene) -> bytes:
    img = Image.new("RGB", (round(scene.width), round(scene.height)), scene.background)
    draw = ImageDraw.Draw(img)
    font = ImageFont.load_default()
    for s in scene.shapes:
        _draw_shape(draw, font, s)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()
