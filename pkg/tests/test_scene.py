"""Vector scene construction and the SVG/PNG writers."""

import xml.dom.minidom

from PIL import Image
import io

from evonav.scene import (
    CircleShape,
    GroupShape,
    LineShape,
    PolylineShape,
    RectShape,
    Scene,
    TextShape,
    png_bytes,
    svg_document,
)


def demo_scene():
    return Scene(
        width=120,
        height=90,
        shapes=(
            RectShape(5, 5, 20, 10, fill="#112233", css_class="wall"),
            PolylineShape(((10, 10), (20, 30), (25, 12)), stroke="#ff0000", css_class="path"),
            LineShape(0, 0, 5, 5, stroke="#000000"),
            CircleShape(50, 40, 6, fill="#00ff00", css_class="start"),
            TextShape(10, 70, 'quote " amp & lt <', size=12, fill="#000000"),
            GroupShape(
                (
                    LineShape(1, 1, 9, 1, stroke="#0000ff"),
                    TextShape(12, 4, "case 1", size=10, fill="#000000"),
                ),
                css_class="legend-entry",
            ),
        ),
    )


def test_svg_is_well_formed_xml():
    doc = svg_document(demo_scene())
    parsed = xml.dom.minidom.parseString(doc)
    root = parsed.documentElement
    assert root.tagName == "svg"
    assert root.getAttribute("xmlns") == "http://www.w3.org/2000/svg"


def test_svg_structure_and_classes():
    doc = svg_document(demo_scene())
    parsed = xml.dom.minidom.parseString(doc)
    rects = parsed.getElementsByTagName("rect")
    # background rect plus the wall rect
    assert len(rects) == 2
    assert rects[0].getAttribute("fill") == "#ffffff"
    assert rects[1].getAttribute("class") == "wall"
    polys = parsed.getElementsByTagName("polyline")
    assert len(polys) == 1
    assert polys[0].getAttribute("points").count(",") == 3
    groups = parsed.getElementsByTagName("g")
    assert len(groups) == 1
    assert groups[0].getAttribute("class") == "legend-entry"
    texts = parsed.getElementsByTagName("text")
    assert len(texts) == 2
    assert texts[0].firstChild.data == 'quote " amp & lt <'


def test_svg_deterministic():
    assert svg_document(demo_scene()) == svg_document(demo_scene())


def test_png_deterministic_and_decodable():
    a = png_bytes(demo_scene())
    b = png_bytes(demo_scene())
    assert a == b
    img = Image.open(io.BytesIO(a))
    assert img.size == (120, 90)
    assert img.mode == "RGB"


def test_png_draws_content():
    blank = png_bytes(Scene(width=50, height=50, shapes=()))
    drawn = png_bytes(
        Scene(width=50, height=50, shapes=(RectShape(10, 10, 30, 30, fill="#000000"),))
    )
    assert blank != drawn
    img = Image.open(io.BytesIO(drawn))
    assert img.getpixel((25, 25)) == (0, 0, 0)
    assert img.getpixel((2, 2)) == (255, 255, 255)


def test_single_point_polyline_becomes_dot():
    one = Scene(width=40, height=40, shapes=(PolylineShape(((20, 20),), stroke="#000000"),))
    img = Image.open(io.BytesIO(png_bytes(one)))
    assert img.getpixel((20, 20)) == (0, 0, 0)


def test_text_anchor_shifts_pixels():
    def scene(anchor):
        return Scene(
            width=100,
            height=30,
            shapes=(TextShape(50, 20, "mark", size=12, fill="#000000", anchor=anchor),),
        )

    start = png_bytes(scene("start"))
    middle = png_bytes(scene("middle"))
    end = png_bytes(scene("end"))
    assert len({start, middle, end}) == 3


def test_custom_background():
    doc = svg_document(Scene(width=10, height=10, background="#123456", shapes=()))
    assert 'fill="#123456"' in doc
    img = Image.open(io.BytesIO(png_bytes(Scene(width=10, height=10, background="#123456", shapes=()))))
    assert img.getpixel((5, 5)) == (0x12, 0x34, 0x56)
