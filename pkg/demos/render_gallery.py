"""Draw every packaged arena to SVG for a quick visual check.

The package ships a hand-designed 8-stage training curriculum and 6
held-out evaluation arenas; this writes one image per arena plus an
index you can open in a browser.
"""

import argparse
from pathlib import Path

from evonav.feedback import render_arena
from evonav.orchestrator import expert_curriculum, testset_arenas


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/gallery")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    entries = [(f"curriculum-stage-{i + 1}", a) for i, a in enumerate(expert_curriculum())]
    entries += [(f"testset-case-{i + 1}", a) for i, a in enumerate(testset_arenas())]

    cells = []
    for name, arena in entries:
        art = render_arena(arena, name=name)
        (out / f"{name}.svg").write_text(art.svg)
        walls = len(arena.wall_tiles())
        print(f"{name}: {walls} wall tiles")
        cells.append(
            f'<figure><img src="{name}.svg" width="300">'
            f"<figcaption>{name} ({walls} walls)</figcaption></figure>"
        )

    index = (
        "<!doctype html><title>arena gallery</title>"
        '<style>figure{display:inline-block;margin:8px;text-align:center}</style>'
        + "".join(cells)
    )
    (out / "index.html").write_text(index)
    print(f"wrote {len(entries)} images and index.html under {out}")


if __name__ == "__main__":
    main()
