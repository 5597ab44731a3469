"""SVG rendering of scenes and programs."""

from __future__ import annotations

from .dsl import Expr, Library, Primitive, execute

VIEW = 1.1
PALETTE = [
    "#4878cf", "#e8743b", "#6acc65", "#d65f5f", "#956cb4",
    "#8c613c", "#dc7ec0", "#797979", "#d5bb67", "#82c6e2",
]


def _rect_svg(p: Primitive, color: str) -> str:
    x = p.x - p.w / 2
    y = -p.y - p.h / 2  # SVG y grows downward
    return (
        f'<rect x="{x:.4f}" y="{y:.4f}" width="{p.w:.4f}" height="{p.h:.4f}" '
        f'fill="{color}" fill-opacity="0.75" stroke="#222222" stroke-width="0.008"/>'
    )


def scene_svg(groups: list[list[Primitive]]) -> str:
    """One rect element per primitive; color follows the group index."""
    body = []
    for gi, prims in enumerate(groups):
        color = PALETTE[gi % len(PALETTE)]
        for p in prims:
            body.append(_rect_svg(p, color))
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'viewBox="{-VIEW} {-VIEW} {2 * VIEW} {2 * VIEW}">\n'
        + "\n".join(body)
        + "\n</svg>\n"
    )


def render_prims(prims: list[Primitive], out_path: str) -> None:
    with open(out_path, "w") as f:
        f.write(scene_svg([list(prims)]))


def render_expr(e: Expr, lib: Library, out_path: str) -> None:
    """Top-level Union operands render in distinct colors."""
    from .wake import split

    groups = [execute(part, lib) for part in split(e)]
    with open(out_path, "w") as f:
        f.write(scene_svg(groups))
