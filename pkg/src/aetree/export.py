"""Static SVG and Wavefront OBJ renderings of layouts.

Output is a pure function of the input arrays: coordinates are printed with
fixed precision and nothing time- or environment-dependent is embedded.
"""
from __future__ import annotations

import numpy as np

from .errors import InvalidArgument
from .geometry import cuboid_corners, footprint_corners

_STYLE = 'fill="#9fb8d0" fill-opacity="0.7" stroke="#1f3550" stroke-width="{sw}"'


def _f(v: float) -> str:
    s = f"{v:.6f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _layouts(layouts):
    out = []
    for lid, C in layouts:
        C = np.asarray(C, dtype=float).reshape(-1, 6)
        if not np.isfinite(C).all():
            raise InvalidArgument(f"layout {lid!r} has non-finite parameters")
        out.append((str(lid), C))
    if not out:
        raise InvalidArgument("nothing to export")
    return out


def _bounds(C):
    if len(C) == 0:
        return np.zeros(2), np.ones(2)
    P = np.vstack([footprint_corners(c) for c in C])
    return P.min(axis=0), P.max(axis=0)


def svg_document(layouts, columns: int | None = None, cell: float = 240.0) -> str:
    """One SVG with a ``<g>`` per layout laid out on a grid, one ``<polygon>`` per footprint.

    ``layouts`` is a sequence of ``(id, (n, 6) cuboids)``. Each layout is
    scaled uniformly into a ``cell`` x ``cell`` tile; the y axis points up.
    """
    items = _layouts(layouts)
    cols = len(items) if columns is None else max(1, int(columns))
    rows = -(-len(items) // cols)
    W, H = cols * cell, rows * cell
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(W)}" height="{_f(H)}" '
        f'viewBox="0 0 {_f(W)} {_f(H)}">',
        f'<rect x="0" y="0" width="{_f(W)}" height="{_f(H)}" fill="white"/>',
    ]
    for n, (lid, C) in enumerate(items):
        lo, hi = _bounds(C)
        span = float(max(hi - lo)) or 1.0
        s = 0.9 * cell / span
        ox = (n % cols) * cell + 0.5 * cell - s * 0.5 * (lo[0] + hi[0])
        oy = (n // cols) * cell + 0.5 * cell + s * 0.5 * (lo[1] + hi[1])
        lines.append(f'<g id="{_escape(lid)}">')
        for c in C:
            pts = footprint_corners(c)
            coords = " ".join(f"{_f(ox + s * x)},{_f(oy - s * y)}" for x, y in pts)
            lines.append(f'<polygon points="{coords}" {_STYLE.format(sw=_f(1.0))}/>')
        lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def obj_document(layouts, spacing: float | None = None) -> str:
    """Wavefront OBJ: an object per layout, 8 vertices and 6 quad faces per cuboid.

    Layouts keep their own coordinates unless ``spacing`` is given, in which
    case layout ``n`` is shifted by ``n * spacing`` along x.
    """
    items = _layouts(layouts)
    lines = ["# aetree cuboids"]
    base = 0
    # corner order from cuboid_corners: bottom ring 0-3 then top ring 4-7, both CCW
    faces = ((0, 3, 2, 1), (4, 5, 6, 7), (0, 1, 5, 4), (1, 2, 6, 5), (2, 3, 7, 6), (3, 0, 4, 7))
    for n, (lid, C) in enumerate(items):
        lines.append(f"o {lid}")
        dx = 0.0 if spacing is None else n * spacing
        for c in C:
            V = cuboid_corners(c)
            for x, y, z in V:
                lines.append(f"v {_f(x + dx)} {_f(y)} {_f(z)}")
            for f in faces:
                lines.append("f " + " ".join(str(base + k + 1) for k in f))
            base += 8
    return "\n".join(lines) + "\n"


def write_svg(path, layouts, columns=None) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(svg_document(layouts, columns))


def write_obj(path, layouts, spacing=None) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(obj_document(layouts, spacing))
