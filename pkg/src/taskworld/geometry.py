"""Axis-aligned boxes and a few 2D helpers.

Boxes are plain 6-tuples ``(x0, y0, z0, x1, y1, z1)``. Everything here is pure
and allocation-light because the collision sweep calls it in a tight loop.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence, Tuple

Vec3 = Tuple[float, float, float]
Box = Tuple[float, float, float, float, float, float]

OVERLAP_EPS = 1e-6


def box_from_center(center: Sequence[float], extents: Sequence[float]) -> Box:
    cx, cy, cz = center
    hx, hy, hz = extents[0] / 2, extents[1] / 2, extents[2] / 2
    return (cx - hx, cy - hy, cz - hz, cx + hx, cy + hy, cz + hz)


def box_center(b: Box) -> Vec3:
    return ((b[0] + b[3]) / 2, (b[1] + b[4]) / 2, (b[2] + b[5]) / 2)


def box_extents(b: Box) -> Vec3:
    return (b[3] - b[0], b[4] - b[1], b[5] - b[2])


def world_extents(local: Sequence[float], yaw: float) -> Vec3:
    """Extents of the world-aligned box enclosing a yawed box (exact for right angles)."""
    c, s = abs(math.cos(yaw)), abs(math.sin(yaw))
    if c < 1e-12:
        c = 0.0
    if s < 1e-12:
        s = 0.0
    return (c * local[0] + s * local[1], s * local[0] + c * local[1], float(local[2]))


def overlaps(a: Box, b: Box, eps: float = OVERLAP_EPS) -> bool:
    """Strict interior overlap; touching faces do not count."""
    return (a[0] < b[3] - eps and b[0] < a[3] - eps
            and a[1] < b[4] - eps and b[1] < a[4] - eps
            and a[2] < b[5] - eps and b[2] < a[5] - eps)


def contains(outer: Box, inner: Box, eps: float = OVERLAP_EPS) -> bool:
    return (inner[0] >= outer[0] - eps and inner[1] >= outer[1] - eps and inner[2] >= outer[2] - eps
            and inner[3] <= outer[3] + eps and inner[4] <= outer[4] + eps and inner[5] <= outer[5] + eps)


def point_in_rect(x: float, y: float, b: Box, eps: float = OVERLAP_EPS) -> bool:
    return b[0] - eps <= x <= b[3] + eps and b[1] - eps <= y <= b[4] + eps


def shrink(b: Box, d: float) -> Box:
    return (b[0] + d, b[1] + d, b[2] + d, b[3] - d, b[4] - d, b[5] - d)


def translate(b: Box, dx: float, dy: float, dz: float) -> Box:
    return (b[0] + dx, b[1] + dy, b[2] + dz, b[3] + dx, b[4] + dy, b[5] + dz)


def dominant_axis(nx: float, ny: float) -> Tuple[int, int]:
    """Snap a horizontal direction to ``(axis, sign)`` with axis 0 = x, 1 = y."""
    if abs(nx) >= abs(ny):
        return 0, (1 if nx >= 0 else -1)
    return 1, (1 if ny >= 0 else -1)


def open_shell(b: Box, wall: float, open_axis: int, open_sign: int, open_top: bool = False) -> list:
    """Wall slabs of a hollow box with one side (or the top) left open."""
    x0, y0, z0, x1, y1, z1 = b
    slabs = [(x0, y0, z0, x1, y1, z0 + wall)]
    if not open_top:
        slabs.append((x0, y0, z1 - wall, x1, y1, z1))
    sides = {
        (0, -1): (x0, y0, z0, x0 + wall, y1, z1),
        (0, 1): (x1 - wall, y0, z0, x1, y1, z1),
        (1, -1): (x0, y0, z0, x1, y0 + wall, z1),
        (1, 1): (x0, y1 - wall, z0, x1, y1, z1),
    }
    for key, slab in sides.items():
        if not open_top and key == (open_axis, open_sign):
            continue
        slabs.append(slab)
    return slabs


def rect_overlaps_box(cx: float, cy: float, hx: float, hy: float, heading: float,
                      z0: float, z1: float, b: Box, eps: float = OVERLAP_EPS) -> bool:
    """Separating-axis test: oriented rectangle (prism over [z0, z1]) vs a box."""
    if not (z0 < b[5] - eps and b[2] < z1 - eps):
        return False
    c, s = math.cos(heading), math.sin(heading)
    bx, by = (b[0] + b[3]) / 2, (b[1] + b[4]) / 2
    bhx, bhy = (b[3] - b[0]) / 2, (b[4] - b[1]) / 2
    dx, dy = bx - cx, by - cy
    # rectangle projected on world axes
    ex = abs(c) * hx + abs(s) * hy
    ey = abs(s) * hx + abs(c) * hy
    if abs(dx) >= ex + bhx - eps or abs(dy) >= ey + bhy - eps:
        return False
    # box projected on rectangle axes
    for ux, uy, h in ((c, s, hx), (-s, c, hy)):
        proj = abs(ux) * bhx + abs(uy) * bhy
        if abs(dx * ux + dy * uy) >= h + proj - eps:
            return False
    return True


def rect_in_bounds(cx: float, cy: float, hx: float, hy: float, heading: float,
                   width: float, height: float) -> bool:
    c, s = abs(math.cos(heading)), abs(math.sin(heading))
    ex, ey = c * hx + s * hy, s * hx + c * hy
    return cx - ex >= -1e-9 and cy - ey >= -1e-9 and cx + ex <= width + 1e-9 and cy + ey <= height + 1e-9


def union(boxes: Iterable[Box]) -> Box:
    bs = list(boxes)
    return (min(b[0] for b in bs), min(b[1] for b in bs), min(b[2] for b in bs),
            max(b[3] for b in bs), max(b[4] for b in bs), max(b[5] for b in bs))
