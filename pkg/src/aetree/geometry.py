"""Oriented rectangles and cuboids: corners, minimum bounding rectangles, overlaps."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidArgument

HALF_PI = 0.5 * math.pi


def normalize_angle(a: float) -> float:
    """Fold an angle into [-pi/2, pi/2); rectangles are symmetric under a -> a + pi."""
    a = float(a)
    if not math.isfinite(a):
        raise InvalidArgument(f"angle must be finite, got {a!r}")
    return kernels.normalize_angle(a)


def fold_angle_diff(d: float) -> float:
    """Distance between two orientations modulo pi, in [0, pi/2]."""
    r = math.fmod(abs(d), math.pi)
    return min(r, math.pi - r)


@dataclass(frozen=True)
class Cuboid:
    """A building as center (x, y), extents (l, w, h) and orientation a.

    ``h = 0`` is the flat 2D-box case. ``a`` is normalized on construction.
    """

    x: float
    y: float
    l: float
    w: float
    h: float = 0.0
    a: float = 0.0

    def __post_init__(self):
        vals = (self.x, self.y, self.l, self.w, self.h, self.a)
        if not all(math.isfinite(float(v)) for v in vals):
            raise InvalidArgument(f"cuboid fields must be finite: {vals}")
        if self.l < 0 or self.w < 0 or self.h < 0:
            raise InvalidArgument(f"cuboid extents must be >= 0: {vals}")
        for name in ("x", "y", "l", "w", "h"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "a", normalize_angle(self.a))

    @classmethod
    def from_array(cls, p) -> "Cuboid":
        x, y, l, w, h, a = (float(v) for v in p)
        return cls(x, y, l, w, h, a)

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.l, self.w, self.h, self.a])

    @property
    def area(self) -> float:
        return self.l * self.w


def as_params(c) -> np.ndarray:
    """Cuboid or length-6 sequence -> float array (x, y, l, w, h, a)."""
    if isinstance(c, Cuboid):
        return c.to_array()
    p = np.asarray(c, dtype=float)
    if p.shape != (6,):
        raise InvalidArgument(f"expected 6 cuboid parameters, got shape {p.shape}")
    return p


def footprint_corners(c) -> np.ndarray:
    """The 4 footprint corners, counter-clockwise, starting at (+l/2, +w/2)."""
    x, y, l, w, _, a = as_params(c)
    ca, sa = math.cos(a), math.sin(a)
    hl, hw = 0.5 * l, 0.5 * w
    local = ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))
    return np.array([(x + u * ca - v * sa, y + u * sa + v * ca) for u, v in local])


def cuboid_corners(c) -> np.ndarray:
    """The 8 corners: footprint at z = 0, then the same footprint at z = h."""
    p = as_params(c)
    fp = footprint_corners(p)
    bottom = np.column_stack([fp, np.zeros(4)])
    top = np.column_stack([fp, np.full(4, p[4])])
    return np.vstack([bottom, top])


def convex_hull(points) -> np.ndarray:
    P = np.ascontiguousarray(points, dtype=float).reshape(-1, 2)
    return kernels.convex_hull(P)


def mbr_params(points) -> tuple[float, float, float, float, float]:
    """(cx, cy, l, w, a) of the minimum-area rectangle enclosing ``points``."""
    P = np.ascontiguousarray(points, dtype=float).reshape(-1, 2)
    if P.shape[0] == 0:
        raise InvalidArgument("min_bounding_rect needs at least one point")
    if not np.isfinite(P).all():
        raise InvalidArgument("points must be finite")
    cx, cy, l, w, a = kernels.mbr(P)
    return float(cx), float(cy), float(l), float(w), float(a)


def min_bounding_rect(points, h: float = 0.0) -> Cuboid:
    """Minimum-area oriented bounding rectangle of a 2D point set.

    The result is canonical: ``l >= w``, and among equal-area candidates the
    one with the smallest ``|a|`` wins (ties on ``|a|`` go to the negative
    angle).
    """
    cx, cy, l, w, a = mbr_params(points)
    return Cuboid(cx, cy, l, w, h, a)


def footprint_area(c) -> float:
    p = as_params(c)
    return float(p[2] * p[3])


def overlap_area(p, q) -> float:
    """Intersection area of the two footprints (zero-area footprints give 0)."""
    pp, qq = as_params(p), as_params(q)
    if pp[2] * pp[3] <= 0.0 or qq[2] * qq[3] <= 0.0:
        return 0.0
    return float(kernels.clip_area(footprint_corners(pp), footprint_corners(qq)))


def contains_points(rect, points, tol: float = 1e-9) -> bool:
    """True when every point lies inside the footprint of ``rect`` (signed-distance test)."""
    x, y, l, w, _, a = as_params(rect)
    P = np.asarray(points, dtype=float).reshape(-1, 2)
    ca, sa = math.cos(a), math.sin(a)
    dx, dy = P[:, 0] - x, P[:, 1] - y
    u = dx * ca + dy * sa
    v = -dx * sa + dy * ca
    return bool(np.all(np.abs(u) <= 0.5 * l + tol) and np.all(np.abs(v) <= 0.5 * w + tol))
