"""Binary spatial hierarchy over a layout set.

Buildings are merged agglomeratively under a weighted spatial-geometric
distance (SGD). Each internal node stores the mean of its children's centers
and the extents/orientation of the minimum bounding rectangle of their
corners. Per-level index matrices ``(left, right, parent)`` let a forest of
differently shaped trees be processed level by level in one batch.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateParentError, DegenerateShapeError, InvalidArgument, SchemaError
from .geometry import (
    as_params, fold_angle_diff, footprint_corners, mbr_params, normalize_angle, Cuboid,
)

FOREST_MAGIC = "aetree-forest"
FOREST_VERSION = 1
LAYOUTS_MAGIC = "aetree-layouts"
LAYOUTS_VERSION = 1


@dataclass(frozen=True)
class Frame:
    """Maps normalized coordinates back to scene units: ``orig = norm * scale + t``."""

    tx: float = 0.0
    ty: float = 0.0
    scale: float = 1.0

    def compose(self, inner: "Frame") -> "Frame":
        # self: orig <- current, inner: current <- new
        return Frame(inner.tx * self.scale + self.tx,
                     inner.ty * self.scale + self.ty,
                     inner.scale * self.scale)


@dataclass
class LayoutSet:
    id: str
    cuboids: np.ndarray  # (N, 6)
    frame: Frame = field(default_factory=Frame)

    def __post_init__(self):
        self.cuboids = np.array(self.cuboids, dtype=float).reshape(-1, 6)
        if len(self.cuboids) < 2:
            raise InvalidArgument(f"layout set {self.id!r} needs >= 2 cuboids")
        if not np.isfinite(self.cuboids).all() or (self.cuboids[:, 2:5] < 0).any():
            raise InvalidArgument(f"layout set {self.id!r} has invalid cuboids")

    def __len__(self):
        return len(self.cuboids)


@dataclass(frozen=True)
class SgdWeights:
    center: float = 5.0
    area: float = 2.0
    shape: float = 0.1
    angle: float = 1.0
    merge: float = 1.0

    def __post_init__(self):
        w = self.as_array()
        if (w < 0).any() or not np.isfinite(w).all() or not (w > 0).any():
            raise InvalidArgument(f"SGD weights must be >= 0 and not all zero: {tuple(w)}")

    def as_array(self) -> np.ndarray:
        return np.array([self.center, self.area, self.shape, self.angle, self.merge])

    @classmethod
    def parse(cls, text: str) -> "SgdWeights":
        vals = [float(v) for v in text.replace(",", " ").split()]
        if len(vals) != 5:
            raise InvalidArgument(f"expected 5 weights, got {text!r}")
        return cls(*vals)


def sgd_components(i, j, need_shape: bool = True) -> tuple[float, float, float, float, float]:
    """(D_center, D_area, D_shape, D_angle, D_merge) between two nodes.

    D_angle compares the mean of the two orientations with the orientation of
    their joint MBR; the difference is folded modulo pi into [0, pi/2].
    With ``need_shape=False`` a zero width yields ``D_shape = 0`` instead of
    raising.
    """
    p, q = as_params(i), as_params(j)
    d_center = math.hypot(p[0] - q[0], p[1] - q[1])
    area_p, area_q = p[2] * p[3], q[2] * q[3]
    d_area = abs(area_p - area_q)
    if p[3] > 0 and q[3] > 0:
        d_shape = abs(p[2] / p[3] - q[2] / q[3])
    elif need_shape:
        raise DegenerateShapeError("aspect ratio undefined for zero-width rectangle")
    else:
        d_shape = 0.0
    corners = np.vstack([footprint_corners(p), footprint_corners(q)])
    _, _, l_m, w_m, a_m = mbr_params(corners)
    d_angle = fold_angle_diff(0.5 * (p[5] + q[5]) - a_m)
    d_merge = abs(area_p + area_q - l_m * w_m)
    return d_center, d_area, d_shape, d_angle, d_merge


def sgd_distance(i, j, w: SgdWeights = SgdWeights()) -> float:
    comps = sgd_components(i, j, need_shape=w.shape != 0)
    wa = w.as_array()
    total = 0.0
    for k in range(5):
        if wa[k] != 0:
            total += wa[k] * comps[k]
    return total


def merge_params(p, q) -> np.ndarray:
    """Parent of two nodes: mean center, MBR extents/angle, max height."""
    p, q = as_params(p), as_params(q)
    _, _, l, w, a = mbr_params(np.vstack([footprint_corners(p), footprint_corners(q)]))
    return np.array([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1]), l, w, max(p[4], q[4]), a])


def to_relative(child, parent) -> np.ndarray:
    """Child parameters relative to its parent.

    Offsets are scaled by the parent's length/width, extents become ratios,
    the angle becomes a folded difference. A flat parent (``h = 0``) maps a
    flat child to ``h' = 0``.
    """
    c, p = as_params(child), as_params(parent)
    if p[2] <= 0 or p[3] <= 0:
        raise DegenerateParentError(f"parent has zero footprint extent: {tuple(p)}")
    if p[4] > 0:
        hr = c[4] / p[4]
    elif c[4] == 0:
        hr = 0.0
    else:
        raise DegenerateParentError("flat parent cannot hold a child with height")
    return np.array([
        (c[0] - p[0]) / p[2],
        (c[1] - p[1]) / p[3],
        c[2] / p[2],
        c[3] / p[3],
        hr,
        normalize_angle(c[5] - p[5]),
    ])


def absolute_params(rel, parent) -> np.ndarray:
    """Unchecked inverse of :func:`to_relative`; the angle is left unfolded."""
    r, p = np.asarray(rel, dtype=float), as_params(parent)
    return np.array([
        p[0] + r[0] * p[2],
        p[1] + r[1] * p[3],
        r[2] * p[2],
        r[3] * p[3],
        r[4] * p[4],
        r[5] + p[5],
    ])


def to_absolute(rel, parent) -> Cuboid:
    p = as_params(parent)
    if p[2] <= 0 or p[3] <= 0:
        raise DegenerateParentError(f"parent has zero footprint extent: {tuple(p)}")
    return Cuboid.from_array(absolute_params(rel, p))


@dataclass
class SpatialTree:
    """Node table plus level-grouped index matrices.

    Nodes ``0..N-1`` are the leaves in input order; internal nodes follow in
    merge order, so the root is ``2N-2``. ``levels[k]`` holds the
    ``(left, right, parent)`` rows whose parent sits at height ``k + 1``.
    The root's ``relative`` row repeats its absolute parameters.
    """

    id: str
    absolute: np.ndarray
    relative: np.ndarray
    is_leaf: np.ndarray
    parent: np.ndarray
    children: np.ndarray
    levels: list
    frame: Frame = field(default_factory=Frame)

    @property
    def n_nodes(self) -> int:
        return len(self.absolute)

    @property
    def n_leaves(self) -> int:
        return int(self.is_leaf.sum())

    @property
    def root(self) -> int:
        return self.n_nodes - 1

    def merges(self) -> list[tuple[int, int]]:
        """Merge sequence as (min child, max child) pairs, in creation order."""
        n = self.n_leaves
        out = []
        for k in range(n, self.n_nodes):
            a, b = int(self.children[k, 0]), int(self.children[k, 1])
            out.append((min(a, b), max(a, b)))
        return out

    def depths(self) -> np.ndarray:
        """Distance of every node from the root."""
        d = np.zeros(self.n_nodes, dtype=int)
        for k in range(self.n_nodes - 2, -1, -1):
            # parents always have larger indices than their children
            d[k] = d[self.parent[k]] + 1
        return d

    def heights(self) -> np.ndarray:
        h = np.zeros(self.n_nodes, dtype=int)
        for k in range(self.n_leaves, self.n_nodes):
            h[k] = 1 + max(h[self.children[k, 0]], h[self.children[k, 1]])
        return h

    def leaves(self) -> np.ndarray:
        return self.absolute[self.is_leaf]


def _assemble(set_id, nodes, children, frame) -> SpatialTree:
    M = len(nodes)
    n = (M + 1) // 2
    absolute = np.array(nodes, dtype=float)
    children = np.array(children, dtype=np.int64).reshape(-1, 2)
    parent = np.full(M, -1, dtype=np.int64)
    for k in range(n, M):
        parent[children[k]] = k
    is_leaf = np.zeros(M, dtype=bool)
    is_leaf[:n] = True
    relative = np.empty_like(absolute)
    for k in range(M - 1):
        relative[k] = to_relative(absolute[k], absolute[parent[k]])
    relative[M - 1] = absolute[M - 1]
    height = np.zeros(M, dtype=int)
    for k in range(n, M):
        height[k] = 1 + max(height[children[k, 0]], height[children[k, 1]])
    levels = []
    for lev in range(1, height.max() + 1):
        ks = [k for k in range(n, M) if height[k] == lev]
        levels.append(np.array([(children[k, 0], children[k, 1], k) for k in ks],
                               dtype=np.int64).reshape(-1, 3))
    return SpatialTree(set_id, absolute, relative, is_leaf, parent, children, levels, frame)


def build_tree(layout: LayoutSet, w: SgdWeights = SgdWeights()) -> SpatialTree:
    """Agglomerative binary tree over ``layout`` under the SGD metric.

    The globally closest active pair is merged first; exact distance ties go
    to the lexicographically smallest (min index, max index) pair.
    """
    leaves = np.asarray(layout.cuboids, dtype=float)
    n = len(leaves)
    if n < 2:
        raise InvalidArgument("build_tree needs >= 2 cuboids")
    M = 2 * n - 1
    nodes = [leaves[k].copy() for k in range(n)]
    children = [(-1, -1)] * n
    D = np.full((M, M), np.inf)
    for i in range(n):
        for j in range(i + 1, n):
            D[i, j] = sgd_distance(nodes[i], nodes[j], w)
    active = list(range(n))
    for k in range(n, M):
        # row-major argmin over the upper triangle == lexicographic tie-break
        flat = int(np.argmin(D))
        i, j = divmod(flat, M)
        if not math.isfinite(D[i, j]):
            raise InvalidArgument(f"non-finite SGD distance in set {layout.id!r}")
        D[[i, j], :] = np.inf
        D[:, [i, j]] = np.inf
        active.remove(i)
        active.remove(j)
        nodes.append(merge_params(nodes[i], nodes[j]))
        children.append((i, j))
        for m in active:
            D[m, k] = sgd_distance(nodes[m], nodes[k], w)
        active.append(k)
    return _assemble(layout.id, nodes, children, layout.frame)


def tree_from_merges(layout: LayoutSet, merges) -> SpatialTree:
    """Rebuild a tree from an explicit merge sequence of node indices."""
    nodes = [np.asarray(c, dtype=float) for c in layout.cuboids]
    children = [(-1, -1)] * len(nodes)
    for i, j in merges:
        nodes.append(merge_params(nodes[i], nodes[j]))
        children.append((i, j))
    return _assemble(layout.id, nodes, children, layout.frame)


def normalize_frame(layout: LayoutSet) -> LayoutSet:
    """Center the set on its mean building center and scale it into [-0.5, 0.5]^2.

    The scale is twice the largest absolute corner coordinate after
    centering, so every footprint corner (and hence the root MBR) lands in
    the unit square. The new frame composes with any existing one.
    """
    C = np.asarray(layout.cuboids, dtype=float)
    tx, ty = C[:, 0].mean(), C[:, 1].mean()
    corners = np.vstack([footprint_corners(c) for c in C])
    m = max(np.abs(corners[:, 0] - tx).max(), np.abs(corners[:, 1] - ty).max())
    if not m > 0:
        raise InvalidArgument(f"layout set {layout.id!r} has zero extent")
    s = 2.0 * m
    out = C.copy()
    out[:, 0] = (C[:, 0] - tx) / s
    out[:, 1] = (C[:, 1] - ty) / s
    out[:, 2:5] = C[:, 2:5] / s
    return LayoutSet(layout.id, out, layout.frame.compose(Frame(tx, ty, s)))


def denormalize_params(C, frame: Frame) -> np.ndarray:
    C = np.array(C, dtype=float).reshape(-1, 6)
    out = C.copy()
    out[:, 0] = C[:, 0] * frame.scale + frame.tx
    out[:, 1] = C[:, 1] * frame.scale + frame.ty
    out[:, 2:5] = C[:, 2:5] * frame.scale
    return out


def denormalize(layout: LayoutSet) -> LayoutSet:
    return LayoutSet(layout.id, denormalize_params(layout.cuboids, layout.frame), Frame())


# ---------------------------------------------------------------- file formats

def _check_id(set_id: str) -> str:
    if not set_id or any(ch.isspace() for ch in set_id):
        raise InvalidArgument(f"ids must be non-empty and whitespace-free: {set_id!r}")
    return set_id


def _fmt(v) -> str:
    return repr(float(v))


def write_forest(path, trees) -> None:
    """Write trees to the line-oriented forest format.

    ::

        aetree-forest 1
        tree <id> <n_nodes> <n_levels> <tx> <ty> <scale>
        node <k> <x y l w h a> <x' y' l' w' h' a'> <is_leaf> <parent>
        level <height> <n_rows>
        <left> <right> <parent>
        end
    """
    lines = [f"{FOREST_MAGIC} {FOREST_VERSION}"]
    for t in trees:
        f = t.frame
        lines.append(f"tree {_check_id(t.id)} {t.n_nodes} {len(t.levels)} "
                     f"{_fmt(f.tx)} {_fmt(f.ty)} {_fmt(f.scale)}")
        for k in range(t.n_nodes):
            vals = " ".join(_fmt(v) for v in (*t.absolute[k], *t.relative[k]))
            lines.append(f"node {k} {vals} {int(t.is_leaf[k])} {int(t.parent[k])}")
        for h, rows in enumerate(t.levels, start=1):
            lines.append(f"level {h} {len(rows)}")
            lines.extend(f"{a} {b} {p}" for a, b, p in rows)
        lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n")


def read_forest(path) -> list[SpatialTree]:
    text = Path(path).read_text().splitlines()
    if not text or text[0].split() != [FOREST_MAGIC, str(FOREST_VERSION)]:
        raise SchemaError(f"{path}:1: expected header '{FOREST_MAGIC} {FOREST_VERSION}'")
    trees = []
    ln = 1
    try:
        while ln < len(text):
            head = text[ln].split()
            ln += 1
            if not head:
                continue
            if head[0] != "tree" or len(head) != 7:
                raise SchemaError(f"{path}:{ln}: expected 'tree' record")
            set_id, n_nodes, n_levels = head[1], int(head[2]), int(head[3])
            frame = Frame(float(head[4]), float(head[5]), float(head[6]))
            absolute = np.empty((n_nodes, 6))
            relative = np.empty((n_nodes, 6))
            is_leaf = np.zeros(n_nodes, dtype=bool)
            parent = np.empty(n_nodes, dtype=np.int64)
            for k in range(n_nodes):
                rec = text[ln].split()
                ln += 1
                if rec[0] != "node" or int(rec[1]) != k or len(rec) != 16:
                    raise SchemaError(f"{path}:{ln}: expected node {k}")
                vals = [float(v) for v in rec[2:14]]
                absolute[k], relative[k] = vals[:6], vals[6:]
                is_leaf[k] = rec[14] == "1"
                parent[k] = int(rec[15])
            levels = []
            for h in range(1, n_levels + 1):
                rec = text[ln].split()
                ln += 1
                if rec[0] != "level" or int(rec[1]) != h:
                    raise SchemaError(f"{path}:{ln}: expected level {h}")
                rows = []
                for _ in range(int(rec[2])):
                    rows.append([int(v) for v in text[ln].split()])
                    ln += 1
                levels.append(np.array(rows, dtype=np.int64).reshape(-1, 3))
            if text[ln].strip() != "end":
                raise SchemaError(f"{path}:{ln + 1}: expected 'end'")
            ln += 1
            children = np.full((n_nodes, 2), -1, dtype=np.int64)
            for rows in levels:
                for a, b, p in rows:
                    children[p] = (a, b)
            trees.append(SpatialTree(set_id, absolute, relative, is_leaf, parent,
                                     children, levels, frame))
    except (IndexError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"{path}:{ln}: malformed forest record ({exc})") from exc
    return trees


def write_layouts(path, layouts) -> None:
    """Line-delimited JSON: a header object, then one object per layout set."""
    with open(path, "w") as fh:
        fh.write(json.dumps({"format": LAYOUTS_MAGIC, "version": LAYOUTS_VERSION}) + "\n")
        for s in layouts:
            rec = {
                "id": s.id,
                "frame": [s.frame.tx, s.frame.ty, s.frame.scale],
                "cuboids": [[float(v) for v in c] for c in s.cuboids],
            }
            fh.write(json.dumps(rec) + "\n")


def read_layouts(path) -> list[LayoutSet]:
    out = []
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SchemaError(f"{path}:1: empty layout file")
    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:1: header is not JSON") from exc
    if head.get("format") != LAYOUTS_MAGIC or head.get("version") != LAYOUTS_VERSION:
        raise SchemaError(f"{path}:1: expected {LAYOUTS_MAGIC} v{LAYOUTS_VERSION} header")
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            out.append(LayoutSet(str(rec["id"]), rec["cuboids"], Frame(*rec.get("frame", (0, 0, 1)))))
        except (json.JSONDecodeError, KeyError, TypeError, InvalidArgument) as exc:
            raise SchemaError(f"{path}:{ln}: bad layout record ({exc})") from exc
    return out
