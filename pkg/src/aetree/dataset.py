"""Building ingestion, neighborhood layout sets, splits and synthetic cities."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateFootprintError, InvalidArgument, SchemaError
from .geometry import footprint_corners, mbr_params
from .tree import LayoutSet, normalize_frame

log = logging.getLogger(__name__)

BUILDINGS_MAGIC = "aetree-buildings"
BUILDINGS_VERSION = 1
MANIFEST_MAGIC = "aetree-manifest"
MANIFEST_VERSION = 1
MIN_FOOTPRINT_AREA = 1e-12


def polygon_area(V) -> float:
    V = np.asarray(V, dtype=float)
    x, y = V[:, 0], V[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_centroid(V) -> tuple[float, float]:
    V = np.asarray(V, dtype=float)
    x, y = V[:, 0], V[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    a = 0.5 * cr.sum()
    if abs(a) < MIN_FOOTPRINT_AREA:
        return float(x.mean()), float(y.mean())
    return float(((x + xn) * cr).sum() / (6 * a)), float(((y + yn) * cr).sum() / (6 * a))


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return int(v > 0) - int(v < 0)

    def on_seg(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return ((o1 == 0 and on_seg(p1, p2, q1)) or (o2 == 0 and on_seg(p1, p2, q2))
            or (o3 == 0 and on_seg(q1, q2, p1)) or (o4 == 0 and on_seg(q1, q2, p2)))


def is_simple_polygon(V) -> bool:
    n = len(V)
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(V[i], V[(i + 1) % n], V[j], V[(j + 1) % n]):
                return False
    return True


@dataclass
class BuildingRecord:
    id: str
    footprint: np.ndarray  # (n, 2)
    height: float | None = None

    def __post_init__(self):
        self.id = str(self.id)
        self.footprint = np.asarray(self.footprint, dtype=float).reshape(-1, 2)
        if len(self.footprint) < 3:
            raise InvalidArgument(f"building {self.id}: footprint needs >= 3 vertices")
        if not np.isfinite(self.footprint).all():
            raise InvalidArgument(f"building {self.id}: non-finite vertex")
        if self.height is not None and not (math.isfinite(self.height) and self.height >= 0):
            raise InvalidArgument(f"building {self.id}: invalid height {self.height}")
        if not is_simple_polygon(self.footprint):
            raise InvalidArgument(f"building {self.id}: footprint is self-intersecting")

    @property
    def centroid(self) -> tuple[float, float]:
        return polygon_centroid(self.footprint)


def footprint_to_cuboid(b: BuildingRecord) -> np.ndarray:
    """Minimum bounding rectangle of the footprint, lifted by the record's height.

    Raises :class:`DegenerateFootprintError` for footprints with area below
    1e-12; ingestion treats that as skip-with-warning.
    """
    if abs(polygon_area(b.footprint)) < MIN_FOOTPRINT_AREA:
        raise DegenerateFootprintError(f"building {b.id}: degenerate footprint")
    cx, cy, l, w, a = mbr_params(b.footprint)
    return np.array([cx, cy, l, w, 0.0 if b.height is None else float(b.height), a])


def ingest_cuboids(buildings):
    """Convert records, skipping degenerate footprints. Returns (kept records, cuboids)."""
    kept, cubs = [], []
    for b in buildings:
        try:
            cubs.append(footprint_to_cuboid(b))
        except DegenerateFootprintError as exc:
            log.warning("skipping %s", exc)
            continue
        kept.append(b)
    return kept, np.array(cubs).reshape(-1, 6)


def _knn_order(centroids, ids, anchor, k, tree):
    # all points within the k-th distance, then exact (distance, id) ordering
    _, idx = tree.query(centroids[anchor], k=k)
    idx = np.atleast_1d(idx)
    diff = centroids[idx] - centroids[anchor]
    dk = float((diff * diff).sum(axis=1).max())
    cand = tree.query_ball_point(centroids[anchor], r=math.sqrt(dk) * (1 + 1e-9) + 1e-12)
    cand = np.asarray(cand)
    diff = centroids[cand] - centroids[anchor]
    d2 = diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1]
    order = sorted(range(len(cand)), key=lambda t: (d2[t], ids[cand[t]]))
    return [int(cand[t]) for t in order[:k]]


def build_layout_sets(buildings, k: int = 32, cuboids=None) -> list[LayoutSet]:
    """One frame-normalized set per anchor building: its k nearest buildings.

    Neighbors are ranked by squared centroid distance, ties by building id;
    the anchor itself is one of the k (distance 0) and comes first.
    """
    buildings = list(buildings)
    if len(buildings) < k:
        raise InvalidArgument(f"need at least k={k} buildings, got {len(buildings)}")
    if cuboids is None:
        cuboids = np.array([footprint_to_cuboid(b) for b in buildings])
    ids = [b.id for b in buildings]
    centroids = np.array([b.centroid for b in buildings])
    tree = cKDTree(centroids)
    sets = []
    for a in range(len(buildings)):
        members = _knn_order(centroids, ids, a, k, tree)
        sets.append(normalize_frame(LayoutSet(ids[a], cuboids[members])))
    return sets


def knn_bruteforce(centroids, ids, anchor, k):
    """Reference neighbor list by full scan (used to check :func:`build_layout_sets`)."""
    c = np.asarray(centroids, dtype=float)
    keys = []
    for j in range(len(c)):
        dx, dy = c[j, 0] - c[anchor, 0], c[j, 1] - c[anchor, 1]
        keys.append((dx * dx + dy * dy, ids[j], j))
    keys.sort()
    return [j for _, _, j in keys[:k]]


@dataclass
class DatasetManifest:
    splits: dict  # name -> list of set ids
    seed: int
    ratios: tuple
    notes: list = field(default_factory=list)

    def sizes(self) -> tuple:
        return tuple(len(self.splits[name]) for name in ("train", "val", "test"))


def largest_remainder(n: int, ratios) -> list[int]:
    exact = [n * r for r in ratios]
    sizes = [math.floor(e) for e in exact]
    rem = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in rem[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def split(set_ids, ratios=(0.7, 0.1, 0.2), seed: int = 0) -> DatasetManifest:
    """Seeded shuffle, then contiguous train/val/test slices sized by largest remainder."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidArgument(f"ratios must be three non-negative numbers summing to 1: {ratios}")
    ids = list(set_ids)
    if len(set(ids)) != len(ids):
        raise InvalidArgument("set ids must be unique")
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    sizes = largest_remainder(len(ids), ratios)
    out, start = {}, 0
    for name, size in zip(("train", "val", "test"), sizes):
        out[name] = shuffled[start:start + size]
        start += size
    return DatasetManifest(out, seed, ratios)


def write_manifest(path, m: DatasetManifest) -> None:
    doc = {"format": MANIFEST_MAGIC, "version": MANIFEST_VERSION, "seed": m.seed,
           "ratios": list(m.ratios), "notes": m.notes, "splits": m.splits}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def read_manifest(path) -> DatasetManifest:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    if doc.get("format") != MANIFEST_MAGIC or doc.get("version") != MANIFEST_VERSION:
        raise SchemaError(f"{path}: not an {MANIFEST_MAGIC} v{MANIFEST_VERSION} file")
    return DatasetManifest(doc["splits"], doc["seed"], tuple(doc["ratios"]), doc.get("notes", []))


def write_buildings(path, buildings) -> None:
    """Line-delimited JSON; first line is the format header.

    Record schema: ``{"id": str, "footprint": [[x, y], ...], "height": float | null}``.
    """
    with open(path, "w") as fh:
        fh.write(json.dumps({"format": BUILDINGS_MAGIC, "version": BUILDINGS_VERSION}) + "\n")
        for b in buildings:
            rec = {"id": b.id, "footprint": [[float(x), float(y)] for x, y in b.footprint],
                   "height": None if b.height is None else float(b.height)}
            fh.write(json.dumps(rec) + "\n")


def read_buildings(path) -> list[BuildingRecord]:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].strip():
        raise SchemaError(f"{path}:1: empty buildings file (missing header)")
    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:1: header is not JSON") from exc
    if not isinstance(head, dict) or head.get("format") != BUILDINGS_MAGIC:
        raise SchemaError(f"{path}:1: expected {BUILDINGS_MAGIC} header")
    if head.get("version") != BUILDINGS_VERSION:
        raise SchemaError(f"{path}:1: unsupported version {head.get('version')!r}")
    out = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            out.append(BuildingRecord(rec["id"], rec["footprint"], rec.get("height")))
        except (json.JSONDecodeError, KeyError, TypeError, InvalidArgument) as exc:
            raise SchemaError(f"{path}:{ln}: bad building record ({exc})") from exc
    if not out:
        raise SchemaError(f"{path}: no building records")
    return out


def synth_city(rows: int, cols: int, jitter: float = 0.0, seed: int = 0, cell: float = 10.0,
               fill: float = 0.6, heights=None, id_prefix: str = "b") -> list[BuildingRecord]:
    """Grid city of rectangular footprints, one per cell.

    ``jitter`` in [0, 1] scales random perturbations of size, aspect,
    rotation (up to 30 degrees) and position. Each footprint stays strictly
    inside its own cell, so buildings never overlap.
    """
    if rows * cols < 2:
        raise InvalidArgument("synth_city needs rows * cols >= 2")
    if not 0 <= jitter <= 1:
        raise InvalidArgument("jitter must be in [0, 1]")
    rng = np.random.default_rng(seed)
    out = []
    for r in range(rows):
        for c in range(cols):
            u = rng.uniform(-1, 1, 5)
            l = fill * cell * (1 - 0.15 * jitter * (1 + u[0]))
            w = l * (1 - 0.25 * jitter * (1 + u[1]))
            a = jitter * (math.pi / 6) * u[2]
            ca, sa = abs(math.cos(a)), abs(math.sin(a))
            ex, ey = 0.5 * (l * ca + w * sa), 0.5 * (l * sa + w * ca)
            shrink = min(1.0, 0.49 * cell / max(ex, ey))
            l, w, ex, ey = l * shrink, w * shrink, ex * shrink, ey * shrink
            ox = jitter * u[3] * 0.95 * (0.5 * cell - ex)
            oy = jitter * u[4] * 0.95 * (0.5 * cell - ey)
            x, y = (c + 0.5) * cell + ox, (r + 0.5) * cell + oy
            h = None if heights is None else float(rng.uniform(*heights))
            fp = footprint_corners((x, y, l, w, 0.0, a))
            out.append(BuildingRecord(f"{id_prefix}{r:03d}_{c:03d}", fp, h))
    return out
