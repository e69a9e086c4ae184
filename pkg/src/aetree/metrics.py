"""Layout evaluation: Chamfer, EMD, voxel JSD, COV, MMD and overlapping-area ratio."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import kernels
from .errors import InvalidArgument
from .geometry import cuboid_corners, footprint_corners, overlap_area

OVERLAP_EPS = 1e-9
JSD_RESOLUTION = 28


def layout_to_points(cuboids, mode: str = "2d") -> np.ndarray:
    """Corner point cloud of a layout: 4 corners per cuboid in 2D, 8 in 3D."""
    C = np.asarray(cuboids, dtype=float).reshape(-1, 6)
    if len(C) == 0:
        raise InvalidArgument("layout is empty")
    if mode == "2d":
        return np.vstack([footprint_corners(c) for c in C])
    if mode == "3d":
        return np.vstack([cuboid_corners(c) for c in C])
    raise InvalidArgument(f"mode must be '2d' or '3d', got {mode!r}")


def _cloud(a) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    if a.ndim != 2 or len(a) == 0:
        raise InvalidArgument("point cloud must be a non-empty (n, dim) array")
    return a


def chamfer(a, b) -> float:
    """Mean squared nearest-neighbor distance a->b plus b->a."""
    a, b = _cloud(a), _cloud(b)
    if a.shape[1] != b.shape[1]:
        raise InvalidArgument(f"dimension mismatch {a.shape[1]} vs {b.shape[1]}")
    da, db = kernels.min_sq_dists(a, b)
    return math.fsum(da) / len(da) + math.fsum(db) / len(db)


def emd(a, b) -> float:
    """Mean Euclidean cost of the optimal perfect matching between equal-size clouds."""
    a, b = _cloud(a), _cloud(b)
    if a.shape != b.shape:
        raise InvalidArgument(f"EMD needs equal-size clouds, got {a.shape} and {b.shape}")
    diff = a[:, None, :] - b[None, :, :]
    cost = np.sqrt((diff * diff).sum(axis=-1))
    r, c = linear_sum_assignment(cost)
    return math.fsum(cost[r, c]) / len(a)


def _occupancy(clouds, lo, hi, res):
    dim = len(lo)
    counts = np.zeros(res ** dim)
    for pts in clouds:
        idx = np.floor((pts - lo) / (hi - lo) * res).astype(np.int64)
        np.clip(idx, 0, res - 1, out=idx)
        flat = np.ravel_multi_index(tuple(idx.T), (res,) * dim)
        counts += np.bincount(flat, minlength=res ** dim)
    return counts


def _kl_to_mid(p, m):
    nz = p > 0
    return math.fsum(p[nz] * np.log(p[nz] / m[nz]))


def jsd(ref, gen, resolution: int = JSD_RESOLUTION) -> float:
    """Jensen-Shannon divergence (natural log) of voxel occupancy histograms.

    The grid spans the axis-aligned bounds of both sets' points together,
    widened by 1% of the span (or by 1 unit along a flat axis).
    """
    ref = [_cloud(c) for c in ref]
    gen = [_cloud(c) for c in gen]
    if not ref or not gen:
        raise InvalidArgument("jsd needs non-empty reference and generated sets")
    allp = np.vstack(ref + gen)
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    span = hi - lo
    pad = np.where(span > 0, 0.005 * span, 0.5)
    lo, hi = lo - pad, hi + pad
    P = _occupancy(ref, lo, hi, resolution)
    Q = _occupancy(gen, lo, hi, resolution)
    P /= P.sum()
    Q /= Q.sum()
    M = 0.5 * (P + Q)
    return 0.5 * _kl_to_mid(P, M) + 0.5 * _kl_to_mid(Q, M)


def chamfer_matrix(ref, gen) -> np.ndarray:
    """Chamfer distance between every reference cloud (rows) and generated cloud (columns)."""
    D = np.empty((len(ref), len(gen)))
    for i, r in enumerate(ref):
        for j, g in enumerate(gen):
            D[i, j] = chamfer(r, g)
    return D


def coverage(ref, gen, D=None) -> float:
    """Fraction of reference clouds that are the Chamfer-nearest match of some generated cloud.

    Ties go to the lowest reference index.
    """
    if not len(ref) or not len(gen):
        raise InvalidArgument("coverage needs non-empty sets")
    D = chamfer_matrix(ref, gen) if D is None else D
    matched = set(int(i) for i in np.argmin(D, axis=0))
    return len(matched) / len(ref)


def mmd(ref, gen, D=None) -> float:
    """Mean over reference clouds of the Chamfer distance to the closest generated cloud."""
    if not len(ref) or not len(gen):
        raise InvalidArgument("mmd needs non-empty sets")
    D = chamfer_matrix(ref, gen) if D is None else D
    return math.fsum(D.min(axis=1)) / len(ref)


def oar(cuboids) -> float:
    """Share of total footprint area held by buildings overlapping at least one other.

    Zero-area footprints are ignored in both sums; touching edges are not an
    overlap (the intersection must exceed 1e-9).
    """
    C = np.asarray(cuboids, dtype=float).reshape(-1, 6)
    if len(C) == 0:
        raise InvalidArgument("oar of an empty layout")
    areas = C[:, 2] * C[:, 3]
    live = np.flatnonzero(areas > 0)
    if len(live) == 0:
        raise InvalidArgument("oar undefined: every footprint has zero area")
    radius = 0.5 * np.hypot(C[:, 2], C[:, 3])
    hit = np.zeros(len(C), dtype=bool)
    for ii, i in enumerate(live):
        for j in live[ii + 1:]:
            if hit[i] and hit[j]:
                continue
            if math.hypot(C[i, 0] - C[j, 0], C[i, 1] - C[j, 1]) >= radius[i] + radius[j]:
                continue
            if overlap_area(C[i], C[j]) > OVERLAP_EPS:
                hit[i] = hit[j] = True
    return math.fsum(areas[hit]) / math.fsum(areas[live])


def mean_oar(layouts) -> float:
    return float(np.mean([oar(c) for c in layouts]))


@dataclass
class MetricReport:
    """One row of evaluation numbers; unset metrics stay ``None``.

    ``cov`` and ``oar`` are fractions; text/CSV output shows them in percent
    under the column names ``COV(%)`` and ``OAR(%)``.
    """

    jsd: float | None = None
    cov: float | None = None
    mmd: float | None = None
    oar: float | None = None
    cd: float | None = None
    emd: float | None = None

    # generation columns, then reconstruction columns, OAR last in both
    COLUMNS = (("jsd", "JSD", 1.0), ("cov", "COV(%)", 100.0), ("mmd", "MMD", 1.0),
               ("cd", "CD", 1.0), ("emd", "EMD", 1.0), ("oar", "OAR(%)", 100.0))

    def _cells(self):
        out = []
        for name, label, scale in self.COLUMNS:
            v = getattr(self, name)
            if v is not None:
                out.append((label, v * scale))
        return out

    def to_csv(self) -> str:
        cells = self._cells()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([c[0] for c in cells])
        w.writerow([repr(float(c[1])) for c in cells])
        return buf.getvalue()

    def to_text(self) -> str:
        cells = self._cells()
        widths = [max(len(lab), 10) for lab, _ in cells]
        head = "  ".join(lab.rjust(wd) for (lab, _), wd in zip(cells, widths))
        row = "  ".join(f"{v:.4f}".rjust(wd) for (_, v), wd in zip(cells, widths))
        return head + "\n" + row + "\n"

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def reconstruction_report(reference, decoded, mode: str = "2d") -> MetricReport:
    """Mean CD, EMD (only over layouts whose sizes match) and OAR of decoded layouts."""
    cds, emds = [], []
    for ref, dec in zip(reference, decoded):
        if len(dec) == 0:
            cds.append(float("inf"))
            continue
        pr, pd = layout_to_points(ref, mode), layout_to_points(dec, mode)
        cds.append(chamfer(pr, pd))
        if len(pr) == len(pd):
            emds.append(emd(pr, pd))
    oars = [oar(d) for d in decoded if len(d) and (np.asarray(d)[:, 2] * np.asarray(d)[:, 3] > 0).any()]
    return MetricReport(
        oar=float(np.mean(oars)) if oars else None,
        cd=float(np.mean(cds)) if cds else None,
        emd=float(np.mean(emds)) if emds else None,
    )


def generation_report(reference, generated, mode: str = "2d", resolution: int = JSD_RESOLUTION) -> MetricReport:
    """JSD, COV, MMD against a reference set of layouts, plus mean OAR of the generated ones."""
    gen = [g for g in generated if len(g)]
    oars = [oar(g) for g in gen if (np.asarray(g)[:, 2] * np.asarray(g)[:, 3] > 0).any()]
    report = MetricReport(oar=float(np.mean(oars)) if oars else None)
    if reference is not None and len(reference) and gen:
        R = [layout_to_points(r, mode) for r in reference]
        G = [layout_to_points(g, mode) for g in gen]
        D = chamfer_matrix(R, G)
        report.jsd = jsd(R, G, resolution)
        report.cov = coverage(R, G, D)
        report.mmd = mmd(R, G, D)
    return report


__all__ = [
    "layout_to_points", "chamfer", "emd", "jsd", "chamfer_matrix", "coverage", "mmd", "oar",
    "mean_oar", "MetricReport", "reconstruction_report", "generation_report",
]
