"""Shared fixtures and independent oracles.

The oracles here deliberately avoid the package's own kernels: they use
brute force, sampling or closed forms so a shared bug cannot hide.
"""
import itertools
import math

import numpy as np
import pytest


def sweep_mbr_area(points, step=1e-4):
    """Smallest axis-aligned box area over rotations sampled every ``step`` rad in [0, pi/2)."""
    P = np.asarray(points, dtype=float)
    angles = np.arange(0.0, 0.5 * math.pi, step)
    best = math.inf
    chunk = 2048
    for s in range(0, len(angles), chunk):
        t = angles[s:s + chunk]
        c, sn = np.cos(t), np.sin(t)
        u = P[:, 0:1] * c + P[:, 1:2] * sn
        v = -P[:, 0:1] * sn + P[:, 1:2] * c
        area = (u.max(0) - u.min(0)) * (v.max(0) - v.min(0))
        best = min(best, float(area.min()))
    return best


def rect_corners(x, y, l, w, a):
    c, s = math.cos(a), math.sin(a)
    return np.array([(x + u * c - v * s, y + u * s + v * c)
                     for u, v in ((l / 2, w / 2), (-l / 2, w / 2), (-l / 2, -w / 2), (l / 2, -w / 2))])


def inside_rect(pts, x, y, l, w, a):
    c, s = math.cos(a), math.sin(a)
    dx, dy = pts[:, 0] - x, pts[:, 1] - y
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return (np.abs(u) <= l / 2) & (np.abs(v) <= w / 2)


def monte_carlo_overlap(p, q, n=10**6, seed=0):
    """Intersection area of two footprints by uniform sampling of p's bounding box."""
    rng = np.random.default_rng(seed)
    cp = rect_corners(p[0], p[1], p[2], p[3], p[5])
    lo, hi = cp.min(0), cp.max(0)
    pts = rng.uniform(lo, hi, (n, 2))
    hit = inside_rect(pts, p[0], p[1], p[2], p[3], p[5]) & inside_rect(pts, q[0], q[1], q[2], q[3], q[5])
    return hit.mean() * float(np.prod(hi - lo))


def chamfer_oracle(a, b):
    da = [min(sum((x - y) ** 2 for x, y in zip(p, q)) for q in b) for p in a]
    db = [min(sum((x - y) ** 2 for x, y in zip(p, q)) for q in a) for p in b]
    return math.fsum(da) / len(da) + math.fsum(db) / len(db)


def emd_oracle(a, b):
    n = len(a)
    cost = [[math.dist(a[i], b[j]) for j in range(n)] for i in range(n)]
    best = math.inf
    for perm in itertools.permutations(range(n)):
        best = min(best, math.fsum(cost[i][perm[i]] for i in range(n)))
    return best / n


def nearest_pair_oracle(cuboids, distance, merge):
    """Exhaustive agglomeration: scan every active pair each step, keep the first strict minimum."""
    nodes = {k: np.asarray(c, float) for k, c in enumerate(cuboids)}
    active = list(range(len(cuboids)))
    nxt = len(cuboids)
    out = []
    while len(active) > 1:
        best = None
        for i, j in itertools.combinations(sorted(active), 2):
            d = distance(nodes[i], nodes[j])
            if best is None or d < best[0]:
                best = (d, i, j)
        _, i, j = best
        nodes[nxt] = merge(nodes[i], nodes[j])
        active.remove(i)
        active.remove(j)
        active.append(nxt)
        out.append((i, j))
        nxt += 1
    return out


def random_cuboids(rng, n, spread=10.0, with_height=False):
    C = np.empty((n, 6))
    C[:, 0:2] = rng.uniform(-spread, spread, (n, 2))
    C[:, 2] = rng.uniform(0.5, 3.0, n)
    C[:, 3] = rng.uniform(0.5, 3.0, n)
    C[:, 4] = rng.uniform(0.5, 5.0, n) if with_height else 0.0
    C[:, 5] = rng.uniform(-math.pi / 2, math.pi / 2, n)
    return C


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_city():
    from aetree.dataset import synth_city
    return synth_city(4, 4, jitter=0.5, seed=0)


# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
