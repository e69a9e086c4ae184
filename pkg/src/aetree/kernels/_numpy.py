"""Pure-numpy reference implementations of the hot kernels.

Every function here has a twin in ``_numba`` with the same signature and the
same floating-point operation order where that matters (``affine`` and the
MBR candidate selection).
"""
import math

import numpy as np

HALF_PI = 0.5 * math.pi
AREA_TIE_RTOL = 1e-12


def normalize_angle(a):
    r = a - math.pi * math.floor((a + HALF_PI) / math.pi)
    if r >= HALF_PI:
        r -= math.pi
    elif r < -HALF_PI:
        r += math.pi
    return r


def affine(X, W, b):
    """Row-wise ``X @ W + b`` accumulated over the input axis in ascending order.

    Each output row depends only on its own input row, so results are
    bitwise independent of how many rows are stacked together.
    """
    out = np.empty((X.shape[0], W.shape[1]))
    out[:] = b
    for k in range(W.shape[0]):
        out += X[:, k:k + 1] * W[k]
    return out


def sigmoid(z):
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def lstm_pointwise(Z, C):
    """Gate nonlinearities of an LSTM cell; gate blocks ordered (i, f, g, o)."""
    n = C.shape[1]
    i = sigmoid(Z[:, :n])
    f = sigmoid(Z[:, n:2 * n])
    g = np.tanh(Z[:, 2 * n:3 * n])
    o = sigmoid(Z[:, 3 * n:])
    c_new = f * C + i * g
    tc = np.tanh(c_new)
    return i, f, g, o, c_new, tc, o * tc


def min_sq_dists(A, B):
    """Squared distance from every point of A to its nearest point in B, and back."""
    diff = A[:, None, :] - B[None, :, :]
    d2 = (diff * diff).sum(axis=-1)
    return d2.min(axis=1), d2.min(axis=0)


def convex_hull(P):
    """Andrew's monotone chain; CCW, collinear points dropped."""
    pts = sorted(set((float(x), float(y)) for x, y in P))
    if len(pts) <= 2:
        return np.array(pts, dtype=float).reshape(-1, 2)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=float)


def mbr(P):
    """Minimum-area oriented rectangle of a 2D point set.

    Returns ``(cx, cy, l, w, a)`` in canonical form: ``l >= w`` and ``a`` in
    [-pi/2, pi/2). Candidates are the rectangles flush with each hull edge.
    """
    hull = convex_hull(P)
    if len(hull) == 1:
        return hull[0, 0], hull[0, 1], 0.0, 0.0, 0.0
    nxt = np.roll(hull, -1, axis=0)
    E = nxt - hull
    lens = np.sqrt(E[:, 0] * E[:, 0] + E[:, 1] * E[:, 1])
    keep = lens > 0
    ux = E[keep, 0] / lens[keep]
    uy = E[keep, 1] / lens[keep]
    s = hull[:, 0][None, :] * ux[:, None] + hull[:, 1][None, :] * uy[:, None]
    t = hull[:, 0][None, :] * -uy[:, None] + hull[:, 1][None, :] * ux[:, None]
    smin, smax = s.min(axis=1), s.max(axis=1)
    tmin, tmax = t.min(axis=1), t.max(axis=1)

    best = None
    best_key = None
    min_area = np.inf
    cands = []
    for e in range(len(ux)):
        l = smax[e] - smin[e]
        w = tmax[e] - tmin[e]
        ms = 0.5 * (smax[e] + smin[e])
        mt = 0.5 * (tmax[e] + tmin[e])
        cx = ms * ux[e] - mt * uy[e]
        cy = ms * uy[e] + mt * ux[e]
        theta = math.atan2(uy[e], ux[e])
        if l < w:
            l, w = w, l
            theta += HALF_PI
        a = normalize_angle(theta)
        area = l * w
        cands.append((area, cx, cy, l, w, a))
        if area < min_area:
            min_area = area
    tol = AREA_TIE_RTOL * max(1.0, min_area)
    for area, cx, cy, l, w, a in cands:
        if area - min_area > tol:
            continue
        key = (abs(a), a)
        if best_key is None or key < best_key:
            best_key = key
            best = (cx, cy, l, w, a)
    return best


def _inside(px, py, ax, ay, bx, by):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax) >= 0.0


def _intersect(px, py, qx, qy, ax, ay, bx, by):
    # segment p->q against the infinite line a->b
    dx, dy = qx - px, qy - py
    ex, ey = bx - ax, by - ay
    den = dx * ey - dy * ex
    if den == 0.0:
        return px, py
    t = ((ax - px) * ey - (ay - py) * ex) / den
    return px + t * dx, py + t * dy


def clip_area(P, Q):
    """Area of the intersection of two convex CCW polygons (Sutherland-Hodgman)."""
    poly = [(float(x), float(y)) for x, y in P]
    m = len(Q)
    for k in range(m):
        if not poly:
            return 0.0
        ax, ay = Q[k]
        bx, by = Q[(k + 1) % m]
        out = []
        n = len(poly)
        for i in range(n):
            px, py = poly[i]
            qx, qy = poly[(i + 1) % n]
            p_in = _inside(px, py, ax, ay, bx, by)
            q_in = _inside(qx, qy, ax, ay, bx, by)
            if p_in:
                out.append((px, py))
                if not q_in:
                    out.append(_intersect(px, py, qx, qy, ax, ay, bx, by))
            elif q_in:
                out.append(_intersect(px, py, qx, qy, ax, ay, bx, by))
        poly = out
    if len(poly) < 3:
        return 0.0
    s = 0.0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        s += x0 * y1 - x1 * y0
    return abs(0.5 * s)
