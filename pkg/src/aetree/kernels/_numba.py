"""numba-compiled kernels; loop-for-loop twins of ``_numpy``."""
import math

import numba as nb
import numpy as np

njit_kwargs = {
    "nogil": True,
    "fastmath": False,  # reassociation would break batch-independent sums
    "cache": True,
}

HALF_PI = 0.5 * math.pi
AREA_TIE_RTOL = 1e-12


@nb.njit(**njit_kwargs)
def normalize_angle(a):
    r = a - math.pi * math.floor((a + HALF_PI) / math.pi)
    if r >= HALF_PI:
        r -= math.pi
    elif r < -HALF_PI:
        r += math.pi
    return r


@nb.njit(**njit_kwargs)
def affine(X, W, b):
    n, k_in = X.shape
    m = W.shape[1]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            out[i, j] = b[j]
        for k in range(k_in):
            xv = X[i, k]
            for j in range(m):
                out[i, j] += xv * W[k, j]
    return out


@nb.njit(**njit_kwargs)
def _sigmoid(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@nb.njit(**njit_kwargs)
def lstm_pointwise(Z, C):
    n_rows, n = C.shape
    i = np.empty((n_rows, n))
    f = np.empty((n_rows, n))
    g = np.empty((n_rows, n))
    o = np.empty((n_rows, n))
    c_new = np.empty((n_rows, n))
    tc = np.empty((n_rows, n))
    h_new = np.empty((n_rows, n))
    for r in range(n_rows):
        for j in range(n):
            i[r, j] = _sigmoid(Z[r, j])
            f[r, j] = _sigmoid(Z[r, n + j])
            g[r, j] = math.tanh(Z[r, 2 * n + j])
            o[r, j] = _sigmoid(Z[r, 3 * n + j])
            c_new[r, j] = f[r, j] * C[r, j] + i[r, j] * g[r, j]
            tc[r, j] = math.tanh(c_new[r, j])
            h_new[r, j] = o[r, j] * tc[r, j]
    return i, f, g, o, c_new, tc, h_new


@nb.njit(**njit_kwargs)
def min_sq_dists(A, B):
    na, dim = A.shape
    nb_ = B.shape[0]
    da = np.full(na, np.inf)
    db = np.full(nb_, np.inf)
    for i in range(na):
        for j in range(nb_):
            s = 0.0
            for k in range(dim):
                d = A[i, k] - B[j, k]
                s += d * d
            if s < da[i]:
                da[i] = s
            if s < db[j]:
                db[j] = s
    return da, db


@nb.njit(**njit_kwargs)
def _cross(ox, oy, ax, ay, bx, by):
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


@nb.njit(**njit_kwargs)
def convex_hull(P):
    n = P.shape[0]
    # lexicographic (x, y) order via two stable sorts
    o1 = np.argsort(P[:, 1], kind="mergesort")
    o2 = np.argsort(P[o1, 0], kind="mergesort")
    order = o1[o2]
    pts = np.empty((n, 2))
    m = 0
    for idx in order:
        x, y = P[idx, 0], P[idx, 1]
        if m > 0 and pts[m - 1, 0] == x and pts[m - 1, 1] == y:
            continue
        pts[m, 0] = x
        pts[m, 1] = y
        m += 1
    if m <= 2:
        return pts[:m].copy()
    hull = np.empty((2 * m, 2))
    k = 0
    for i in range(m):
        while k >= 2 and _cross(hull[k - 2, 0], hull[k - 2, 1], hull[k - 1, 0], hull[k - 1, 1],
                                pts[i, 0], pts[i, 1]) <= 0.0:
            k -= 1
        hull[k] = pts[i]
        k += 1
    lower_end = k + 1
    for i in range(m - 2, -1, -1):
        while k >= lower_end and _cross(hull[k - 2, 0], hull[k - 2, 1], hull[k - 1, 0], hull[k - 1, 1],
                                        pts[i, 0], pts[i, 1]) <= 0.0:
            k -= 1
        hull[k] = pts[i]
        k += 1
    return hull[:k - 1].copy()


@nb.njit(**njit_kwargs)
def mbr(P):
    hull = convex_hull(P)
    m = hull.shape[0]
    if m == 1:
        return hull[0, 0], hull[0, 1], 0.0, 0.0, 0.0
    cand = np.empty((m, 6))
    nc = 0
    min_area = np.inf
    for e in range(m):
        ex = hull[(e + 1) % m, 0] - hull[e, 0]
        ey = hull[(e + 1) % m, 1] - hull[e, 1]
        ln = math.sqrt(ex * ex + ey * ey)
        if ln <= 0.0:
            continue
        ux = ex / ln
        uy = ey / ln
        smin = np.inf
        smax = -np.inf
        tmin = np.inf
        tmax = -np.inf
        for p in range(m):
            s = hull[p, 0] * ux + hull[p, 1] * uy
            t = hull[p, 0] * -uy + hull[p, 1] * ux
            smin = min(smin, s)
            smax = max(smax, s)
            tmin = min(tmin, t)
            tmax = max(tmax, t)
        l = smax - smin
        w = tmax - tmin
        ms = 0.5 * (smax + smin)
        mt = 0.5 * (tmax + tmin)
        theta = math.atan2(uy, ux)
        if l < w:
            l, w = w, l
            theta += HALF_PI
        area = l * w
        cand[nc, 0] = area
        cand[nc, 1] = ms * ux - mt * uy
        cand[nc, 2] = ms * uy + mt * ux
        cand[nc, 3] = l
        cand[nc, 4] = w
        cand[nc, 5] = normalize_angle(theta)
        if area < min_area:
            min_area = area
        nc += 1
    tol = AREA_TIE_RTOL * max(1.0, min_area)
    best = -1
    for c in range(nc):
        if cand[c, 0] - min_area > tol:
            continue
        if best < 0:
            best = c
            continue
        a, b = cand[c, 5], cand[best, 5]
        if abs(a) < abs(b) or (abs(a) == abs(b) and a < b):
            best = c
    return cand[best, 1], cand[best, 2], cand[best, 3], cand[best, 4], cand[best, 5]


@nb.njit(**njit_kwargs)
def clip_area(P, Q):
    cap = P.shape[0] + Q.shape[0] + 4
    cur = np.empty((cap * 2, 2))
    nxt = np.empty((cap * 2, 2))
    n = P.shape[0]
    for i in range(n):
        cur[i] = P[i]
    m = Q.shape[0]
    for k in range(m):
        if n == 0:
            return 0.0
        ax, ay = Q[k, 0], Q[k, 1]
        bx, by = Q[(k + 1) % m, 0], Q[(k + 1) % m, 1]
        ex, ey = bx - ax, by - ay
        cnt = 0
        for i in range(n):
            px, py = cur[i, 0], cur[i, 1]
            qx, qy = cur[(i + 1) % n, 0], cur[(i + 1) % n, 1]
            p_in = ex * (py - ay) - ey * (px - ax) >= 0.0
            q_in = ex * (qy - ay) - ey * (qx - ax) >= 0.0
            if p_in:
                nxt[cnt, 0] = px
                nxt[cnt, 1] = py
                cnt += 1
            if p_in != q_in:
                dx, dy = qx - px, qy - py
                den = dx * ey - dy * ex
                if den == 0.0:
                    ix, iy = px, py
                else:
                    t = ((ax - px) * ey - (ay - py) * ex) / den
                    ix, iy = px + t * dx, py + t * dy
                nxt[cnt, 0] = ix
                nxt[cnt, 1] = iy
                cnt += 1
        cur, nxt = nxt, cur
        n = cnt
    if n < 3:
        return 0.0
    s = 0.0
    for i in range(n):
        s += cur[i, 0] * cur[(i + 1) % n, 1] - cur[(i + 1) % n, 0] * cur[i, 1]
    return abs(0.5 * s)
