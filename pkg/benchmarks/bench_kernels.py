"""Time the numba kernels against the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--quick]

Each kernel is called once per backend before timing so JIT compilation is
excluded. Prints one line per kernel with the best-of-N time per backend and
the speedup, and checks that both backends agree on the inputs used.
"""
import argparse
import math
import time

import numpy as np

from aetree.kernels import get_backend


def best_of(fn, repeat):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng, scale):
    n = 64 * scale
    X, W, b = rng.normal(size=(n, 6 + 4 * 64)), rng.normal(size=(6 + 4 * 64, 512)), rng.normal(size=512)
    Z, C = rng.normal(size=(n, 256)), rng.normal(size=(n, 64))
    A, B = rng.normal(size=(128 * scale, 2)), rng.normal(size=(128 * scale, 2))
    P = rng.normal(size=(16, 2))
    quads = []
    for _ in range(200):
        c1, c2 = rng.normal(size=2), rng.normal(size=2)
        t = np.linspace(0, 2 * np.pi, 5)[:-1]
        quads.append((np.column_stack([c1[0] + np.cos(t + 0.3), c1[1] + np.sin(t + 0.3)]),
                      np.column_stack([c2[0] + np.cos(t), c2[1] + np.sin(t)])))
    angles = rng.uniform(-50, 50, 2000)
    return {
        "affine": lambda k: k.affine(X, W, b),
        "lstm_pointwise": lambda k: k.lstm_pointwise(Z, C),
        "min_sq_dists": lambda k: k.min_sq_dists(A, B),
        "convex_hull": lambda k: [k.convex_hull(P) for _ in range(200)],
        "mbr": lambda k: [k.mbr(P) for _ in range(200)],
        "clip_area": lambda k: [k.clip_area(p, q) for p, q in quads],
        "normalize_angle": lambda k: [k.normalize_angle(float(a)) for a in angles],
    }


def agree(a, b):
    if isinstance(a, tuple):
        return all(agree(x, y) for x, y in zip(a, b))
    if isinstance(a, list):
        return all(agree(x, y) for x, y in zip(a, b))
    return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), atol=1e-12)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="small inputs, for smoke runs")
    args = ap.parse_args(argv)
    backends = {name: get_backend(name) for name in ("numpy", "numba")}
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16} {'numpy (ms)':>11} {'numba (ms)':>11} {'speedup':>8}  agree")
    for name, fn in cases(rng, 1 if args.quick else 8).items():
        out = {b: fn(k) for b, k in backends.items()}  # warm-up and JIT compile
        t = {b: best_of(lambda k=k: fn(k), args.repeat) for b, k in backends.items()}
        print(f"{name:<16} {1e3 * t['numpy']:>11.3f} {1e3 * t['numba']:>11.3f} "
              f"{t['numpy'] / t['numba']:>7.1f}x  {agree(out['numpy'], out['numba'])}")


if __name__ == "__main__":
    main()
