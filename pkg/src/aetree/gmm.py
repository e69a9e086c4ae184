"""Density estimation and analysis of root latent codes.

EM-fitted Gaussian mixtures with full / diag / tied / spherical covariance,
ancestral sampling, a JSD-driven grid search over (components, covariance
type), PCA, clustering into layout typologies and linear interpolation.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.special import logsumexp

from ._blockfile import read_blocks, write_blocks
from .errors import ComponentCollapse, InvalidArgument

log = logging.getLogger(__name__)

COV_TYPES = ("full", "diag", "tied", "spherical")
COV_FLOOR = 1e-6
LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class GmmModel:
    weights: np.ndarray      # (K,)
    means: np.ndarray        # (K, D)
    covariances: np.ndarray  # full (K, D, D) | diag (K, D) | tied (D, D) | spherical (K,)
    cov_type: str
    reg: float = COV_FLOOR
    log_likelihoods: tuple = ()  # per-iteration mean log-likelihood from the fit

    @property
    def K(self) -> int:
        return len(self.weights)

    @property
    def D(self) -> int:
        return self.means.shape[1]

    def component_covariance(self, k: int) -> np.ndarray:
        if self.cov_type == "full":
            return self.covariances[k]
        if self.cov_type == "tied":
            return self.covariances
        if self.cov_type == "diag":
            return np.diag(self.covariances[k])
        return np.eye(self.D) * self.covariances[k]

    def log_joint(self, X) -> np.ndarray:
        """log(weight_k) + log N(x | component k), shape (N, K)."""
        X = np.asarray(X, dtype=float)
        N, D = X.shape
        out = np.empty((N, self.K))
        if self.cov_type in ("full", "tied"):
            for k in range(self.K):
                S = self.covariances[k] if self.cov_type == "full" else self.covariances
                L = cholesky(S, lower=True)
                y = solve_triangular(L, (X - self.means[k]).T, lower=True)
                maha = (y * y).sum(axis=0)
                logdet = 2.0 * np.log(np.diag(L)).sum()
                out[:, k] = -0.5 * (D * LOG_2PI + logdet + maha)
        elif self.cov_type == "diag":
            for k in range(self.K):
                var = self.covariances[k]
                diff = X - self.means[k]
                out[:, k] = -0.5 * (D * LOG_2PI + np.log(var).sum() + (diff * diff / var).sum(axis=1))
        else:
            for k in range(self.K):
                var = self.covariances[k]
                diff = X - self.means[k]
                out[:, k] = -0.5 * (D * LOG_2PI + D * math.log(var) + (diff * diff).sum(axis=1) / var)
        with np.errstate(divide="ignore"):
            return out + np.log(self.weights)

    def score(self, X) -> float:
        """Mean log-likelihood per sample."""
        return float(logsumexp(self.log_joint(X), axis=1).mean())

    def responsibilities(self, X) -> np.ndarray:
        lj = self.log_joint(X)
        return np.exp(lj - logsumexp(lj, axis=1, keepdims=True))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.log_joint(X), axis=1)


def kmeans_pp(X, K, rng) -> np.ndarray:
    """k-means++ seeding: indices of K rows of X."""
    N = len(X)
    idx = [int(rng.integers(N))]
    d2 = ((X - X[idx[0]]) ** 2).sum(axis=1)
    for _ in range(1, K):
        total = d2.sum()
        if total <= 0:
            nxt = int(rng.integers(N))
        else:
            nxt = int(rng.choice(N, p=d2 / total))
        idx.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    return np.array(idx)


def _m_step(X, resp, cov_type, reg):
    N, D = X.shape
    Nk = resp.sum(axis=0)
    weights = Nk / N
    means = (resp.T @ X) / Nk[:, None]
    K = len(Nk)
    if cov_type == "full":
        cov = np.empty((K, D, D))
        for k in range(K):
            diff = X - means[k]
            cov[k] = (resp[:, k, None] * diff).T @ diff / Nk[k]
            cov[k].flat[:: D + 1] += reg
    elif cov_type == "tied":
        cov = np.zeros((D, D))
        for k in range(K):
            diff = X - means[k]
            cov += (resp[:, k, None] * diff).T @ diff
        cov /= N
        cov.flat[:: D + 1] += reg
    elif cov_type == "diag":
        cov = np.empty((K, D))
        for k in range(K):
            diff = X - means[k]
            cov[k] = (resp[:, k, None] * diff * diff).sum(axis=0) / Nk[k] + reg
    else:
        cov = np.empty(K)
        for k in range(K):
            diff = X - means[k]
            cov[k] = (resp[:, k] * (diff * diff).sum(axis=1)).sum() / (Nk[k] * D) + reg
    return weights, means, cov


def gmm_fit(latents, K: int, cov_type: str = "full", seed: int = 0, tol: float = 1e-6,
            max_iter: int = 500, reg: float = COV_FLOOR) -> GmmModel:
    """Fit a K-component mixture by EM in log space.

    Seeded k-means++ centers give the initial hard assignment. Iteration
    stops when the mean log-likelihood improves by less than ``tol`` or after
    ``max_iter`` E-steps. A component whose responsibility mass vanishes is
    re-seeded once at the worst-explained sample; a second collapse raises
    :class:`ComponentCollapse`.
    """
    X = np.asarray(latents, dtype=float)
    if X.ndim != 2 or not np.isfinite(X).all():
        raise InvalidArgument("latents must be a finite (N, D) array")
    N, D = X.shape
    if cov_type not in COV_TYPES:
        raise InvalidArgument(f"cov_type must be one of {COV_TYPES}")
    if not 1 <= K < N:
        raise InvalidArgument(f"need N > K >= 1, got N={N}, K={K}")
    rng = np.random.default_rng(seed)
    centers = X[kmeans_pp(X, K, rng)]
    d2 = ((X[:, None, :] - centers[None]) ** 2).sum(axis=-1)
    resp = np.zeros((N, K))
    resp[np.arange(N), np.argmin(d2, axis=1)] = 1.0
    resp += 10 * np.finfo(float).eps
    model = GmmModel(*_m_step(X, resp, cov_type, reg), cov_type, reg)
    history = []
    reseeded = set()
    for _ in range(max_iter):
        lj = model.log_joint(X)
        lse = logsumexp(lj, axis=1, keepdims=True)
        ll = float(lse.mean())
        converged = bool(history) and ll - history[-1] < tol
        history.append(ll)
        resp = np.exp(lj - lse)
        Nk = resp.sum(axis=0)
        # a collapsed component is never accepted, converged or not
        dead = np.flatnonzero(Nk < 1e-8 * N)
        if converged and len(dead) == 0:
            break
        for k in dead:
            if k in reseeded:
                raise ComponentCollapse(f"component {k} collapsed twice")
            reseeded.add(int(k))
            worst = int(np.argmin(lse[:, 0]))
            log.warning("re-seeding collapsed component %d at sample %d", k, worst)
            resp[worst] = 0.0
            resp[worst, k] = 1.0
        model = GmmModel(*_m_step(X, resp, cov_type, reg), cov_type, reg)
    model.log_likelihoods = tuple(history)
    return model


def gmm_sample(model: GmmModel, n: int, seed: int = 0) -> np.ndarray:
    """Ancestral sampling: a component by weight, then its Gaussian."""
    rng = np.random.default_rng(seed)
    comp = rng.choice(model.K, size=n, p=model.weights / model.weights.sum())
    z = rng.standard_normal((n, model.D))
    out = np.empty((n, model.D))
    for k in range(model.K):
        rows = np.flatnonzero(comp == k)
        if len(rows) == 0:
            continue
        if model.cov_type in ("full", "tied"):
            L = np.linalg.cholesky(model.component_covariance(k))
            out[rows] = model.means[k] + z[rows] @ L.T
        elif model.cov_type == "diag":
            out[rows] = model.means[k] + z[rows] * np.sqrt(model.covariances[k])
        else:
            out[rows] = model.means[k] + z[rows] * math.sqrt(model.covariances[k])
    return out


def gmm_grid_search(latents, component_grid, cov_types, evaluate, seed: int = 0):
    """Fit every (K, covariance type) cell and score it with ``evaluate(model) -> JSD``.

    Returns ``(rows, best, best_model)``: rows are ``(K, cov_type, jsd)`` in
    grid order and ``best`` is the lowest-JSD row (first one on ties).
    """
    component_grid, cov_types = list(component_grid), list(cov_types)
    if not component_grid or not cov_types:
        raise InvalidArgument("grid search needs non-empty grids")
    rows = []
    models = {}
    for cov_type in cov_types:
        for K in component_grid:
            model = gmm_fit(latents, int(K), cov_type, seed)
            score = float(evaluate(model))
            rows.append((int(K), cov_type, score))
            models[(int(K), cov_type)] = model
    best = min(rows, key=lambda r: r[2])
    return rows, best, models[best[:2]]


def write_grid_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["K", "cov_type", "JSD"])
        for K, ct, v in rows:
            w.writerow([K, ct, repr(v)])


def save_gmm(path, model: GmmModel) -> None:
    meta = {"cov_type": model.cov_type, "K": model.K, "D": model.D, "reg": model.reg}
    write_blocks(path, "gmm", meta, {"weights": model.weights, "means": model.means,
                                     "covariances": model.covariances})


def load_gmm(path) -> GmmModel:
    meta, b = read_blocks(path, "gmm")
    return GmmModel(b["weights"], b["means"], b["covariances"], meta["cov_type"], meta["reg"])


# --------------------------------------------------------------------- PCA

@dataclass
class PcaModel:
    mean: np.ndarray                # (D,)
    components: np.ndarray          # (d, D) orthonormal rows
    explained_variance: np.ndarray  # (d,)
    total_variance: float

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        return self.explained_variance / self.total_variance


def pca_fit(latents, d: int) -> PcaModel:
    """Centered PCA by eigendecomposition of the (1/N) covariance.

    Components come in descending eigenvalue order, each signed so that its
    largest-magnitude entry is positive.
    """
    X = np.asarray(latents, dtype=float)
    N, D = X.shape
    if not 1 <= d <= min(N, D):
        raise InvalidArgument(f"d must be in [1, {min(N, D)}], got {d}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / N
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order].T
    for r in range(len(vecs)):
        j = np.argmax(np.abs(vecs[r]))
        if vecs[r, j] < 0:
            vecs[r] = -vecs[r]
    return PcaModel(mean, vecs[:d].copy(), vals[:d].copy(), float(vals.sum()))


def pca_project(model: PcaModel, latents) -> np.ndarray:
    return (np.asarray(latents, dtype=float) - model.mean) @ model.components.T


def pca_reconstruct(model: PcaModel, codes) -> np.ndarray:
    return np.asarray(codes, dtype=float) @ model.components + model.mean


def save_pca(path, model: PcaModel) -> None:
    write_blocks(path, "pca", {"total_variance": model.total_variance},
                 {"mean": model.mean, "components": model.components,
                  "explained_variance": model.explained_variance})


def load_pca(path) -> PcaModel:
    meta, b = read_blocks(path, "pca")
    return PcaModel(b["mean"], b["components"], b["explained_variance"], meta["total_variance"])


# -------------------------------------------------------------- clustering

FEATURE_NAMES = ("area", "perimeter", "lw_ratio", "rotation", "std_area", "std_perimeter", "std_rotation")


def layout_features(cuboids) -> np.ndarray:
    """Mean area, perimeter, length/width ratio and rotation, plus std of area, perimeter, rotation."""
    C = np.asarray(cuboids, dtype=float).reshape(-1, 6)
    area = C[:, 2] * C[:, 3]
    perim = 2.0 * (C[:, 2] + C[:, 3])
    wpos = C[:, 3] > 0
    ratio = C[wpos, 2] / C[wpos, 3] if wpos.any() else np.zeros(1)
    rot = C[:, 5]
    return np.array([area.mean(), perim.mean(), ratio.mean(), rot.mean(),
                     area.std(), perim.std(), rot.std()])


def minmax_columns(T) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    lo = np.nanmin(T, axis=0)
    span = np.nanmax(T, axis=0) - lo
    return np.where(span > 0, (T - lo) / np.where(span > 0, span, 1.0), 0.0)


@dataclass
class ClusterResult:
    labels: np.ndarray
    features: np.ndarray       # (K, 7) mean per-layout features of each cluster
    normalized: np.ndarray     # same, each column min-max scaled to [0, 1]
    composition: np.ndarray    # (K,) share of layouts per cluster
    pca: PcaModel
    gmm: GmmModel


def cluster_latents(latents, layouts, d: int = 50, K: int = 11, seed: int = 0) -> ClusterResult:
    """PCA to ``d`` dims, full-covariance mixture with K groups, hard labels.

    ``layouts`` (scene-unit cuboid arrays, one per latent) feed the
    per-cluster geometric feature table.
    """
    X = np.asarray(latents, dtype=float)
    if len(layouts) != len(X):
        raise InvalidArgument("one layout per latent is required")
    pca = pca_fit(X, d)
    codes = pca_project(pca, X)
    gmm = gmm_fit(codes, K, "full", seed) if K > 1 else _single_component(codes)
    labels = gmm.predict(codes)
    F = np.array([layout_features(c) for c in layouts])
    table = np.full((K, len(FEATURE_NAMES)), np.nan)
    for k in range(K):
        members = labels == k
        if members.any():
            table[k] = F[members].mean(axis=0)
    comp = np.bincount(labels, minlength=K) / len(labels)
    return ClusterResult(labels, table, minmax_columns(table), comp, pca, gmm)


def _single_component(X) -> GmmModel:
    w, m, c = _m_step(X, np.ones((len(X), 1)), "full", COV_FLOOR)
    return GmmModel(w, m, c, "full")


def composition_deviation(labels, regions, K: int) -> dict:
    """Percentage-point difference of each region's cluster shares from the global shares."""
    labels = np.asarray(labels)
    base = np.bincount(labels, minlength=K) / len(labels)
    out = {}
    regions = np.asarray(regions)
    for r in sorted(set(regions.tolist())):
        sel = labels[regions == r]
        out[r] = 100.0 * (np.bincount(sel, minlength=K) / len(sel) - base)
    return out


def interpolate(latent_s, latent_t, steps: int) -> np.ndarray:
    """Evenly spaced convex combinations from s to t, both endpoints included."""
    s, t = np.asarray(latent_s, dtype=float), np.asarray(latent_t, dtype=float)
    if s.shape != t.shape:
        raise InvalidArgument(f"latent shapes differ: {s.shape} vs {t.shape}")
    if steps < 2:
        raise InvalidArgument("steps must be >= 2")
    alpha = np.linspace(0.0, 1.0, steps)
    out = (1.0 - alpha)[:, None] * s[None] + alpha[:, None] * t[None]
    out[0], out[-1] = s, t
    return out
