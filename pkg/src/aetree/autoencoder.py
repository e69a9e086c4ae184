"""Tree-structured LSTM autoencoder over spatial trees.

Encoding runs one shared LSTM cell on every child and sums the two updated
(h, c) pairs into the parent. Decoding lifts a parent's (h, c) to twice the
width, runs a second LSTM cell on ``[params, h, c]`` from that lifted state,
and splits the result into left/right halves; a linear head maps each half
to 6 geometric parameters plus a leaf logit.

Gradients are computed by an explicit reverse pass over cached level
activations; every forward op below has a matching adjoint in
``_backward``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import kernels
from ._blockfile import read_blocks, write_blocks
from .errors import InvalidArgument, TrainingDiverged
from .tree import SpatialTree
from .geometry import normalize_angle

log = logging.getLogger(__name__)

N_PARAMS = 6
HEAD_OUT = N_PARAMS + 1
PARAM_NAMES = ("enc.W", "enc.b", "dec.W", "dec.b", "lift_h.W", "lift_h.b",
               "lift_c.W", "lift_c.b", "head.W", "head.b")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    lr_halving_period_steps: int = 400
    batch_size_sets: int = 50
    level_weight_gamma: float = 0.8
    bce_weight: float = 1.0
    max_epochs: int = 100
    max_steps: int = 0  # 0: no step limit
    rng_seed: int = 0
    hidden_size: int = 256
    representation: str = "relative"  # or "absolute" (ablation)
    checkpoint_every: int = 1  # epochs

    def __post_init__(self):
        if not (0 < self.level_weight_gamma <= 1):
            raise InvalidArgument("level_weight_gamma must be in (0, 1]")
        for name in ("learning_rate", "lr_halving_period_steps", "batch_size_sets",
                     "max_epochs", "hidden_size", "checkpoint_every"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be positive")
        if self.bce_weight < 0 or self.max_steps < 0:
            raise InvalidArgument("bce_weight and max_steps must be >= 0")
        if self.representation not in ("relative", "absolute"):
            raise InvalidArgument(f"unknown representation {self.representation!r}")

    def lr_at(self, step: int) -> float:
        return self.learning_rate * 0.5 ** (step // self.lr_halving_period_steps)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name: f.type for f in fields(cls)}
        kw = {}
        for k, v in d.items():
            if k not in names:
                raise InvalidArgument(f"unknown training option {k!r}")
            default = getattr(cls, k)
            kw[k] = type(default)(v)
        return cls(**kw)


@dataclass
class NodeFeature:
    hidden: np.ndarray
    cell: np.ndarray

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.hidden, self.cell])

    @classmethod
    def from_vector(cls, v) -> "NodeFeature":
        v = np.asarray(v, dtype=float)
        if v.ndim != 1 or v.size % 2:
            raise InvalidArgument("feature vector must be 1-D with even length")
        n = v.size // 2
        return cls(v[:n].copy(), v[n:].copy())


class AETreeModel:
    """Parameter container. ``params`` maps names in :data:`PARAM_NAMES` to arrays."""

    def __init__(self, params: dict, hidden_size: int, representation: str = "relative",
                 root_prior=None, max_depth: int = 16):
        self.params = params
        self.H = int(hidden_size)
        self.representation = representation
        self.root_prior = np.zeros(N_PARAMS) if root_prior is None else np.asarray(root_prior, float)
        self.max_depth = int(max_depth)
        self._check_shapes()

    def _check_shapes(self):
        H = self.H
        want = {
            "enc.W": (N_PARAMS + H, 4 * H), "enc.b": (4 * H,),
            "dec.W": (N_PARAMS + 4 * H, 8 * H), "dec.b": (8 * H,),
            "lift_h.W": (H, 2 * H), "lift_h.b": (2 * H,),
            "lift_c.W": (H, 2 * H), "lift_c.b": (2 * H,),
            "head.W": (H, HEAD_OUT), "head.b": (HEAD_OUT,),
        }
        for name, shape in want.items():
            if name not in self.params or self.params[name].shape != shape:
                got = None if name not in self.params else self.params[name].shape
                raise InvalidArgument(f"parameter {name}: expected {shape}, got {got}")

    @classmethod
    def init(cls, hidden_size: int = 256, seed: int = 0, representation: str = "relative"):
        rng = np.random.default_rng(seed)
        H = hidden_size

        def affine(fan_in, fan_out):
            k = 1.0 / math.sqrt(fan_in)
            return rng.uniform(-k, k, (fan_in, fan_out)), rng.uniform(-k, k, fan_out)

        p = {}
        p["enc.W"], p["enc.b"] = affine(N_PARAMS + H, 4 * H)
        p["dec.W"], p["dec.b"] = affine(N_PARAMS + 4 * H, 8 * H)
        p["lift_h.W"], p["lift_h.b"] = affine(H, 2 * H)
        p["lift_c.W"], p["lift_c.b"] = affine(H, 2 * H)
        p["head.W"], p["head.b"] = affine(H, HEAD_OUT)
        p["enc.b"][H:2 * H] += 1.0
        p["dec.b"][2 * H:4 * H] += 1.0
        return cls(p, H, representation)

    @classmethod
    def zeros(cls, hidden_size: int):
        m = cls.init(hidden_size)
        for v in m.params.values():
            v[...] = 0.0
        return m

    def copy(self) -> "AETreeModel":
        return AETreeModel({k: v.copy() for k, v in self.params.items()}, self.H,
                           self.representation, self.root_prior.copy(), self.max_depth)

    @property
    def latent_dim(self) -> int:
        return 2 * self.H

    def n_parameters(self) -> int:
        return sum(v.size for v in self.params.values())


# ----------------------------------------------------------------- primitives

def lstm_cell_forward(x, h, c, W, b):
    """Standard LSTM cell with gates ordered (i, f, g, o) along ``W``'s columns.

    ``x``, ``h``, ``c`` are single vectors or row batches; ``W`` has shape
    ``(dim x + dim h, 4 * dim h)``.
    """
    single = np.ndim(h) == 1
    x, h, c = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (x, h, c))
    n = h.shape[1]
    if c.shape != h.shape or x.shape[0] != h.shape[0]:
        raise InvalidArgument("x, h, c batch shapes disagree")
    if W.shape != (x.shape[1] + n, 4 * n) or b.shape != (4 * n,):
        raise InvalidArgument(f"LSTM weight shape {W.shape} does not fit inputs")
    Z = kernels.affine(np.hstack([x, h]), W, b)
    *_, c_new, _, h_new = kernels.lstm_pointwise(Z, c)
    if single:
        return h_new[0], c_new[0]
    return h_new, c_new


def _lstm_backward(cache, dH, dC):
    """Adjoint of ``lstm_pointwise``: returns (dZ, dC_prev)."""
    i, f, g, o, c_prev, tc = cache
    dc = dC + dH * o * (1.0 - tc * tc)
    di = dc * g
    df = dc * c_prev
    dg = dc * i
    do = dH * tc
    dZ = np.hstack([di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g * g), do * o * (1.0 - o)])
    return dZ, dc * f


# ---------------------------------------------------------------- batching

@dataclass
class Batch:
    """A forest flattened into one node table with global indices."""

    P: np.ndarray           # (n, 6) decoder/encoder input parameters per node
    leaf: np.ndarray        # (n,) 1.0 for leaves
    levels: list            # per height: (rows, 3) global (left, right, parent)
    roots: np.ndarray       # (T,) global root index per tree
    weight: np.ndarray      # (n,) loss weight per node, 0 at roots
    offsets: np.ndarray     # (T,) first global index per tree


def level_weights(depths: np.ndarray, gamma: float) -> np.ndarray:
    """Per-node weight gamma**depth normalized over the tree's levels; roots get 0."""
    M = int(depths.max())
    norm = sum(gamma ** d for d in range(1, M + 1))
    w = np.array([gamma ** d / norm if d > 0 else 0.0 for d in depths])
    return w


def make_batch(trees, representation: str = "relative", gamma: float = 0.8) -> Batch:
    if not trees:
        raise InvalidArgument("empty forest")
    Ps, leafs, weights, roots, offsets = [], [], [], [], []
    n_levels = max(len(t.levels) for t in trees)
    levels = [[] for _ in range(n_levels)]
    off = 0
    for t in trees:
        src = t.relative if representation == "relative" else t.absolute
        P = src.copy()
        P[t.root] = t.absolute[t.root]
        Ps.append(P)
        leafs.append(t.is_leaf.astype(float))
        weights.append(level_weights(t.depths(), gamma))
        for h, rows in enumerate(t.levels):
            levels[h].append(rows + off)
        roots.append(off + t.root)
        offsets.append(off)
        off += t.n_nodes
    return Batch(
        np.vstack(Ps), np.concatenate(leafs),
        [np.vstack(lv) for lv in levels],
        np.array(roots), np.concatenate(weights), np.array(offsets),
    )


# ----------------------------------------------------------------- encoder

def encode_level(P_children, h_children, c_children, model: AETreeModel, cache=None):
    """One merge step for R parents at once.

    Inputs are stacked ``[left rows; right rows]`` (2R rows). Returns the
    parents' ``(h, c)``, each the sum of the two updated children.
    """
    p = model.params
    X = np.hstack([P_children, h_children])
    Z = kernels.affine(X, p["enc.W"], p["enc.b"])
    i, f, g, o, c_new, tc, h_new = kernels.lstm_pointwise(Z, c_children)
    R = len(X) // 2
    if cache is not None:
        cache.append((X, (i, f, g, o, c_children, tc)))
    return h_new[:R] + h_new[R:], c_new[:R] + c_new[R:]


def _encode(batch: Batch, model: AETreeModel, caches=None):
    n = len(batch.P)
    h = np.zeros((n, model.H))
    c = np.zeros((n, model.H))
    for rows in batch.levels:
        ch = np.concatenate([rows[:, 0], rows[:, 1]])
        hp, cp = encode_level(batch.P[ch], h[ch], c[ch], model, caches)
        h[rows[:, 2]] = hp
        c[rows[:, 2]] = cp
    return h, c


def encode_forest(trees, model: AETreeModel) -> np.ndarray:
    """Root latent codes ``[h, c]`` of every tree, shape (T, 2H)."""
    batch = make_batch(list(trees), model.representation)
    h, c = _encode(batch, model)
    return np.hstack([h[batch.roots], c[batch.roots]])


def encode_tree(tree: SpatialTree, model: AETreeModel) -> NodeFeature:
    v = encode_forest([tree], model)[0]
    return NodeFeature.from_vector(v)


# ----------------------------------------------------------------- decoder

def _decode_rows(P_parent, hf, cf, model: AETreeModel, cache=None):
    """Batched decoder step: returns (head outputs (2R, 7), h children (2R, H), c children)."""
    p, H = model.params, model.H
    h0 = kernels.affine(hf, p["lift_h.W"], p["lift_h.b"])
    c0 = kernels.affine(cf, p["lift_c.W"], p["lift_c.b"])
    X = np.hstack([P_parent, hf, cf, h0])
    Z = kernels.affine(X, p["dec.W"], p["dec.b"])
    i, f, g, o, c_new, tc, h_new = kernels.lstm_pointwise(Z, c0)
    h_ch = np.vstack([h_new[:, :H], h_new[:, H:]])
    c_ch = np.vstack([c_new[:, :H], c_new[:, H:]])
    out = kernels.affine(h_ch, p["head.W"], p["head.b"])
    if cache is not None:
        cache.append((hf, cf, X, (i, f, g, o, c0, tc), h_ch))
    return out, h_ch, c_ch


def decode_step(parent_params, parent_feature: NodeFeature, model: AETreeModel):
    """Decode one parent into ``((params, logit, feature), (params, logit, feature))``."""
    P = np.asarray(parent_params, dtype=float).reshape(1, -1)
    if P.shape[1] != N_PARAMS or parent_feature.hidden.shape != (model.H,):
        raise InvalidArgument("decode_step input shapes do not match the model")
    out, h_ch, c_ch = _decode_rows(P, parent_feature.hidden[None], parent_feature.cell[None], model)
    return tuple(
        (out[k, :N_PARAMS].copy(), float(out[k, N_PARAMS]), NodeFeature(h_ch[k].copy(), c_ch[k].copy()))
        for k in (0, 1)
    )


def _decode_teacher(batch: Batch, model: AETreeModel, root_h, root_c, caches=None):
    n = len(batch.P)
    dh = np.zeros((n, model.H))
    dc = np.zeros((n, model.H))
    dh[batch.roots] = root_h
    dc[batch.roots] = root_c
    pred = np.full((n, HEAD_OUT), np.nan)
    for rows in reversed(batch.levels):
        par = rows[:, 2]
        out, h_ch, c_ch = _decode_rows(batch.P[par], dh[par], dc[par], model, caches)
        ch = np.concatenate([rows[:, 0], rows[:, 1]])
        dh[ch] = h_ch
        dc[ch] = c_ch
        pred[ch] = out
    return pred


def decode_teacher_forced(tree: SpatialTree, root_feature: NodeFeature, model: AETreeModel) -> np.ndarray:
    """Per-node head outputs (n_nodes, 7) with ground-truth parent parameters as input.

    Row k holds the predicted parameters and leaf logit of node k; the root
    row is NaN.
    """
    batch = make_batch([tree], model.representation)
    return _decode_teacher(batch, model, root_feature.hidden[None], root_feature.cell[None])


# -------------------------------------------------------------------- loss

def _softplus(z):
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _sigmoid(z):
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def loss_terms(pred, target, leaf, weight, bce_weight):
    """Weighted L1 + BCE loss and its gradient with respect to ``pred``.

    Rows with zero weight (roots) contribute nothing.
    """
    mask = weight > 0
    d = pred[mask, :N_PARAMS] - target[mask]
    z = pred[mask, N_PARAMS]
    L = leaf[mask]
    w = weight[mask]
    per_node = np.abs(d).sum(axis=1) + bce_weight * (_softplus(z) - L * z)
    total = float(np.dot(w, per_node))
    grad = np.zeros_like(pred)
    grad[mask, :N_PARAMS] = w[:, None] * np.sign(d)
    grad[mask, N_PARAMS] = w * bce_weight * (_sigmoid(z) - L)
    return total, grad


def loss(tree: SpatialTree, predictions, config: TrainConfig) -> float:
    """Loss of one tree's per-node predictions (as from :func:`decode_teacher_forced`)."""
    batch = make_batch([tree], config.representation, config.level_weight_gamma)
    total, _ = loss_terms(np.asarray(predictions), batch.P, batch.leaf, batch.weight, config.bce_weight)
    return total


def _backward(model, batch, enc_caches, dec_caches, dpred):
    p, H = model.params, model.H
    g = {k: np.zeros_like(v) for k, v in p.items()}
    n = len(batch.P)
    dh = np.zeros((n, H))
    dc = np.zeros((n, H))
    # decoder: forward ran from the top level down, so walk caches backwards
    for rows, (hf, cf, X, lcache, h_ch) in zip(batch.levels, reversed(dec_caches)):
        R = len(rows)
        ch = np.concatenate([rows[:, 0], rows[:, 1]])
        d_out = dpred[ch]
        g["head.W"] += h_ch.T @ d_out
        g["head.b"] += d_out.sum(axis=0)
        dh_ch = dh[ch] + d_out @ p["head.W"].T
        dc_ch = dc[ch]
        dH = np.hstack([dh_ch[:R], dh_ch[R:]])
        dC = np.hstack([dc_ch[:R], dc_ch[R:]])
        dZ, dc0 = _lstm_backward(lcache, dH, dC)
        g["dec.W"] += X.T @ dZ
        g["dec.b"] += dZ.sum(axis=0)
        dX = dZ @ p["dec.W"].T
        dh0 = dX[:, N_PARAMS + 2 * H:]
        dhf = dX[:, N_PARAMS:N_PARAMS + H] + dh0 @ p["lift_h.W"].T
        dcf = dX[:, N_PARAMS + H:N_PARAMS + 2 * H] + dc0 @ p["lift_c.W"].T
        g["lift_h.W"] += hf.T @ dh0
        g["lift_h.b"] += dh0.sum(axis=0)
        g["lift_c.W"] += cf.T @ dc0
        g["lift_c.b"] += dc0.sum(axis=0)
        par = rows[:, 2]
        dh[par] += dhf
        dc[par] += dcf
    # encoder: gradients at the roots came through the decoder's first step
    eh = np.zeros((n, H))
    ec = np.zeros((n, H))
    eh[batch.roots] = dh[batch.roots]
    ec[batch.roots] = dc[batch.roots]
    for rows, (X, lcache) in zip(reversed(batch.levels), reversed(enc_caches)):
        par = rows[:, 2]
        dH = np.vstack([eh[par], eh[par]])
        dC = np.vstack([ec[par], ec[par]])
        dZ, dc_prev = _lstm_backward(lcache, dH, dC)
        g["enc.W"] += X.T @ dZ
        g["enc.b"] += dZ.sum(axis=0)
        dX = dZ @ p["enc.W"].T
        ch = np.concatenate([rows[:, 0], rows[:, 1]])
        eh[ch] += dX[:, N_PARAMS:]
        ec[ch] += dc_prev
    return g


def loss_and_grad(model: AETreeModel, trees, config: TrainConfig, batch: Batch = None):
    """Mean per-tree loss over ``trees`` and its gradient for every parameter."""
    if batch is None:
        batch = make_batch(list(trees), config.representation, config.level_weight_gamma)
    T = len(batch.roots)
    enc_caches, dec_caches = [], []
    h, c = _encode(batch, model, enc_caches)
    pred = _decode_teacher(batch, model, h[batch.roots], c[batch.roots], dec_caches)
    total, dpred = loss_terms(pred, batch.P, batch.leaf, batch.weight, config.bce_weight)
    total /= T
    dpred /= T
    if not math.isfinite(total):
        raise TrainingDiverged(f"non-finite loss {total}")
    return total, _backward(model, batch, enc_caches, dec_caches, dpred)


# ---------------------------------------------------------------- training

class Adam:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.b1, self.b2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads, lr):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k in PARAM_NAMES:
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            params[k] -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def forest_root_prior(trees) -> np.ndarray:
    return np.mean([t.absolute[t.root] for t in trees], axis=0)


def forest_max_depth(trees) -> int:
    return int(max(t.depths().max() for t in trees))


def train(forest, config: TrainConfig = TrainConfig(), checkpoint_dir=None, model=None):
    """Train with Adam on shuffled mini-batches of trees.

    Returns ``(model, history)`` with history rows ``(step, lr, loss)``. The
    learning rate halves every ``lr_halving_period_steps`` steps. When
    ``checkpoint_dir`` is given, ``last.ckpt`` is rewritten every
    ``checkpoint_every`` epochs and once at the end; on divergence the last
    good parameters are written before :class:`TrainingDiverged` propagates.
    """
    forest = list(forest)
    if not forest:
        raise InvalidArgument("cannot train on an empty forest")
    rng = np.random.default_rng(config.rng_seed)
    if model is None:
        model = AETreeModel.init(config.hidden_size, int(rng.integers(2**63)), config.representation)
    model.root_prior = forest_root_prior(forest)
    model.max_depth = forest_max_depth(forest)
    opt = Adam(model.params)
    history = []
    step = 0
    ckpt = None if checkpoint_dir is None else Path(checkpoint_dir) / "last.ckpt"
    last_good = model.copy()
    done = False
    for epoch in range(config.max_epochs):
        order = rng.permutation(len(forest))
        for start in range(0, len(order), config.batch_size_sets):
            if config.max_steps and step >= config.max_steps:
                done = True
                break
            trees = [forest[k] for k in order[start:start + config.batch_size_sets]]
            lr = config.lr_at(step)
            try:
                value, grads = loss_and_grad(model, trees, config)
            except TrainingDiverged:
                if ckpt is not None:
                    save_checkpoint(ckpt, last_good, config)
                raise
            opt.step(model.params, grads, lr)
            if not all(np.isfinite(v).all() for v in model.params.values()):
                if ckpt is not None:
                    save_checkpoint(ckpt, last_good, config)
                raise TrainingDiverged(f"non-finite parameters after step {step}")
            history.append((step, lr, value))
            step += 1
        last_good = model.copy()
        if ckpt is not None and (epoch + 1) % config.checkpoint_every == 0:
            save_checkpoint(ckpt, model, config)
        if done:
            break
        log.debug("epoch %d step %d loss %.6g", epoch, step, history[-1][2] if history else float("nan"))
    if ckpt is not None:
        save_checkpoint(ckpt, model, config)
    return model, history


# ---------------------------------------------------------------- inference

def _sanitize_rows(params: np.ndarray) -> np.ndarray:
    out = np.array(params, dtype=float)
    out[:, 2:5] = np.abs(out[:, 2:5])
    out[:, 5] = [normalize_angle(a) for a in out[:, 5]]
    return out


def _compose_absolute(rel, parent):
    # row-wise absolute_params
    out = np.empty_like(rel)
    out[:, 0] = parent[:, 0] + rel[:, 0] * parent[:, 2]
    out[:, 1] = parent[:, 1] + rel[:, 1] * parent[:, 3]
    out[:, 2] = rel[:, 2] * parent[:, 2]
    out[:, 3] = rel[:, 3] * parent[:, 3]
    out[:, 4] = rel[:, 4] * parent[:, 4]
    out[:, 5] = rel[:, 5] + parent[:, 5]
    return out


def decode_free_batch(root_params, root_latents, model: AETreeModel, max_depth=None,
                      leaf_threshold: float = 0.5) -> list[np.ndarray]:
    """Free-running decode of many roots at once; returns one (n_i, 6) leaf array each.

    Children are expanded breadth first; a child becomes a leaf when its
    leaf probability exceeds ``leaf_threshold`` or it sits at ``max_depth``.
    """
    max_depth = model.max_depth if max_depth is None else int(max_depth)
    if max_depth < 1:
        raise InvalidArgument("max_depth must be >= 1")
    root_params = np.atleast_2d(np.asarray(root_params, dtype=float))
    Z = np.atleast_2d(np.asarray(root_latents, dtype=float))
    n = len(Z)
    if len(root_params) == 1 and n > 1:
        root_params = np.repeat(root_params, n, axis=0)
    if Z.shape[1] != 2 * model.H or len(root_params) != n:
        raise InvalidArgument("root latents/params do not match the model")
    H = model.H
    owner = np.arange(n)
    P_in = root_params.copy()
    absolute = _sanitize_rows(root_params)
    h, c = Z[:, :H].copy(), Z[:, H:].copy()
    leaves = [[] for _ in range(n)]
    for depth in range(1, max_depth + 1):
        if len(owner) == 0:
            break
        out, h_ch, c_ch = _decode_rows(P_in, h, c, model)
        owner2 = np.concatenate([owner, owner])
        parent_abs = np.vstack([absolute, absolute])
        pred = out[:, :N_PARAMS]
        if model.representation == "relative":
            child_abs = _compose_absolute(pred, parent_abs)
        else:
            child_abs = pred.copy()
        child_abs = _sanitize_rows(child_abs)
        stop = (_sigmoid(out[:, N_PARAMS]) > leaf_threshold) | (depth == max_depth)
        # emit left child before right child of the same parent
        R = len(owner)
        for k in np.stack([np.arange(R), np.arange(R) + R], axis=1).ravel():
            if stop[k]:
                leaves[owner2[k]].append(child_abs[k])
        go = ~stop
        owner, P_in, absolute = owner2[go], pred[go], child_abs[go]
        h, c = h_ch[go], c_ch[go]
    return [np.array(lv).reshape(-1, N_PARAMS) for lv in leaves]


def decode_free(root_params, root_feature: NodeFeature, model: AETreeModel, max_depth=None,
                leaf_threshold: float = 0.5) -> np.ndarray:
    """Leaves (n, 6) decoded from a single root without teacher forcing."""
    return decode_free_batch(root_params, root_feature.vector[None], model, max_depth, leaf_threshold)[0]


def reconstruct(trees, model: AETreeModel, leaf_threshold: float = 0.5) -> list[np.ndarray]:
    """Encode each tree and free-decode it from its true root parameters."""
    trees = list(trees)
    Z = encode_forest(trees, model)
    roots = np.array([t.absolute[t.root] for t in trees])
    return decode_free_batch(roots, Z, model, leaf_threshold=leaf_threshold)


# -------------------------------------------------------------- checkpoints

def save_checkpoint(path, model: AETreeModel, config: TrainConfig = None) -> None:
    meta = {
        "hidden_size": model.H,
        "representation": model.representation,
        "max_depth": model.max_depth,
        "root_prior": [float(v) for v in model.root_prior],
    }
    if config is not None:
        for k, v in asdict(config).items():
            meta[f"config.{k}"] = v
    write_blocks(path, "checkpoint", meta, {k: model.params[k] for k in PARAM_NAMES})


def load_checkpoint(path):
    """Returns ``(model, config)``; config is None when the file carries none."""
    meta, blocks = read_blocks(path, "checkpoint")
    model = AETreeModel(blocks, meta["hidden_size"], meta["representation"],
                        meta["root_prior"], meta["max_depth"])
    cfg = {k[len("config."):]: v for k, v in meta.items() if k.startswith("config.")}
    return model, (TrainConfig.from_dict(cfg) if cfg else None)
