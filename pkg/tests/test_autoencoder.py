import math

import numpy as np
import pytest

from aetree.autoencoder import (
    AETreeModel, NodeFeature, TrainConfig, decode_free, decode_step, decode_teacher_forced,
    encode_forest, encode_level, encode_tree, level_weights, load_checkpoint, loss, loss_and_grad,
    lstm_cell_forward, make_batch, reconstruct, save_checkpoint, train,
)
from aetree.errors import InvalidArgument, TrainingDiverged
from aetree.tree import LayoutSet, build_tree, normalize_frame
from conftest import random_cuboids


def sig(z):
    return 1.0 / (1.0 + math.exp(-z))


def scalar_lstm(x, h, c, W, b):
    """Gate equations written one scalar at a time (gate order i, f, g, o)."""
    n = len(h)
    v = list(x) + list(h)
    z = [b[j] + sum(v[k] * W[k][j] for k in range(len(v))) for j in range(4 * n)]
    h2, c2 = [], []
    for u in range(n):
        i, f = sig(z[u]), sig(z[n + u])
        g, o = math.tanh(z[2 * n + u]), sig(z[3 * n + u])
        cu = f * c[u] + i * g
        c2.append(cu)
        h2.append(o * math.tanh(cu))
    return np.array(h2), np.array(c2)


def make_tree(rng, n, set_id="s"):
    return build_tree(normalize_frame(LayoutSet(set_id, random_cuboids(rng, n, with_height=True))))


class TestLstmCell:
    def test_zero(self):
        H = 4
        h, c = lstm_cell_forward(np.zeros(3), np.zeros(H), np.zeros(H), np.zeros((3 + H, 4 * H)), np.zeros(4 * H))
        assert np.array_equal(h, np.zeros(H)) and np.array_equal(c, np.zeros(H))

    def test_forget_saturation(self, rng):
        H = 3
        W = rng.normal(size=(2 + H, 4 * H))
        W[:, H:2 * H] = 0.0
        b = rng.normal(size=4 * H)
        b[H:2 * H] = 50.0
        x, h0, c0 = rng.normal(size=2), rng.normal(size=H), rng.normal(size=H)
        _, c = lstm_cell_forward(x, h0, c0, W, b)
        z = np.concatenate([x, h0]) @ W + b
        i, g = 1 / (1 + np.exp(-z[:H])), np.tanh(z[2 * H:3 * H])
        assert np.allclose(c, c0 + i * g, atol=1e-9)

    def test_scalar_oracle(self, rng):
        H = 3
        x, h0, c0 = rng.normal(size=3), rng.normal(size=H), rng.normal(size=H)
        W, b = rng.normal(size=(3 + H, 4 * H)), rng.normal(size=4 * H)
        h, c = lstm_cell_forward(x, h0, c0, W, b)
        ho, co = scalar_lstm(x, h0, c0, W.tolist(), b.tolist())
        assert np.allclose(h, ho, atol=1e-12) and np.allclose(c, co, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgument):
            lstm_cell_forward(np.zeros(3), np.zeros(2), np.zeros(2), np.zeros((4, 8)), np.zeros(8))


class TestEncoder:
    def test_level_symmetric(self, rng):
        m = AETreeModel.init(5, seed=1)
        P, h, c = rng.normal(size=(2, 6)), rng.normal(size=(2, 5)), rng.normal(size=(2, 5))
        a = encode_level(P, h, c, m)
        b = encode_level(P[::-1], h[::-1], c[::-1], m)
        assert np.allclose(a[0], b[0], atol=1e-15) and np.allclose(a[1], b[1], atol=1e-15)

    def test_zero_model(self):
        m = AETreeModel.zeros(4)
        hp, cp = encode_level(np.zeros((2, 6)), np.zeros((2, 4)), np.zeros((2, 4)), m)
        assert not hp.any() and not cp.any()

    def test_level_batched_vs_single(self, rng):
        m = AETreeModel.init(6, seed=2)
        R = 5
        P, h, c = rng.normal(size=(2 * R, 6)), rng.normal(size=(2 * R, 6)), rng.normal(size=(2 * R, 6))
        hb, cb = encode_level(P, h, c, m)
        for r in range(R):
            idx = [r, R + r]
            hs, cs = encode_level(P[idx], h[idx], c[idx], m)
            assert np.array_equal(hb[r], hs[0]) and np.array_equal(cb[r], cs[0])

    def test_two_leaf_tree_matches_manual(self, rng):
        m = AETreeModel.init(4, seed=3)
        t = make_tree(rng, 2)
        f = encode_tree(t, m)
        p = m.params
        parts = [lstm_cell_forward(t.relative[k], np.zeros(4), np.zeros(4), p["enc.W"], p["enc.b"]) for k in (0, 1)]
        assert np.allclose(f.hidden, parts[0][0] + parts[1][0], atol=1e-15)
        assert np.allclose(f.cell, parts[0][1] + parts[1][1], atol=1e-15)

    def test_sibling_swap_invariance(self, rng):
        m = AETreeModel.init(6, seed=4)
        t = make_tree(rng, 9)
        # swap children of every internal node by permuting level rows
        t2 = build_tree(normalize_frame(LayoutSet("s", t.leaves())))
        for rows in t2.levels:
            rows[:, [0, 1]] = rows[:, [1, 0]]
        a, b = encode_tree(t, m).vector, encode_tree(t2, m).vector
        assert np.allclose(a, b, atol=1e-12)

    def test_forest_batched_bitwise(self, rng):
        m = AETreeModel.init(8, seed=5)
        forest = [make_tree(rng, n, f"t{n}") for n in (3, 7, 12)]
        Z = encode_forest(forest, m)
        for k, t in enumerate(forest):
            assert np.array_equal(Z[k], encode_tree(t, m).vector)


class TestDecoder:
    def test_zero_model_symmetric(self):
        m = AETreeModel.zeros(4)
        m.params["head.b"][:] = np.arange(7.0)
        (pl, zl, fl), (pr, zr, fr) = decode_step(np.zeros(6), NodeFeature(np.zeros(4), np.zeros(4)), m)
        assert np.array_equal(pl, pr) and zl == zr
        assert np.array_equal(np.append(pl, zl), np.arange(7.0))

    def test_deterministic(self, rng):
        m = AETreeModel.init(5, seed=6)
        f = NodeFeature(rng.normal(size=5), rng.normal(size=5))
        P = rng.normal(size=6)
        a, b = decode_step(P, f, m), decode_step(P, f, m)
        assert all(np.array_equal(x[0], y[0]) and x[1] == y[1] for x, y in zip(a, b))

    def test_scalar_oracle(self, rng):
        H = 3
        m = AETreeModel.init(H, seed=7)
        p = m.params
        f = NodeFeature(rng.normal(size=H), rng.normal(size=H))
        P = rng.normal(size=6)
        h0 = f.hidden @ p["lift_h.W"] + p["lift_h.b"]
        c0 = f.cell @ p["lift_c.W"] + p["lift_c.b"]
        x = np.concatenate([P, f.hidden, f.cell])
        hh, cc = scalar_lstm(x, h0, c0, p["dec.W"].tolist(), p["dec.b"].tolist())
        got = decode_step(P, f, m)
        for side, sl in ((0, slice(0, H)), (1, slice(H, 2 * H))):
            out = hh[sl] @ p["head.W"] + p["head.b"]
            assert np.allclose(got[side][0], out[:6], atol=1e-12)
            assert got[side][1] == pytest.approx(out[6], abs=1e-12)
            assert np.allclose(got[side][2].hidden, hh[sl], atol=1e-12)
            assert np.allclose(got[side][2].cell, cc[sl], atol=1e-12)

    def test_teacher_forced_unroll(self, rng):
        m = AETreeModel.init(4, seed=8)
        t = build_tree(normalize_frame(LayoutSet("s", random_cuboids(rng, 4))))
        root = encode_tree(t, m)
        pred = decode_teacher_forced(t, root, m)
        assert np.isnan(pred[t.root]).all()
        feats = {t.root: root}
        for k in range(t.n_nodes - 1, t.n_leaves - 1, -1):
            left, right = decode_step(t.relative[k] if k != t.root else t.absolute[k], feats[k], m)
            a, b = t.children[k]
            for node, (params, logit, feat) in ((a, left), (b, right)):
                feats[node] = feat
                assert np.allclose(pred[node, :6], params, atol=1e-13)
                assert pred[node, 6] == pytest.approx(logit, abs=1e-13)

    def test_free_depth_one(self, rng):
        m = AETreeModel.init(4, seed=9)
        f = NodeFeature(rng.normal(size=4), rng.normal(size=4))
        out = decode_free(np.array([0, 0, 1, 1, 0, 0.0]), f, m, max_depth=1)
        assert out.shape == (2, 6)

    def test_free_saturated_leaf(self, rng):
        m = AETreeModel.init(4, seed=10)
        m.params["head.W"][:, 6] = 0.0
        m.params["head.b"][6] = 50.0
        f = NodeFeature(rng.normal(size=4), rng.normal(size=4))
        assert len(decode_free(np.array([0, 0, 1, 1, 0, 0.0]), f, m, max_depth=12)) == 2

    def test_free_leaf_bound(self, rng):
        m = AETreeModel.init(4, seed=11)
        m.params["head.b"][6] = -50.0
        for depth in (1, 2, 3, 5):
            f = NodeFeature(rng.normal(size=4), rng.normal(size=4))
            out = decode_free(np.array([0, 0, 1, 1, 1, 0.0]), f, m, max_depth=depth)
            assert len(out) == 2 ** depth
            assert np.isfinite(out).all() and (out[:, 2:5] >= 0).all()
            assert (np.abs(out[:, 5]) <= math.pi / 2).all()

    def test_free_bad_depth(self, rng):
        m = AETreeModel.init(4)
        with pytest.raises(InvalidArgument):
            decode_free(np.zeros(6), NodeFeature(np.zeros(4), np.zeros(4)), m, max_depth=0)


class TestLoss:
    def test_level_weights(self):
        w = level_weights(np.array([2, 2, 1, 0]), 0.5)
        assert w[3] == 0.0
        assert w[2] == pytest.approx(0.5 / 0.75) and w[0] == pytest.approx(0.25 / 0.75)

    def test_perfect_prediction(self, rng):
        t = make_tree(rng, 6)
        b = make_batch([t])
        pred = np.column_stack([b.P, np.where(b.leaf > 0, 50.0, -50.0)])
        assert loss(t, pred, TrainConfig()) <= 1e-9

    def test_single_offset(self, rng):
        t = make_tree(rng, 2)
        b = make_batch([t])
        pred = np.column_stack([b.P, np.where(b.leaf > 0, 50.0, -50.0)])
        pred[0, 3] += 1.0
        cfg = TrainConfig(bce_weight=0.0)
        assert loss(t, pred, cfg) == pytest.approx(b.weight[0] * 1.0, abs=1e-12)
        assert b.weight[0] == pytest.approx(1.0)

    @pytest.mark.parametrize("n_leaves", [2, 4])
    def test_finite_differences(self, rng, n_leaves):
        m = AETreeModel.init(3, seed=12)
        forest = [make_tree(rng, n_leaves)]
        cfg = TrainConfig(hidden_size=3)
        _, grads = loss_and_grad(m, forest, cfg)
        eps = 1e-5
        worst = 0.0
        for name, arr in m.params.items():
            num = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                old = arr[idx]
                arr[idx] = old + eps
                up = loss_and_grad(m, forest, cfg)[0]
                arr[idx] = old - eps
                dn = loss_and_grad(m, forest, cfg)[0]
                arr[idx] = old
                num[idx] = (up - dn) / (2 * eps)
            scale = max(np.abs(num).max(), np.abs(grads[name]).max(), 1e-8)
            worst = max(worst, np.abs(num - grads[name]).max() / scale)
        assert worst < 1e-6

    def test_non_finite_raises(self, rng):
        m = AETreeModel.init(3)
        m.params["head.b"][0] = np.inf
        with pytest.raises(TrainingDiverged):
            loss_and_grad(m, [make_tree(rng, 3)], TrainConfig())


class TestTrain:
    def test_lr_schedule(self):
        cfg = TrainConfig()
        assert cfg.lr_at(399) == 1e-3 and cfg.lr_at(400) == 5e-4 and cfg.lr_at(800) == 2.5e-4

    @pytest.mark.parametrize("bad", [{"level_weight_gamma": 0}, {"learning_rate": 0}, {"representation": "x"}])
    def test_config_validation(self, bad):
        with pytest.raises(InvalidArgument):
            TrainConfig(**bad)

    def test_seed_determinism(self, rng):
        forest = [make_tree(rng, n, f"t{n}") for n in (4, 6, 8)]
        cfg = TrainConfig(hidden_size=6, max_steps=15, batch_size_sets=2, rng_seed=3)
        _, h1 = train(forest, cfg)
        _, h2 = train(forest, cfg)
        assert h1 == h2

    def test_overfit_single_tree(self, small_city):
        from aetree.dataset import build_layout_sets
        t = build_tree(build_layout_sets(small_city, 16)[0])
        cfg = TrainConfig(hidden_size=32, max_steps=2000, max_epochs=10**6,
                          learning_rate=5e-3, lr_halving_period_steps=300)
        _, hist = train([t], cfg)
        assert hist[-1][2] < 1e-3 * hist[0][2]

    def test_checkpoints(self, tmp_path, rng):
        forest = [make_tree(rng, 5)]
        cfg = TrainConfig(hidden_size=4, max_epochs=3)
        model, _ = train(forest, cfg, checkpoint_dir=tmp_path)
        back, cfg2 = load_checkpoint(tmp_path / "last.ckpt")
        assert cfg2 == cfg
        assert all(np.array_equal(model.params[k], back.params[k]) for k in model.params)
        assert back.max_depth == forest[0].depths().max()
        assert np.array_equal(back.root_prior, forest[0].absolute[forest[0].root])

    def test_divergence_keeps_last_good(self, tmp_path, rng):
        forest = [make_tree(rng, 5)]
        model = AETreeModel.init(4, seed=0)
        model.params["head.b"][0] = np.nan
        with pytest.raises(TrainingDiverged):
            train(forest, TrainConfig(hidden_size=4), checkpoint_dir=tmp_path, model=model)
        assert (tmp_path / "last.ckpt").exists()

    def test_checkpoint_roundtrip(self, tmp_path):
        m = AETreeModel.init(5, seed=13, representation="absolute")
        save_checkpoint(tmp_path / "m.ckpt", m)
        back, cfg = load_checkpoint(tmp_path / "m.ckpt")
        assert cfg is None and back.representation == "absolute"
        assert all(np.array_equal(m.params[k], back.params[k]) for k in m.params)

    def test_absolute_representation_trains(self, rng):
        forest = [make_tree(rng, 6)]
        model, hist = train(forest, TrainConfig(hidden_size=4, max_steps=5, representation="absolute"))
        out = reconstruct(forest, model)
        assert np.isfinite(out[0]).all() and len(hist) == 5
