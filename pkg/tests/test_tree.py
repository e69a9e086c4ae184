import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aetree.errors import DegenerateParentError, DegenerateShapeError, InvalidArgument, SchemaError
from aetree.geometry import footprint_corners, min_bounding_rect
from aetree.tree import (
    Frame, LayoutSet, SgdWeights, build_tree, denormalize, merge_params, normalize_frame,
    read_forest, read_layouts, sgd_components, sgd_distance, to_absolute, to_relative,
    tree_from_merges, write_forest, write_layouts,
)
from conftest import nearest_pair_oracle, random_cuboids, sweep_mbr_area

SQ = (0.0, 0.0, 1.0, 1.0, 0.0, 0.0)


class TestSgd:
    def test_identical_squares(self):
        # the joint MBR of a node with itself is the node, so D_merge = |A + A - A| = A
        assert sgd_components(SQ, SQ) == pytest.approx((0.0, 0.0, 0.0, 0.0, 1.0), abs=1e-12)
        assert sgd_distance(SQ, SQ, SgdWeights(3, 1, 4, 1, 0)) == pytest.approx(0.0, abs=1e-12)
        assert sgd_distance(SQ, SQ, SgdWeights(3, 1, 4, 1, 5)) == pytest.approx(5.0, abs=1e-12)

    def test_two_boxes(self):
        i, j = (0, 0, 2, 1, 0, 0), (4, 0, 2, 1, 0, 0)
        comps = sgd_components(i, j)
        assert comps == pytest.approx((4, 0, 0, 0, 2), abs=1e-12)
        # the joint MBR is 6 x 1 by hand; cross-check its area by sweep
        pts = np.vstack([footprint_corners(i), footprint_corners(j)])
        assert sweep_mbr_area(pts) == pytest.approx(6.0, abs=1e-6)
        assert sgd_distance(i, j) == pytest.approx(22.0, abs=1e-12)

    def test_area_term(self):
        assert sgd_components((0, 0, 2, 1, 0, 0), (0, 0, 3, 2, 0, 0))[1] == pytest.approx(4.0)

    def test_center_only(self):
        i, j = (0, 0, 2, 1, 0, 0.3), (3, 4, 1, 1, 0, 1.0)
        assert sgd_distance(i, j, SgdWeights(1, 0, 0, 0, 0)) == pytest.approx(5.0)

    def test_zero_width_shape(self):
        flat = (0, 0, 1, 0, 0, 0)
        with pytest.raises(DegenerateShapeError):
            sgd_distance(flat, SQ)
        assert sgd_distance(flat, SQ, SgdWeights(1, 1, 0, 1, 1)) >= 0

    def test_weights_validated(self):
        with pytest.raises(InvalidArgument):
            SgdWeights(0, 0, 0, 0, 0)
        with pytest.raises(InvalidArgument):
            SgdWeights(-1, 1, 1, 1, 1)

    def test_symmetric_nonnegative(self, rng):
        for _ in range(100):
            p, q = random_cuboids(rng, 2)
            d = sgd_distance(p, q)
            assert d >= 0
            assert d == pytest.approx(sgd_distance(q, p), abs=1e-9)

    def test_angle_component_folded(self, rng):
        for _ in range(50):
            p, q = random_cuboids(rng, 2)
            assert 0 <= sgd_components(p, q)[3] <= math.pi / 2


class TestRelative:
    def test_identity(self):
        p = (1, 2, 4, 2, 3, 0.2)
        assert to_relative(p, p) == pytest.approx((0, 0, 1, 1, 1, 0), abs=1e-15)

    def test_substitution(self):
        rel = to_relative((1, 0.5, 2, 1, 1, 0), (0, 0, 4, 2, 2, 0))
        assert rel == pytest.approx((0.25, 0.25, 0.5, 0.5, 0.5, 0), abs=1e-15)

    def test_period_pi(self):
        assert to_relative((0, 0, 1, 1, 1, 0.3 + math.pi), (0, 0, 1, 1, 1, 0.3))[5] == pytest.approx(0, abs=1e-12)

    def test_inverse_examples(self):
        for child, parent in [((1, 2, 4, 2, 3, 0.2), (1, 2, 4, 2, 3, 0.2)),
                              ((1, 0.5, 2, 1, 1, 0), (0, 0, 4, 2, 2, 0))]:
            back = to_absolute(to_relative(child, parent), parent).to_array()
            assert back == pytest.approx(child, abs=1e-12)

    def test_degenerate_parent(self):
        with pytest.raises(DegenerateParentError):
            to_relative(SQ, (0, 0, 0, 1, 1, 0))
        with pytest.raises(DegenerateParentError):
            to_absolute(np.zeros(6), (0, 0, 1, 0, 1, 0))

    def test_flat_parent_flat_child(self):
        assert to_relative(SQ, (0, 0, 2, 2, 0, 0))[4] == 0.0


class TestBuildTree:
    def test_two_leaves(self):
        t = build_tree(LayoutSet("s", [SQ, (3, 0, 1, 1, 0, 0)]))
        assert t.n_nodes == 3 and len(t.levels) == 1 and t.levels[0].shape == (1, 3)
        assert t.depths().max() == 1

    def test_collinear_squares(self):
        xs = (0, 3, 10, 13)
        t = build_tree(LayoutSet("s", [(x, 0, 1, 1, 0, 0) for x in xs]))
        assert t.merges() == [(0, 1), (2, 3), (4, 5)]
        assert t.depths()[:4].tolist() == [2, 2, 2, 2]

    def test_counts_n32(self, rng):
        t = build_tree(LayoutSet("s", random_cuboids(rng, 32)))
        assert t.n_leaves == 32 and t.n_nodes == 63
        assert sum(len(lv) for lv in t.levels) == 31

    def test_too_small(self):
        with pytest.raises(InvalidArgument):
            LayoutSet("s", [SQ])

    def test_parent_geometry(self, rng):
        t = build_tree(LayoutSet("s", random_cuboids(rng, 12, with_height=True)))
        for k in range(t.n_leaves, t.n_nodes):
            a, b = t.children[k]
            pa, pb = t.absolute[a], t.absolute[b]
            pts = np.vstack([footprint_corners(pa), footprint_corners(pb)])
            mbr = min_bounding_rect(pts)
            # extents and angle come from the MBR, the center is the children's mean
            assert t.absolute[k, 2:4] == pytest.approx((mbr.l, mbr.w), abs=1e-9)
            assert t.absolute[k, 5] == pytest.approx(mbr.a, abs=1e-9)
            assert t.absolute[k, 0:2] == pytest.approx(0.5 * (pa[:2] + pb[:2]), abs=1e-12)
            assert t.absolute[k, 4] == max(pa[4], pb[4])

    def test_index_matrices_bijective(self, rng):
        t = build_tree(LayoutSet("s", random_cuboids(rng, 20)))
        seen = {}
        for h, rows in enumerate(t.levels, start=1):
            for l, r, p in rows:
                assert l not in seen and r not in seen
                seen[l] = seen[r] = p
                assert t.heights()[p] == h
        assert sorted(seen) == list(range(t.n_nodes - 1))
        assert all(t.parent[k] == p for k, p in seen.items())

    def test_relative_rows_satisfy_definition(self, rng):
        t = build_tree(LayoutSet("s", random_cuboids(rng, 10, with_height=True)))
        for k in range(t.n_nodes - 1):
            assert np.array_equal(t.relative[k], to_relative(t.absolute[k], t.absolute[t.parent[k]]))
        assert np.array_equal(t.relative[t.root], t.absolute[t.root])

    def test_matches_oracle(self, rng):
        w = SgdWeights()
        for _ in range(40):
            C = random_cuboids(rng, int(rng.integers(2, 9)))
            oracle = nearest_pair_oracle(C, lambda p, q: sgd_distance(p, q, w), merge_params)
            assert build_tree(LayoutSet("s", C), w).merges() == [tuple(sorted(m)) for m in oracle]

    def test_exact_ties_broken_lexicographically(self):
        # four identical gaps: every adjacent pair is equally close
        t = build_tree(LayoutSet("s", [(2.0 * x, 0, 1, 1, 0, 0) for x in range(4)]), SgdWeights(1, 0, 0, 0, 0))
        assert t.merges()[0] == (0, 1)

    def test_from_merges_roundtrip(self, rng):
        s = LayoutSet("s", random_cuboids(rng, 9))
        t = build_tree(s)
        t2 = tree_from_merges(s, t.merges())
        assert np.array_equal(t.absolute, t2.absolute)


class TestFrame:
    def test_spanning_square(self):
        s = LayoutSet("s", [(5, 5, 10, 10, 0, 0), (95, 95, 10, 10, 0, 0)])
        n = normalize_frame(s)
        assert n.frame.scale == pytest.approx(100.0)
        assert (n.frame.tx, n.frame.ty) == (50.0, 50.0)

    def test_fits_unit_square_and_roundtrips(self, rng):
        s = LayoutSet("s", random_cuboids(rng, 15, spread=40, with_height=True))
        n = normalize_frame(s)
        pts = np.vstack([footprint_corners(c) for c in n.cuboids])
        assert np.abs(pts).max() <= 0.5 + 1e-12
        assert np.allclose(denormalize(n).cuboids, s.cuboids, atol=1e-9)

    def test_normalized_is_fixed_point(self, rng):
        n = normalize_frame(LayoutSet("s", random_cuboids(rng, 6)))
        nn = normalize_frame(LayoutSet("s", n.cuboids))
        assert (nn.frame.tx, nn.frame.ty, nn.frame.scale) == pytest.approx((0, 0, 1), abs=1e-12)

    def test_zero_extent(self):
        with pytest.raises(InvalidArgument):
            normalize_frame(LayoutSet("s", [(1, 1, 0, 0, 0, 0), (1, 1, 0, 0, 0, 0)]))

    def test_compose(self):
        f = Frame(1, 2, 3).compose(Frame(4, 5, 6))
        assert (f.tx, f.ty, f.scale) == (13, 17, 18)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=6, max_size=6),
       st.lists(st.floats(0.1, 20), min_size=4, max_size=4),
       st.floats(-10, 10))
def test_relative_roundtrip_property(centers, extents, angle):
    child = np.array([centers[0], centers[1], extents[0], extents[1], centers[2] % 5, angle])
    parent = np.array([centers[3], centers[4], extents[2], extents[3], 1.0 + abs(centers[5]), -angle / 2])
    back = to_absolute(to_relative(child, parent), parent).to_array()
    assert back[:5] == pytest.approx(child[:5], abs=1e-12, rel=1e-12)
    d = (back[5] - child[5]) / math.pi
    assert abs(d - round(d)) < 1e-12


class TestFiles:
    def test_forest_roundtrip(self, tmp_path, rng):
        trees = [build_tree(normalize_frame(LayoutSet(f"s{k}", random_cuboids(rng, 5 + k)))) for k in range(3)]
        write_forest(tmp_path / "f.txt", trees)
        back = read_forest(tmp_path / "f.txt")
        for a, b in zip(trees, back):
            assert a.id == b.id and a.frame == b.frame
            assert np.array_equal(a.absolute, b.absolute) and np.array_equal(a.relative, b.relative)
            assert all(np.array_equal(x, y) for x, y in zip(a.levels, b.levels))
        text = (tmp_path / "f.txt").read_text()
        assert text.startswith("aetree-forest 1\n")

    def test_forest_bad_line(self, tmp_path):
        (tmp_path / "f.txt").write_text("aetree-forest 1\ntree x nope\n")
        with pytest.raises(SchemaError, match=":2"):
            read_forest(tmp_path / "f.txt")

    def test_layouts_bit_exact(self, tmp_path, rng):
        sets = [normalize_frame(LayoutSet(f"s{k}", random_cuboids(rng, 4))) for k in range(4)]
        write_layouts(tmp_path / "l.jsonl", sets)
        back = read_layouts(tmp_path / "l.jsonl")
        for a, b in zip(sets, back):
            assert np.array_equal(a.cuboids, b.cuboids) and a.frame == b.frame
