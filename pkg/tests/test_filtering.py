import numpy as np
import pytest

from matchflow import (
    FilterParams,
    FlowField,
    InvalidInputError,
    MatchingParams,
    MatchSet,
    consistency_check,
    match_full,
    region_filter,
    sparsify,
    two_pass_filter,
)

from conftest import shifted_pair


def const_flow(w, h, u, v):
    return FlowField.constant(w, h, u, v)


class TestConsistencyCheck:
    def test_exact_inverses_all_valid(self):
        fwd = const_flow(12, 10, 2.0, 0.0)
        bwd = const_flow(12, 10, -2.0, 0.0)
        out, err = consistency_check(fwd, bwd, epsilon=1.0)
        inside = np.zeros((10, 12), bool)
        inside[:, :10] = True  # targets of the last two columns leave the frame
        assert np.array_equal(out.valid, inside)
        assert np.allclose(err[inside], 0.0)

    def test_error_magnitude_rejects(self):
        fwd = const_flow(8, 8, 2.0, 0.0)
        bwd = const_flow(8, 8, 0.0, 0.0)
        out, err = consistency_check(fwd, bwd, epsilon=1.0)
        assert not out.valid.any()
        assert np.allclose(err[np.isfinite(err)], 2.0)

    def test_out_of_domain_always_invalid(self):
        fwd = const_flow(8, 8, 100.0, 0.0)
        bwd = const_flow(8, 8, -100.0, 0.0)
        out, err = consistency_check(fwd, bwd, epsilon=np.inf)
        assert not out.valid.any()
        assert np.all(np.isinf(err))

    def test_epsilon_infinite_keeps_in_domain(self):
        rng = np.random.default_rng(3)
        fwd = FlowField(rng.uniform(-3, 3, (10, 10)), rng.uniform(-3, 3, (10, 10)), np.ones((10, 10), bool))
        bwd = FlowField(rng.uniform(-3, 3, (10, 10)), rng.uniform(-3, 3, (10, 10)), np.ones((10, 10), bool))
        out, _ = consistency_check(fwd, bwd, epsilon=np.inf)
        gx, gy = np.meshgrid(np.arange(10), np.arange(10))
        tx, ty = gx + fwd.u, gy + fwd.v
        in_dom = (tx >= 0) & (tx <= 9) & (ty >= 0) & (ty <= 9)
        assert np.array_equal(out.valid, in_dom)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            consistency_check(const_flow(8, 8, 0, 0), const_flow(9, 8, 0, 0), 1.0)


class TestTwoPassFilter:
    def test_static_textured_survives(self):
        i1, i2 = shifted_pair(48, 48, 0, 0, seed=81)
        params = MatchingParams(seed=1)
        fwd = match_full(i1, i2, params)
        out, err = two_pass_filter(i1, i2, fwd, params, None, FilterParams(epsilon=1.0))
        assert out.valid.mean() >= 0.9
        assert np.median(err[out.valid]) < 0.5

    def test_corrupted_pixels_rejected(self):
        i1, i2 = shifted_pair(48, 48, 1, 1, seed=82)
        params = MatchingParams(seed=2)
        fwd = match_full(i1, i2, params)
        rng = np.random.default_rng(0)
        corrupt = rng.random((48, 48)) < 0.10
        u = fwd.u.copy()
        v = fwd.v.copy()
        sign = np.where(rng.random((48, 48)) < 0.5, 1.0, -1.0)
        u[corrupt] += 20.0 * sign[corrupt]
        v[corrupt] -= 20.0 * sign[corrupt]
        bad = FlowField(u, v, fwd.valid.copy())
        out, _ = two_pass_filter(i1, i2, bad, params, None, FilterParams(epsilon=1.0))
        assert out.valid[corrupt].mean() <= 0.05


class TestRegionFilter:
    def test_large_region_unchanged(self):
        flow = const_flow(12, 12, 1.0, 0.0)
        out = region_filter(flow, FilterParams(min_region_area=10))
        assert out.valid.all()

    def test_isolated_pixel_removed(self):
        flow = const_flow(8, 8, 0.0, 0.0)
        flow.valid[:] = False
        flow.valid[4, 4] = True
        out = region_filter(flow, FilterParams(min_region_area=10))
        assert not out.valid.any()

    def test_outlier_island_removed_flood_fill_oracle(self):
        h = w = 20
        u = np.zeros((h, w))
        v = np.zeros((h, w))
        u[8:10, 9:12] = 30.0  # 6-px island of divergent flow inside a coherent field
        flow = FlowField(u, v, np.ones((h, w), bool))
        fp = FilterParams(min_region_area=10, region_flow_tolerance=1.0)
        out = region_filter(flow, fp)

        # oracle: breadth-first flood fill with the same joining rule
        seen = np.zeros((h, w), int)
        comp = 0
        sizes = {}
        for sy in range(h):
            for sx in range(w):
                if seen[sy, sx]:
                    continue
                comp += 1
                stack = [(sy, sx)]
                seen[sy, sx] = comp
                size = 0
                while stack:
                    y, x = stack.pop()
                    size += 1
                    for ny, nx in ((y + 1, x), (y - 1, x), (y, x + 1), (y, x - 1)):
                        if 0 <= ny < h and 0 <= nx < w and not seen[ny, nx]:
                            if abs(u[ny, nx] - u[y, x]) < 1.0 and abs(v[ny, nx] - v[y, x]) < 1.0:
                                seen[ny, nx] = comp
                                stack.append((ny, nx))
                sizes[comp] = size
        expected_valid = np.vectorize(lambda c: sizes[c] >= 10)(seen)
        assert np.array_equal(out.valid, expected_valid)

    def test_invalid_pixels_stay_invalid(self):
        flow = const_flow(10, 10, 0.0, 0.0)
        flow.valid[0, :] = False
        out = region_filter(flow, FilterParams(min_region_area=5))
        assert not out.valid[0].any()
        assert out.valid[1:].all()


class TestSparsify:
    def test_full_block_emits_min_error(self):
        flow = const_flow(3, 3, 1.0, 2.0)
        errors = np.array([[0.5, 0.4, 0.9], [0.3, 0.8, 0.2], [0.6, 0.7, 0.1]])
        ms = sparsify(flow, errors, FilterParams(min_matches_s=7))
        assert len(ms) == 1
        m = next(iter(ms))
        assert (m.x, m.y) == (2.0, 2.0)
        assert m.error == pytest.approx(0.1)
        assert (m.u, m.v) == (1.0, 2.0)

    def test_block_below_s_emits_nothing(self):
        flow = const_flow(3, 3, 0.0, 0.0)
        flow.valid[0, :] = False  # 6 valid pixels left
        errors = np.zeros((3, 3))
        assert len(sparsify(flow, errors, FilterParams(min_matches_s=7))) == 0
        assert len(sparsify(flow, errors, FilterParams(min_matches_s=6))) == 1

    def test_fully_valid_emits_one_per_block(self):
        flow = const_flow(9, 12, 0.0, 0.0)
        errors = np.zeros((12, 9))
        ms = sparsify(flow, errors, FilterParams(min_matches_s=1))
        assert len(ms) == (12 // 3) * (9 // 3)

    def test_partial_border_blocks_apply_same_rule(self):
        flow = const_flow(4, 4, 0.0, 0.0)  # block valid counts: 9, 3, 3, 1
        errors = np.zeros((4, 4))
        ms = sparsify(flow, errors, FilterParams(min_matches_s=3))
        assert len(ms) == 3
        ms1 = sparsify(flow, errors, FilterParams(min_matches_s=1))
        assert len(ms1) == 4

    def test_tie_broken_by_raster_order(self):
        flow = const_flow(3, 3, 0.0, 0.0)
        errors = np.full((3, 3), 0.7)
        ms = sparsify(flow, errors, FilterParams(min_matches_s=9))
        m = next(iter(ms))
        assert (m.x, m.y) == (0.0, 0.0)

    def test_deterministic(self, rng):
        flow = FlowField(rng.normal(size=(15, 15)), rng.normal(size=(15, 15)),
                         rng.random((15, 15)) < 0.7)
        errors = rng.random((15, 15))
        fp = FilterParams(min_matches_s=4)
        a = sparsify(flow, errors, fp)
        b = sparsify(flow, errors, fp)
        assert np.array_equal(a.x, b.x) and np.array_equal(a.error, b.error)

    def test_density_bound(self, rng):
        flow = FlowField(rng.normal(size=(30, 30)), rng.normal(size=(30, 30)),
                         np.ones((30, 30), bool))
        ms = sparsify(flow, rng.random((30, 30)), FilterParams(min_matches_s=1))
        assert len(ms) <= 30 * 30 / 9

    def test_emitted_errors_below_epsilon_after_checks(self):
        i1, i2 = shifted_pair(36, 36, 1, 0, seed=83)
        params = MatchingParams(seed=3)
        fwd = match_full(i1, i2, params)
        fp = FilterParams(epsilon=1.0, min_matches_s=4)
        filtered, err = two_pass_filter(i1, i2, fwd, params, None, fp)
        ms = sparsify(filtered, err, fp)
        assert len(ms) > 0
        assert np.all(ms.error <= 1.0)


class TestSparsifyProperty:
    def test_matches_block_oracle_on_random_instances(self):
        from hypothesis import given, settings
        from hypothesis import strategies as st

        @given(st.integers(2, 20), st.integers(2, 20), st.integers(1, 9), st.integers(0, 10**6))
        @settings(max_examples=60, deadline=None)
        def check(w, h, s, seed):
            rng = np.random.default_rng(seed)
            flow = FlowField(rng.normal(size=(h, w)), rng.normal(size=(h, w)),
                             rng.random((h, w)) < 0.6)
            errors = rng.random((h, w))
            ms = sparsify(flow, errors, FilterParams(min_matches_s=s))
            got = {(int(m.x), int(m.y)) for m in ms}
            expected = set()
            for by in range(0, h, 3):
                for bx in range(0, w, 3):
                    cells = [(y, x) for y in range(by, min(by + 3, h))
                             for x in range(bx, min(bx + 3, w)) if flow.valid[y, x]]
                    if len(cells) < s:
                        continue
                    best = min(cells, key=lambda c: (errors[c], (c[0] - by) * 3 + (c[1] - bx)))
                    expected.add((best[1], best[0]))
            assert got == expected

        check()


class TestMatchSetIO:
    def test_text_round_trip_lossless(self, tmp_path, rng):
        ms = MatchSet(
            x=rng.integers(0, 50, 20).astype(float),
            y=rng.integers(0, 50, 20).astype(float),
            u=rng.standard_normal(20) * 3.7,
            v=rng.standard_normal(20) / 3.1,
            error=rng.random(20),
        )
        path = tmp_path / "m.txt"
        ms.save_text(path)
        back = MatchSet.load_text(path)
        for field_name in ("x", "y", "u", "v", "error"):
            assert np.array_equal(getattr(back, field_name), getattr(ms, field_name))

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("1 2 3\n")
        with pytest.raises(InvalidInputError):
            MatchSet.load_text(path)

    def test_comments_and_blanks_skipped(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("# header\n\n1 2 0.5 -0.5 0.1\n")
        ms = MatchSet.load_text(path)
        assert len(ms) == 1
