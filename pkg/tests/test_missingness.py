import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from laser_vfl.errors import InputError, ParseError
from laser_vfl.missingness import (
    availability_stats,
    group_batches_by_pattern,
    load_mask_csv,
    row_patterns,
    sample_block_probs_beta,
    sample_mask_per_block,
    sample_mask_uniform,
    save_mask_csv,
)


class TestUniformMask:
    def test_extremes(self):
        assert sample_mask_uniform(50, 3, 0.0, 1).all()
        assert not sample_mask_uniform(50, 3, 1.0, 1).any()

    def test_fully_observed_fraction(self):
        mask = sample_mask_uniform(100_000, 3, 0.5, 0)
        assert abs(mask.all(axis=1).mean() - 0.125) < 0.01

    def test_deterministic(self):
        assert np.array_equal(sample_mask_uniform(100, 4, 0.3, 9), sample_mask_uniform(100, 4, 0.3, 9))
        assert not np.array_equal(sample_mask_uniform(100, 4, 0.3, 9), sample_mask_uniform(100, 4, 0.3, 10))

    @pytest.mark.parametrize("p", [-0.1, 1.5])
    def test_range(self, p):
        with pytest.raises(InputError):
            sample_mask_uniform(10, 2, p, 0)

    def test_columns_uncorrelated(self):
        mask = sample_mask_uniform(100_000, 4, 0.4, 3).astype(float)
        corr = np.corrcoef(mask.T)
        off = corr[~np.eye(4, dtype=bool)]
        assert np.abs(off).max() < 0.01


class TestPerBlockMask:
    def test_extremes(self):
        assert sample_mask_per_block(20, [0, 0, 0], 0).all()
        m = sample_mask_per_block(20, [0, 1], 0)
        assert m[:, 0].all() and not m[:, 1].any()

    def test_rates(self):
        probs = np.array([0.1, 0.5, 0.8, 0.3])
        m = sample_mask_per_block(100_000, probs, 1)
        np.testing.assert_allclose(m.mean(axis=0), 1 - probs, atol=0.01)

    def test_bad_prob(self):
        with pytest.raises(InputError):
            sample_mask_per_block(5, [0.2, 1.2], 0)


class TestBeta:
    def test_mean(self):
        x = sample_block_probs_beta(100_000, 2.0, 2.0, 0)
        assert abs(x.mean() - 0.5) < 0.01
        assert x.min() >= 0 and x.max() <= 1

    def test_uniform_case_ks(self):
        x = np.sort(sample_block_probs_beta(100_000, 1.0, 1.0, 5))
        n = x.size
        ks = max(np.max(np.arange(1, n + 1) / n - x), np.max(x - np.arange(n) / n))
        assert ks < 0.01

    @pytest.mark.parametrize("a,b", [(0, 1), (1, -2)])
    def test_bad_shape(self, a, b):
        with pytest.raises(InputError):
            sample_block_probs_beta(3, a, b, 0)

    def test_deterministic(self):
        assert np.array_equal(sample_block_probs_beta(4, 2, 2, 1), sample_block_probs_beta(4, 2, 2, 1))


class TestGrouping:
    def test_all_true(self):
        groups = group_batches_by_pattern(np.ones((10, 3), bool), 4, 0)
        assert len(groups) == 1 and groups[0].pattern == (0, 1, 2)
        assert [b.size for b in groups[0].batches] == [4, 4, 2]

    def test_small_example(self):
        mask = np.array([[1, 0], [1, 0], [1, 1], [0, 0]], bool)
        groups = group_batches_by_pattern(mask, 8, 0)
        assert [(g.pattern, g.indices.size) for g in groups] == [((0,), 2), ((0, 1), 1)]

    @settings(max_examples=30, deadline=None)
    @given(
        st.integers(1, 60),
        st.integers(1, 4),
        st.floats(0, 1),
        st.integers(1, 9),
        st.integers(0, 1000),
    )
    def test_partition(self, N, K, p, bs, seed):
        mask = sample_mask_uniform(N, K, p, seed)
        groups = group_batches_by_pattern(mask, bs, seed)
        seen = np.concatenate([b for g in groups for b in g.batches]) if groups else np.array([], int)
        assert sorted(seen.tolist()) == sorted(np.flatnonzero(mask.any(axis=1)).tolist())
        for g in groups:
            for b in g.batches:
                assert 1 <= b.size <= bs
                assert (mask[b] == np.isin(np.arange(K), g.pattern)).all()

    def test_batch_size(self):
        with pytest.raises(InputError):
            group_batches_by_pattern(np.ones((2, 2), bool), 0, 0)

    def test_shuffle_seeded(self):
        mask = np.ones((50, 2), bool)
        a = group_batches_by_pattern(mask, 50, 1)[0].indices
        b = group_batches_by_pattern(mask, 50, 1)[0].indices
        c = group_batches_by_pattern(mask, 50, 2)[0].indices
        assert np.array_equal(a, b) and not np.array_equal(a, c)


class TestStats:
    def test_all_true(self):
        s = availability_stats(np.ones((5, 2), bool))
        assert s["fraction_fully_observed"] == 1.0
        assert s["pattern_histogram"] == {(0, 1): 5}

    def test_all_false(self):
        s = availability_stats(np.zeros((5, 2), bool))
        assert s["fraction_fully_observed"] == 0.0 and s["pattern_histogram"] == {}

    def test_half(self):
        s = availability_stats(sample_mask_uniform(100_000, 3, 0.5, 4))
        assert s["fraction_fully_observed"] == pytest.approx(0.125, abs=0.01)

    def test_codes(self):
        assert row_patterns(np.array([[1, 0, 1], [0, 1, 0]], bool)).tolist() == [5, 2]


class TestMaskCsv:
    def test_round_trip(self, tmp_path):
        mask = sample_mask_uniform(7, 3, 0.5, 0)
        save_mask_csv(mask, tmp_path / "m.csv")
        assert (tmp_path / "m.csv").read_text().splitlines()[0] == "sample_id,block_1,block_2,block_3"
        assert np.array_equal(load_mask_csv(tmp_path / "m.csv"), mask)

    def test_bad_value(self, tmp_path):
        (tmp_path / "m.csv").write_text("sample_id,block_1\n0,2\n")
        with pytest.raises(ParseError, match=":2:2"):
            load_mask_csv(tmp_path / "m.csv")
