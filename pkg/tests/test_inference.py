import numpy as np
import pytest

from laser_vfl.data import synth_classification
from laser_vfl.errors import InputError, UnavailableError
from laser_vfl.inference import (
    PredictionRecord,
    accuracy_avg,
    evaluate,
    f1_macro,
    infer_baseline,
    infer_laser,
    majority_vote,
    predict_dataset,
)
from laser_vfl.missingness import sample_mask_uniform
from laser_vfl.model import Arch, init_params, predict_combinatorial, predict_laser, predict_local


def rec(label, preds, fallback=None):
    return PredictionRecord(0, label, dict(preds), fallback)


class TestAccuracy:
    def test_hand_example(self):
        records = [rec(1, {0: 1, 1: 0}), rec(1, {0: 1})]
        assert accuracy_avg(records) == 75.0

    def test_all_correct(self):
        assert accuracy_avg([rec(2, {0: 2, 1: 2}), rec(0, {1: 0})]) == 100.0

    def test_permutation_invariant(self):
        records = [rec(1, {0: 1, 1: 0}), rec(0, {0: 1}), rec(2, {0: 2, 2: 2, 1: 0})]
        assert accuracy_avg(records) == pytest.approx(accuracy_avg(records[::-1]), abs=1e-12)

    def test_single_client_plain_accuracy(self):
        y = np.array([0, 1, 1, 0, 1])
        p = np.array([0, 0, 1, 0, 1])
        assert accuracy_avg([rec(a, {0: b}) for a, b in zip(y, p)]) == pytest.approx(100 * np.mean(y == p))

    def test_fallback_scored(self):
        assert accuracy_avg([rec(1, {}, fallback=1), rec(1, {}, fallback=0)]) == 50.0

    def test_empty(self):
        with pytest.raises(InputError):
            accuracy_avg([])


class TestF1:
    def test_hand_example(self):
        # TP=1, FP=1, FN=0
        records = [rec(1, {0: 1}), rec(0, {0: 1})]
        assert f1_macro(records, 1) == pytest.approx(200 / 3, abs=0.005)

    def test_perfect(self):
        assert f1_macro([rec(1, {0: 1, 1: 1}), rec(0, {0: 0, 1: 0})], 2) == 100.0

    def test_all_negative(self):
        assert f1_macro([rec(1, {0: 0}), rec(0, {0: 0})], 1) == 0.0

    def test_unobserving_client_scores_zero(self):
        assert f1_macro([rec(1, {0: 1})], 2) == 50.0

    def test_non_binary(self):
        with pytest.raises(InputError):
            f1_macro([rec(2, {0: 1})], 1)


class TestVote:
    def test_majority(self):
        assert majority_vote([1, 1, 2], 0.9) == 1

    def test_tie_uses_draw(self):
        assert majority_vote([3, 1], 0.0) == 1
        assert majority_vote([3, 1], 0.99) == 3


@pytest.fixture(scope="module")
def setup():
    ds = synth_classification(12, K=3, widths=[2, 3, 2], C=3, seed=1)
    arch = Arch(ds.widths, 3, d_rep=3, hidden=(4,))
    return ds, arch


def blocks(ds, pattern):
    return {k: ds.blocks[k] if k in pattern else None for k in range(ds.K)}


class TestInferLaser:
    def test_single_block_is_local(self, setup):
        ds, arch = setup
        params = init_params("laser", arch, 0)
        preds = infer_laser(blocks(ds, (1,)), (1,), params)
        assert np.array_equal(preds[1], predict_local(1, ds.blocks[1], params).argmax(axis=1))

    def test_manual_oracle(self):
        arch = Arch((1, 1), 2, d_rep=2, hidden=())
        params = init_params("laser", arch, 0)
        params.tensors["f0.0.W"] = np.array([[1.0, 0.0]])
        params.tensors["f1.0.W"] = np.array([[0.0, 1.0]])
        params.tensors["g0.0.W"] = np.eye(2)
        params.tensors["g1.0.W"] = np.array([[0.0, 1.0], [1.0, 0.0]])
        x = {0: np.array([[2.0]]), 1: np.array([[1.0]])}
        # mean rep = (1, 0.5): g0 keeps the order, g1 swaps it
        preds = infer_laser(x, (0, 1), params)
        assert preds[0].tolist() == [0] and preds[1].tolist() == [1]

    def test_arrival_order(self, setup):
        ds, arch = setup
        params = init_params("laser", arch, 2)
        a = infer_laser(blocks(ds, (0, 1, 2)), (0, 1, 2), params)
        b = infer_laser(blocks(ds, (0, 1, 2)), (2, 0, 1), params)
        assert all(np.array_equal(a[k], b[k]) for k in a)

    def test_empty(self, setup):
        ds, arch = setup
        with pytest.raises(UnavailableError):
            infer_laser({}, (), init_params("laser", arch, 0))


class TestBaselines:
    def test_standard_fallback(self, setup):
        ds, arch = setup
        params = init_params("standard", arch, 0)
        rand = np.arange(ds.N) % 3
        preds, fb = infer_baseline("standard", blocks(ds, (0, 2)), (0, 2), params, rand)
        assert fb and np.array_equal(preds[0], rand) and np.array_equal(preds[2], rand)
        _, fb = infer_baseline("standard", blocks(ds, (0, 1, 2)), (0, 1, 2), params, rand)
        assert not fb
        with pytest.raises(UnavailableError):
            infer_baseline("standard", blocks(ds, (0,)), (0,), params)

    def test_combinatorial_uses_dedicated(self, setup):
        ds, arch = setup
        params = init_params("combinatorial", arch, 0)
        preds, _ = infer_baseline("combinatorial", blocks(ds, (1,)), (1,), params)
        assert np.array_equal(preds[1], predict_combinatorial((1,), blocks(ds, (1,)), params).argmax(axis=1))
        preds, _ = infer_baseline("combinatorial", blocks(ds, (0, 1, 2)), (0, 1, 2), params)
        full = predict_combinatorial((0, 1, 2), blocks(ds, (0, 1, 2)), params).argmax(axis=1)
        assert all(np.array_equal(preds[k], full) for k in range(3))

    def test_ensemble_single_client_is_local(self, setup):
        ds, arch = setup
        params = init_params("ensemble", arch, 0)
        e, _ = infer_baseline("ensemble", blocks(ds, (2,)), (2,), params)
        l, _ = infer_baseline("local", blocks(ds, (2,)), (2,), params)
        assert np.array_equal(e[2], l[2])

    def test_unknown_method(self, setup):
        ds, arch = setup
        with pytest.raises(InputError):
            infer_baseline("x", blocks(ds, (0,)), (0,), init_params("laser", arch, 0))


class TestEvaluate:
    def test_full_observation_no_fallbacks(self, setup):
        ds, arch = setup
        mask = np.ones((ds.N, 3), bool)
        for method in ("standard", "combinatorial", "laser"):
            rep = evaluate(method, init_params(method, arch, 0), ds, mask, 0)
            assert rep.n_fallbacks == 0 and 0 <= rep.accuracy <= 100

    def test_empty_rows_fall_back(self, setup):
        ds, arch = setup
        mask = np.ones((ds.N, 3), bool)
        mask[:4] = False
        records = predict_dataset("laser", init_params("laser", arch, 0), ds, mask, 0)
        assert sum(r.fallback is not None for r in records) == 4

    def test_deterministic(self, setup):
        ds, arch = setup
        mask = sample_mask_uniform(ds.N, 3, 0.5, 0)
        params = init_params("ensemble", arch, 0)
        assert evaluate("ensemble", params, ds, mask, 3) == evaluate("ensemble", params, ds, mask, 3)

    def test_laser_records_match_predictor(self, setup):
        ds, arch = setup
        mask = sample_mask_uniform(ds.N, 3, 0.3, 2)
        params = init_params("laser", arch, 0)
        for r in predict_dataset("laser", params, ds, mask, 0):
            pattern = tuple(np.flatnonzero(mask[r.sample_id]))
            x = {k: ds.blocks[k][[r.sample_id]] for k in pattern}
            for k in pattern:
                assert r.preds[k] == int(predict_laser(k, pattern, x, params).argmax())

    def test_binary_f1(self):
        ds = synth_classification(20, K=2, widths=2, C=2, seed=0)
        params = init_params("laser", Arch(ds.widths, 2, 2, ()), 0)
        rep = evaluate("laser", params, ds, np.ones((20, 2), bool), 0)
        assert rep.f1 is not None and 0 <= rep.f1 <= 100
