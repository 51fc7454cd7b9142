import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from cosine_ws.evaluation import (
    accuracy,
    confidence_bins,
    evaluate,
    micro_f1_excluding,
    two_sample_t_test,
    write_bins_csv,
)

A, B, O = 0, 1, 2


class TestAccuracy:
    def test_examples(self):
        assert accuracy([0, 1, 2], [0, 1, 2]) == 1.0
        assert accuracy([1, 1], [0, 0]) == 0.0
        assert accuracy([0, 1, 2, 2], [0, 1, 2, 0]) == 0.75

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            accuracy([0, 1], [0])

    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1), st.randoms())
    def test_permutation_invariant(self, pairs, rnd):
        shuffled = list(pairs)
        rnd.shuffle(shuffled)
        a = accuracy(*zip(*pairs))
        assert a == accuracy(*zip(*shuffled))


class TestMicroF1:
    def test_perfect(self):
        assert micro_f1_excluding([A, B, O], [A, B, O], O) == 1.0

    def test_hand_example(self):
        # TP=2, P=2/4, R=2/3
        f1 = micro_f1_excluding([A, B, B, A], [A, A, B, O], O)
        assert f1 == pytest.approx(2 * 0.5 * (2 / 3) / (0.5 + 2 / 3))
        assert f1 == pytest.approx(0.5714, abs=1e-4)

    def test_all_predicted_excluded(self):
        assert micro_f1_excluding([O, O, O], [A, B, O], O) == 0.0

    @given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1))
    def test_equals_plain_micro_f1_without_excluded(self, pairs):
        preds, golds = map(np.array, zip(*pairs))
        # with every sample in the regular classes micro-F1 reduces to accuracy
        assert micro_f1_excluding(preds, golds, O) == pytest.approx(accuracy(preds, golds))


class TestConfidenceBins:
    def test_identical_samples_one_bin(self):
        probs = np.tile([0.7, 0.2, 0.1], (5, 1))
        bins = confidence_bins(probs, [0] * 5, 10)
        assert sum(b["count"] > 0 for b in bins) == 1

    def test_one_hot_in_top_bin(self):
        bins = confidence_bins(np.array([[1.0, 0.0]]), [0], 4)
        assert bins[-1]["count"] == 1 and bins[-1]["accuracy"] == 1.0

    @given(st.integers(1, 30), st.integers(1, 12), st.integers(0, 1000))
    def test_counts_partition(self, n, n_bins, seed):
        rng = np.random.default_rng(seed)
        probs = rng.dirichlet(np.ones(3), n)
        bins = confidence_bins(probs, rng.integers(0, 3, n), n_bins)
        assert len(bins) == n_bins and sum(b["count"] for b in bins) == n

    def test_csv(self, tmp_path):
        bins = confidence_bins(np.array([[0.9, 0.1], [0.5, 0.5]]), [0, 1], 2)
        write_bins_csv(bins, tmp_path / "b.csv")
        lines = (tmp_path / "b.csv").read_text().splitlines()
        assert lines[0] == "low,high,count,accuracy" and len(lines) == 3


def test_evaluate_report():
    probs = np.array([[0.9, 0.05, 0.05], [0.1, 0.8, 0.1], [0.2, 0.2, 0.6]])
    rep = evaluate(probs, np.array([0, 2, 2]), others_index=2)
    assert rep.accuracy == pytest.approx(2 / 3) and rep.n == 3
    assert sum(b["count"] for b in rep.confidence_bins) == 3
    assert rep.micro_f1 == micro_f1_excluding([0, 1, 2], [0, 2, 2], 2)


class TestTTest:
    def test_identical(self):
        assert two_sample_t_test([1, 2, 3], [1, 2, 3]) == (0.0, 1.0)

    def test_constant_equal(self):
        assert two_sample_t_test([5, 5], [5, 5, 5]) == (0.0, 1.0)

    def test_separated(self):
        t, p = two_sample_t_test([10, 11, 12], [0, 1, 2])
        # var 1 each, se = sqrt(2/3), t = 10 / sqrt(2/3), df = 4
        assert t == pytest.approx(10 / np.sqrt(2 / 3))
        assert p < 0.01

    def test_matches_scipy_welch(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            a = rng.normal(0, rng.uniform(0.5, 2), rng.integers(2, 9))
            b = rng.normal(0.5, rng.uniform(0.5, 2), rng.integers(2, 9))
            ref = stats.ttest_ind(a, b, equal_var=False)
            t, p = two_sample_t_test(a, b)
            assert t == pytest.approx(ref.statistic, rel=1e-10)
            assert p == pytest.approx(ref.pvalue, rel=1e-8)

    def test_tiny_variance_no_underflow(self):
        t, p = two_sample_t_test([0.0, 0.0], [0.0, 1.2e-120])
        assert np.isfinite(t) and 0 <= p <= 1

    def test_too_small(self):
        with pytest.raises(ValueError):
            two_sample_t_test([1], [1, 2])

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=8),
           st.lists(st.floats(-100, 100), min_size=2, max_size=8))
    def test_antisymmetric(self, a, b):
        t1, p1 = two_sample_t_test(a, b)
        t2, p2 = two_sample_t_test(b, a)
        assert t1 == -t2
        assert p1 == p2
