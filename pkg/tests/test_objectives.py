import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cosine_ws import objectives as obj
from cosine_ws.objectives import ContrastiveConfig


def prob_vectors(C=3):
    return arrays(np.float64, C, elements=st.floats(0.01, 1.0)).map(lambda a: a / a.sum())


def prob_batches(C=3, max_n=6):
    return st.integers(1, max_n).flatmap(
        lambda n: arrays(np.float64, (n, C), elements=st.floats(0.01, 1.0))
        .map(lambda a: a / a.sum(axis=1, keepdims=True)))


class TestCrossEntropy:
    def test_examples(self):
        assert obj.cross_entropy([1.0, 0.0], 0) == 0.0
        assert obj.cross_entropy([0.5, 0.5], 0) == pytest.approx(0.6931, abs=1e-4)
        assert obj.cross_entropy([0.8, 0.2], 1) == pytest.approx(1.6094, abs=1e-4)

    def test_zero_probability_is_clamped(self):
        assert obj.cross_entropy([1.0, 0.0], 1) == pytest.approx(-math.log(1e-12))

    def test_batch_grad_matches_finite_difference(self):
        rng = np.random.default_rng(0)
        p = rng.dirichlet(np.ones(4), size=3)
        y = np.array([0, 2, 3])
        _, g = obj.cross_entropy_and_grad(p, y)
        h = 1e-7
        for i, j in itertools.product(range(3), range(4)):
            d = np.zeros_like(p)
            d[i, j] = h
            num = (obj.cross_entropy_and_grad(p + d, y)[0] - obj.cross_entropy_and_grad(p - d, y)[0]) / (2 * h)
            assert g[i, j] == pytest.approx(num, rel=1e-6, abs=1e-9)


class TestHardPseudo:
    def test_examples(self):
        assert obj.hard_pseudo([0.2, 0.7, 0.1]) == 1
        assert obj.hard_pseudo([0.5, 0.5]) == 0
        for k in range(4):
            assert obj.hard_pseudo(np.eye(4)[k]) == k


class TestSoftPseudo:
    def test_hand_example(self):
        y = obj.soft_pseudo([[0.8, 0.2], [0.4, 0.6]])
        np.testing.assert_allclose(y[0], [0.8 / 0.9, 0.1 / 0.9], atol=1e-12)
        np.testing.assert_allclose(y[1], [0.2 / 1.1, 0.9 / 1.1], atol=1e-12)
        np.testing.assert_allclose(y, [[0.8889, 0.1111], [0.1818, 0.8182]], atol=1e-4)

    @given(prob_vectors(4))
    def test_singleton_batch_is_uniform(self, p):
        np.testing.assert_allclose(obj.soft_pseudo([p])[0], 0.25, atol=1e-12)

    def test_identical_uniform_batch(self):
        np.testing.assert_allclose(obj.soft_pseudo(np.full((5, 3), 1 / 3)), 1 / 3)

    def test_dead_class_is_skipped(self):
        y = obj.soft_pseudo([[0.5, 0.5, 0.0], [0.9, 0.1, 0.0]])
        assert np.all(y[:, 2] == 0.0)
        np.testing.assert_allclose(y.sum(axis=1), 1.0)

    def test_degenerate(self):
        with pytest.raises(obj.DegeneratePseudoLabel, match="degenerate pseudo-label"):
            obj.soft_pseudo([[0.0, 0.0], [0.5, 0.5]])

    @given(prob_batches(4))
    def test_valid_probabilities(self, batch):
        y = obj.soft_pseudo(batch)
        assert np.all(y >= 0)
        np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-9)

    @given(prob_batches(4), st.permutations(range(4)))
    def test_class_permutation_equivariant(self, batch, perm):
        perm = list(perm)
        np.testing.assert_allclose(obj.soft_pseudo(batch[:, perm]), obj.soft_pseudo(batch)[:, perm],
                                   atol=1e-12)

    @given(prob_vectors(4), st.integers(1, 6))
    def test_identical_batch_collapses_to_uniform(self, p, n):
        np.testing.assert_allclose(obj.soft_pseudo(np.tile(p, (n, 1))), 0.25, atol=1e-12)

    @given(prob_vectors(4))
    def test_equal_class_frequencies_keep_ranking(self, p):
        assume(np.sort(p)[-1] - np.sort(p)[-2] > 1e-9)
        # all cyclic shifts of p give every class the same frequency
        batch = np.stack([np.roll(p, k) for k in range(4)])
        y = obj.soft_pseudo(batch)
        np.testing.assert_allclose(y, batch**2 / np.sum(batch**2, axis=1, keepdims=True), atol=1e-12)
        assert np.all(np.argmax(y, axis=1) == np.argmax(batch, axis=1))


class TestSampleWeight:
    def test_examples(self):
        assert obj.sample_weight([0.0, 1.0, 0.0]) == pytest.approx(1.0)
        assert obj.sample_weight([0.25] * 4) == pytest.approx(0.0, abs=1e-12)
        assert obj.sample_weight([0.9, 0.1]) == pytest.approx(0.5310, abs=1e-4)

    @given(prob_vectors(3), prob_vectors(3))
    def test_decreasing_in_entropy(self, p, q):
        hp, hq = obj.entropy(p), obj.entropy(q)
        assume(abs(hp - hq) > 1e-9)
        wp, wq = obj.sample_weight(p), obj.sample_weight(q)
        assert (wp > wq) == (hp < hq)
        assert 0.0 <= wp <= 1.0


class TestSelectConfident:
    def test_threshold_zero_keeps_all(self):
        y = np.random.default_rng(0).dirichlet(np.ones(3), 7)
        assert len(obj.select_confident(y, 0.0)) == 7

    def test_inclusive_boundary(self):
        # pick labels with exactly representable weights via the weights array itself
        y = np.array([[0.95, 0.05], [0.5, 0.5], [0.9, 0.1]])
        w = obj.sample_weight(y)
        sel = obj.select_confident(y, w[2])
        assert list(sel.indices) == [0, 2]
        np.testing.assert_array_equal(sel.weights, w[[0, 2]])

    def test_threshold_one_only_one_hot(self):
        y = np.array([[1.0, 0.0], [0.99, 0.01], [0.0, 1.0]])
        assert list(obj.select_confident(y, 1.0).indices) == [0, 2]

    def test_may_be_empty(self):
        assert len(obj.select_confident([[0.5, 0.5]], 0.5)) == 0


class TestKL:
    def test_examples(self):
        assert obj.kl_div([0.3, 0.7], [0.3, 0.7]) == 0.0
        assert obj.kl_div([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-12)
        assert obj.kl_div([0.8, 0.2], [0.6, 0.4]) == pytest.approx(0.09151, abs=1e-5)

    @given(prob_vectors(), prob_vectors())
    def test_non_negative(self, p, q):
        assert obj.kl_div(p, q) >= -1e-12

    @given(prob_vectors())
    def test_zero_iff_equal(self, p):
        assert obj.kl_div(p, p) == pytest.approx(0.0, abs=1e-15)


class TestClassificationLoss:
    def test_zero_when_matching(self):
        y = np.array([[0.9, 0.1], [0.2, 0.8]])
        sel = obj.select_confident(y, 0.0)
        assert obj.classification_loss(sel, y, y) == pytest.approx(0.0, abs=1e-15)

    def test_single_member_definition(self):
        sel = obj.ConfidentSelection(np.array([0]), np.array([0.5]))
        p = np.array([[0.6, 0.4]])
        y = np.array([[0.8, 0.2]])
        assert obj.classification_loss(sel, p, y) == pytest.approx(0.5 * obj.kl_div(y[0], p[0]))

    def test_two_member_composition(self):
        y = np.array([[0.9, 0.1], [0.3, 0.7], [0.5, 0.5]])
        p = np.array([[0.6, 0.4], [0.2, 0.8], [0.1, 0.9]])
        sel = obj.select_confident(y, 0.1)
        assert list(sel.indices) == [0, 1]
        hand = sum(obj.sample_weight(y[i]) * obj.kl_div(y[i], p[i]) for i in (0, 1)) / 2
        assert obj.classification_loss(sel, p, y) == pytest.approx(hand, abs=1e-15)

    def test_empty(self):
        with pytest.raises(ValueError, match="empty confident set"):
            obj.classification_loss(obj.ConfidentSelection(np.array([], int), np.array([])),
                                    np.zeros((0, 2)), np.zeros((0, 2)))


class TestPairSimilarity:
    def test_examples(self):
        assert obj.pair_similarity([0.9, 0.1], [0.6, 0.4], "hard") == 1.0
        assert obj.pair_similarity([0.3, 0.7], [0.3, 0.7], "kl-soft") == 1.0
        assert obj.pair_similarity([1.0, 0.0], [0.0, 1.0], "l2-soft") == 0.0

    @pytest.mark.parametrize("mode", obj.SIMILARITIES)
    @given(p=prob_vectors(), q=prob_vectors())
    def test_range_and_symmetry(self, mode, p, q):
        w = obj.pair_similarity(p, q, mode)
        assert 0.0 <= w <= 1.0
        assert w == pytest.approx(obj.pair_similarity(q, p, mode), abs=1e-15)


class TestPairDistance:
    @pytest.mark.parametrize("metric", obj.METRICS)
    def test_self_distance(self, metric):
        assert obj.pair_distance([0.3, -1.2, 2.0], [0.3, -1.2, 2.0], metric) == pytest.approx(0.0, abs=1e-15)

    def test_examples(self):
        assert obj.pair_distance([1, 0], [0, 1], "scaled-euclidean") == 1.0
        assert obj.pair_distance([1, 0], [0, 1], "cosine") == 1.0

    def test_zero_norm(self):
        with pytest.raises(ValueError, match="zero-norm representation"):
            obj.pair_distance([0.0, 0.0], [1.0, 0.0], "cosine")


class TestContrastivePairLoss:
    def test_examples(self):
        assert obj.contrastive_pair_loss(0.3, 1.0, 1.0) == pytest.approx(0.09)
        assert obj.contrastive_pair_loss(1.5, 0.0, 1.0) == 0.0
        assert obj.contrastive_pair_loss(0.4, 0.5, 1.0) == pytest.approx(0.26)

    @given(st.floats(0, 10), st.floats(0, 10))
    def test_monotone_for_similar_pairs(self, a, b):
        assume(abs(a - b) > 1e-6)
        lo, hi = sorted((a, b))
        assert obj.contrastive_pair_loss(lo, 1.0, 1.0) < obj.contrastive_pair_loss(hi, 1.0, 1.0)

    @given(st.floats(0, 5), st.floats(0, 10))
    def test_dissimilar_zero_beyond_margin(self, gamma, extra):
        assert obj.contrastive_pair_loss(gamma + extra, 0.0, gamma) == 0.0


class TestContrastiveRegularizer:
    def test_identical_same_class(self):
        reps = np.tile([0.3, -0.2, 0.5], (4, 1))
        soft = np.tile([0.9, 0.1], (4, 1))
        assert obj.contrastive_regularizer(reps, soft, rng=np.random.default_rng(0)) == 0.0

    def test_two_members_sampled_equals_exhaustive(self):
        rng = np.random.default_rng(1)
        reps, soft = rng.normal(size=(2, 5)), rng.dirichlet(np.ones(3), 2)
        a = obj.contrastive_regularizer(reps, soft, ContrastiveConfig(), np.random.default_rng(2))
        b = obj.contrastive_regularizer(reps, soft, ContrastiveConfig(exhaustive=True))
        assert a == b

    def test_fewer_than_two_is_zero(self):
        assert obj.contrastive_regularizer(np.ones((1, 3)), np.ones((1, 2)) / 2) == 0.0

    def test_sampling_draws_n_distinct_pairs(self):
        i, j = obj.sample_pairs(6, np.random.default_rng(0))
        pairs = set(zip(i.tolist(), j.tolist()))
        assert len(pairs) == 6 and all(a < b for a, b in pairs)

    def test_sampling_deterministic(self):
        a = obj.sample_pairs(9, np.random.default_rng(4))
        b = obj.sample_pairs(9, np.random.default_rng(4))
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_sampled_is_unbiased_estimate(self):
        rng = np.random.default_rng(3)
        reps, soft = rng.normal(size=(6, 4)), rng.dirichlet(np.ones(3), 6)
        exact = obj.contrastive_regularizer(reps, soft, ContrastiveConfig(exhaustive=True))
        draws = [obj.contrastive_regularizer(reps, soft, rng=np.random.default_rng(s))
                 for s in range(3000)]
        assert np.mean(draws) == pytest.approx(exact, rel=0.03)

    @pytest.mark.parametrize("metric", obj.METRICS)
    @pytest.mark.parametrize("mode", obj.SIMILARITIES)
    def test_gradient(self, metric, mode):
        rng = np.random.default_rng(5)
        reps, soft = rng.normal(size=(5, 3)), rng.dirichlet(np.ones(3), 5)
        cfg = ContrastiveConfig(metric, mode, margin=1.0, exhaustive=True)
        _, g = obj.contrastive_regularizer_and_grad(reps, soft, cfg)
        h = 1e-6
        for i, k in itertools.product(range(5), range(3)):
            d = np.zeros_like(reps)
            d[i, k] = h
            num = (obj.contrastive_regularizer(reps + d, soft, cfg)
                   - obj.contrastive_regularizer(reps - d, soft, cfg)) / (2 * h)
            assert g[i, k] == pytest.approx(num, rel=1e-5, abs=1e-8)


class TestConfidenceRegularizer:
    def test_uniform_is_zero(self):
        assert obj.confidence_regularizer(np.full((3, 4), 0.25)) == pytest.approx(0.0, abs=1e-15)

    def test_single_member(self):
        assert obj.confidence_regularizer([[0.9, 0.1]]) == pytest.approx(0.5108, abs=1e-4)

    def test_empty_is_zero(self):
        assert obj.confidence_regularizer(np.zeros((0, 3))) == 0.0

    @given(prob_batches())
    def test_non_negative(self, p):
        assert obj.confidence_regularizer(p) >= -1e-12


class TestTotalLoss:
    def test_examples(self):
        assert obj.total_loss(0.2, 0.3, 0.4, 0.0) == pytest.approx(0.5)
        assert obj.total_loss(0.2, 0.3, 0.4, 0.05, use_r1=False, use_r2=False) == 0.2
        assert obj.total_loss(0.2, 0.3, 0.4, 0.05) == pytest.approx(0.52)

    def test_negative_weight(self):
        with pytest.raises(ValueError):
            obj.total_loss(0.0, 0.0, 0.0, -1.0)
