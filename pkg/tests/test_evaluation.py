import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hkgkit.core import HyperFact
from hkgkit.evaluation import FilterIndex, evaluate, filtered_rank, metrics_from_ranks, rank_queries, raw_rank
from hkgkit.models.base import Model, queries_from_facts


class RandomScorer(Model):
    kind = "random"

    def __init__(self, n_entities, n_relations, seed):
        super().__init__(n_entities, n_relations, {})
        self.rng = np.random.default_rng(seed)

    def score(self, batch):
        return self.rng.random((len(batch), self.n_entities))


class OracleScorer(Model):
    """Scores the known answer of each (head, relation) highest."""
    kind = "oracle"

    def __init__(self, n_entities, n_relations, truth):
        super().__init__(n_entities, n_relations, {})
        self.truth = truth

    def score(self, batch):
        out = np.zeros((len(batch), self.n_entities))
        for i, (h, r) in enumerate(zip(batch.heads, batch.rels)):
            out[i, self.truth[(int(h), int(r))]] = 1.0
        return out


class TestFilteredRank:
    def test_strict_max(self):
        assert filtered_rank([0.1, 0.9, 0.3], 1) == 1.0

    def test_tie_average(self):
        assert filtered_rank([0.9, 0.9, 0.3], 1) == 1.5

    def test_filtering(self):
        scores = [5.0, 4.0, 3.0, 1.0]
        assert raw_rank(scores, 3) == 4.0
        assert filtered_rank(scores, 3, {0, 1}) == 2.0

    def test_true_in_filter_rejected(self):
        with pytest.raises(ValueError, match="true answer"):
            filtered_rank([1.0, 2.0], 0, {0})

    @given(st.lists(st.integers(-3, 3), min_size=2, max_size=30), st.data())
    def test_filter_never_increases_rank(self, scores, data):
        n = len(scores)
        true = data.draw(st.integers(0, n - 1))
        filt = data.draw(st.sets(st.integers(0, n - 1).filter(lambda i: i != true)))
        assert filtered_rank(scores, true, filt) <= raw_rank(scores, true)

    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30), st.integers(-10**6, 10**6), st.data())
    def test_constant_shift(self, scores, c, data):
        true = data.draw(st.integers(0, len(scores) - 1))
        # integer-valued scores keep the shift exact in float64
        s = np.round(np.asarray(scores))
        assert filtered_rank(s + c, true) == filtered_rank(s, true)


class TestMetrics:
    def test_hand_arithmetic(self):
        r = metrics_from_ranks([1, 2, 4])
        assert r.mrr == pytest.approx(0.5833333333, abs=1e-9)
        assert r.hits_at[1] == pytest.approx(1 / 3)
        assert r.hits_at[3] == pytest.approx(2 / 3)
        assert r.hits_at[10] == 1.0

    @given(st.lists(st.floats(1, 500), min_size=1, max_size=50))
    def test_hits_monotone_and_bounds(self, ranks):
        r = metrics_from_ranks(ranks)
        assert r.hits_at[1] <= r.hits_at[3] <= r.hits_at[10]
        assert r.hits_at[1] <= r.mrr <= 1.0

    def test_empty(self):
        assert math.isnan(metrics_from_ranks([]).mrr)

    def test_perfect_model(self):
        facts = [HyperFact(i, 0, (i + 1) % 10) for i in range(10)]
        batch = queries_from_facts(facts, 1, 0)
        truth = {(int(h), int(r)): int(a) for h, r, a in zip(batch.heads, batch.rels, batch.answers)}
        rep = evaluate(OracleScorer(10, 1, truth), batch, FilterIndex.build([batch], False))
        assert rep.mrr == 1.0 and all(v == 1.0 for v in rep.hits_at.values())
        assert rep.by_direction["object"]["n_queries"] == 10
        assert rep.by_direction["subject"]["n_queries"] == 10
        assert rep.by_direction["average"]["mrr"] == 1.0

    def test_random_model_matches_harmonic_expectation(self):
        n, q = 50, 2000
        facts = [HyperFact(i % n, 0, (7 * i + 1) % n) for i in range(q)]
        batch = queries_from_facts(facts, 1, 0, mirror=False)
        rep = evaluate(RandomScorer(n, 1, seed=0), batch, None)
        mean = sum(1 / k for k in range(1, n + 1)) / n
        var = sum(1 / k**2 for k in range(1, n + 1)) / n - mean**2
        assert abs(rep.mrr - mean) < 3 * math.sqrt(var / q)


class TestFilterIndex:
    def test_qualifier_key_separates_statements(self):
        facts = [HyperFact(0, 0, 1, ((1, 2),)), HyperFact(0, 0, 3, ((1, 4),))]
        batch = queries_from_facts(facts, 2, 1)
        with_q = FilterIndex.build([batch], use_qualifiers=True)
        without = FilterIndex.build([batch], use_qualifiers=False)
        assert with_q.answers(batch, 0) == {1}
        assert without.answers(batch, 0) == {1, 3}

    def test_every_answer_in_own_filter(self):
        facts = [HyperFact(i % 4, i % 2, (i * 3) % 7, ((0, i % 5),)) for i in range(20)]
        batch = queries_from_facts(facts, 2, 1)
        idx = FilterIndex.build([batch], use_qualifiers=True)
        assert all(int(batch.answers[i]) in idx.answers(batch, i) for i in range(len(batch)))

    def test_rank_queries_filters_other_answers(self):
        # two answers for the same key; the scorer prefers the other one
        facts = [HyperFact(0, 0, 1), HyperFact(0, 0, 2)]
        batch = queries_from_facts(facts, 1, 0, mirror=False)
        model = OracleScorer(5, 1, {(0, 0): 2})
        ranks = rank_queries(model, batch, FilterIndex.build([batch], False))
        # fact 0: entity 2 is filtered; 1 ties with 0, 3, 4 at zero
        assert list(ranks) == [2.5, 1.0]
        raw = rank_queries(model, batch, None)
        assert list(raw) == [3.5, 1.0]

    def test_candidate_restriction(self):
        batch = queries_from_facts([HyperFact(0, 0, 1)], 1, 0, mirror=False)

        class Fixed(Model):
            kind = "fixed"

            def score(self, b):
                return np.array([[0.0, 1.0, 0.0, 9.0]])

        m = Fixed(4, 1, {})
        assert rank_queries(m, batch, None)[0] == 2.0
        assert rank_queries(m, batch, None, n_candidates=3)[0] == 1.0
