import pytest
from hypothesis import given
from hypothesis import strategies as st

from hkgkit.core import HyperFact, HyperGraph, Qualifier, Vocab, arity, intern_entity


class TestVocab:
    def test_first_label_gets_zero(self):
        v = Vocab()
        assert intern_entity("Q937", v) == 0

    def test_intern_is_idempotent(self):
        v = Vocab()
        a = intern_entity("Q937", v)
        assert intern_entity("Q937", v) == a
        assert len(v) == 1

    def test_empty_label_rejected(self):
        with pytest.raises(ValueError):
            intern_entity("", Vocab())

    def test_jf17k_sized_vocab(self):
        # Cleaned JF17k has 25,092 entities
        v = Vocab()
        ids = [intern_entity(f"/m/{i:06d}", v) for i in range(25092)]
        assert max(ids) == 25091
        assert len(v) == 25092

    @given(st.lists(st.text(min_size=1), max_size=50))
    def test_round_trip(self, labels):
        v = Vocab()
        for label in labels:
            assert v.label_of(v.intern(label)) == label
        assert len(v) == len(set(labels))

    def test_synthesized_after_freeze(self):
        v = Vocab(["a", "b"])
        v.freeze_base()
        c = v.intern("c")
        assert not v.is_synthesized(0)
        assert v.is_synthesized(c)
        assert v.base_size == 2

    def test_digest_depends_on_order(self):
        assert Vocab(["a", "b"]).digest() != Vocab(["b", "a"]).digest()
        assert Vocab(["a", "b"]).digest() == Vocab(["a", "b"]).digest()


class TestFacts:
    def test_arity(self):
        assert arity(HyperFact(0, 0, 1)) == 0
        assert arity(HyperFact(0, 0, 1, ((1, 2), (2, 3)))) == 2

    def test_qualifier_order_ignored_for_equality(self):
        a = HyperFact(0, 1, 2, ((3, 4), (5, 6)))
        b = HyperFact(0, 1, 2, ((5, 6), (3, 4)))
        assert a == b and hash(a) == hash(b)
        assert a.qualifiers != b.qualifiers  # source order kept

    def test_main_triple_is_order_sensitive(self):
        assert HyperFact(0, 1, 2) != HyperFact(2, 1, 0)

    def test_qualifier_multiset(self):
        a = HyperFact(0, 1, 2, ((3, 4), (3, 4)))
        b = HyperFact(0, 1, 2, ((3, 4),))
        assert a != b
        assert a.has_duplicate_qualifiers()

    def test_qualifiers_coerced(self):
        f = HyperFact(0, 1, 2, [(3, 4)])
        assert f.qualifiers == (Qualifier(3, 4),)


class TestHyperGraph:
    def _graph(self):
        ents, rels = Vocab(["a", "b", "c"]), Vocab(["r"])
        return HyperGraph(ents, rels, [HyperFact(0, 0, 1)], [HyperFact(1, 0, 2)], [HyperFact(0, 0, 1)])

    def test_validate_ok(self):
        self._graph().validate()

    def test_validate_out_of_range(self):
        g = self._graph()
        g.train.append(HyperFact(0, 5, 1))
        with pytest.raises(ValueError, match="out of vocabulary"):
            g.validate()

    def test_validate_duplicate(self):
        g = self._graph()
        g.train.append(HyperFact(0, 0, 1))
        with pytest.raises(ValueError, match="duplicate"):
            g.validate()

    def test_overlap_reported_not_enforced(self):
        assert self._graph().split_overlap()["train_test"] == 1
