"""In-memory representation of hyper-relational knowledge graphs.

A hyper-relational fact is a main triple ``(s, r, o)`` plus a list of
qualifier pairs ``(qr, qe)``.  Entities and relations are dense integer ids
handed out by a :class:`Vocab` in first-seen order.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple


class Vocab:
    """Bijective label <-> dense id map.

    Ids are assigned in first-seen order.  Ids handed out after
    :meth:`freeze_base` are considered synthesized (composite relations,
    pseudo entities, inverse relations, ...) and carry a provenance flag.
    """

    def __init__(self, labels: Iterable[str] = ()):
        self._labels: list[str] = []
        self._index: dict[str, int] = {}
        self._synth: set[int] = set()
        self._base_size: int | None = None
        for label in labels:
            self.intern(label)

    def __len__(self) -> int:
        return len(self._labels)

    def __contains__(self, label: str) -> bool:
        return label in self._index

    def __iter__(self):
        return iter(self._labels)

    def intern(self, label: str, synthesized: bool = False) -> int:
        if not isinstance(label, str) or label == "":
            raise ValueError("vocabulary labels must be non-empty strings")
        idx = self._index.get(label)
        if idx is None:
            idx = len(self._labels)
            self._labels.append(label)
            self._index[label] = idx
            if synthesized or self._base_size is not None:
                self._synth.add(idx)
        return idx

    def id_of(self, label: str) -> int:
        return self._index[label]

    def get(self, label: str, default=None):
        return self._index.get(label, default)

    def label_of(self, idx: int) -> str:
        return self._labels[idx]

    def is_synthesized(self, idx: int) -> bool:
        return idx in self._synth

    def freeze_base(self) -> None:
        """Mark the current size as the original vocabulary."""
        self._base_size = len(self._labels)

    @property
    def base_size(self) -> int:
        return len(self._labels) if self._base_size is None else self._base_size

    def labels(self) -> list[str]:
        return list(self._labels)

    def copy(self) -> "Vocab":
        other = Vocab()
        other._labels = list(self._labels)
        other._index = dict(self._index)
        other._synth = set(self._synth)
        other._base_size = self._base_size
        return other

    def digest(self) -> str:
        """Content hash of the ordered label list."""
        h = hashlib.sha256()
        for label in self._labels:
            h.update(label.encode("utf-8"))
            h.update(b"\x00")
        return h.hexdigest()[:16]


def intern_entity(label: str, vocab: Vocab) -> int:
    return vocab.intern(label)


class Qualifier(NamedTuple):
    relation: int
    entity: int


class Triple(NamedTuple):
    subject: int
    relation: int
    object: int


@dataclass(frozen=True)
class HyperFact:
    """A main triple together with its (source-ordered) qualifiers.

    Equality and hashing use the canonical form, i.e. qualifiers compared as
    a multiset.  ``qualifiers`` keeps the order they were read in.
    """

    subject: int
    relation: int
    object: int
    qualifiers: tuple[Qualifier, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(
            self, "qualifiers", tuple(Qualifier(int(r), int(e)) for r, e in self.qualifiers)
        )

    @property
    def triple(self) -> Triple:
        return Triple(self.subject, self.relation, self.object)

    def canonical_qualifiers(self) -> tuple[Qualifier, ...]:
        return tuple(sorted(self.qualifiers))

    def key(self) -> tuple:
        return (self.subject, self.relation, self.object, self.canonical_qualifiers())

    def __eq__(self, other):
        if not isinstance(other, HyperFact):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def has_duplicate_qualifiers(self) -> bool:
        return len(set(self.qualifiers)) != len(self.qualifiers)


def arity(fact: HyperFact) -> int:
    """Number of qualifier pairs attached to ``fact``."""
    return len(fact.qualifiers)


SPLITS = ("train", "valid", "test")


@dataclass
class HyperGraph:
    entity_vocab: Vocab
    relation_vocab: Vocab
    train: list[HyperFact] = field(default_factory=list)
    valid: list[HyperFact] = field(default_factory=list)
    test: list[HyperFact] = field(default_factory=list)

    def split(self, name: str) -> list[HyperFact]:
        if name not in SPLITS:
            raise KeyError(f"unknown split {name!r}")
        return getattr(self, name)

    def splits(self):
        for name in SPLITS:
            yield name, getattr(self, name)

    def all_facts(self) -> list[HyperFact]:
        return self.train + self.valid + self.test

    @property
    def num_entities(self) -> int:
        return len(self.entity_vocab)

    @property
    def num_relations(self) -> int:
        return len(self.relation_vocab)

    def max_arity(self) -> int:
        return max((arity(f) for f in self.all_facts()), default=0)

    def validate(self) -> None:
        """Check id ranges and within-split duplicates; raise ValueError."""
        ne, nr = self.num_entities, self.num_relations
        for name, facts in self.splits():
            seen = set()
            for i, f in enumerate(facts):
                ents = [f.subject, f.object] + [q.entity for q in f.qualifiers]
                rels = [f.relation] + [q.relation for q in f.qualifiers]
                if any(not 0 <= e < ne for e in ents) or any(not 0 <= r < nr for r in rels):
                    raise ValueError(f"{name}[{i}]: id out of vocabulary range")
                if f in seen:
                    raise ValueError(f"{name}[{i}]: duplicate fact within split")
                seen.add(f)

    def split_overlap(self) -> dict[str, int]:
        """Count statements shared between split pairs (not enforced)."""
        sets = {name: set(facts) for name, facts in self.splits()}
        return {
            "train_valid": len(sets["train"] & sets["valid"]),
            "train_test": len(sets["train"] & sets["test"]),
            "valid_test": len(sets["valid"] & sets["test"]),
        }

    def duplicate_qualifier_facts(self) -> int:
        return sum(f.has_duplicate_qualifiers() for f in self.all_facts())

    def qualifier_histogram(self) -> Counter:
        return Counter(arity(f) for f in self.all_facts())
