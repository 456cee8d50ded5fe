"""Random HKG generators for tests, fixtures and runtime checks."""

from __future__ import annotations

import numpy as np

from .core import HyperFact, HyperGraph, Qualifier, Vocab


def random_fact(rng: np.random.Generator, n_entities: int, n_relations: int, max_arity: int,
                min_arity: int = 0) -> HyperFact:
    n = int(rng.integers(min_arity, max_arity + 1))
    s, o = rng.choice(n_entities, size=2, replace=False)
    quals = tuple(Qualifier(int(rng.integers(n_relations)), int(rng.integers(n_entities))) for _ in range(n))
    return HyperFact(int(s), int(rng.integers(n_relations)), int(o), quals)


def random_hkg(seed: int, n_entities: int = 20, n_relations: int = 5, n_facts: int = 50, max_arity: int = 3,
               split_sizes: tuple[int, int, int] | None = None) -> HyperGraph:
    """Distinct random facts over labelled vocabularies ``e0..``, ``r0..``.

    Every entity and relation id is registered up front so ids equal the
    numeric suffix of the label.
    """
    rng = np.random.default_rng(seed)
    sizes = split_sizes or (n_facts, 0, 0)
    total = sum(sizes)
    facts: list[HyperFact] = []
    seen: set = set()
    while len(facts) < total:
        f = random_fact(rng, n_entities, n_relations, max_arity)
        if f.triple in seen:
            continue
        seen.add(f.triple)
        facts.append(f)
    ents = Vocab(f"e{i}" for i in range(n_entities))
    rels = Vocab(f"r{i}" for i in range(n_relations))
    ents.freeze_base()
    rels.freeze_base()
    a, b = sizes[0], sizes[0] + sizes[1]
    return HyperGraph(ents, rels, facts[:a], facts[a:b], facts[b:])


def memorization_fixture(seed: int = 7) -> HyperGraph:
    """50 facts, 20 entities, 5 relations, at most 3 qualifiers each."""
    return random_hkg(seed, n_entities=20, n_relations=5, n_facts=50, max_arity=3)


def shaped_corpus_lines(seed: int, n_entities: int, n_relations: int, qual_max: int, n_train: int,
                        n_valid: int, n_test: int, n_triple_facts: int, n_hyper_facts: int,
                        train_scoped: bool = False) -> dict[str, list[str]]:
    """Tab-separated statement lines whose statistics hit the given counts.

    Used to exercise ingestion at published dataset scale when the real
    files are not available.  The triple/hyper counts must add up to all
    facts, or to the train facts alone with ``train_scoped`` (valid and test
    facts then carry no qualifiers).
    """
    total = n_train + n_valid + n_test
    scope = n_train if train_scoped else total
    if n_triple_facts + n_hyper_facts != scope:
        raise ValueError(f"triple + hyper-relational counts must equal {scope}")
    rng = np.random.default_rng(seed)
    arities = np.zeros(total, dtype=np.int64)
    hyper_idx = rng.permutation(scope)[:n_hyper_facts]
    if n_hyper_facts:
        arities[hyper_idx] = rng.integers(1, qual_max + 1, size=n_hyper_facts)
        arities[hyper_idx[0]] = qual_max
    ent_labels = [f"E{i}" for i in range(n_entities)]
    rel_labels = [f"R{i}" for i in range(n_relations)]
    lines = []
    # first facts walk the vocabularies so every label occurs
    ent_cursor = rel_cursor = 0
    seen = set()
    for i in range(total):
        while True:
            if ent_cursor < n_entities:
                s = ent_cursor
                o = (ent_cursor + 1) % n_entities
                ent_cursor += 2
            else:
                s, o = rng.integers(n_entities, size=2)
            if rel_cursor < n_relations:
                r = rel_cursor
                rel_cursor += 1
            else:
                r = int(rng.integers(n_relations))
            key = (int(s), r, int(o))
            if key not in seen and s != o:
                seen.add(key)
                break
        toks = [ent_labels[s], rel_labels[r], ent_labels[o]]
        for _ in range(arities[i]):
            toks += [rel_labels[int(rng.integers(n_relations))], ent_labels[int(rng.integers(n_entities))]]
        lines.append("\t".join(toks))
    return {"train": lines[:n_train], "valid": lines[n_train:n_train + n_valid],
            "test": lines[n_train + n_valid:]}
