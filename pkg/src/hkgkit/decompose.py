"""Conversion of hyper-relational facts to plain triples.

Four methods:

* ``prune``  - keep the main triple only.
* ``direct`` - main triple plus ``(s, qr_i, qe_i)`` for each qualifier.
* ``hyper``  - ``direct`` plus ``(qe_i, r||qr_i, o)`` with a composite relation.
* ``reify``  - a fresh pseudo entity per fact linked to subject, object, the
  promoted main relation and every qualifier.  The main triple is dropped.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .core import SPLITS, HyperFact, HyperGraph, Triple, Vocab

METHODS = ("prune", "direct", "hyper", "reify")

COMPOSITE_SEP = "||"
REIFY_SUBJECT = "__reify_subject__"
REIFY_OBJECT = "__reify_object__"
REIFY_PREDICATE = "__reify_predicate__"
PSEUDO_PREFIX = "__pe__"
PROMOTED_PREFIX = "__rel__"


def escape_label(label: str) -> str:
    return label.replace("\\", "\\\\").replace("|", "\\|")


def unescape_label(label: str) -> str:
    out, i = [], 0
    while i < len(label):
        if label[i] == "\\" and i + 1 < len(label):
            i += 1
        out.append(label[i])
        i += 1
    return "".join(out)


def composite_label(main: str, qual: str) -> str:
    """``main||qual``; pipes and backslashes inside the parts are escaped."""
    return escape_label(main) + COMPOSITE_SEP + escape_label(qual)


def split_composite_label(label: str) -> tuple[str, str]:
    i = 0
    while i < len(label) - 1:
        if label[i] == "\\":
            i += 2
            continue
        if label.startswith(COMPOSITE_SEP, i):
            return unescape_label(label[:i]), unescape_label(label[i + len(COMPOSITE_SEP):])
        i += 1
    raise ValueError(f"{label!r} is not a composite relation label")


def decompose_prune(fact: HyperFact) -> list[Triple]:
    return [fact.triple]


def decompose_direct(fact: HyperFact) -> list[Triple]:
    out = [fact.triple]
    out.extend(Triple(fact.subject, q.relation, q.entity) for q in fact.qualifiers)
    return out


def intern_composite(main_rel: int, qual_rel: int, relations: Vocab) -> int:
    label = composite_label(relations.label_of(main_rel), relations.label_of(qual_rel))
    return relations.intern(label, synthesized=True)


def decompose_hyper(fact: HyperFact, relations: Vocab) -> list[Triple]:
    """``direct`` triples followed by one inter-qualifier triple per pair.

    Composite relations ``r||qr`` are interned into ``relations`` (shared
    across facts).
    """
    out = decompose_direct(fact)
    for q in fact.qualifiers:
        out.append(Triple(q.entity, intern_composite(fact.relation, q.relation, relations), fact.object))
    return out


class _ReifyState:
    """Counter for fresh pseudo entities; one per graph decomposition."""

    def __init__(self):
        self.next_id = 0


def decompose_reify(fact: HyperFact, entities: Vocab, relations: Vocab,
                    state: _ReifyState | None = None) -> list[Triple]:
    state = state if state is not None else _ReifyState()
    while True:
        label = f"{PSEUDO_PREFIX}{state.next_id}"
        state.next_id += 1
        if label not in entities:
            break
    pe = entities.intern(label, synthesized=True)
    promoted = entities.intern(PROMOTED_PREFIX + relations.label_of(fact.relation), synthesized=True)
    r_sub = relations.intern(REIFY_SUBJECT, synthesized=True)
    r_obj = relations.intern(REIFY_OBJECT, synthesized=True)
    r_pre = relations.intern(REIFY_PREDICATE, synthesized=True)
    out = [Triple(pe, r_sub, fact.subject), Triple(pe, r_obj, fact.object), Triple(pe, r_pre, promoted)]
    out.extend(Triple(pe, q.relation, q.entity) for q in fact.qualifiers)
    return out


@dataclass
class DecomposedSplit:
    triples: list[Triple]
    provenance: list[list[int]]
    queries: list[Triple]

    def unique_triples(self) -> list[Triple]:
        return list(dict.fromkeys(self.triples))

    @property
    def n_duplicates(self) -> int:
        return len(self.triples) - len(set(self.triples))


@dataclass
class DecomposedGraph:
    method: str
    entity_vocab: Vocab
    relation_vocab: Vocab
    splits: dict[str, DecomposedSplit] = field(default_factory=dict)

    @property
    def triples(self) -> list[Triple]:
        out = []
        for name in SPLITS:
            out.extend(self.splits[name].triples)
        return out

    def training_edges(self) -> list[Triple]:
        """Deduplicated train-split triples; valid/test never contribute."""
        return self.splits["train"].unique_triples()

    def dedup_report(self) -> dict[str, int]:
        return {name: self.splits[name].n_duplicates for name in SPLITS}


def decompose_fact(fact: HyperFact, method: str, entities: Vocab, relations: Vocab,
                   state: _ReifyState | None = None) -> list[Triple]:
    if method == "prune":
        return decompose_prune(fact)
    if method == "direct":
        return decompose_direct(fact)
    if method == "hyper":
        return decompose_hyper(fact, relations)
    if method == "reify":
        return decompose_reify(fact, entities, relations, state)
    raise ValueError(f"unknown decomposition method {method!r}; choose from {', '.join(METHODS)}")


def decompose_facts(facts: list[HyperFact], method: str, entities: Vocab, relations: Vocab,
                    state: _ReifyState | None = None) -> DecomposedSplit:
    triples: list[Triple] = []
    provenance: list[list[int]] = []
    for fact in facts:
        emitted = decompose_fact(fact, method, entities, relations, state)
        provenance.append(list(range(len(triples), len(triples) + len(emitted))))
        triples.extend(emitted)
    return DecomposedSplit(triples, provenance, [f.triple for f in facts])


def decompose_graph(graph: HyperGraph, method: str) -> DecomposedGraph:
    """Decompose every split of ``graph``; the source vocabularies are copied."""
    if method not in METHODS:
        raise ValueError(f"unknown decomposition method {method!r}; choose from {', '.join(METHODS)}")
    ents, rels = graph.entity_vocab.copy(), graph.relation_vocab.copy()
    ents.freeze_base()
    rels.freeze_base()
    state = _ReifyState()
    out = DecomposedGraph(method, ents, rels)
    for name, facts in graph.splits():
        out.splits[name] = decompose_facts(facts, method, ents, rels, state)
    return out


def write_decomposed(dg: DecomposedGraph, out_dir: str) -> dict:
    """Write triple files, provenance, query files and extended vocabularies.

    Returns a summary dict (also written to ``summary.json``).
    """
    os.makedirs(out_dir, exist_ok=True)
    ents, rels = dg.entity_vocab, dg.relation_vocab

    def line(t: Triple) -> str:
        return f"{ents.label_of(t.subject)}\t{rels.label_of(t.relation)}\t{ents.label_of(t.object)}\n"

    summary = {"method": dg.method, "splits": {}}
    for name in SPLITS:
        split = dg.splits[name]
        unique = split.unique_triples()
        with open(os.path.join(out_dir, f"{name}.tsv"), "w", encoding="utf-8") as fh:
            fh.writelines(line(t) for t in unique)
        with open(os.path.join(out_dir, f"{name}.queries.tsv"), "w", encoding="utf-8") as fh:
            fh.writelines(line(t) for t in split.queries)
        with open(os.path.join(out_dir, f"{name}.provenance.jsonl"), "w", encoding="utf-8") as fh:
            for fact_idx, tri_idx in enumerate(split.provenance):
                fh.write(json.dumps({"fact": fact_idx, "triples": tri_idx}) + "\n")
        summary["splits"][name] = {
            "facts": len(split.provenance),
            "triples": len(split.triples),
            "unique_triples": len(unique),
            "duplicates_removed": split.n_duplicates,
        }
    for fname, vocab in (("entities.tsv", ents), ("relations.tsv", rels)):
        with open(os.path.join(out_dir, fname), "w", encoding="utf-8") as fh:
            for idx, label in enumerate(vocab):
                fh.write(f"{idx}\t{label}\t{int(vocab.is_synthesized(idx))}\n")
    summary["n_entities"] = len(ents)
    summary["n_relations"] = len(rels)
    summary["synthesized_entities"] = len(ents) - ents.base_size
    summary["synthesized_relations"] = len(rels) - rels.base_size
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    return summary


def read_triples(path: str, entities: Vocab | None = None, relations: Vocab | None = None) -> list[Triple]:
    entities = entities if entities is not None else Vocab()
    relations = relations if relations is not None else Vocab()
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            toks = raw.rstrip("\r\n").split("\t")
            if len(toks) != 3:
                raise ValueError(f"{path}:{line_no}: expected 3 tab-separated tokens, got {len(toks)}")
            out.append(Triple(entities.intern(toks[0]), relations.intern(toks[1]), entities.intern(toks[2])))
    return out
