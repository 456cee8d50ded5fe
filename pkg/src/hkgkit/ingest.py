"""Dataset parsing and Table-style statistics for HKG statement files.

Two input shapes are accepted:

* ``tsv``: one statement per line, ``s<TAB>r<TAB>o[<TAB>qr<TAB>qe]...``
* ``json``: one JSON object per line with ``subject``, ``relation``,
  ``object`` and ``qualifiers`` (a list of ``[qr, qe]`` pairs).

Labels are opaque strings.  Ids are interned train -> valid -> test in file
order so that ingestion is deterministic.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Iterable, Iterator

from .core import SPLITS, HyperFact, HyperGraph, Qualifier, Vocab, arity


class ParseError(ValueError):
    """Malformed statement.  ``line_no`` is 1-based when known."""

    def __init__(self, message: str, line_no: int | None = None, source: str | None = None):
        where = ""
        if source is not None:
            where += f"{source}:"
        if line_no is not None:
            where += f"{line_no}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.line_no = line_no
        self.source = source


class UnknownLabelError(KeyError):
    pass


def _resolve(label: str, vocab: Vocab, frozen: bool) -> int:
    if frozen:
        idx = vocab.get(label)
        if idx is None:
            raise UnknownLabelError(label)
        return idx
    return vocab.intern(label)


def _build_fact(s, r, o, quals, ents: Vocab, rels: Vocab, frozen: bool) -> HyperFact:
    return HyperFact(
        _resolve(s, ents, frozen),
        _resolve(r, rels, frozen),
        _resolve(o, ents, frozen),
        tuple(Qualifier(_resolve(qr, rels, frozen), _resolve(qe, ents, frozen)) for qr, qe in quals),
    )


def split_statement_line(line: str, line_no: int | None = None) -> tuple[str, str, str, list[tuple[str, str]]]:
    tokens = line.rstrip("\r\n").split("\t")
    if len(tokens) < 3:
        raise ParseError(f"expected at least 3 tab-separated tokens, got {len(tokens)}", line_no)
    if len(tokens) % 2 == 0:
        raise ParseError(f"dangling qualifier relation {tokens[-1]!r} (even token count {len(tokens)})", line_no)
    if any(t == "" for t in tokens):
        raise ParseError("empty token", line_no)
    s, r, o = tokens[:3]
    rest = tokens[3:]
    return s, r, o, list(zip(rest[0::2], rest[1::2]))


def parse_statement_line(line: str, entities: Vocab, relations: Vocab, line_no: int | None = None,
                         frozen: bool = False) -> HyperFact:
    """Parse one tab-separated statement, interning labels on sight.

    Raises:
        ParseError: fewer than three tokens or an even token count.
    """
    s, r, o, quals = split_statement_line(line, line_no)
    return _build_fact(s, r, o, quals, entities, relations, frozen)


def split_json_statement(record, line_no: int | None = None):
    if isinstance(record, str):
        try:
            record = json.loads(record)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line_no) from None
    if not isinstance(record, dict):
        raise ParseError("statement record must be an object", line_no)
    for name in ("subject", "relation", "object", "qualifiers"):
        if name not in record:
            raise ParseError(f"missing field {name!r}", line_no)
    quals = record["qualifiers"]
    if not isinstance(quals, list):
        raise ParseError("field 'qualifiers' must be a list", line_no)
    pairs = []
    for i, q in enumerate(quals):
        if not isinstance(q, (list, tuple)) or len(q) != 2:
            raise ParseError(f"qualifiers[{i}] must be a 2-element list", line_no)
        pairs.append((str(q[0]), str(q[1])))
    labels = [str(record["subject"]), str(record["relation"]), str(record["object"])]
    if any(lbl == "" for lbl in labels) or any(a == "" or b == "" for a, b in pairs):
        raise ParseError("empty label", line_no)
    return labels[0], labels[1], labels[2], pairs


def parse_json_statement(record, entities: Vocab, relations: Vocab, line_no: int | None = None,
                         frozen: bool = False) -> HyperFact:
    """Parse a structured statement record (dict or JSON text)."""
    s, r, o, quals = split_json_statement(record, line_no)
    return _build_fact(s, r, o, quals, entities, relations, frozen)


def detect_format(path: str) -> str:
    ext = os.path.splitext(path)[1].lower()
    return "json" if ext in (".json", ".jsonl", ".ndjson") else "tsv"


def iter_raw_statements(path: str, fmt: str | None = None) -> Iterator[tuple[int, tuple]]:
    fmt = fmt or detect_format(path)
    splitter = split_json_statement if fmt == "json" else split_statement_line
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield line_no, splitter(line, line_no)
            except ParseError as exc:
                raise ParseError(str(exc).split(": ", 1)[-1], line_no, path) from None


def read_facts(path: str, entities: Vocab, relations: Vocab, fmt: str | None = None,
               frozen: bool = False) -> list[HyperFact]:
    facts = []
    for line_no, (s, r, o, quals) in iter_raw_statements(path, fmt):
        try:
            facts.append(_build_fact(s, r, o, quals, entities, relations, frozen))
        except UnknownLabelError as exc:
            raise ParseError(f"unknown label {exc.args[0]!r}", line_no, path) from None
    return facts


def load_graph(train: str, valid: str, test: str, fmt: str | None = None) -> HyperGraph:
    ents, rels = Vocab(), Vocab()
    splits = {}
    for name, path in zip(SPLITS, (train, valid, test)):
        splits[name] = read_facts(path, ents, rels, fmt)
    ents.freeze_base()
    rels.freeze_base()
    return HyperGraph(ents, rels, **splits)


_DIR_CANDIDATES = ("{}.txt", "{}.tsv", "{}.jsonl", "{}.json")


def find_split_files(directory: str) -> dict[str, str]:
    found = {}
    for name in SPLITS:
        for pattern in _DIR_CANDIDATES:
            path = os.path.join(directory, pattern.format(name))
            if os.path.exists(path):
                found[name] = path
                break
        else:
            raise FileNotFoundError(f"no {name} split file in {directory}")
    return found


def load_graph_dir(directory: str, fmt: str | None = None) -> HyperGraph:
    files = find_split_files(directory)
    return load_graph(files["train"], files["valid"], files["test"], fmt)


def fact_to_record(fact: HyperFact, entities: Vocab, relations: Vocab) -> dict:
    return {
        "subject": entities.label_of(fact.subject),
        "relation": relations.label_of(fact.relation),
        "object": entities.label_of(fact.object),
        "qualifiers": [[relations.label_of(q.relation), entities.label_of(q.entity)] for q in fact.qualifiers],
    }


def fact_to_line(fact: HyperFact, entities: Vocab, relations: Vocab) -> str:
    toks = [entities.label_of(fact.subject), relations.label_of(fact.relation), entities.label_of(fact.object)]
    for q in fact.qualifiers:
        toks += [relations.label_of(q.relation), entities.label_of(q.entity)]
    return "\t".join(toks)


def write_facts(path: str, facts: Iterable[HyperFact], entities: Vocab, relations: Vocab,
                fmt: str = "json") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f in facts:
            if fmt == "json":
                fh.write(json.dumps(fact_to_record(f, entities, relations), ensure_ascii=False) + "\n")
            else:
                fh.write(fact_to_line(f, entities, relations) + "\n")


@dataclass
class DatasetStats:
    n_entities: int
    n_relations: int
    qual_min: int
    qual_max: int
    n_train: int
    n_valid: int
    n_test: int
    n_triple_facts: int
    n_hyper_facts: int
    qual_min_hyper: int | None = None
    n_train_triple_facts: int = 0
    n_train_hyper_facts: int = 0
    n_duplicate_qualifier_facts: int = 0
    n_duplicate_facts: int = 0
    extra: dict = field(default_factory=dict)

    def check_partition(self) -> bool:
        return self.n_triple_facts + self.n_hyper_facts == self.n_train + self.n_valid + self.n_test

    def to_dict(self) -> dict:
        d = asdict(self)
        if not d["extra"]:
            d.pop("extra")
        return d

    def table(self) -> str:
        head = ["|V|", "|R|", "#Qual.", "#Tra.", "#Val.", "#Tst.", "#Tri.", "#HR"]
        row = [
            f"{self.n_entities:,}", f"{self.n_relations:,}", f"{self.qual_min}-{self.qual_max}",
            f"{self.n_train:,}", f"{self.n_valid:,}", f"{self.n_test:,}",
            f"{self.n_triple_facts:,}", f"{self.n_hyper_facts:,}",
        ]
        widths = [max(len(a), len(b)) for a, b in zip(head, row)]
        fmt = " | ".join("{:>%d}" % w for w in widths)
        return "\n".join([fmt.format(*head), "-+-".join("-" * w for w in widths), fmt.format(*row)])


def compute_stats(graph: HyperGraph) -> DatasetStats:
    facts = graph.all_facts()
    arities = [arity(f) for f in facts]
    hyper = [a for a in arities if a > 0]
    dup_facts = 0
    for _, split in graph.splits():
        dup_facts += len(split) - len(set(split))
    return DatasetStats(
        n_entities=graph.num_entities,
        n_relations=graph.num_relations,
        qual_min=min(arities, default=0),
        qual_max=max(arities, default=0),
        n_train=len(graph.train),
        n_valid=len(graph.valid),
        n_test=len(graph.test),
        n_triple_facts=len(arities) - len(hyper),
        n_hyper_facts=len(hyper),
        qual_min_hyper=min(hyper) if hyper else None,
        n_train_triple_facts=sum(1 for f in graph.train if arity(f) == 0),
        n_train_hyper_facts=sum(1 for f in graph.train if arity(f) > 0),
        n_duplicate_qualifier_facts=graph.duplicate_qualifier_facts(),
        n_duplicate_facts=dup_facts,
    )


def diff_stats(stats: DatasetStats, expected: dict) -> list[str]:
    """Return one line per mismatching field (empty when all match)."""
    actual = stats.to_dict()
    lines = []
    for key, want in expected.items():
        if key not in actual:
            lines.append(f"{key}: unknown field (expected {want!r})")
        elif actual[key] != want:
            lines.append(f"{key}: expected {want!r}, got {actual[key]!r}")
    return lines


# Published benchmark statistics, in DatasetStats field names.  The Wikipeople row
# splits triple/hyper counts over the train facts only (they sum to n_train), so it is
# keyed on the train-scoped counts.
TABLE2 = {
    "cleaned_jf17k": dict(n_entities=25092, n_relations=320, qual_min=0, qual_max=4, n_train=49120,
                          n_valid=12280, n_test=17635, n_triple_facts=54551, n_hyper_facts=24484),
    "wd50k": dict(n_entities=47155, n_relations=531, qual_min=0, qual_max=65, n_train=166435,
                  n_valid=23913, n_test=46159, n_triple_facts=204340, n_hyper_facts=32167),
    "wikipeople": dict(n_entities=31038, n_relations=171, qual_min=0, qual_max=7, n_train=262301,
                       n_valid=33838, n_test=33806, n_train_triple_facts=257693, n_train_hyper_facts=4608),
    "fbauto": dict(n_entities=2094, n_relations=8, qual_min=0, qual_max=3, n_train=6778,
                   n_valid=2255, n_test=2180, n_triple_facts=3786, n_hyper_facts=7427),
}
