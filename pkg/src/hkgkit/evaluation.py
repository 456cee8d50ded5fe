"""Filtered-ranking link prediction metrics (MRR, Hits@k)."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .models.base import PAD, Model, QueryBatch

HITS_AT = (1, 3, 10)


class FilterIndex:
    """Known true answers per query key, gathered over every split.

    With ``use_qualifiers`` the key is ``(head, relation, qualifier multiset)``;
    otherwise it is ``(head, relation)``.
    """

    def __init__(self, use_qualifiers: bool):
        self.use_qualifiers = use_qualifiers
        self._answers: dict[tuple, set[int]] = defaultdict(set)

    def key(self, batch: QueryBatch, i: int) -> tuple:
        if self.use_qualifiers:
            q = batch.quals[i]
            quals = tuple(sorted((int(r), int(e)) for r, e in q if r != PAD))
            return int(batch.heads[i]), int(batch.rels[i]), quals
        return int(batch.heads[i]), int(batch.rels[i])

    def add(self, batch: QueryBatch) -> "FilterIndex":
        for i in range(len(batch)):
            self._answers[self.key(batch, i)].add(int(batch.answers[i]))
        return self

    @classmethod
    def build(cls, batches: Iterable[QueryBatch], use_qualifiers: bool) -> "FilterIndex":
        idx = cls(use_qualifiers)
        for b in batches:
            idx.add(b)
        return idx

    def answers(self, batch: QueryBatch, i: int) -> set[int]:
        return self._answers.get(self.key(batch, i), set())

    def __len__(self):
        return len(self._answers)


def filtered_rank(scores: np.ndarray, true_id: int, filter_set: Iterable[int] = ()) -> float:
    """Rank of ``true_id`` among unfiltered entities; ties count half.

    Raises:
        ValueError: ``true_id`` appears in ``filter_set``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    filt = np.fromiter(filter_set, dtype=np.int64)
    if (filt == true_id).any():
        raise ValueError(f"filter set contains the true answer {true_id}")
    keep = np.ones(scores.shape[0], dtype=bool)
    keep[filt] = False
    keep[true_id] = False
    t = scores[true_id]
    higher = np.count_nonzero(keep & (scores > t))
    ties = np.count_nonzero(keep & (scores == t))
    return 1.0 + higher + 0.5 * ties


def raw_rank(scores: np.ndarray, true_id: int) -> float:
    return filtered_rank(scores, true_id, ())


@dataclass
class MetricsReport:
    mrr: float
    hits_at: dict[int, float]
    n_queries: int
    by_direction: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "mrr": self.mrr,
            "hits_at": {str(k): v for k, v in self.hits_at.items()},
            "n_queries": self.n_queries,
        }
        if self.by_direction:
            d["by_direction"] = self.by_direction
        return d


def metrics_from_ranks(ranks: Sequence[float], ks: Sequence[int] = HITS_AT) -> MetricsReport:
    r = np.asarray(ranks, dtype=np.float64)
    if r.size == 0:
        return MetricsReport(float("nan"), {k: float("nan") for k in ks}, 0)
    return MetricsReport(float(np.mean(1.0 / r)), {k: float(np.mean(r <= k)) for k in ks}, int(r.size))


def rank_queries(model: Model, batch: QueryBatch, filters: FilterIndex | None,
                 n_candidates: int | None = None, chunk: int = 256) -> np.ndarray:
    """Filtered rank of every query's answer; candidates limited to the first
    ``n_candidates`` entities (synthesized entities never compete)."""
    model.invalidate()
    ranks = np.empty(len(batch))
    for start in range(0, len(batch), chunk):
        part = batch.take(np.arange(start, min(start + chunk, len(batch))))
        scores = model.score(part)
        if n_candidates is not None:
            scores = scores[:, :n_candidates]
        for j in range(len(part)):
            true = int(part.answers[j])
            filt = () if filters is None else filters.answers(part, j) - {true}
            ranks[start + j] = filtered_rank(scores[j], true, filt)
    model.invalidate()
    return ranks


def evaluate(model: Model, batch: QueryBatch, filters: FilterIndex | None,
             n_candidates: int | None = None) -> MetricsReport:
    """Aggregate metrics over both directions, with a per-direction split.

    Subject queries are the ones on inverse relations
    (``rel >= model.n_relations``).
    """
    ranks = rank_queries(model, batch, filters, n_candidates)
    report = metrics_from_ranks(ranks)
    inverse = batch.rels >= model.n_relations
    for name, sel in (("object", ~inverse), ("subject", inverse)):
        sub = metrics_from_ranks(ranks[sel])
        report.by_direction[name] = {"mrr": sub.mrr, "hits_at": {str(k): v for k, v in sub.hits_at.items()},
                                     "n_queries": sub.n_queries}
    if report.by_direction["object"]["n_queries"] and report.by_direction["subject"]["n_queries"]:
        o, s = report.by_direction["object"], report.by_direction["subject"]
        report.by_direction["average"] = {
            "mrr": (o["mrr"] + s["mrr"]) / 2,
            "hits_at": {k: (o["hits_at"][k] + s["hits_at"][k]) / 2 for k in o["hits_at"]},
        }
    return report
