"""Shared plumbing for the learned models: query batches, init, checkpoints."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import HyperFact, Triple
from ..tensor import Tensor, parameter

PAD = -1


@dataclass
class QueryBatch:
    """Tail-prediction queries ``(head, relation, qualifiers) -> answer``.

    Subject prediction is expressed through inverse relations
    (``relation + n_relations``), so every model only ever predicts tails.
    ``quals`` has shape ``[B, max_arity, 2]`` padded with ``-1``.
    """

    heads: np.ndarray
    rels: np.ndarray
    quals: np.ndarray
    answers: np.ndarray
    negatives: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.heads)

    def take(self, idx) -> "QueryBatch":
        neg = None if self.negatives is None else self.negatives[idx]
        return QueryBatch(self.heads[idx], self.rels[idx], self.quals[idx], self.answers[idx], neg)

    @property
    def max_arity(self) -> int:
        return self.quals.shape[1]

    def arities(self) -> np.ndarray:
        return (self.quals[:, :, 0] >= 0).sum(axis=1)


def _canonical_quals(quals, max_arity: int) -> np.ndarray:
    arr = np.full((max_arity, 2), PAD, dtype=np.int64)
    ordered = sorted((int(r), int(e)) for r, e in quals)
    if len(ordered) > max_arity:
        raise ValueError(f"fact arity {len(ordered)} exceeds configured max arity {max_arity}")
    if ordered:
        arr[:len(ordered)] = ordered
    return arr


def queries_from_facts(facts: Sequence[HyperFact], n_relations: int, max_arity: int,
                       mirror: bool = True) -> QueryBatch:
    """Object queries for every fact, followed by the mirrored subject queries.

    Qualifiers are stored in canonical (relation, entity) order, so the
    source order of a fact's qualifiers never reaches a model.
    """
    n = len(facts)
    m = 2 * n if mirror else n
    heads = np.empty(m, dtype=np.int64)
    rels = np.empty(m, dtype=np.int64)
    answers = np.empty(m, dtype=np.int64)
    quals = np.full((m, max_arity, 2), PAD, dtype=np.int64)
    for i, f in enumerate(facts):
        q = _canonical_quals(f.qualifiers, max_arity)
        heads[i], rels[i], answers[i], quals[i] = f.subject, f.relation, f.object, q
        if mirror:
            j = n + i
            heads[j], rels[j], answers[j], quals[j] = f.object, f.relation + n_relations, f.subject, q
    return QueryBatch(heads, rels, quals, answers)


def queries_from_triples(triples: Sequence[Triple], n_relations: int, mirror: bool = True) -> QueryBatch:
    facts = [HyperFact(t[0], t[1], t[2]) for t in triples]
    return queries_from_facts(facts, n_relations, 0, mirror)


def uniform_embedding(rng: np.random.Generator, rows: int, dim: int, name: str) -> Tensor:
    bound = 1.0 / np.sqrt(dim)
    return parameter(rng.uniform(-bound, bound, size=(rows, dim)), name=name)


def xavier_normal(rng: np.random.Generator, fan_in: int, fan_out: int, name: str) -> Tensor:
    std = np.sqrt(2.0 / (fan_in + fan_out))
    return parameter(rng.normal(0.0, std, size=(fan_in, fan_out)), name=name)


def zeros(shape, name: str) -> Tensor:
    return parameter(np.zeros(shape), name=name)


def ones(shape, name: str) -> Tensor:
    return parameter(np.ones(shape), name=name)


class Model:
    """Base class.  Subclasses fill ``self.params`` and implement
    :meth:`loss` (recorded on the active tape) and :meth:`score` (plain numpy,
    shape ``[B, n_entities]``)."""

    kind = "base"
    loss_kind = "ce"

    def __init__(self, n_entities: int, n_relations: int, config: dict):
        self.n_entities = n_entities
        self.n_relations = n_relations
        self.config = dict(config)
        self.params: dict[str, Tensor] = {}

    @property
    def n_relations_total(self) -> int:
        return 2 * self.n_relations

    def parameters(self) -> list[Tensor]:
        return [self.params[k] for k in sorted(self.params)]

    def loss(self, batch: QueryBatch, rng: np.random.Generator | None = None) -> Tensor:
        raise NotImplementedError

    def score(self, batch: QueryBatch) -> np.ndarray:
        raise NotImplementedError

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for k, v in state.items():
            if k not in self.params:
                raise KeyError(f"unexpected parameter {k!r}")
            if self.params[k].shape != v.shape:
                raise ValueError(f"parameter {k!r}: shape {v.shape} vs model {self.params[k].shape}")
            self.params[k].data = np.array(v, dtype=np.float64)

    def extra_arrays(self) -> dict[str, np.ndarray]:
        """Non-parameter arrays a model needs at inference (e.g. its graph)."""
        return {}

    def invalidate(self) -> None:
        """Drop any cached inference state after parameters change."""


def save_checkpoint(path: str, model: Model, meta: dict, arrays: dict[str, np.ndarray] | None = None) -> None:
    """Single ``.npz`` file: parameters, extra arrays and a JSON header."""
    payload = {f"param/{k}": v.data for k, v in model.params.items()}
    for k, v in model.extra_arrays().items():
        payload[f"extra/{k}"] = v
    for k, v in (arrays or {}).items():
        payload[f"data/{k}"] = v
    header = dict(meta)
    header.update(kind=model.kind, n_entities=model.n_entities, n_relations=model.n_relations,
                  config=model.config)
    payload["header"] = np.frombuffer(json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **payload)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def read_checkpoint(path: str) -> tuple[dict, dict[str, np.ndarray], dict[str, np.ndarray], dict[str, np.ndarray]]:
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(bytes(z["header"]).decode("utf-8"))
        params = {k[6:]: z[k] for k in z.files if k.startswith("param/")}
        extra = {k[6:]: z[k] for k in z.files if k.startswith("extra/")}
        data = {k[5:]: z[k] for k in z.files if k.startswith("data/")}
    return header, params, extra, data
