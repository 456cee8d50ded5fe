"""FormerGNN: qualifier integrator + graph encoder + transformer decoder.

* The graph encoder runs on the prune-decomposed training graph; the
  subject's row is linearly aligned into a topology token ``h_gt``.
* The qualifier integrator encodes ``[s, r, MSK, qr_1, qe_1, ...]``.
* The decoder reads ``[QI tokens..., h_gt]`` and the MSK row is scored
  against the entity table.
"""

from __future__ import annotations

import numpy as np

from .. import tensor as T
from ..core import HyperFact
from .base import Model, QueryBatch, queries_from_facts, uniform_embedding, xavier_normal, zeros
from .gnn import GnnParams, gnn_encode
from .kge import smoothed_cross_entropy
from .transformer import MASK_POSITION, TransformerBlockParams, qualifier_integrate, transformer


class FormerGNN(Model):
    kind = "formergnn"

    def __init__(self, n_entities: int, n_relations: int, config: dict, rng: np.random.Generator,
                 edges: np.ndarray | None = None):
        super().__init__(n_entities, n_relations, config)
        d = int(config.get("dim", 64))
        heads = int(config.get("heads", 4))
        self.max_arity = int(config.get("max_arity", 4))
        self.label_smoothing = float(config.get("label_smoothing", 0.1))
        self.dropout = float(config.get("dropout", 0.0))
        self.edges = np.zeros((0, 3), dtype=np.int64) if edges is None else np.asarray(edges, dtype=np.int64)

        # entity rows: N entities, then [MSK], then padding
        self.mask_id = n_entities
        self.pad_entity = n_entities + 1
        # relation rows: originals, inverses, self-loop, padding
        self.pad_relation = 2 * n_relations + 1

        self.gnn = GnnParams.init(rng, d, int(config.get("gnn_layers", config.get("layers", 2))), "ge")
        self.qi = TransformerBlockParams.init(rng, d, int(config.get("qi_layers", 1)), heads, prefix="qi")
        self.decoder = TransformerBlockParams.init(rng, d, int(config.get("decoder_layers", 2)), heads,
                                                   prefix="dec")
        self.params = {
            "entity": uniform_embedding(rng, n_entities + 2, d, "entity"),
            "relation": uniform_embedding(rng, 2 * n_relations + 2, d, "relation"),
            "role": uniform_embedding(rng, 5, d, "role"),
            "align_w": xavier_normal(rng, d, d, "align_w"),
            "align_b": zeros(d, "align_b"),
            **self.gnn.named("ge"),
            **self.qi.named("qi"),
            **self.decoder.named("dec"),
        }
        self._set_graph_mask()
        self._cache = None

    def _set_graph_mask(self) -> None:
        in_graph = np.zeros(self.n_entities, dtype=bool)
        if len(self.edges):
            in_graph[self.edges[:, 0]] = True
            in_graph[self.edges[:, 2]] = True
        self.in_graph = in_graph

    def missing_subjects(self, batch: QueryBatch) -> int:
        """Queries whose head has no edge in the encoder graph (raw-row fallback)."""
        return int((~self.in_graph[batch.heads]).sum())

    def entity_rows(self) -> T.Tensor:
        return T.gather(self.params["entity"], np.arange(self.n_entities))

    def graph_embeddings(self) -> T.Tensor:
        """Encoder output for every entity, falling back to the raw row off-graph."""
        ent = self.entity_rows()
        rel = T.gather(self.params["relation"], np.arange(2 * self.n_relations + 1))
        h, _ = gnn_encode(self.edges, self.gnn, ent, rel, self.n_relations)
        keep = np.repeat(self.in_graph[:, None].astype(np.float64), ent.shape[1], axis=1)
        return T.add(T.mul(h, T.constant(keep)), T.mul(ent, T.constant(1.0 - keep)))

    def integrate(self, batch: QueryBatch, rng=None) -> tuple[T.Tensor, np.ndarray]:
        p = self.params
        return qualifier_integrate(batch, p["entity"], p["relation"], p["role"], self.qi, self.mask_id,
                                   self.pad_entity, self.pad_relation, self.max_arity, rng, self.dropout)

    def integrate_fact(self, fact: HyperFact) -> T.Tensor:
        """Per-token QI output for ``(s, r, MSK, Q)``; qualifiers are canonicalised."""
        with T.no_grad():
            out, _ = self.integrate(queries_from_facts([fact], self.n_relations, self.max_arity, mirror=False))
        return out

    def _logits(self, batch: QueryBatch, graph: T.Tensor, rng=None) -> T.Tensor:
        tokens, valid = self.integrate(batch, rng)
        b, t, d = tokens.shape
        h_gt = T.linear(T.gather(graph, batch.heads), self.params["align_w"], self.params["align_b"])
        h_cat = T.concat([tokens, T.reshape(h_gt, (b, 1, d))], axis=1)
        valid = np.concatenate([valid, np.ones((b, 1), dtype=bool)], axis=1)
        out = transformer(h_cat, valid, self.decoder, rng, self.dropout)
        msk = T.take(out, MASK_POSITION, axis=1)
        return T.matmul(msk, T.transpose(self.entity_rows(), (1, 0)))

    def loss(self, batch: QueryBatch, rng=None) -> T.Tensor:
        logits = self._logits(batch, self.graph_embeddings(), rng)
        return smoothed_cross_entropy(logits, batch.answers, self.label_smoothing)

    def score(self, batch: QueryBatch) -> np.ndarray:
        with T.no_grad():
            if self._cache is None:
                self._cache = self.graph_embeddings()
            return self._logits(batch, self._cache).data

    def forward_fact(self, fact: HyperFact) -> np.ndarray:
        """Score vector over entities for ``(s, r, ?, Q)``."""
        return self.score(queries_from_facts([fact], self.n_relations, self.max_arity, mirror=False))[0]

    def invalidate(self) -> None:
        self._cache = None

    def extra_arrays(self) -> dict[str, np.ndarray]:
        return {"edges": self.edges}
