"""Relational neighbour-GNN encoder (CompGCN-style) and a GNN link predictor.

Each layer sends three kinds of messages to every entity ``v``:

* forward:  ``W_fwd (h_s - h_r)`` for each edge ``(s, r, v)``
* inverse:  ``W_inv (h_o - h_{r^-1})`` for each edge ``(v, r, o)``
* self:     ``W_self (h_v - h_loop)``

Each bucket is mean-aggregated, the three buckets are averaged and passed
through ReLU.  Relation embeddings are updated by ``W_rel`` every layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import tensor as T
from .base import Model, QueryBatch, uniform_embedding, xavier_normal
from .kge import smoothed_cross_entropy


@dataclass
class GnnParams:
    layers: list[dict[str, T.Tensor]]

    @classmethod
    def init(cls, rng: np.random.Generator, dim: int, n_layers: int, prefix: str = "gnn") -> "GnnParams":
        layers = []
        for i in range(n_layers):
            layers.append({
                name: xavier_normal(rng, dim, dim, f"{prefix}{i}.{name}")
                for name in ("w_fwd", "w_inv", "w_self", "w_rel")
            })
        return cls(layers)

    def named(self, prefix: str = "gnn") -> dict[str, T.Tensor]:
        return {f"{prefix}{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.items()}


def edge_array(triples) -> np.ndarray:
    arr = np.asarray([tuple(t) for t in triples], dtype=np.int64)
    return arr.reshape(-1, 3)


def gnn_encode(edges: np.ndarray, params: GnnParams, entities: T.Tensor, relations: T.Tensor,
               n_relations: int) -> tuple[T.Tensor, T.Tensor]:
    """Run message passing over ``edges`` (``[E, 3]`` of ``s, r, o``).

    ``relations`` must hold ``2 * n_relations + 1`` rows: originals,
    inverses, then the self-loop relation.

    Returns:
        Final entity and relation matrices.  With zero layers the inputs
        come back unchanged.
    """
    n = entities.shape[0]
    if relations.shape[0] != 2 * n_relations + 1:
        raise ValueError(f"relation table needs {2 * n_relations + 1} rows, got {relations.shape[0]}")
    src, rel, dst = edges[:, 0], edges[:, 1], edges[:, 2]
    loop = np.full(n, 2 * n_relations, dtype=np.int64)
    h, hr = entities, relations
    for layer in params.layers:
        if len(edges):
            fwd = T.matmul(T.sub(T.gather(h, src), T.gather(hr, rel)), layer["w_fwd"])
            inv = T.matmul(T.sub(T.gather(h, dst), T.gather(hr, rel + n_relations)), layer["w_inv"])
            m = T.add(T.segment_mean(fwd, dst, n), T.segment_mean(inv, src, n))
        else:
            m = None
        own = T.matmul(T.sub(h, T.gather(hr, loop)), layer["w_self"])
        m = own if m is None else T.add(m, own)
        h = T.relu(T.scale(m, 1.0 / 3.0))
        hr = T.matmul(hr, layer["w_rel"])
    return h, hr


class GnnLinkPredictor(Model):
    """GNN encoder over the (decomposed) training graph + DistMult decoder."""

    kind = "gnn"

    def __init__(self, n_entities: int, n_relations: int, config: dict, rng: np.random.Generator,
                 edges: np.ndarray | None = None):
        super().__init__(n_entities, n_relations, config)
        d = int(config.get("dim", 64))
        n_layers = int(config.get("layers", 2))
        self.label_smoothing = float(config.get("label_smoothing", 0.1))
        self.edges = np.zeros((0, 3), dtype=np.int64) if edges is None else np.asarray(edges, dtype=np.int64)
        self.gnn = GnnParams.init(rng, d, n_layers)
        self.params = {
            "entity": uniform_embedding(rng, n_entities, d, "entity"),
            "relation": uniform_embedding(rng, 2 * n_relations + 1, d, "relation"),
            **self.gnn.named(),
        }
        self._cache = None

    def encode(self) -> tuple[T.Tensor, T.Tensor]:
        return gnn_encode(self.edges, self.gnn, self.params["entity"], self.params["relation"],
                          self.n_relations)

    def _logits(self, h: T.Tensor, hr: T.Tensor, batch: QueryBatch) -> T.Tensor:
        q = T.mul(T.gather(h, batch.heads), T.gather(hr, batch.rels))
        return T.matmul(q, T.transpose(h, (1, 0)))

    def loss(self, batch: QueryBatch, rng=None) -> T.Tensor:
        h, hr = self.encode()
        return smoothed_cross_entropy(self._logits(h, hr, batch), batch.answers, self.label_smoothing)

    def score(self, batch: QueryBatch) -> np.ndarray:
        with T.no_grad():
            if self._cache is None:
                self._cache = self.encode()
            return self._logits(*self._cache, batch).data

    def invalidate(self) -> None:
        self._cache = None

    def extra_arrays(self) -> dict[str, np.ndarray]:
        return {"edges": self.edges}
