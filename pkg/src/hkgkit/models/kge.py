"""Triple scorers used as KGE baselines on decomposed graphs."""

from __future__ import annotations

import numpy as np

from .. import tensor as T
from .base import Model, QueryBatch, uniform_embedding

_NORM_EPS = 1e-18


# ----------------------------------------------------------------- TransH

def _project(h: np.ndarray, w: np.ndarray) -> np.ndarray:
    return h - (h * w).sum(axis=-1, keepdims=True) * w


def score_transh(s: int, r: int, o: int, params: dict[str, np.ndarray]) -> float:
    """``-|| P_r(h_s) + d_r - P_r(h_o) ||_2`` with a unit hyperplane normal."""
    ent, trans, normal = params["entity"], params["translation"], params["normal"]
    w = normal[r] / np.linalg.norm(normal[r])
    diff = _project(ent[s], w) + trans[r] - _project(ent[o], w)
    return -float(np.sqrt((diff * diff).sum()))


class TransH(Model):
    kind = "transh"
    loss_kind = "margin"

    def __init__(self, n_entities: int, n_relations: int, config: dict, rng: np.random.Generator):
        super().__init__(n_entities, n_relations, config)
        d = int(config.get("dim", 64))
        self.margin = float(config.get("margin", 1.0))
        self.params = {
            "entity": uniform_embedding(rng, n_entities, d, "entity"),
            "translation": uniform_embedding(rng, self.n_relations_total, d, "translation"),
            "normal": uniform_embedding(rng, self.n_relations_total, d, "normal"),
        }

    def _unit_normals(self, rels) -> T.Tensor:
        w = T.gather(self.params["normal"], rels)
        norm = T.sqrt(T.add_bias(T.tsum(T.mul(w, w), axis=-1), T.constant(np.array([_NORM_EPS]))))
        return T.mul(w, T.expand(T.reciprocal(norm), w.shape))

    def _project(self, h: T.Tensor, w: T.Tensor) -> T.Tensor:
        dot = T.tsum(T.mul(h, w), axis=-1)
        return T.sub(h, T.mul(T.expand(dot, w.shape), w))

    def distance(self, heads, rels, tails) -> T.Tensor:
        """Distances ``[B]`` for aligned index arrays, recorded on the tape."""
        ent = self.params["entity"]
        w = self._unit_normals(rels)
        hs = self._project(T.gather(ent, heads), w)
        ho = self._project(T.gather(ent, tails), w)
        diff = T.sub(T.add(hs, T.gather(self.params["translation"], rels)), ho)
        sq = T.add_bias(T.tsum(T.mul(diff, diff), axis=-1), T.constant(np.array([_NORM_EPS])))
        return T.reshape(T.sqrt(sq), (-1,))

    def loss(self, batch: QueryBatch, rng=None) -> T.Tensor:
        """Mean hinge ``max(0, margin + d(pos) - d(neg))`` over all negatives."""
        if batch.negatives is None:
            raise ValueError("TransH loss needs negative samples on the batch")
        k = batch.negatives.shape[1]
        heads = np.repeat(batch.heads, k)
        rels = np.repeat(batch.rels, k)
        pos = self.distance(heads, rels, np.repeat(batch.answers, k))
        neg = self.distance(heads, rels, batch.negatives.reshape(-1))
        margin = T.constant(np.full(pos.shape, self.margin))
        return T.mean(T.relu(T.add(margin, T.sub(pos, neg))))

    def score(self, batch: QueryBatch, chunk: int = 64) -> np.ndarray:
        ent = self.params["entity"].data
        trans, normal = self.params["translation"].data, self.params["normal"].data
        out = np.empty((len(batch), self.n_entities))
        for i in range(0, len(batch), chunk):
            h, r = batch.heads[i:i + chunk], batch.rels[i:i + chunk]
            w = normal[r] / np.linalg.norm(normal[r], axis=1, keepdims=True)
            q = _project(ent[h], w) + trans[r]                      # [b, d]
            cand = ent[None, :, :] - (ent @ w.T).T[:, :, None] * w[:, None, :]   # [b, N, d]
            diff = q[:, None, :] - cand
            out[i:i + chunk] = -np.sqrt((diff * diff).sum(axis=-1))
        return out


# ----------------------------------------------------------------- ComplEx

def score_complex(s: int, r: int, o: int, params: dict[str, np.ndarray]) -> float:
    """``Re(<h_s, h_r, conj(h_o)>)`` with real/imaginary parts stored apart."""
    sr, si = params["entity_re"][s], params["entity_im"][s]
    rr, ri = params["relation_re"][r], params["relation_im"][r]
    orr, oi = params["entity_re"][o], params["entity_im"][o]
    return float((sr * rr * orr + si * rr * oi + sr * ri * oi - si * ri * orr).sum())


class ComplEx(Model):
    kind = "complex"

    def __init__(self, n_entities: int, n_relations: int, config: dict, rng: np.random.Generator):
        super().__init__(n_entities, n_relations, config)
        d = int(config.get("dim", 64))
        if d % 2:
            raise ValueError(f"ComplEx needs an even embedding dimension, got {d}")
        half = d // 2
        self.label_smoothing = float(config.get("label_smoothing", 0.1))
        self.params = {
            "entity_re": uniform_embedding(rng, n_entities, half, "entity_re"),
            "entity_im": uniform_embedding(rng, n_entities, half, "entity_im"),
            "relation_re": uniform_embedding(rng, self.n_relations_total, half, "relation_re"),
            "relation_im": uniform_embedding(rng, self.n_relations_total, half, "relation_im"),
        }

    def logits(self, batch: QueryBatch) -> T.Tensor:
        p = self.params
        sr, si = T.gather(p["entity_re"], batch.heads), T.gather(p["entity_im"], batch.heads)
        rr, ri = T.gather(p["relation_re"], batch.rels), T.gather(p["relation_im"], batch.rels)
        q_re = T.sub(T.mul(sr, rr), T.mul(si, ri))
        q_im = T.add(T.mul(sr, ri), T.mul(si, rr))
        q = T.concat([q_re, q_im], axis=1)
        cand = T.concat([p["entity_re"], p["entity_im"]], axis=1)
        return T.matmul(q, T.transpose(cand, (1, 0)))

    def loss(self, batch: QueryBatch, rng=None) -> T.Tensor:
        return smoothed_cross_entropy(self.logits(batch), batch.answers, self.label_smoothing)

    def score(self, batch: QueryBatch) -> np.ndarray:
        with T.no_grad():
            return self.logits(batch).data


def smoothed_cross_entropy(logits: T.Tensor, answers: np.ndarray, smoothing: float) -> T.Tensor:
    """Mean softmax cross-entropy against label-smoothed one-hot targets."""
    b, n = logits.shape
    target = np.full((b, n), smoothing / n)
    target[np.arange(b), answers] += 1.0 - smoothing
    return T.scale(T.tsum(T.mul(T.log_softmax(logits), T.constant(target))), -1.0 / b)
