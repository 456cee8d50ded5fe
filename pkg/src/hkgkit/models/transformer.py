"""Pre-norm transformer encoder blocks and the qualifier integrator.

Blocks are ``x + Attn(LN(x))`` then ``x + FFN(LN(x))`` with no final norm,
so zeroing the output projections turns a block into the identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import tensor as T
from .base import PAD, QueryBatch, ones, xavier_normal, zeros

MASK_VALUE = -1e30

ROLE_SUBJECT, ROLE_RELATION, ROLE_MASK, ROLE_QUAL_REL, ROLE_QUAL_ENT = range(5)
MASK_POSITION = 2


@dataclass
class TransformerBlockParams:
    layers: list[dict[str, T.Tensor]]
    heads: int

    @classmethod
    def init(cls, rng: np.random.Generator, dim: int, n_layers: int, heads: int,
             ff_dim: int | None = None, prefix: str = "trm") -> "TransformerBlockParams":
        if dim % heads:
            raise ValueError(f"head count {heads} must divide model dimension {dim}")
        ff_dim = ff_dim or 2 * dim
        layers = []
        for i in range(n_layers):
            p = f"{prefix}{i}."
            layers.append({
                "wq": xavier_normal(rng, dim, dim, p + "wq"), "bq": zeros(dim, p + "bq"),
                "wk": xavier_normal(rng, dim, dim, p + "wk"), "bk": zeros(dim, p + "bk"),
                "wv": xavier_normal(rng, dim, dim, p + "wv"), "bv": zeros(dim, p + "bv"),
                "wo": xavier_normal(rng, dim, dim, p + "wo"), "bo": zeros(dim, p + "bo"),
                "w1": xavier_normal(rng, dim, ff_dim, p + "w1"), "b1": zeros(ff_dim, p + "b1"),
                "w2": xavier_normal(rng, ff_dim, dim, p + "w2"), "b2": zeros(dim, p + "b2"),
                "ln1_g": ones(dim, p + "ln1_g"), "ln1_b": zeros(dim, p + "ln1_b"),
                "ln2_g": ones(dim, p + "ln2_g"), "ln2_b": zeros(dim, p + "ln2_b"),
            })
        return cls(layers, heads)

    def named(self, prefix: str = "trm") -> dict[str, T.Tensor]:
        return {f"{prefix}{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.items()}


def _attention(x: T.Tensor, layer: dict, heads: int, bias: T.Tensor) -> T.Tensor:
    b, t, d = x.shape
    dh = d // heads

    def split(z):
        return T.transpose(T.reshape(z, (b, t, heads, dh)), (0, 2, 1, 3))

    q = split(T.linear(x, layer["wq"], layer["bq"]))
    k = split(T.linear(x, layer["wk"], layer["bk"]))
    v = split(T.linear(x, layer["wv"], layer["bv"]))
    scores = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
    attn = T.softmax(T.add(scores, bias))
    ctx = T.reshape(T.transpose(T.matmul(attn, v), (0, 2, 1, 3)), (b, t, d))
    return T.linear(ctx, layer["wo"], layer["bo"])


def _dropout_mask(rng, shape, rate):
    if rng is None or rate <= 0:
        return None
    return (rng.random(shape) >= rate).astype(np.float64)


def transformer(x: T.Tensor, key_valid: np.ndarray, params: TransformerBlockParams,
                rng: np.random.Generator | None = None, dropout: float = 0.0) -> T.Tensor:
    """Encode ``x`` (``[B, T, d]``); keys with ``key_valid == False`` are masked."""
    b, t, _ = x.shape
    bias_arr = np.where(key_valid[:, None, None, :], 0.0, MASK_VALUE)
    bias = T.constant(np.broadcast_to(bias_arr, (b, params.heads, t, t)).copy())
    keep = 1.0 - dropout
    for layer in params.layers:
        h = T.layer_norm(x, layer["ln1_g"], layer["ln1_b"])
        a = _attention(h, layer, params.heads, bias)
        x = T.add(x, T.dropout(a, _dropout_mask(rng, a.shape, dropout), keep))
        h = T.layer_norm(x, layer["ln2_g"], layer["ln2_b"])
        f = T.linear(T.relu(T.linear(h, layer["w1"], layer["b1"])), layer["w2"], layer["b2"])
        x = T.add(x, T.dropout(f, _dropout_mask(rng, f.shape, dropout), keep))
    return x


def sequence_layout(batch: QueryBatch, n_entity_rows: int, mask_id: int, pad_entity: int,
                    pad_relation: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Token ids into ``concat(entity_table, relation_table)``, role ids and key mask.

    Layout is ``[s, r, MSK, qr_1, qe_1, ..., pad...]``; every qualifier pair
    shares role indices 3/4, so the encoding carries no qualifier order.
    """
    b, m = len(batch), batch.max_arity
    t = 3 + 2 * m
    ids = np.empty((b, t), dtype=np.int64)
    ids[:, 0] = batch.heads
    ids[:, 1] = n_entity_rows + batch.rels
    ids[:, 2] = mask_id
    qr, qe = batch.quals[:, :, 0], batch.quals[:, :, 1]
    present = qr != PAD
    ids[:, 3::2] = np.where(present, n_entity_rows + qr, n_entity_rows + pad_relation)
    ids[:, 4::2] = np.where(present, qe, pad_entity)
    roles = np.array([ROLE_SUBJECT, ROLE_RELATION, ROLE_MASK] + [ROLE_QUAL_REL, ROLE_QUAL_ENT] * m,
                     dtype=np.int64)
    valid = np.ones((b, t), dtype=bool)
    valid[:, 3::2] = present
    valid[:, 4::2] = present
    return ids, roles, valid


def qualifier_integrate(batch: QueryBatch, entity_table: T.Tensor, relation_table: T.Tensor,
                        role_table: T.Tensor, params: TransformerBlockParams, mask_id: int,
                        pad_entity: int, pad_relation: int, max_arity: int | None = None,
                        rng=None, dropout: float = 0.0) -> tuple[T.Tensor, np.ndarray]:
    """Transformer-encode ``[s, r, MSK, qualifiers...]`` token sequences.

    Returns:
        Per-token embeddings ``[B, 3 + 2*max_arity, d]`` and the key mask.

    Raises:
        ValueError: a query carries more qualifiers than ``max_arity``.
    """
    if max_arity is not None and len(batch) and batch.arities().max(initial=0) > max_arity:
        raise ValueError(f"qualifier count {int(batch.arities().max())} exceeds max arity {max_arity}")
    ids, roles, valid = sequence_layout(batch, entity_table.shape[0], mask_id, pad_entity, pad_relation)
    table = T.concat([entity_table, relation_table], axis=0)
    tokens = T.gather(table, ids)
    b, t, d = tokens.shape
    pos = T.expand(T.reshape(T.gather(role_table, roles), (1, t, d)), (b, t, d))
    return transformer(T.add(tokens, pos), valid, params, rng, dropout), valid
