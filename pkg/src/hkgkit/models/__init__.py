from .base import Model, QueryBatch, queries_from_facts, queries_from_triples, read_checkpoint, save_checkpoint
from .formergnn import FormerGNN
from .gnn import GnnLinkPredictor, GnnParams, gnn_encode
from .kge import ComplEx, TransH, score_complex, score_transh
from .transformer import TransformerBlockParams, qualifier_integrate, transformer

MODEL_KINDS = {
    "transh": TransH,
    "complex": ComplEx,
    "gnn": GnnLinkPredictor,
    "formergnn": FormerGNN,
}

HKG_AWARE = ("formergnn",)
GRAPH_MODELS = ("gnn", "formergnn")


def build_model(kind: str, n_entities: int, n_relations: int, config: dict, rng, edges=None) -> Model:
    try:
        cls = MODEL_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}; choose from {', '.join(MODEL_KINDS)}") from None
    if kind in GRAPH_MODELS:
        return cls(n_entities, n_relations, config, rng, edges=edges)
    return cls(n_entities, n_relations, config, rng)


__all__ = [
    "ComplEx", "FormerGNN", "GnnLinkPredictor", "GnnParams", "HKG_AWARE", "MODEL_KINDS", "Model",
    "QueryBatch", "TransH", "TransformerBlockParams", "build_model", "gnn_encode", "qualifier_integrate",
    "queries_from_facts", "queries_from_triples", "read_checkpoint", "save_checkpoint", "score_complex",
    "score_transh", "transformer",
]
