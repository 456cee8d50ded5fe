"""Seeded, reproducible training for every model kind."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .core import HyperFact, HyperGraph, Qualifier, Triple
from .decompose import METHODS, decompose_graph
from .evaluation import FilterIndex, MetricsReport, evaluate
from .models import GRAPH_MODELS, HKG_AWARE, Model, QueryBatch, build_model
from .models.base import queries_from_facts, queries_from_triples, save_checkpoint
from .models.gnn import edge_array
from .tensor import Tape, backward

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    seed: int = 0
    epochs: int = 100
    batch_size: int = 128
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    label_smoothing: float = 0.1
    margin: float = 1.0
    negatives: int = 10
    dim: int = 64
    layers: int = 2
    heads: int = 4
    qi_layers: int = 1
    decoder_layers: int = 2
    dropout: float = 0.0
    max_arity: int | None = None
    decompose: str = "prune"
    eval_every: int = 1
    patience: int = 20
    select_on: str = "valid"

    def __post_init__(self):
        positive = ("batch_size", "lr", "dim", "negatives", "heads", "eval_every", "patience")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.epochs < 0 or self.layers < 0:
            raise ConfigError("epochs and layers must be non-negative")
        if not 0.0 <= self.dropout < 1.0 or not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError("dropout and label_smoothing must lie in [0, 1)")
        if self.decompose not in METHODS:
            raise ConfigError(f"unknown decomposition {self.decompose!r}; choose from {', '.join(METHODS)}")
        if self.select_on not in ("valid", "train"):
            raise ConfigError("select_on must be 'valid' or 'train'")
        if self.dim % self.heads:
            raise ConfigError(f"heads ({self.heads}) must divide dim ({self.dim})")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        return asdict(self)


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def negative_sample(fact: HyperFact, k: int, rng: np.random.Generator, n_entities: int) -> list[HyperFact]:
    """``k`` copies of ``fact`` with the object replaced by a uniform other entity."""
    objs = negative_objects(np.array([fact.object]), k, rng, n_entities)[0]
    return [HyperFact(fact.subject, fact.relation, int(o), fact.qualifiers) for o in objs]


def negative_objects(answers: np.ndarray, k: int, rng: np.random.Generator, n_entities: int) -> np.ndarray:
    if k < 1:
        raise ValueError("need at least one negative per positive")
    if n_entities <= 1:
        raise ValueError("negative sampling needs at least two entities")
    draw = rng.integers(0, n_entities - 1, size=(len(answers), k))
    return draw + (draw >= answers[:, None])


@dataclass
class TrainingData:
    """Everything a model kind needs, derived from one HyperGraph."""

    kind: str
    method: str | None
    n_entities: int
    n_relations: int
    n_candidates: int
    train: QueryBatch
    eval_batches: dict[str, QueryBatch]
    filters: FilterIndex
    edges: np.ndarray | None
    max_arity: int
    train_edge_source: list[Triple] = field(default_factory=list)
    allowed_edges: set = field(default_factory=set)


def _truncate(facts: list[HyperFact], max_arity: int) -> tuple[list[HyperFact], int]:
    out, cut = [], 0
    for f in facts:
        if len(f.qualifiers) > max_arity:
            cut += 1
            f = HyperFact(f.subject, f.relation, f.object, f.canonical_qualifiers()[:max_arity])
        out.append(f)
    return out, cut


def prepare_data(graph: HyperGraph, kind: str, config: TrainConfig) -> TrainingData:
    """Build query batches, encoder edges and the filter index for ``kind``."""
    if kind in HKG_AWARE:
        max_arity = graph.max_arity() if config.max_arity is None else config.max_arity
        splits = {}
        for name, facts in graph.splits():
            splits[name], cut = _truncate(facts, max_arity)
            if cut:
                log.warning("%s: %d facts exceed max arity %d; extra qualifiers dropped", name, cut, max_arity)
        nr = graph.num_relations
        batches = {name: queries_from_facts(f, nr, max_arity) for name, f in splits.items()}
        edge_src = list(dict.fromkeys(f.triple for f in splits["train"]))
        return TrainingData(kind, "prune", graph.num_entities, nr, graph.num_entities, batches["train"],
                            batches, FilterIndex.build(batches.values(), use_qualifiers=True),
                            edge_array(edge_src), max_arity, edge_src, set(edge_src))

    dg = decompose_graph(graph, config.decompose)
    ne, nr = len(dg.entity_vocab), len(dg.relation_vocab)
    edge_src = dg.training_edges()
    train = queries_from_triples(edge_src, nr)
    eval_batches = {name: queries_from_triples([f.triple for f in facts], nr) for name, facts in graph.splits()}
    filters = FilterIndex.build(eval_batches.values(), use_qualifiers=False)
    edges = edge_array(edge_src) if kind in GRAPH_MODELS else None
    return TrainingData(kind, config.decompose, ne, nr, graph.num_entities, train, eval_batches, filters,
                        edges, 0, edge_src, set(dg.splits["train"].triples))


def audit_no_leakage(data: TrainingData) -> None:
    """Every training edge must come from the train split's decomposition."""
    stray = [t for t in data.train_edge_source if t not in data.allowed_edges]
    if stray:
        raise TrainingError(f"{len(stray)} training edges do not originate from the train split")


def model_config(config: TrainConfig, data: TrainingData) -> dict:
    d = {k: v for k, v in config.to_dict().items()
         if k in ("dim", "layers", "heads", "qi_layers", "decoder_layers", "dropout", "label_smoothing", "margin")}
    d["gnn_layers"] = config.layers
    d["max_arity"] = data.max_arity
    return d


@dataclass
class TrainResult:
    model: Model
    data: TrainingData
    config: TrainConfig
    trace: list[dict]
    best_epoch: int
    best_mrr: float
    seconds: float
    final_report: MetricsReport | None = None


def train(graph: HyperGraph, kind: str, config: TrainConfig, data: TrainingData | None = None,
          time_budget: float | None = None) -> TrainResult:
    """Optimise ``kind`` on ``graph``; the returned model holds the best-selection weights."""
    data = data or prepare_data(graph, kind, config)
    audit_no_leakage(data)
    rng = np.random.default_rng(config.seed)
    model = build_model(kind, data.n_entities, data.n_relations, model_config(config, data), rng, data.edges)
    params = model.parameters()
    opt = Adam(params, config.lr, config.beta1, config.beta2, config.eps)
    select = data.eval_batches.get(config.select_on) if config.select_on != "train" else data.eval_batches["train"]
    if select is not None and len(select) == 0:
        select = None

    best_state = model.state()
    best_mrr, best_epoch, stale = -math.inf, 0, 0
    trace: list[dict] = []
    start = time.perf_counter()
    n = len(data.train)
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        total, count = 0.0, 0
        for lo in range(0, n, config.batch_size):
            idx = perm[lo:lo + config.batch_size]
            batch = data.train.take(idx)
            if model.loss_kind == "margin":
                batch.negatives = negative_objects(batch.answers, config.negatives, rng, data.n_candidates)
            with Tape() as tape:
                loss = model.loss(batch, rng if config.dropout > 0 else None)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss {value} at epoch {epoch}, batch rows {idx.tolist()}")
            backward(tape, loss, params)
            opt.step()
            total += value * len(idx)
            count += len(idx)
        model.invalidate()
        row = {"epoch": epoch, "train_loss": total / max(count, 1), "valid_mrr": float("nan")}
        if select is not None and epoch % config.eval_every == 0:
            mrr = evaluate(model, select, data.filters, data.n_candidates).mrr
            row["valid_mrr"] = mrr
            if mrr > best_mrr:
                best_mrr, best_epoch, stale = mrr, epoch, 0
                best_state = model.state()
            else:
                stale += 1
        elif select is None:
            best_state, best_epoch = model.state(), epoch
        trace.append(row)
        log.info("epoch %d loss %.6f valid_mrr %.4f", epoch, row["train_loss"], row["valid_mrr"])
        if select is not None and stale >= config.patience:
            log.info("early stop at epoch %d (best %d)", epoch, best_epoch)
            break
        if time_budget is not None and time.perf_counter() - start > time_budget:
            log.info("time budget exhausted at epoch %d", epoch)
            break
    model.load_state(best_state)
    model.invalidate()
    return TrainResult(model, data, config, trace, best_epoch,
                       best_mrr if best_mrr > -math.inf else float("nan"), time.perf_counter() - start)


def facts_to_array(facts: list[HyperFact], max_arity: int) -> np.ndarray:
    width = 3 + 2 * max_arity
    arr = np.full((len(facts), width), -1, dtype=np.int64)
    for i, f in enumerate(facts):
        arr[i, :3] = f.subject, f.relation, f.object
        for j, q in enumerate(f.canonical_qualifiers()[:max_arity]):
            arr[i, 3 + 2 * j:5 + 2 * j] = q
    return arr


def array_to_facts(arr: np.ndarray) -> list[HyperFact]:
    out = []
    for row in arr:
        quals = [Qualifier(int(row[j]), int(row[j + 1])) for j in range(3, len(row), 2) if row[j] >= 0]
        out.append(HyperFact(int(row[0]), int(row[1]), int(row[2]), tuple(quals)))
    return out


def save_result(path: str, result: TrainResult, graph: HyperGraph) -> None:
    """Checkpoint with config, vocabularies (and their hashes), tensors and
    the train/valid statements needed to rebuild the evaluation filter."""
    width = max(result.data.max_arity, graph.max_arity())
    meta = {
        "train_config": result.config.to_dict(),
        "decompose": result.data.method,
        "n_candidates": result.data.n_candidates,
        "max_arity": result.data.max_arity,
        "entity_labels": graph.entity_vocab.labels(),
        "relation_labels": graph.relation_vocab.labels(),
        "entity_vocab_hash": graph.entity_vocab.digest(),
        "relation_vocab_hash": graph.relation_vocab.digest(),
        "best_epoch": result.best_epoch,
    }
    arrays = {"train_facts": facts_to_array(graph.train, width), "valid_facts": facts_to_array(graph.valid, width)}
    save_checkpoint(path, result.model, meta, arrays)


def write_trace(path: str, trace: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,valid_mrr\n")
        for row in trace:
            fh.write(f"{row['epoch']},{row['train_loss']!r},{row['valid_mrr']!r}\n")
