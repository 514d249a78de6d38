"""Training loop, binary metrics, and the dev/test comparison protocol."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .corpus import ArticleRecord
from .embed_pretrain import EmbeddingTable
from .entity_graph import EntityGraph, PageCooccurrence, build_article_graph
from .nn_core import AdamW
from .quality_model import (
    Example,
    ModelConfig,
    QualityModel,
    build_node_vocab,
    build_vocab,
    init_params,
    loss_and_grads,
    predict_proba,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    batch_size: int = 16
    learning_rate: float = 2e-4
    dropout: float = 0.5
    weight_decay: float = 0.01
    seed: int = 0
    node_init: str = "random"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError("learning_rate and weight_decay must be nonnegative")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.n if self.n else 0.0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        # harmonic mean of precision and recall, as one division of counts
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if self.tp else 0.0

    def __add__(self, other: "Metrics") -> "Metrics":
        return Metrics(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
        }


def evaluate(predictions: Sequence[int], gold: Sequence[int]) -> Metrics:
    """Confusion counts with class 1 (high quality) as positive."""
    pred = np.asarray(predictions, dtype=np.int64)
    gold = np.asarray(gold, dtype=np.int64)
    if pred.shape != gold.shape:
        raise ValueError(f"{pred.size} predictions for {gold.size} gold labels")
    return Metrics(
        tp=int(np.sum((pred == 1) & (gold == 1))),
        fp=int(np.sum((pred == 1) & (gold == 0))),
        fn=int(np.sum((pred == 0) & (gold == 1))),
        tn=int(np.sum((pred == 0) & (gold == 0))),
    )


def metrics_table(rows: Mapping[str, Metrics]) -> str:
    head = f"{'model':<28}{'accuracy':>10}{'precision':>11}{'recall':>9}{'F1':>8}"
    lines = [head, "-" * len(head)]
    for name, m in rows.items():
        lines.append(f"{name:<28}{m.accuracy:>10.3f}{m.precision:>11.3f}{m.recall:>9.3f}{m.f1:>8.3f}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    model: QualityModel  # best-validation-F1 parameters
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def best_valid(self) -> Optional[dict]:
        return self.history[self.best_epoch - 1]["valid"] if self.history else None


def _labels(examples: Sequence[Example]) -> np.ndarray:
    return np.array([ex.label for ex in examples], dtype=np.int64)


def _mean_loss(examples: Sequence[Example], params, cfg: ModelConfig) -> float:
    if not examples:
        return float("nan")
    loss, _ = loss_and_grads(examples, params, cfg)
    return loss


def train(model: QualityModel, train_set: Sequence[Example], valid_set: Sequence[Example],
          cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Seeded mini-batch AdamW on mean NLL with dropout; keeps the best-validation-F1 epoch.

    ``model.params`` is updated in place; the returned model holds a copy of
    the best epoch's parameters. Valid examples must be disjoint from training.
    """
    if not train_set:
        raise ValueError("empty training set")
    for ex in list(train_set) + list(valid_set):
        if ex.label is None:
            raise ValueError(f"article {ex.article_id!r} has no label")
    train_ids = {ex.article_id for ex in train_set}
    if train_ids & {ex.article_id for ex in valid_set} - {""}:
        raise ValueError("train and valid splits overlap")

    mcfg = replace(model.cfg, dropout_rate=cfg.dropout)
    params = model.params
    opt = AdamW(learning_rate=cfg.learning_rate, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)
    history = []
    best_f1, best_epoch, best_params = -1.0, 0, None
    n = len(train_set)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            batch = [train_set[i] for i in order[start:start + cfg.batch_size]]
            loss, grads = loss_and_grads(batch, params, mcfg, rng, training=True)
            if not math.isfinite(loss):
                raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
            losses.append(loss)
            opt.step(params, grads)
        entry = {"epoch": epoch, "train_loss": float(np.mean(losses))}
        if valid_set:
            pred = predict_proba(valid_set, params, model.cfg).argmax(axis=1)
            vm = evaluate(pred, _labels(valid_set))
            entry["valid_loss"] = _mean_loss(valid_set, params, model.cfg)
            entry["valid"] = vm.to_dict()
            f1 = vm.f1
        else:
            f1 = -entry["train_loss"]
        history.append(entry)
        log.info("epoch %d loss %.4f valid %s", epoch, entry["train_loss"], entry.get("valid"))
        if f1 > best_f1:
            best_f1, best_epoch = f1, epoch
            best_params = {k: v.copy() for k, v in params.items()}
    best = QualityModel(model.cfg, best_params, model.vocab, model.node_vocab)
    return TrainResult(best, history, best_epoch)


def predict_labels(model: QualityModel, examples: Sequence[Example]) -> np.ndarray:
    return model.predict(examples)


# ---------------------------------------------------------------------------
# experiment protocol
# ---------------------------------------------------------------------------


@dataclass
class Dataset:
    """Article splits with their First-Order article graphs."""

    train: list[ArticleRecord]
    valid: list[ArticleRecord]
    test: list[ArticleRecord]
    graphs: dict[str, EntityGraph]

    @classmethod
    def build(cls, train, valid, test, pages) -> "Dataset":
        cooc = PageCooccurrence(pages)
        graphs = {a.id: build_article_graph(a, cooc) for a in list(train) + list(valid) + list(test)}
        return cls(list(train), list(valid), list(test), graphs)


def build_model(data: Dataset, mcfg: ModelConfig, seed: int,
                embeddings: Optional[EmbeddingTable] = None, min_freq: int = 2,
                extra_nodes: Iterable[str] = ()) -> QualityModel:
    """Vocab from the training split; node vocabulary over every split's graph
    nodes plus ``extra_nodes`` (e.g. every entity that has a pretrained vector)."""
    vocab = build_vocab(data.train, min_freq)
    node_vocab = build_node_vocab(data.graphs.values(), extra_nodes)
    mcfg = replace(mcfg, vocab_size=len(vocab), node_vocab_size=len(node_vocab))
    vectors = embeddings.vectors if (embeddings is not None and mcfg.node_init == "pretrained") else None
    params = init_params(mcfg, np.random.default_rng(seed), vectors, node_vocab)
    return QualityModel(mcfg, params, vocab, node_vocab)


def examples_for(model: QualityModel, articles: Iterable[ArticleRecord], graphs: Mapping[str, EntityGraph]) -> list[Example]:
    return [model.example(a, graphs[a.id]) for a in articles]


@dataclass
class RunOutcome:
    name: str
    result: TrainResult
    valid: Metrics
    test: Metrics


def run_experiment(data: Dataset, mcfg: ModelConfig, tcfg: TrainConfig,
                   embeddings: Optional[EmbeddingTable] = None, name: str = "model") -> RunOutcome:
    """Build, train and score one model variant on the dev and test splits."""
    mcfg = replace(mcfg, node_init=tcfg.node_init, dropout_rate=tcfg.dropout)
    model = build_model(data, mcfg, tcfg.seed, embeddings)
    tr = examples_for(model, data.train, data.graphs)
    va = examples_for(model, data.valid, data.graphs)
    te = examples_for(model, data.test, data.graphs)
    result = train(model, tr, va, tcfg)
    best = result.model
    vm = evaluate(best.predict(va), _labels(va)) if va else Metrics(0, 0, 0, 0)
    tm = evaluate(best.predict(te), _labels(te)) if te else Metrics(0, 0, 0, 0)
    return RunOutcome(name, result, vm, tm)


VARIANTS = {
    "random+gate": {"node_init": "random", "fusion": "gate"},
    "pretrained+gate": {"node_init": "pretrained", "fusion": "gate"},
    "random+concat": {"node_init": "random", "fusion": "concat"},
    "pretrained+concat": {"node_init": "pretrained", "fusion": "concat"},
}


def ablate(data: Dataset, mcfg: ModelConfig, tcfg: TrainConfig, embeddings: Optional[EmbeddingTable],
           variants: Sequence[str] = tuple(VARIANTS)) -> dict[str, RunOutcome]:
    """Run each {node init} x {fusion} variant on identical data and seed."""
    out = {}
    for name in variants:
        variant = VARIANTS[name]
        if variant["node_init"] == "pretrained" and embeddings is None:
            raise ValueError(f"variant {name!r} needs pretrained embeddings")
        out[name] = run_experiment(
            data, replace(mcfg, fusion=variant["fusion"]), replace(tcfg, node_init=variant["node_init"]), embeddings, name
        )
    return out


def ablation_table(outcomes: Mapping[str, RunOutcome]) -> str:
    rows = {}
    for name, o in outcomes.items():
        rows[f"{name} (dev)"] = o.valid
        rows[f"{name} (test)"] = o.test
    return metrics_table(rows)


def write_metrics_log(path, records: Iterable[dict]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def write_manifest(path, **entries) -> None:
    def default(o):
        if hasattr(o, "__dataclass_fields__"):
            return asdict(o)
        if isinstance(o, Path):
            return str(o)
        raise TypeError(f"cannot serialize {type(o).__name__}")

    Path(path).write_text(json.dumps(entries, indent=2, sort_keys=True, default=default) + "\n", encoding="utf-8")
