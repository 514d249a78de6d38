"""Compound article-quality classifier.

text tokens --mean pool--> dense(tanh) ------------------> h_t --+
entity graph --GCN x layers (ReLU)--> max-pool over nodes --> h_g --+--> gate --> h_m --> FFN --> softmax

All parameters live in one ``name -> float64 array`` dict so the optimizer and
checkpointing treat them uniformly.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .corpus import ArticleRecord
from .entity_graph import FO, EntityGraph
from .nn_core import (
    DenseLayer,
    dense_backward,
    dense_forward,
    dropout_mask,
    load_params,
    log_softmax,
    save_params,
    sigmoid,
    softmax,
)

UNK = "<unk>"
_WORD = re.compile(r"\w+", re.UNICODE)


@dataclass
class ModelConfig:
    hidden_dim: int = 64
    gcn_layers: int = 3
    vocab_size: int = 1
    node_vocab_size: int = 1
    dropout_rate: float = 0.5
    node_init: str = "random"
    fusion: str = "gate"  # "gate" or "concat" (ablation)
    head: str = "softmax"  # "softmax" or "sigmoid" (ablation)
    ffn_layers: int = 2  # dense layers in the head; hidden ones are ReLU of width hidden_dim
    dropout_sites: tuple = ("text", "fused")

    def __post_init__(self):
        if self.hidden_dim < 1 or self.gcn_layers < 1 or self.ffn_layers < 1:
            raise ValueError("hidden_dim, gcn_layers and ffn_layers must be >= 1")
        if self.vocab_size < 1 or self.node_vocab_size < 1:
            raise ValueError("vocabularies must hold at least the UNK entry")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.node_init not in ("random", "pretrained"):
            raise ValueError(f"node_init must be 'random' or 'pretrained', got {self.node_init!r}")
        if self.fusion not in ("gate", "concat"):
            raise ValueError(f"fusion must be 'gate' or 'concat', got {self.fusion!r}")
        if self.head not in ("softmax", "sigmoid"):
            raise ValueError(f"head must be 'softmax' or 'sigmoid', got {self.head!r}")
        self.dropout_sites = tuple(self.dropout_sites)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dropout_sites"] = list(self.dropout_sites)
        return d


# ---------------------------------------------------------------------------
# vocabularies and example preparation
# ---------------------------------------------------------------------------


class Vocab:
    """String -> id map with id 0 reserved for unknowns."""

    def __init__(self, items: Iterable[str] = ()):
        self.items = [UNK]
        self.index = {UNK: 0}
        for it in items:
            if it not in self.index:
                self.index[it] = len(self.items)
                self.items.append(it)

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, item) -> bool:
        return item in self.index

    def ids(self, items: Iterable[str]) -> np.ndarray:
        return np.array([self.index.get(it, 0) for it in items], dtype=np.int64)


def tokenize(article: ArticleRecord) -> list[str]:
    """Word-character runs (lowercased) with each entity mention kept as one token."""
    tokens: list[str] = []
    pos = 0
    for m in sorted(article.mentions, key=lambda m: m.start):
        if m.start < pos:
            continue
        tokens.extend(t.lower() for t in _WORD.findall(article.body[pos:m.start]))
        tokens.append(m.surface)
        pos = m.end
    tokens.extend(t.lower() for t in _WORD.findall(article.body[pos:]))
    return tokens


def build_vocab(articles: Iterable[ArticleRecord], min_freq: int = 2) -> Vocab:
    counts = Counter(tok for a in articles for tok in tokenize(a))
    return Vocab(sorted((t for t, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t)))


def build_node_vocab(graphs: Iterable[EntityGraph], extra: Iterable[str] = ()) -> Vocab:
    names: dict[str, None] = {}
    for g in graphs:
        names.update(dict.fromkeys(g.nodes))
    names.update(dict.fromkeys(extra))
    return Vocab(sorted(names))


def normalize_adjacency(g: EntityGraph) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2 over ``g.nodes`` order, binary A from FO edges."""
    n = len(g.nodes)
    if n == 0:
        return np.zeros((0, 0))
    pos = {name: i for i, name in enumerate(g.nodes)}
    a = np.eye(n)
    for e in g.edges:
        if e.order == FO:
            i, j = pos[e.u], pos[e.v]
            a[i, j] = a[j, i] = 1.0
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return a * d[:, None] * d[None, :]


@dataclass
class Example:
    token_ids: np.ndarray
    node_ids: np.ndarray
    adj: np.ndarray
    label: Optional[int] = None
    article_id: str = ""


def prepare_example(article: ArticleRecord, graph: EntityGraph, vocab: Vocab, node_vocab: Vocab) -> Example:
    return Example(
        token_ids=vocab.ids(tokenize(article)),
        node_ids=node_vocab.ids(graph.nodes),
        adj=normalize_adjacency(graph),
        label=article.label,
        article_id=article.id,
    )


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


def _fusion_width(cfg: ModelConfig) -> int:
    return cfg.hidden_dim * (2 if cfg.fusion == "concat" else 1)


def init_params(cfg: ModelConfig, rng: np.random.Generator, node_vectors: Optional[Mapping[str, np.ndarray]] = None,
                node_vocab: Optional[Vocab] = None) -> dict[str, np.ndarray]:
    """Fresh parameters. With ``node_init='pretrained'``, node rows whose entity
    appears in ``node_vectors`` are copied from it; the rest stay random."""
    d = cfg.hidden_dim
    scale = 1.0 / np.sqrt(d)
    p: dict[str, np.ndarray] = {}
    p["tok_emb"] = rng.normal(0.0, scale, (cfg.vocab_size, d))

    def dense(prefix, n_in, n_out):
        layer = DenseLayer.init(n_in, n_out, rng)
        p[prefix + ".W"] = layer.weight
        p[prefix + ".b"] = layer.bias

    dense("text", d, d)
    p["node_emb"] = rng.normal(0.0, scale, (cfg.node_vocab_size, d))
    for i in range(cfg.gcn_layers):
        dense(f"gcn{i}", d, d)
    if cfg.fusion == "gate":
        dense("gate_t", d, d)
        dense("gate_g", d, d)
    width = _fusion_width(cfg)
    for i in range(cfg.ffn_layers):
        last = i == cfg.ffn_layers - 1
        dense(f"ffn{i}", width if i == 0 else d, 2 if last else d)
    if cfg.node_init == "pretrained":
        if node_vectors is None or node_vocab is None:
            raise ValueError("pretrained node_init needs node_vectors and node_vocab")
        load_node_vectors(p, node_vectors, node_vocab)
    return p


def load_node_vectors(params: dict, node_vectors: Mapping[str, np.ndarray], node_vocab: Vocab) -> int:
    """Copy pretrained vectors into ``node_emb`` rows; returns how many rows were set."""
    emb = params["node_emb"]
    hits = 0
    for name, i in node_vocab.index.items():
        if i == 0 or name not in node_vectors:
            continue
        vec = np.asarray(node_vectors[name], dtype=np.float64)
        if vec.shape != (emb.shape[1],):
            raise ValueError(f"pretrained vector for {name!r} has dim {vec.shape}, model needs {emb.shape[1]}")
        emb[i] = vec
        hits += 1
    return hits


def _layer(params, prefix, act) -> DenseLayer:
    return DenseLayer(params[prefix + ".W"], params[prefix + ".b"], act)


# ---------------------------------------------------------------------------
# forward pieces
# ---------------------------------------------------------------------------


def encode_text(token_ids: Sequence[int], params: Mapping[str, np.ndarray]) -> np.ndarray:
    """Mean-pooled token embeddings through dense(tanh); no tokens pools to zero."""
    pooled = _pool(np.asarray(token_ids, dtype=np.int64), params["tok_emb"])
    return dense_forward(_layer(params, "text", "tanh"), pooled)


def _pool(token_ids: np.ndarray, table: np.ndarray) -> np.ndarray:
    if token_ids.size == 0:
        return np.zeros(table.shape[1])
    return table[token_ids].mean(axis=0)


def gcn_forward(h0: np.ndarray, adj: np.ndarray, params: Mapping[str, np.ndarray], n_layers: int):
    """Return ``(h_g, layer_outputs)``: h_i = ReLU(adj @ h_{i-1} @ W_i^T + b_i),
    h_g = column-wise max over the rows of every layer output."""
    h = np.asarray(h0, dtype=np.float64)
    d = params["gcn0.W"].shape[0]
    if h.shape[0] == 0:
        return np.zeros(d), []
    outs = []
    for i in range(n_layers):
        h = dense_forward(_layer(params, f"gcn{i}", "relu"), adj @ h)
        outs.append(h)
    return np.vstack(outs).max(axis=0), outs


def gate_fuse(h_t: np.ndarray, h_g: np.ndarray, params: Mapping[str, np.ndarray]):
    """Return ``(h_m, g_t, g_v)`` with h_m = g_t * h_t + g_v * h_g elementwise."""
    if h_t.shape != h_g.shape:
        raise ValueError(f"text and graph vectors differ in shape: {h_t.shape} vs {h_g.shape}")
    g_t = dense_forward(_layer(params, "gate_t", "sigmoid"), h_t)
    g_v = dense_forward(_layer(params, "gate_g", "sigmoid"), h_g)
    return g_t * h_t + g_v * h_g, g_t, g_v


def _ffn_layers(params, n_layers):
    return [_layer(params, f"ffn{i}", "none" if i == n_layers - 1 else "relu") for i in range(n_layers)]


def ffn_logits(h_m: np.ndarray, params: Mapping[str, np.ndarray], n_layers: int) -> np.ndarray:
    x = h_m
    for layer in _ffn_layers(params, n_layers):
        x = dense_forward(layer, x)
    return x


def classify(h_m: np.ndarray, params: Mapping[str, np.ndarray], n_layers: int, head: str = "softmax") -> np.ndarray:
    """Class probabilities, index 1 = high quality."""
    return head_probs(ffn_logits(h_m, params, n_layers), head)


def head_probs(logits: np.ndarray, head: str = "softmax") -> np.ndarray:
    if head == "softmax":
        return softmax(logits)
    s = sigmoid(logits)
    return s / s.sum(axis=-1, keepdims=True)


@dataclass
class ForwardTrace:
    h_t: np.ndarray
    h_g: np.ndarray
    h_m: np.ndarray
    probs: np.ndarray
    logits: np.ndarray
    g_t: Optional[np.ndarray] = None
    g_v: Optional[np.ndarray] = None
    # backward cache
    cache: dict = field(default_factory=dict, repr=False)


def forward(ex: Example, params: Mapping[str, np.ndarray], cfg: ModelConfig,
            rng: Optional[np.random.Generator] = None, training: bool = False) -> ForwardTrace:
    rate = cfg.dropout_rate if training else 0.0
    if rate and rng is None:
        raise ValueError("training with dropout needs an rng")
    d = cfg.hidden_dim
    c: dict = {}

    pooled = _pool(ex.token_ids, params["tok_emb"])
    mask_t = dropout_mask(d, rate, rng) if rate and "text" in cfg.dropout_sites else None
    text_in = pooled * mask_t if mask_t is not None else pooled
    h_t = dense_forward(_layer(params, "text", "tanh"), text_in)
    c.update(text_in=text_in, mask_t=mask_t)

    h0 = params["node_emb"][ex.node_ids] if ex.node_ids.size else np.zeros((0, d))
    h_g, outs = gcn_forward(h0, ex.adj, params, cfg.gcn_layers)
    c.update(h0=h0, gcn_outs=outs)

    g_t = g_v = None
    if cfg.fusion == "gate":
        h_m, g_t, g_v = gate_fuse(h_t, h_g, params)
    else:
        h_m = np.concatenate([h_t, h_g])
    mask_m = dropout_mask(h_m.shape, rate, rng) if rate and "fused" in cfg.dropout_sites else None
    ffn_in = h_m * mask_m if mask_m is not None else h_m
    c.update(mask_m=mask_m)

    acts = [ffn_in]
    for layer in _ffn_layers(params, cfg.ffn_layers):
        acts.append(dense_forward(layer, acts[-1]))
    logits = acts[-1]
    c.update(ffn_acts=acts)
    return ForwardTrace(h_t, h_g, h_m, head_probs(logits, cfg.head), logits, g_t, g_v, c)


def example_loss(trace: ForwardTrace, label: int, head: str = "softmax") -> float:
    z = trace.logits
    if head == "softmax":
        return float(-log_softmax(z)[label])
    y = np.eye(2)[label]
    # -[y log s(z) + (1-y) log(1-s(z))] written stably
    return float(np.sum(np.logaddexp(0.0, -z) * y + np.logaddexp(0.0, z) * (1 - y)))


def backward(ex: Example, trace: ForwardTrace, params: Mapping[str, np.ndarray], cfg: ModelConfig,
             dlogits: np.ndarray, grads: dict) -> None:
    """Accumulate gradients of ``dlogits . logits`` into ``grads`` (same keys as params)."""
    c = trace.cache
    d = cfg.hidden_dim

    dx = dlogits
    layers = _ffn_layers(params, cfg.ffn_layers)
    acts = c["ffn_acts"]
    for i in reversed(range(len(layers))):
        dx, dW, db = dense_backward(layers[i], acts[i], dx)
        grads[f"ffn{i}.W"] += dW
        grads[f"ffn{i}.b"] += db
    dh_m = dx * c["mask_m"] if c["mask_m"] is not None else dx

    if cfg.fusion == "gate":
        dh_t = dh_m * trace.g_t
        dh_g = dh_m * trace.g_v
        dx_t, dW, db = dense_backward(_layer(params, "gate_t", "sigmoid"), trace.h_t, dh_m * trace.h_t)
        grads["gate_t.W"] += dW
        grads["gate_t.b"] += db
        dh_t = dh_t + dx_t
        dx_g, dW, db = dense_backward(_layer(params, "gate_g", "sigmoid"), trace.h_g, dh_m * trace.h_g)
        grads["gate_g.W"] += dW
        grads["gate_g.b"] += db
        dh_g = dh_g + dx_g
    else:
        dh_t, dh_g = dh_m[:d], dh_m[d:]

    # text encoder
    dx, dW, db = dense_backward(_layer(params, "text", "tanh"), c["text_in"], dh_t)
    grads["text.W"] += dW
    grads["text.b"] += db
    if c["mask_t"] is not None:
        dx = dx * c["mask_t"]
    if ex.token_ids.size:
        np.add.at(grads["tok_emb"], ex.token_ids, dx / ex.token_ids.size)

    # graph encoder: route dh_g to the arg-max row of the stacked layer outputs
    outs = c["gcn_outs"]
    if not outs:
        return
    n = outs[0].shape[0]
    stacked = np.vstack(outs)
    winner = stacked.argmax(axis=0)
    d_stacked = np.zeros_like(stacked)
    d_stacked[winner, np.arange(d)] = dh_g
    d_outs = [d_stacked[i * n:(i + 1) * n] for i in range(len(outs))]
    adj = ex.adj
    carry = np.zeros((n, d))
    for i in reversed(range(len(outs))):
        h_prev = outs[i - 1] if i > 0 else c["h0"]
        dx, dW, db = dense_backward(_layer(params, f"gcn{i}", "relu"), adj @ h_prev, d_outs[i] + carry)
        grads[f"gcn{i}.W"] += dW
        grads[f"gcn{i}.b"] += db
        carry = adj.T @ dx
    np.add.at(grads["node_emb"], ex.node_ids, carry)


def loss_and_grads(batch: Sequence[Example], params: Mapping[str, np.ndarray], cfg: ModelConfig,
                   rng: Optional[np.random.Generator] = None, training: bool = False):
    """Mean negative log-likelihood over ``batch`` and its gradient for every parameter."""
    if not batch:
        raise ValueError("empty batch")
    for ex in batch:
        if ex.label is None:
            raise ValueError(f"article {ex.article_id!r} in batch has no label")
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    total = 0.0
    scale = 1.0 / len(batch)
    for ex in batch:
        trace = forward(ex, params, cfg, rng, training)
        total += example_loss(trace, ex.label, cfg.head)
        onehot = np.eye(2)[ex.label]
        # both heads share d loss / d logits = p - y (softmax: normalized p, sigmoid: per-logit s)
        p = softmax(trace.logits) if cfg.head == "softmax" else sigmoid(trace.logits)
        backward(ex, trace, params, cfg, (p - onehot) * scale, grads)
    return total * scale, grads


def predict_proba(examples: Sequence[Example], params: Mapping[str, np.ndarray], cfg: ModelConfig) -> np.ndarray:
    """(n, 2) class probabilities with dropout disabled."""
    if not examples:
        return np.zeros((0, 2))
    return np.vstack([forward(ex, params, cfg).probs for ex in examples])


# ---------------------------------------------------------------------------
# model bundle
# ---------------------------------------------------------------------------


class QualityModel:
    """Config, parameters and both vocabularies, saved together in one checkpoint."""

    def __init__(self, cfg: ModelConfig, params: dict, vocab: Vocab, node_vocab: Vocab):
        if len(vocab) != cfg.vocab_size or len(node_vocab) != cfg.node_vocab_size:
            raise ValueError("vocabulary sizes do not match the model config")
        self.cfg = cfg
        self.params = params
        self.vocab = vocab
        self.node_vocab = node_vocab

    def example(self, article: ArticleRecord, graph: EntityGraph) -> Example:
        return prepare_example(article, graph, self.vocab, self.node_vocab)

    def predict_proba(self, examples: Sequence[Example]) -> np.ndarray:
        return predict_proba(examples, self.params, self.cfg)

    def predict(self, examples: Sequence[Example]) -> np.ndarray:
        return self.predict_proba(examples).argmax(axis=1)

    def save(self, path, extra: Optional[dict] = None) -> None:
        header = {
            "model": self.cfg.to_dict(),
            "vocab": self.vocab.items,
            "node_vocab": self.node_vocab.items,
        }
        if extra:
            header["extra"] = extra
        save_params(path, self.params, header)

    @classmethod
    def load(cls, path) -> "QualityModel":
        params, header = load_params(path)
        cfg = ModelConfig(**header["model"])
        model = cls(cfg, params, Vocab(header["vocab"][1:]), Vocab(header["node_vocab"][1:]))
        expected = init_params(replace(cfg, node_init="random"), np.random.default_rng(0))
        for name, arr in expected.items():
            if name not in params or params[name].shape != arr.shape:
                raise ValueError(f"checkpoint parameter {name!r} missing or misshaped for its config")
        return model
