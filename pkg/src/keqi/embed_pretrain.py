"""Relation-weighted node2vec walks and skip-gram negative-sampling embeddings."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .entity_graph import EntityGraph, check_alpha, relation_weight


class AliasTable:
    """Vose alias table: O(n) build, O(1) draws."""

    def __init__(self, weights: Sequence[float]):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty 1-d sequence")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        total = w.sum()
        if total <= 0:
            raise ValueError("at least one weight must be positive")
        n = w.size
        scaled = w * (n / total)
        prob = np.ones(n)
        alias = np.arange(n)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s, g = small.pop(), large.pop()
            prob[s] = scaled[s]
            alias[s] = g
            scaled[g] = scaled[g] + scaled[s] - 1.0
            (small if scaled[g] < 1.0 else large).append(g)
        # leftovers are 1 up to rounding
        for i in small + large:
            prob[i] = 1.0
            alias[i] = i
        # zero-mass entries must never be returned, even via rounding
        prob[w == 0] = 0.0
        self.prob = prob
        self.alias = alias

    def __len__(self) -> int:
        return self.prob.size

    def sample(self, rng: np.random.Generator) -> int:
        i = int(rng.integers(self.prob.size))
        return i if rng.random() < self.prob[i] else int(self.alias[i])

    def sample_many(self, rng: np.random.Generator, size) -> np.ndarray:
        i = rng.integers(self.prob.size, size=size)
        keep = rng.random(size) < self.prob[i]
        return np.where(keep, i, self.alias[i])


def weighted_sample(weights: Sequence[float], rng: np.random.Generator) -> int:
    """Draw index i with probability weights[i] / sum(weights)."""
    return AliasTable(weights).sample(rng)


@dataclass(frozen=True)
class WalkConfig:
    walk_length: int = 10
    walks_per_node: int = 10
    p: float = 1.0
    q: float = 1.0
    alpha: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.walk_length < 1 or self.walks_per_node < 1:
            raise ValueError("walk_length and walks_per_node must be >= 1")
        if self.p <= 0 or self.q <= 0:
            raise ValueError("p and q must be positive")
        check_alpha(self.alpha)


class BiasedWalker:
    """Transition sampler for relation-weighted node2vec walks over an EntityGraph.

    The unnormalized probability of stepping ``cur -> nxt`` after arriving
    from ``prev`` is ``R(cur, nxt) * bias``, where ``R`` sums the relation
    weights of the FO/SO edges joining the pair and ``bias`` is ``1/p`` for a
    return to ``prev``, 1 for a neighbor of ``prev``, ``1/q`` otherwise.
    """

    def __init__(self, g: EntityGraph, alpha: float = 0.8, p: float = 1.0, q: float = 1.0):
        self.nodes = list(g.nodes)
        self.index = {n: i for i, n in enumerate(self.nodes)}
        self.p, self.q = p, q
        weight: list[dict[int, float]] = [dict() for _ in self.nodes]
        for e in g.edges:
            u, v = self.index[e.u], self.index[e.v]
            w = relation_weight(e, alpha)
            weight[u][v] = weight[u].get(v, 0.0) + w
            weight[v][u] = weight[v].get(u, 0.0) + w
        self.nbrs = [np.array(sorted(d), dtype=np.int64) for d in weight]
        self.weights = [np.array([d[j] for j in sorted(d)]) for d in weight]
        self.nbr_sets = [set(d) for d in weight]
        self._first = [AliasTable(w) if w.size and w.sum() > 0 else None for w in self.weights]
        self._edge_tables: dict[tuple[int, int], AliasTable] = {}

    @property
    def unbiased(self) -> bool:
        return self.p == 1.0 and self.q == 1.0

    def transition_probs(self, cur: int, prev: int | None = None) -> np.ndarray:
        """Exact next-step distribution over ``self.nbrs[cur]``."""
        w = self._biased_weights(cur, prev)
        return w / w.sum()

    def _biased_weights(self, cur: int, prev: int | None) -> np.ndarray:
        w = self.weights[cur]
        if prev is None or self.unbiased:
            return w
        bias = np.array([
            1.0 / self.p if x == prev else (1.0 if x in self.nbr_sets[prev] else 1.0 / self.q)
            for x in self.nbrs[cur]
        ])
        return w * bias

    def step(self, cur: int, prev: int | None, rng: np.random.Generator) -> int | None:
        """Sample the next node index, or None at a dead end."""
        if self._first[cur] is None:
            return None
        if prev is None or self.unbiased:
            table = self._first[cur]
        else:
            table = self._edge_tables.get((prev, cur))
            if table is None:
                table = self._edge_tables[(prev, cur)] = AliasTable(self._biased_weights(cur, prev))
        return int(self.nbrs[cur][table.sample(rng)])

    def walk(self, start: int, length: int, rng: np.random.Generator) -> list[int]:
        path = [start]
        prev = None
        while len(path) < length:
            nxt = self.step(path[-1], prev, rng)
            if nxt is None:
                break
            prev = path[-1]
            path.append(nxt)
        return path


def walk_rng(seed: int, node_index: int, walk_index: int) -> np.random.Generator:
    """Independent stream per (seed, start node, walk) so walks can be generated in any order."""
    return np.random.default_rng([seed, node_index, walk_index])


def generate_walks(g: EntityGraph, cfg: WalkConfig = WalkConfig()) -> list[list[str]]:
    """``walks_per_node`` walks from every node, rounds outermost; each walk has <= walk_length nodes."""
    if len(g) == 0:
        raise ValueError("cannot walk an empty graph")
    walker = BiasedWalker(g, cfg.alpha, cfg.p, cfg.q)
    walks = []
    for r in range(cfg.walks_per_node):
        for i in range(len(walker.nodes)):
            path = walker.walk(i, cfg.walk_length, walk_rng(cfg.seed, i, r))
            walks.append([walker.nodes[j] for j in path])
    return walks


# ---------------------------------------------------------------------------
# skip-gram with negative sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SgnsConfig:
    dim: int = 128
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self):
        for name in ("dim", "window", "negatives", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


class EmbeddingTable:
    """Entity name -> vector map backed by one (vocab, dim) array."""

    def __init__(self, names: Sequence[str], matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(names):
            raise ValueError("matrix must have one row per name")
        if len(set(names)) != len(names):
            raise ValueError("duplicate entity names")
        self.names = list(names)
        self.matrix = matrix
        self.index = {n: i for i, n in enumerate(self.names)}

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def vectors(self) -> dict[str, np.ndarray]:
        return {n: self.matrix[i] for n, i in self.index.items()}

    def __getitem__(self, name: str) -> np.ndarray:
        return self.matrix[self.index[name]]

    def __contains__(self, name) -> bool:
        return name in self.index

    def __len__(self) -> int:
        return len(self.names)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingTable):
            return NotImplemented
        return self.names == other.names and np.array_equal(self.matrix, other.matrix)

    def similarity(self, a: str, b: str) -> float:
        return cosine_similarity(self[a], self[b])


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class SkipGram:
    """SGNS state: input/output vectors plus the noise sampler for one walk corpus."""

    def __init__(self, walks: Sequence[Sequence[str]], cfg: SgnsConfig):
        if not walks or not any(walks):
            raise ValueError("walks must be nonempty")
        self.cfg = cfg
        counts: dict[str, int] = {}
        for w in walks:
            for n in w:
                counts[n] = counts.get(n, 0) + 1
        self.vocab = sorted(counts, key=lambda n: (-counts[n], n))
        self.index = {n: i for i, n in enumerate(self.vocab)}
        freq = np.array([counts[n] for n in self.vocab], dtype=np.float64)
        self.noise = AliasTable(freq ** 0.75)
        self.rng = np.random.default_rng(cfg.seed)
        v, d = len(self.vocab), cfg.dim
        self.w_in = (self.rng.random((v, d)) - 0.5) / d
        self.w_out = np.zeros((v, d))
        self.centers, self.contexts = self._pairs(walks)

    def _pairs(self, walks) -> tuple[np.ndarray, np.ndarray]:
        centers, contexts = [], []
        win = self.cfg.window
        for w in walks:
            ids = [self.index[n] for n in w]
            for i, c in enumerate(ids):
                for j in range(max(0, i - win), min(len(ids), i + win + 1)):
                    if j != i:
                        centers.append(c)
                        contexts.append(ids[j])
        return np.array(centers, dtype=np.int64), np.array(contexts, dtype=np.int64)

    def draw_negatives(self, n: int) -> np.ndarray:
        return self.noise.sample_many(self.rng, (n, self.cfg.negatives))

    def loss(self, centers, contexts, negatives) -> float:
        """Mean SGNS loss over a batch of (center, context, negatives) triples."""
        v = self.w_in[centers]
        pos = np.einsum("bd,bd->b", v, self.w_out[contexts])
        neg = np.einsum("bd,bkd->bk", v, self.w_out[negatives])
        return float(np.mean(np.logaddexp(0.0, -pos) + np.logaddexp(0.0, neg).sum(axis=1)))

    def update(self, centers, contexts, negatives, lr: float) -> None:
        v = self.w_in[centers]
        u_pos = self.w_out[contexts]
        u_neg = self.w_out[negatives]
        g_pos = _sigmoid(np.einsum("bd,bd->b", v, u_pos)) - 1.0
        g_neg = _sigmoid(np.einsum("bd,bkd->bk", v, u_neg))
        grad_v = g_pos[:, None] * u_pos + np.einsum("bk,bkd->bd", g_neg, u_neg)
        np.add.at(self.w_out, contexts, -lr * g_pos[:, None] * v)
        np.add.at(self.w_out, negatives, -lr * g_neg[:, :, None] * v[:, None, :])
        np.add.at(self.w_in, centers, -lr * grad_v)

    def train(self) -> None:
        n = self.centers.size
        bs = self.cfg.batch_size
        steps_per_epoch = math.ceil(n / bs)
        total = steps_per_epoch * self.cfg.epochs
        step = 0
        for _ in range(self.cfg.epochs):
            order = self.rng.permutation(n)
            for start in range(0, n, bs):
                batch = order[start:start + bs]
                # linear decay to 1e-4 of the initial rate, word2vec style
                lr = self.cfg.learning_rate * max(1e-4, 1.0 - step / total)
                self.update(self.centers[batch], self.contexts[batch], self.draw_negatives(batch.size), lr)
                step += 1

    def table(self) -> EmbeddingTable:
        return EmbeddingTable(self.vocab, self.w_in.copy())


def train_sgns(walks: Sequence[Sequence[str]], cfg: SgnsConfig = SgnsConfig()) -> EmbeddingTable:
    """Train entity vectors on walk sequences; deterministic for a fixed seed."""
    model = SkipGram(walks, cfg)
    model.train()
    return model.table()


def pretrain(g: EntityGraph, walk_cfg: WalkConfig = WalkConfig(), sgns_cfg: SgnsConfig = SgnsConfig()) -> EmbeddingTable:
    """Walks over the corpus graph followed by SGNS."""
    return train_sgns(generate_walks(g, walk_cfg), sgns_cfg)


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity of a zero vector is undefined")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def save_embeddings(table: EmbeddingTable, path) -> None:
    """Write ``<vocab> <dim>`` then ``name v1 ... vdim`` lines (repr floats, lossless)."""
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"{len(table)} {table.dim}\n")
        for name, row in zip(table.names, table.matrix):
            if not name or any(ch in name for ch in "\n\r") or name != name.strip():
                raise ValueError(f"entity name {name!r} cannot be written")
            fh.write(name + " " + " ".join(repr(float(x)) for x in row) + "\n")


def load_embeddings(path) -> EmbeddingTable:
    with Path(path).open(encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise ValueError("empty embedding file")
    try:
        vocab, dim = (int(x) for x in lines[0].split())
    except ValueError:
        raise ValueError(f"bad header {lines[0]!r}") from None
    body = lines[1:]
    if len(body) != vocab:
        raise ValueError(f"header declares {vocab} vectors but file has {len(body)}")
    names, rows = [], []
    seen = set()
    for lineno, line in enumerate(body, start=2):
        parts = line.rsplit(" ", dim)
        if len(parts) != dim + 1 or not parts[0]:
            raise ValueError(f"line {lineno}: expected a name and {dim} values")
        name = parts[0]
        if name in seen:
            raise ValueError(f"line {lineno}: duplicate entity {name!r}")
        seen.add(name)
        try:
            rows.append([float(x) for x in parts[1:]])
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric value") from None
        names.append(name)
    return EmbeddingTable(names, np.array(rows, dtype=np.float64).reshape(vocab, dim))
