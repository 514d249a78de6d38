"""CART decision tree over the seven indicator scores, used to auto-label articles."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .corpus import INDICATORS, AnnotationScores, ArticleRecord

N_FEATURES = len(INDICATORS)


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int = 4
    min_samples_leaf: int = 5

    def __post_init__(self):
        if self.max_depth < 0 or self.min_samples_leaf < 1:
            raise ValueError("max_depth must be >= 0 and min_samples_leaf >= 1")


@dataclass
class TreeNode:
    # counts = (low, high) training rows reaching the node
    counts: tuple[int, int]
    prediction: int = 0
    feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional[int] = None
    right: Optional[int] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


def _majority(counts) -> int:
    # ties go to the low-quality class
    return int(counts[1] > counts[0])


@dataclass
class DecisionTree:
    """Flat node array, root at index 0; ``score <= threshold`` descends left."""

    nodes: list[TreeNode]
    max_depth: int = 4

    def __post_init__(self):
        for node in self.nodes:
            if not node.is_leaf:
                if not 0 <= node.feature < N_FEATURES:
                    raise ValueError(f"feature index {node.feature} out of range")
                if not (0 < node.left < len(self.nodes) and 0 < node.right < len(self.nodes)):
                    raise ValueError("child index out of range")

    @property
    def depth(self) -> int:
        def walk(i):
            n = self.nodes[i]
            return 0 if n.is_leaf else 1 + max(walk(n.left), walk(n.right))
        return walk(0)

    @property
    def n_splits(self) -> int:
        return sum(not n.is_leaf for n in self.nodes)


def _as_matrix(scores) -> np.ndarray:
    rows = [s.as_tuple() if isinstance(s, AnnotationScores) else tuple(s) for s in scores]
    x = np.array(rows, dtype=np.float64).reshape(len(rows), -1)
    if x.shape[1] != N_FEATURES:
        raise ValueError(f"expected {N_FEATURES} scores per row, got {x.shape[1]}")
    return x


def gini(counts) -> float:
    n = sum(counts)
    if n == 0:
        return 0.0
    return 1.0 - sum((c / n) ** 2 for c in counts)


def _best_split(x: np.ndarray, y: np.ndarray, min_leaf: int):
    """Highest weighted Gini decrease; ties keep the lowest feature, then threshold."""
    n = y.size
    parent = gini((n - y.sum(), y.sum()))
    best = None
    best_gain = 0.0
    for f in range(x.shape[1]):
        values = np.unique(x[:, f])
        for lo, hi in zip(values[:-1], values[1:]):
            thr = (lo + hi) / 2.0
            go_left = x[:, f] <= thr
            nl = int(go_left.sum())
            nr = n - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            pl = int(y[go_left].sum())
            pr = int(y.sum()) - pl
            child = (nl * gini((nl - pl, pl)) + nr * gini((nr - pr, pr))) / n
            gain = parent - child
            if gain > best_gain + 1e-12:
                best_gain = gain
                best = (f, float(thr))
    return best


def fit_tree(scores: Sequence, labels: Sequence[int], cfg: TreeConfig = TreeConfig()) -> DecisionTree:
    """Grow a Gini CART tree; stops at max_depth, pure nodes, or when no split
    leaves ``min_samples_leaf`` rows on both sides."""
    if len(scores) == 0:
        raise ValueError("cannot fit a tree on empty input")
    if len(scores) != len(labels):
        raise ValueError("scores and labels differ in length")
    x = _as_matrix(scores)
    y = np.asarray(labels, dtype=np.int64)
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    nodes: list[TreeNode] = []

    def grow(idx: np.ndarray, depth: int) -> int:
        yi = y[idx]
        pos = int(yi.sum())
        node = TreeNode((int(yi.size - pos), pos), _majority((yi.size - pos, pos)))
        nodes.append(node)
        me = len(nodes) - 1
        if depth >= cfg.max_depth or pos in (0, yi.size):
            return me
        split = _best_split(x[idx], yi, cfg.min_samples_leaf)
        if split is None:
            return me
        f, thr = split
        mask = x[idx, f] <= thr
        node.feature, node.threshold = f, thr
        node.left = grow(idx[mask], depth + 1)
        node.right = grow(idx[~mask], depth + 1)
        return me

    grow(np.arange(y.size), 0)
    return DecisionTree(nodes, cfg.max_depth)


def _leaf(tree: DecisionTree, row) -> TreeNode:
    node = tree.nodes[0]
    while not node.is_leaf:
        node = tree.nodes[node.left if row[node.feature] <= node.threshold else node.right]
    return node


def predict_tree(tree: DecisionTree, scores) -> int:
    row = scores.as_tuple() if isinstance(scores, AnnotationScores) else tuple(scores)
    return _leaf(tree, row).prediction


def predict_many(tree: DecisionTree, scores: Sequence) -> np.ndarray:
    return np.array([predict_tree(tree, s) for s in scores], dtype=np.int64)


def feature_importances(tree: DecisionTree, scores: Sequence = None, labels: Sequence[int] = None) -> dict[str, float]:
    """Normalized total weighted Gini decrease per indicator (all zero without splits).

    Node counts are recorded at fit time, so training data is only needed to
    re-derive them for a tree loaded without counts; when given it is used.
    """
    counts = [n.counts for n in tree.nodes]
    if scores is not None and labels is not None:
        counts = _route_counts(tree, _as_matrix(scores), np.asarray(labels))
    total = sum(counts[0])
    imp = np.zeros(N_FEATURES)
    for i, node in enumerate(tree.nodes):
        if node.is_leaf or total == 0:
            continue
        n, nl, nr = sum(counts[i]), sum(counts[node.left]), sum(counts[node.right])
        imp[node.feature] += (
            n * gini(counts[i]) - nl * gini(counts[node.left]) - nr * gini(counts[node.right])
        ) / total
    imp = np.maximum(imp, 0.0)
    if imp.sum() > 0:
        imp /= imp.sum()
    return dict(zip(INDICATORS, imp.tolist()))


def _route_counts(tree: DecisionTree, x: np.ndarray, y: np.ndarray) -> list[tuple[int, int]]:
    counts = [[0, 0] for _ in tree.nodes]
    for row, label in zip(x, y):
        i = 0
        while True:
            counts[i][int(label)] += 1
            node = tree.nodes[i]
            if node.is_leaf:
                break
            i = node.left if row[node.feature] <= node.threshold else node.right
    return [tuple(c) for c in counts]


def auto_label(tree: DecisionTree, articles: Sequence[ArticleRecord]) -> list[ArticleRecord]:
    """Fill missing labels from the tree; existing labels are kept as is."""
    out = []
    for a in articles:
        if a.label is not None:
            out.append(a)
            continue
        if a.scores is None:
            raise ValueError(f"article {a.id!r} has no scores to label from")
        out.append(replace(a, label=predict_tree(tree, a.scores)))
    return out


def tree_accuracy(tree: DecisionTree, scores: Sequence, labels: Sequence[int]) -> float:
    pred = predict_many(tree, scores)
    return float(np.mean(pred == np.asarray(labels)))


# ---------------------------------------------------------------------------
# text form
# ---------------------------------------------------------------------------


def tree_to_text(tree: DecisionTree) -> str:
    """Indented, human-readable form; ``parse_tree`` reads it back.

    Example::

        if novelty <= 0.5:  [60, 40]
          leaf 0  [55, 5]
        else:
          leaf 1  [5, 35]
    """
    lines = [f"decision_tree max_depth={tree.max_depth}"]

    def emit(i, indent):
        node = tree.nodes[i]
        pad = "  " * indent
        c0, c1 = node.counts
        if node.is_leaf:
            lines.append(f"{pad}leaf {node.prediction}  [{c0}, {c1}]")
            return
        lines.append(f"{pad}if {INDICATORS[node.feature]} <= {node.threshold!r}:  [{c0}, {c1}]")
        emit(node.left, indent + 1)
        lines.append(f"{pad}else:")
        emit(node.right, indent + 1)

    emit(0, 0)
    return "\n".join(lines) + "\n"


def _parse_counts(text: str) -> tuple[int, int]:
    a, b = text.strip().strip("[]").split(",")
    return int(a), int(b)


def parse_tree(text: str) -> DecisionTree:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("decision_tree"):
        raise ValueError("missing 'decision_tree' header")
    max_depth = int(lines[0].split("max_depth=")[1]) if "max_depth=" in lines[0] else 4
    nodes: list[TreeNode] = []
    pos = 1

    def take(indent):
        nonlocal pos
        if pos >= len(lines):
            raise ValueError("unexpected end of tree text")
        line = lines[pos]
        if len(line) - len(line.lstrip(" ")) != 2 * indent:
            raise ValueError(f"bad indentation: {line!r}")
        body = line.strip()
        pos += 1
        if body.startswith("leaf "):
            head, counts = body[5:].split("[", 1)
            nodes.append(TreeNode(_parse_counts(counts), int(head)))
            return len(nodes) - 1
        if not body.startswith("if "):
            raise ValueError(f"expected 'if' or 'leaf': {line!r}")
        cond, counts = body[3:].split(":", 1)
        name, thr = cond.split("<=")
        name = name.strip()
        if name not in INDICATORS:
            raise ValueError(f"unknown indicator {name!r}")
        c = _parse_counts(counts)
        node = TreeNode(c, _majority(c), INDICATORS.index(name), float(thr))
        nodes.append(node)
        me = len(nodes) - 1
        node.left = take(indent + 1)
        if pos >= len(lines) or lines[pos].strip() != "else:":
            raise ValueError("expected 'else:'")
        pos += 1
        node.right = take(indent + 1)
        return me

    take(0)
    if pos != len(lines):
        raise ValueError(f"trailing content: {lines[pos]!r}")
    return DecisionTree(nodes, max_depth)


def save_tree(tree: DecisionTree, path) -> None:
    Path(path).write_text(tree_to_text(tree), encoding="utf-8")


def load_tree(path) -> DecisionTree:
    return parse_tree(Path(path).read_text(encoding="utf-8"))


def importance_table(importances: dict[str, float]) -> str:
    """Seven-row indicator / importance table."""
    width = max(len(k) for k in importances)
    return "\n".join(f"{k:<{width}}  {v:.4f}" for k, v in importances.items()) + "\n"
