"""First-Order / Second-Order entity co-occurrence graphs."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping

from .corpus import ArticleRecord, EncyclopediaPage

FO = "FO"
SO = "SO"


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Edge:
    u: str
    v: str
    order: str
    count: int = 1

    def __post_init__(self):
        if self.u == self.v:
            raise GraphError(f"self-edge on {self.u!r}")
        if self.order not in (FO, SO):
            raise GraphError(f"edge order must be FO or SO, got {self.order!r}")
        if self.count < 1:
            raise GraphError(f"edge count must be >= 1, got {self.count}")

    @property
    def pair(self) -> frozenset:
        return frozenset((self.u, self.v))


def _key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


class EntityGraph:
    """Undirected multigraph with at most one FO and one SO edge per pair.

    Edges are stored canonically with ``u <= v``; node order is insertion order.
    """

    def __init__(self, nodes: Iterable[str] = (), edges: Iterable[Edge] = ()):
        self.nodes: list[str] = []
        self._node_set: set[str] = set()
        self._edges: dict[tuple[str, str, str], int] = {}
        for n in nodes:
            self.add_node(n)
        for e in edges:
            self.add_edge(e.u, e.v, e.order, e.count)

    def add_node(self, name: str) -> None:
        if name not in self._node_set:
            self._node_set.add(name)
            self.nodes.append(name)

    def add_edge(self, u: str, v: str, order: str = FO, count: int = 1) -> None:
        """Add ``count`` to the (u, v, order) edge; endpoints must exist."""
        Edge(u, v, order, count)  # validates
        for n in (u, v):
            if n not in self._node_set:
                raise GraphError(f"edge endpoint {n!r} is not a node")
        a, b = _key(u, v)
        self._edges[(a, b, order)] = self._edges.get((a, b, order), 0) + count

    def __contains__(self, name) -> bool:
        return name in self._node_set

    @property
    def edges(self) -> list[Edge]:
        return [Edge(a, b, o, c) for (a, b, o), c in self._edges.items()]

    def edge_count(self, u: str, v: str, order: str = FO) -> int:
        a, b = _key(u, v)
        return self._edges.get((a, b, order), 0)

    def has_edge(self, u: str, v: str, order: str = FO) -> bool:
        return self.edge_count(u, v, order) > 0

    def neighbors(self, order: str | None = None) -> dict[str, dict[str, list[Edge]]]:
        """Adjacency map node -> neighbor -> edges (optionally one order only)."""
        adj: dict[str, dict[str, list[Edge]]] = {n: {} for n in self.nodes}
        for (a, b, o), c in self._edges.items():
            if order is not None and o != order:
                continue
            e = Edge(a, b, o, c)
            adj[a].setdefault(b, []).append(e)
            adj[b].setdefault(a, []).append(e)
        return adj

    def fo_subgraph(self) -> "EntityGraph":
        return EntityGraph(self.nodes, (e for e in self.edges if e.order == FO))

    def __len__(self) -> int:
        return len(self.nodes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EntityGraph):
            return NotImplemented
        return self._node_set == other._node_set and self._edges == other._edges

    def __repr__(self) -> str:
        return f"EntityGraph(nodes={len(self.nodes)}, edges={len(self._edges)})"


class PageCooccurrence:
    """Entity-name -> page membership index (a page's members are its name and links).

    Two entities co-occur on the encyclopedia when some page lists both.
    """

    def __init__(self, pages: Mapping[str, EncyclopediaPage]):
        self.members: dict[str, set[str]] = defaultdict(set)
        for pid, page in pages.items():
            self.members[page.name].add(pid)
            for name in page.linked_entities:
                self.members[name].add(pid)

    def linked(self, a: str, b: str) -> bool:
        pa, pb = self.members.get(a), self.members.get(b)
        return bool(pa and pb) and not pa.isdisjoint(pb)


def build_article_graph(article: ArticleRecord, pages, count_repeats: bool = False) -> EntityGraph:
    """FO graph of one article: mentioned entities, linked when some page lists both.

    ``pages`` is a page map or a prebuilt :class:`PageCooccurrence`.
    Entities without any page stay as isolated nodes. Each edge has count 1
    unless ``count_repeats``, in which case it counts
    ``min(mentions(a), mentions(b))``.
    """
    cooc = pages if isinstance(pages, PageCooccurrence) else PageCooccurrence(pages)
    g = EntityGraph(article.entities)
    freq = Counter(m.surface for m in article.mentions)
    for a, b in combinations(g.nodes, 2):
        if cooc.linked(a, b):
            g.add_edge(a, b, FO, min(freq[a], freq[b]) if count_repeats else 1)
    return g


def add_second_order(g: EntityGraph) -> EntityGraph:
    """Return a copy of ``g`` (FO edges only are read) with SO edges added.

    An SO edge joins every non-adjacent pair at FO distance exactly 2; its
    count is the number of distinct intermediate nodes.
    """
    adj: dict[str, set[str]] = defaultdict(set)
    for e in g.edges:
        if e.order == FO:
            adj[e.u].add(e.v)
            adj[e.v].add(e.u)
    paths: Counter = Counter()
    for mid, nbrs in adj.items():
        for a, c in combinations(sorted(nbrs), 2):
            if c not in adj[a]:
                paths[(a, c)] += 1
    out = EntityGraph(g.nodes, (e for e in g.edges if e.order == FO))
    for (a, c), n in sorted(paths.items()):
        out.add_edge(a, c, SO, n)
    return out


def merge_graphs(graphs: Iterable[EntityGraph]) -> EntityGraph:
    """Union of graphs with edge counts summed."""
    out = EntityGraph()
    for g in graphs:
        for n in g.nodes:
            out.add_node(n)
        for e in g.edges:
            out.add_edge(e.u, e.v, e.order, e.count)
    return out


def build_corpus_graph(
    articles: Iterable[ArticleRecord], pages, second_order: bool = True, count_repeats: bool = False
) -> EntityGraph:
    """Corpus graph: per-article FO graphs merged with counts summed, plus SO edges."""
    cooc = pages if isinstance(pages, PageCooccurrence) else PageCooccurrence(pages)
    fo = merge_graphs(build_article_graph(a, cooc, count_repeats) for a in articles)
    return add_second_order(fo) if second_order else fo


def relation_weight(edge: Edge, alpha: float = 0.8) -> float:
    """Walk weight of an edge: count * alpha for FO, count * (1 - alpha) for SO."""
    check_alpha(alpha)
    return edge.count * (alpha if edge.order == FO else 1.0 - alpha)


def check_alpha(alpha: float) -> float:
    if not 0.5 < alpha <= 1.0:
        raise GraphError(f"alpha must lie in (0.5, 1], got {alpha}")
    return alpha


def save_graph(g: EntityGraph, path) -> None:
    edges = g.edges
    for n in g.nodes:
        if any(ch in n for ch in "\t\n\r"):
            raise GraphError(f"node name {n!r} contains a tab or newline")
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"NODES {len(g.nodes)} EDGES {len(edges)}\n")
        for n in g.nodes:
            fh.write(n + "\n")
        for e in edges:
            fh.write(f"{e.u}\t{e.v}\t{e.order}\t{e.count}\n")


def load_graph(path) -> EntityGraph:
    with Path(path).open(encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise GraphError("empty graph file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "NODES" or head[2] != "EDGES":
        raise GraphError(f"bad header {lines[0]!r}")
    n, m = int(head[1]), int(head[3])
    if len(lines) != 1 + n + m:
        raise GraphError(f"header declares {n} nodes and {m} edges but file has {len(lines) - 1} lines")
    g = EntityGraph(lines[1:1 + n])
    if len(g.nodes) != n:
        raise GraphError("duplicate node names")
    for lineno, line in enumerate(lines[1 + n:], start=2 + n):
        parts = line.split("\t")
        if len(parts) != 4:
            raise GraphError(f"line {lineno}: expected 4 tab-separated fields")
        u, v, order, count = parts
        if g.has_edge(u, v, order):
            raise GraphError(f"line {lineno}: duplicate {order} edge ({u}, {v})")
        g.add_edge(u, v, order, int(count))
    return g
