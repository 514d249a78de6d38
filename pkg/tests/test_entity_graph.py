import random
from collections import Counter, deque
from itertools import combinations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from keqi.corpus import ArticleRecord, EncyclopediaPage, EntityMention
from keqi.entity_graph import (
    FO,
    SO,
    Edge,
    EntityGraph,
    GraphError,
    add_second_order,
    build_article_graph,
    build_corpus_graph,
    load_graph,
    relation_weight,
    save_graph,
)

IDY, CONDOR, ANDY, SHA_HU, LOUIS = "陈玉莲", "神雕侠侣", "刘德华", "胡沙", "金庸"


def make_article(aid, entities, label=None):
    body, mentions, pos = [], [], 0
    for e in entities:
        mentions.append(EntityMention(e, pos, pos + len(e)))
        body.append(e)
        pos += len(e) + 1
    return ArticleRecord(aid, "", " ".join(body) or "x", tuple(mentions), None, label)


@pytest.fixture
def condor_pages():
    return {
        "condor": EncyclopediaPage("condor", CONDOR, {}, (IDY, ANDY, LOUIS)),
        "idy": EncyclopediaPage("idy", IDY, {}, (CONDOR,)),
    }


class TestArticleGraph:
    def test_linked_pair_gets_edge(self, condor_pages):
        g = build_article_graph(make_article("a", [IDY, CONDOR, SHA_HU]), condor_pages)
        assert g.has_edge(IDY, CONDOR)
        assert g.edge_count(IDY, CONDOR) == 1

    def test_unlinked_pair_has_no_edge(self, condor_pages):
        g = build_article_graph(make_article("a", [IDY, CONDOR, SHA_HU]), condor_pages)
        assert not g.has_edge(IDY, SHA_HU)
        assert SHA_HU in g  # kept as an isolated node

    def test_single_entity(self, condor_pages):
        g = build_article_graph(make_article("a", [IDY]), condor_pages)
        assert g.nodes == [IDY] and g.edges == []

    def test_no_so_edges(self, condor_pages):
        g = build_article_graph(make_article("a", [IDY, CONDOR, ANDY, LOUIS]), condor_pages)
        assert all(e.order == FO for e in g.edges)

    def test_permutation_invariant(self, condor_pages):
        ents = [IDY, CONDOR, ANDY, LOUIS, SHA_HU]
        ref = build_article_graph(make_article("a", ents), condor_pages)
        rnd = random.Random(0)
        for _ in range(10):
            rnd.shuffle(ents)
            assert build_article_graph(make_article("a", ents), condor_pages) == ref

    def test_count_repeats(self, condor_pages):
        g = build_article_graph(make_article("a", [IDY, CONDOR, IDY, CONDOR, IDY]), condor_pages, count_repeats=True)
        assert g.edge_count(IDY, CONDOR) == 2


def bfs_dist(adj, src):
    dist = {src: 0}
    q = deque([src])
    while q:
        u = q.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def so_oracle(g):
    """Pairs at BFS distance exactly 2, counted by enumerating 2-paths."""
    adj = {n: set() for n in g.nodes}
    for e in g.edges:
        adj[e.u].add(e.v)
        adj[e.v].add(e.u)
    out = {}
    for a, c in combinations(g.nodes, 2):
        if bfs_dist(adj, a).get(c) == 2:
            out[frozenset((a, c))] = sum(1 for b in g.nodes if b in adj[a] and b in adj[c])
    return out


def so_edges(g):
    return {frozenset((e.u, e.v)): e.count for e in g.edges if e.order == SO}


class TestSecondOrder:
    def test_worked_example(self):
        g = EntityGraph([IDY, CONDOR, LOUIS])
        g.add_edge(IDY, CONDOR)
        g.add_edge(CONDOR, LOUIS)
        g2 = add_second_order(g)
        assert g2.edge_count(IDY, LOUIS, SO) == 1

    def test_triangle_has_no_so(self):
        g = EntityGraph("ABC")
        for a, b in combinations("ABC", 2):
            g.add_edge(a, b)
        assert so_edges(add_second_order(g)) == {}

    def test_square(self):
        g = EntityGraph("ABCD")
        for a, b in ("AB", "BC", "CD", "DA"):
            g.add_edge(a, b)
        assert so_edges(add_second_order(g)) == {frozenset("AC"): 2, frozenset("BD"): 2}

    @settings(max_examples=100, deadline=None)
    @given(st.sets(st.tuples(st.integers(0, 7), st.integers(0, 7)).filter(lambda t: t[0] != t[1]), max_size=20))
    def test_matches_bfs_oracle(self, pairs):
        g = EntityGraph([str(i) for i in range(8)])
        for a, b in pairs:
            if not g.has_edge(str(a), str(b)):
                g.add_edge(str(a), str(b))
        g2 = add_second_order(g)
        assert so_edges(g2) == so_oracle(g)
        # idempotent on the FO subgraph
        assert add_second_order(g2.fo_subgraph()) == g2
        assert add_second_order(g2) == g2


class TestCorpusGraph:
    def test_counts_sum_over_articles(self, condor_pages):
        arts = [make_article(f"a{i}", [IDY, CONDOR]) for i in range(3)]
        g = build_corpus_graph(arts, condor_pages)
        assert g.edge_count(IDY, CONDOR, FO) == 3

    def test_empty(self, condor_pages):
        g = build_corpus_graph([], condor_pages)
        assert len(g) == 0 and g.edges == []

    def test_single_article_matches_article_path(self):
        rnd = random.Random(1)
        names = [f"e{i}" for i in range(10)]
        for trial in range(20):
            pages = {
                f"p{i}": EncyclopediaPage(f"p{i}", n, {}, tuple(rnd.sample(names, 3)))
                for i, n in enumerate(names)
            }
            art = make_article("a", rnd.sample(names, rnd.randint(1, 8)))
            assert build_corpus_graph([art], pages) == add_second_order(build_article_graph(art, pages))

    def test_fo_counts_match_bruteforce(self):
        rnd = random.Random(2)
        names = [f"e{i}" for i in range(12)]
        pages = {f"p{i}": EncyclopediaPage(f"p{i}", n, {}, tuple(rnd.sample(names, 4))) for i, n in enumerate(names)}
        members = [{p.name, *p.linked_entities} for p in pages.values()]
        arts = [make_article(f"a{i}", rnd.sample(names, rnd.randint(1, 6))) for i in range(20)]
        expected = Counter()
        for a in arts:
            ents = set(a.entities)
            for x, y in combinations(sorted(ents), 2):
                if any(x in m and y in m for m in members):
                    expected[(x, y)] += 1
        g = build_corpus_graph(arts, pages, second_order=False)
        assert {(e.u, e.v): e.count for e in g.edges} == dict(expected)


class TestRelationWeight:
    def test_values(self):
        assert relation_weight(Edge("a", "b", FO, 3), 0.8) == pytest.approx(2.4)
        assert relation_weight(Edge("a", "b", SO, 3), 0.8) == pytest.approx(0.6)

    @pytest.mark.parametrize("alpha", [0.5, 0.3, 1.2])
    def test_bad_alpha(self, alpha):
        with pytest.raises(GraphError):
            relation_weight(Edge("a", "b", FO, 1), alpha)

    @settings(max_examples=200)
    @given(st.floats(0.5, 1.0, exclude_min=True), st.integers(1, 10_000))
    def test_fo_outweighs_so(self, alpha, count):
        assert relation_weight(Edge("a", "b", FO, count), alpha) > relation_weight(Edge("a", "b", SO, count), alpha)


class TestEdgeInvariants:
    def test_self_edge(self):
        with pytest.raises(GraphError):
            Edge("a", "a", FO)

    def test_unknown_endpoint(self):
        with pytest.raises(GraphError):
            EntityGraph(["a"]).add_edge("a", "b")


class TestGraphFile:
    def test_round_trip(self, tmp_path):
        g = EntityGraph([IDY, CONDOR, LOUIS, "Andy Lau"])
        g.add_edge(IDY, CONDOR, FO, 3)
        g.add_edge(CONDOR, LOUIS, FO, 1)
        g = add_second_order(g)
        save_graph(g, tmp_path / "g.txt")
        text = (tmp_path / "g.txt").read_text(encoding="utf-8").splitlines()
        assert text[0] == "NODES 4 EDGES 3"
        assert load_graph(tmp_path / "g.txt") == g

    def test_count_mismatch(self, tmp_path):
        (tmp_path / "g.txt").write_text("NODES 2 EDGES 1\na\nb\n")
        with pytest.raises(GraphError):
            load_graph(tmp_path / "g.txt")
