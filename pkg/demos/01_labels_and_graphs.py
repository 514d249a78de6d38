"""
Labels from indicator scores, and entity graphs from articles
=============================================================

A small synthetic corpus stands in for annotated news articles.  Every
labeled article carries seven indicator scores in {0, 1, 2}; here we distil
those scores into a binary quality label with a shallow decision tree, then
turn the entity mentions into first- and second-order graphs.

Run with ``python3 demos/01_labels_and_graphs.py``.
"""

from dataclasses import replace

import numpy as np

from keqi.entity_graph import FO, SO, build_article_graph, build_corpus_graph, relation_weight
from keqi.label_pipeline import TreeConfig, auto_label, feature_importances, fit_tree, importance_table, tree_accuracy, tree_to_text
from keqi.synth import SynthConfig, generate

corpus = generate(SynthConfig(n_clusters=3, entities_per_cluster=60, n_train=300, n_valid=50, n_test=50,
                              n_unlabeled=200, seed=0))
print(f"{len(corpus.train)} train, {len(corpus.valid)} valid, {len(corpus.test)} test, "
      f"{len(corpus.unlabeled)} unlabeled, {len(corpus.pages)} encyclopedia pages")

# the planted rule marks an article positive when novelty or background is 2
scored = corpus.train + corpus.valid
order = np.random.default_rng(0).permutation(len(scored))
fit_rows = [scored[i] for i in order[:300]]
held = [scored[i] for i in order[300:]]

tree = fit_tree([a.scores for a in fit_rows], [a.label for a in fit_rows], TreeConfig(max_depth=3))
print()
print(tree_to_text(tree))
print(f"held-out accuracy: {tree_accuracy(tree, [a.scores for a in held], [a.label for a in held]):.3f}")
print()
print(importance_table(feature_importances(tree)))

# articles with scores but no label get one from the tree
stripped = [replace(a, label=None) for a in held[:5]]
print("\nauto labels:", [a.label for a in auto_label(tree, stripped)], "gold:", [a.label for a in held[:5]])

# one article graph: nodes are the article's entities, FO edges join entities
# that also co-occur on an encyclopedia page
article = corpus.train[0]
g = build_article_graph(article, corpus.pages)
print(f"\narticle {article.id}: {len(g.nodes)} entities, {len(g.edges)} first-order edges")

# the corpus graph merges article graphs and adds SO edges between entities two hops apart
cg = build_corpus_graph(corpus.unlabeled + corpus.train, corpus.pages, second_order=True)
n_fo = sum(e.order == FO for e in cg.edges)
n_so = sum(e.order == SO for e in cg.edges)
print(f"corpus graph: {len(cg.nodes)} nodes, {n_fo} FO edges, {n_so} SO edges")

# with alpha = 0.8 a direct co-occurrence weighs four times an SO edge of equal count
for e in cg.edges[:5]:
    print(f"  {e.u:>8} -- {e.v:<8} {e.order} count {e.count:3d} weight {relation_weight(e, 0.8):.2f}")
