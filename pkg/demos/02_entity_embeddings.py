"""
Relation-weighted walks and skip-gram entity embeddings
=======================================================

Two dense cliques joined by one bridge edge make a graph whose structure is
easy to see.  Biased random walks over it, fed to a skip-gram model with
negative sampling, should place entities from the same clique close together.

Run with ``python3 demos/02_entity_embeddings.py``.
"""

from itertools import combinations

import numpy as np

from keqi.embed_pretrain import AliasTable, BiasedWalker, SgnsConfig, WalkConfig, generate_walks, train_sgns
from keqi.entity_graph import SO, EntityGraph

# alias tables sample a discrete distribution in constant time
rng = np.random.default_rng(0)
table = AliasTable([0.8, 0.2, 0.4])
draws = np.bincount([table.sample(rng) for _ in range(20_000)], minlength=3) / 20_000
print("alias sampler frequencies:", np.round(draws, 3), "target:", np.round(np.array([0.8, 0.2, 0.4]) / 1.4, 3))

g = EntityGraph([f"a{i}" for i in range(5)] + [f"b{i}" for i in range(5)])
for side in "ab":
    for i, j in combinations(range(5), 2):
        g.add_edge(f"{side}{i}", f"{side}{j}")
g.add_edge("a0", "b0")
# a weak second-order link across the bridge
g.add_edge("a1", "b0", SO, 1)

walker = BiasedWalker(g, alpha=0.8)
print("\nfirst-step distribution from a1:")
for idx, p in zip(walker.nbrs[walker.index["a1"]], walker.transition_probs(walker.index["a1"])):
    print(f"  -> {walker.nodes[idx]}  {p:.3f}")

walks = generate_walks(g, WalkConfig(walk_length=10, walks_per_node=20, seed=0))
print("\nsample walk:", " ".join(walks[0]))

emb = train_sgns(walks, SgnsConfig(dim=16, epochs=3, seed=0))
sims = np.array([[emb.similarity(u, v) for v in g.nodes] for u in g.nodes])
np.set_printoptions(precision=2, suppress=True, linewidth=120)
print("\ncosine similarities (rows and columns a0..a4, b0..b4):")
print(sims)
intra = np.mean([sims[i, j] for s in (0, 5) for i, j in combinations(range(s, s + 5), 2)])
inter = sims[:5, 5:].mean()
print(f"mean intra-clique {intra:.3f}  mean inter-clique {inter:.3f}")
