"""Synthetic planted-signal corpus.

Entities fall into clusters, one of which is the "hot topic". Encyclopedia
pages link entities mostly within their cluster. Each article mentions a
handful of entities reached by following page links from a seed entity,
plus filler words; some filler words are "background" cues.

Indicator scores are a deterministic function of those planted features:

* novelty    = 2 if >= 3 hot entities are mentioned, 1 if >= 1, else 0
* background = 0 with no cue words, 1 with a few, 2 with many
* straightforward = min(2, number of digit tokens)
* the other four are uniform noise

and the label is ``novelty == 2 or background == 2``. The hot cluster holds
far more entities than any one training split shows, so recognising an
unseen entity as "hot" leans on its graph neighbourhood.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .corpus import AnnotationScores, ArticleRecord, EncyclopediaPage, EntityMention


@dataclass(frozen=True)
class SynthConfig:
    n_clusters: int = 6
    entities_per_cluster: int = 400
    page_links: int = 6
    p_link_in_cluster: float = 0.9
    p_hot_article: float = 0.2
    p_stray_hot: float = 0.0
    mentions_min: int = 4
    mentions_max: int = 7
    noise_mentions: int = 1
    filler_vocab: int = 300
    background_words: int = 12
    words_min: int = 20
    words_max: int = 40
    n_train: int = 800
    n_valid: int = 100
    n_test: int = 100
    n_unlabeled: int = 3000
    seed: int = 0


@dataclass
class SynthCorpus:
    train: list[ArticleRecord]
    valid: list[ArticleRecord]
    test: list[ArticleRecord]
    unlabeled: list[ArticleRecord]
    pages: dict[str, EncyclopediaPage]
    hot_entities: frozenset
    clusters: dict[str, int]


def label_rule(scores: AnnotationScores) -> int:
    return int(scores.novelty == 2 or scores.background == 2)


def generate(cfg: SynthConfig = SynthConfig()) -> SynthCorpus:
    rng = np.random.default_rng(cfg.seed)
    n_ent = cfg.n_clusters * cfg.entities_per_cluster
    # opaque names so the surface never reveals the cluster
    ids = rng.permutation(n_ent)
    names = [f"ent{ids[i]:05d}" for i in range(n_ent)]
    cluster_of = np.repeat(np.arange(cfg.n_clusters), cfg.entities_per_cluster)
    members = [np.flatnonzero(cluster_of == c) for c in range(cfg.n_clusters)]

    links: list[list[int]] = []
    for i in range(n_ent):
        chosen: list[int] = []
        while len(chosen) < cfg.page_links:
            pool = members[cluster_of[i]] if rng.random() < cfg.p_link_in_cluster else np.arange(n_ent)
            j = int(rng.choice(pool))
            if j != i and j not in chosen:
                chosen.append(j)
        links.append(chosen)
    # undirected neighbour lists for article sampling
    nbrs: list[set[int]] = [set() for _ in range(n_ent)]
    for i, ls in enumerate(links):
        for j in ls:
            nbrs[i].add(j)
            nbrs[j].add(i)
    pages = {
        f"p{i:05d}": EncyclopediaPage(
            f"p{i:05d}", names[i], {"name": names[i]}, tuple(names[j] for j in links[i])
        )
        for i in range(n_ent)
    }

    filler = [f"w{k:03d}" for k in range(cfg.filler_vocab)]
    background = set(rng.choice(filler, cfg.background_words, replace=False).tolist())
    plain = [w for w in filler if w not in background]
    bg_list = sorted(background)

    def article(idx: int, split: str, hot: bool) -> ArticleRecord:
        cluster = 0 if hot else int(rng.integers(1, cfg.n_clusters))
        k = int(rng.integers(cfg.mentions_min, cfg.mentions_max + 1))
        cur = int(rng.choice(members[cluster]))
        ents = [cur]
        steps = 0
        while len(ents) < k and steps < 50:
            steps += 1
            cand = sorted(n for n in nbrs[cur] if cluster_of[n] == cluster) or sorted(nbrs[cur])
            cur = int(rng.choice(cand))
            if cur not in ents:
                ents.append(cur)
        for _ in range(int(rng.integers(0, cfg.noise_mentions + 1))):
            ents.append(int(rng.choice(members[int(rng.integers(1, cfg.n_clusters))])))
        if not hot and rng.random() < cfg.p_stray_hot:
            ents.append(int(rng.choice(members[0])))
        ents = list(dict.fromkeys(ents))

        n_words = int(rng.integers(cfg.words_min, cfg.words_max + 1))
        n_bg = int(rng.choice([0, 1, 2, 8], p=[0.45, 0.2, 0.15, 0.2]))
        n_digits = int(rng.choice([0, 1, 2], p=[0.4, 0.3, 0.3]))
        words = [str(w) for w in rng.choice(plain, n_words)]
        words += [str(w) for w in rng.choice(bg_list, n_bg)]
        words += [str(int(d)) for d in rng.integers(10, 10000, n_digits)]
        slots = [names[e] for e in ents] + words
        rng.shuffle(slots)

        body_parts, mentions, pos = [], [], 0
        page_of = {names[e]: f"p{e:05d}" for e in ents}
        for tok in slots:
            if tok in page_of:
                mentions.append(EntityMention(tok, pos, pos + len(tok), page_of[tok]))
            body_parts.append(tok)
            pos += len(tok) + 1
        body = " ".join(body_parts)

        n_hot = sum(cluster_of[e] == 0 for e in ents)
        noise = rng.integers(0, 3, 4)
        scores = AnnotationScores(
            relevance=int(noise[0]),
            text_quality=int(noise[1]),
            straightforward=min(2, n_digits),
            multi_sided=int(noise[2]),
            background=0 if n_bg == 0 else (1 if n_bg < 4 else 2),
            novelty=2 if n_hot >= 3 else (1 if n_hot >= 1 else 0),
            sentiment=int(noise[3]),
        )
        label = label_rule(scores) if split != "unlabeled" else None
        return ArticleRecord(f"{split}-{idx:05d}", f"article {idx}", body, tuple(mentions), scores, label)

    def split(name: str, n: int) -> list[ArticleRecord]:
        return [article(i, name, bool(rng.random() < cfg.p_hot_article)) for i in range(n)]

    train = split("train", cfg.n_train)
    valid = split("valid", cfg.n_valid)
    test = split("test", cfg.n_test)
    unlabeled = split("unlabeled", cfg.n_unlabeled)
    return SynthCorpus(
        train, valid, test, unlabeled, pages,
        frozenset(names[i] for i in members[0]),
        {names[i]: int(cluster_of[i]) for i in range(n_ent)},
    )
