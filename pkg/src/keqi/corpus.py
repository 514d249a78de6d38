"""Article and encyclopedia-page records, JSONL loading, and entity extraction."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional

INDICATORS = (
    "relevance",
    "text_quality",
    "straightforward",
    "multi_sided",
    "background",
    "novelty",
    "sentiment",
)


class CorpusError(ValueError):
    """Raised for malformed or inconsistent corpus files."""


@dataclass(frozen=True)
class EntityMention:
    surface: str
    start: int
    end: int
    page_id: Optional[str] = None

    def to_dict(self) -> dict:
        return {"surface": self.surface, "start": self.start, "end": self.end, "page_id": self.page_id}


@dataclass(frozen=True)
class AnnotationScores:
    relevance: int
    text_quality: int
    straightforward: int
    multi_sided: int
    background: int
    novelty: int
    sentiment: int

    def __post_init__(self):
        for name in INDICATORS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value not in (0, 1, 2):
                raise CorpusError(f"score {name!r} must be 0, 1 or 2, got {value!r}")

    @classmethod
    def from_sequence(cls, values: Iterable[int]) -> "AnnotationScores":
        return cls(*(int(v) for v in values))

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(getattr(self, name) for name in INDICATORS)

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in INDICATORS}


@dataclass(frozen=True)
class ArticleRecord:
    id: str
    title: str
    body: str
    mentions: tuple[EntityMention, ...] = ()
    scores: Optional[AnnotationScores] = None
    label: Optional[int] = None

    def __post_init__(self):
        if not self.id:
            raise CorpusError("article id must be nonempty")
        if not self.body:
            raise CorpusError(f"article {self.id!r}: body must be nonempty")
        if self.label is not None and self.label not in (0, 1):
            raise CorpusError(f"article {self.id!r}: label must be 0 or 1, got {self.label!r}")
        for m in self.mentions:
            if not (0 <= m.start < m.end <= len(self.body)):
                raise CorpusError(f"article {self.id!r}: mention {m.surface!r} has bad offsets [{m.start}, {m.end})")
            if self.body[m.start:m.end] != m.surface:
                raise CorpusError(f"article {self.id!r}: mention {m.surface!r} does not match body slice")

    @property
    def entities(self) -> list[str]:
        """Distinct mentioned entity surfaces in first-mention order."""
        return list(dict.fromkeys(m.surface for m in self.mentions))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "body": self.body,
            "mentions": [m.to_dict() for m in self.mentions],
            "scores": self.scores.to_dict() if self.scores is not None else None,
            "label": self.label,
        }


@dataclass(frozen=True)
class EncyclopediaPage:
    page_id: str
    name: str
    description_fields: Mapping[str, str] = field(default_factory=dict)
    linked_entities: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.page_id:
            raise CorpusError("page_id must be nonempty")
        if not self.name:
            raise CorpusError(f"page {self.page_id!r}: name must be nonempty")

    def to_dict(self) -> dict:
        return {
            "page_id": self.page_id,
            "name": self.name,
            "description_fields": dict(self.description_fields),
            "linked_entities": list(self.linked_entities),
        }


def _require(obj: dict, key: str, types, lineno: int):
    if key not in obj:
        raise CorpusError(f"line {lineno}: missing field {key!r}")
    value = obj[key]
    if not isinstance(value, types):
        raise CorpusError(f"line {lineno}: field {key!r} has wrong type {type(value).__name__}")
    return value


def _iter_json_lines(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise CorpusError(f"line {lineno}: expected an object")
            yield lineno, obj


def parse_article(obj: dict, lineno: int = 0) -> ArticleRecord:
    art_id = _require(obj, "id", str, lineno)
    title = _require(obj, "title", str, lineno)
    body = _require(obj, "body", str, lineno)
    raw_mentions = obj.get("mentions") or []
    if not isinstance(raw_mentions, list):
        raise CorpusError(f"line {lineno}: field 'mentions' must be a list")
    mentions = []
    for i, m in enumerate(raw_mentions):
        if not isinstance(m, dict):
            raise CorpusError(f"line {lineno}: field 'mentions[{i}]' must be an object")
        try:
            mentions.append(
                EntityMention(
                    surface=_require(m, "surface", str, lineno),
                    start=_require(m, "start", int, lineno),
                    end=_require(m, "end", int, lineno),
                    page_id=m.get("page_id"),
                )
            )
        except CorpusError as exc:
            raise CorpusError(f"{exc} (in mentions[{i}])") from None
    scores = None
    raw_scores = obj.get("scores")
    if raw_scores is not None:
        if not isinstance(raw_scores, dict):
            raise CorpusError(f"line {lineno}: field 'scores' must be an object")
        missing = [k for k in INDICATORS if k not in raw_scores]
        if missing:
            raise CorpusError(f"line {lineno}: field 'scores.{missing[0]}' missing")
        extra = sorted(set(raw_scores) - set(INDICATORS))
        if extra:
            raise CorpusError(f"line {lineno}: unknown field 'scores.{extra[0]}'")
        try:
            scores = AnnotationScores(**{k: raw_scores[k] for k in INDICATORS})
        except CorpusError as exc:
            raise CorpusError(f"line {lineno}: {exc}") from None
    label = obj.get("label")
    try:
        return ArticleRecord(art_id, title, body, tuple(mentions), scores, label)
    except CorpusError as exc:
        raise CorpusError(f"line {lineno}: {exc}") from None


def load_articles(path) -> list[ArticleRecord]:
    """Load line-delimited article records, preserving file order.

    Raises FileNotFoundError for a missing file and CorpusError (naming the
    line and field) for malformed records or duplicate ids.
    """
    records = []
    seen: dict[str, int] = {}
    for lineno, obj in _iter_json_lines(path):
        rec = parse_article(obj, lineno)
        if rec.id in seen:
            raise CorpusError(f"line {lineno}: duplicate id {rec.id!r} (first seen on line {seen[rec.id]})")
        seen[rec.id] = lineno
        records.append(rec)
    return records


def load_pages(path) -> dict[str, EncyclopediaPage]:
    pages: dict[str, EncyclopediaPage] = {}
    for lineno, obj in _iter_json_lines(path):
        page_id = _require(obj, "page_id", str, lineno)
        name = _require(obj, "name", str, lineno)
        desc = obj.get("description_fields") or {}
        linked = obj.get("linked_entities") or []
        if not isinstance(desc, dict) or not all(isinstance(k, str) and isinstance(v, str) for k, v in desc.items()):
            raise CorpusError(f"line {lineno}: field 'description_fields' must map strings to strings")
        if not isinstance(linked, list) or not all(isinstance(x, str) for x in linked):
            raise CorpusError(f"line {lineno}: field 'linked_entities' must be a list of strings")
        if page_id in pages:
            raise CorpusError(f"line {lineno}: duplicate page_id {page_id!r}")
        try:
            pages[page_id] = EncyclopediaPage(page_id, name, dict(desc), tuple(linked))
        except CorpusError as exc:
            raise CorpusError(f"line {lineno}: {exc}") from None
    return pages


def _write_lines(objs, path):
    with Path(path).open("w", encoding="utf-8") as fh:
        for obj in objs:
            fh.write(json.dumps(obj, ensure_ascii=False))
            fh.write("\n")


def save_articles(articles: Iterable[ArticleRecord], path) -> None:
    _write_lines((a.to_dict() for a in articles), path)


def save_pages(pages: Iterable[EncyclopediaPage] | Mapping[str, EncyclopediaPage], path) -> None:
    if isinstance(pages, Mapping):
        pages = pages.values()
    _write_lines((p.to_dict() for p in pages), path)


def extract_entities(body: str, lexicon: Iterable[str]) -> list[EntityMention]:
    """Greedy leftmost-longest dictionary match over ``body``.

    Offsets are in code points. Mentions come back sorted and never overlap.
    """
    names = {name for name in lexicon if name}
    if not names:
        return []
    by_length = sorted({len(n) for n in names}, reverse=True)
    mentions = []
    i, n = 0, len(body)
    while i < n:
        for length in by_length:
            if i + length <= n and body[i:i + length] in names:
                mentions.append(EntityMention(body[i:i + length], i, i + length))
                i += length
                break
        else:
            i += 1
    return mentions


def page_index(pages: Mapping[str, EncyclopediaPage]) -> dict[str, str]:
    """Map entity name to page_id (first page wins for duplicate names)."""
    index: dict[str, str] = {}
    for pid, page in pages.items():
        index.setdefault(page.name, pid)
    return index


def annotate_article(article: ArticleRecord, pages: Mapping[str, EncyclopediaPage]) -> ArticleRecord:
    """Replace an article's mentions with lexicon matches linked to page ids."""
    index = page_index(pages)
    mentions = tuple(
        EntityMention(m.surface, m.start, m.end, index.get(m.surface))
        for m in extract_entities(article.body, index)
    )
    return ArticleRecord(article.id, article.title, article.body, mentions, article.scores, article.label)
