"""Core domain types: documents, entities, and the two relation graphs.

All types are immutable values after construction and safe to share across
threads.  Graph equality everywhere in this package means equality of
canonical forms (see :func:`canonicalize_wrg` / :func:`canonicalize_erg`).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable


class MalformedGraphError(ValueError):
    """Raised for structurally invalid graphs (duplicate pair labels, etc.)."""


class EntityType(Enum):
    QUESTION = "question"
    ANSWER = "answer"
    HEADER = "header"  # FUNSD "header" == the "section" role
    OTHER = "other"


class EntityRelationLabel(Enum):
    QUESTION_ANSWER = "question-answer"
    HEADER_QUESTION = "header-question"
    PROXIMATE_V = "proximate-v"
    PROXIMATE_H = "proximate-h"

    @property
    def directed(self) -> bool:
        return self in (EntityRelationLabel.QUESTION_ANSWER,
                        EntityRelationLabel.HEADER_QUESTION)


class WordRelationLabel(Enum):
    """Word-level edge labels.  Enum order fixes score/tie-break indexing."""

    QUESTION_ANSWER = "question-answer"
    HEADER_QUESTION = "header-question"
    PROXIMATE_V = "proximate-v"
    PROXIMATE_H = "proximate-h"
    SAME_ENTITY = "same-entity"
    NO_RELATION = "no-relation"

    @property
    def directed(self) -> bool:
        return self in (WordRelationLabel.QUESTION_ANSWER,
                        WordRelationLabel.HEADER_QUESTION)


#: The five real labels (edges that may appear in a stored graph).
REAL_LABELS = tuple(z for z in WordRelationLabel if z is not WordRelationLabel.NO_RELATION)
#: Semantic labels: enough to pin a word to a typed entity.
SEMANTIC_LABELS = (WordRelationLabel.QUESTION_ANSWER,
                   WordRelationLabel.SAME_ENTITY,
                   WordRelationLabel.HEADER_QUESTION)
#: Entity-level labels projected to words (everything but same-entity).
ENTITY_LEVEL_LABELS = (WordRelationLabel.QUESTION_ANSWER,
                       WordRelationLabel.HEADER_QUESTION,
                       WordRelationLabel.PROXIMATE_V,
                       WordRelationLabel.PROXIMATE_H)

LABEL_INDEX = {z: k for k, z in enumerate(WordRelationLabel)}
NUM_LABELS = len(WordRelationLabel)


@dataclass(frozen=True)
class BoundingBox:
    x_left: float
    y_top: float
    x_right: float
    y_bottom: float

    def __post_init__(self) -> None:
        if self.x_left > self.x_right or self.y_top > self.y_bottom:
            raise ValueError(f"inverted box {self!r}")
        if min(self.x_left, self.y_top) < 0:
            raise ValueError(f"negative coordinates in {self!r}")

    @property
    def x_center(self) -> float:
        return 0.5 * (self.x_left + self.x_right)

    @property
    def y_center(self) -> float:
        return 0.5 * (self.y_top + self.y_bottom)


@dataclass(frozen=True)
class Word:
    """A single OCR word.  ``text`` is carried for output only; the model and
    feature code never receive it (language independence)."""

    word_id: int
    text: str
    box: BoundingBox


@dataclass(frozen=True)
class Document:
    doc_id: str
    width: float
    height: float
    words: tuple[Word, ...]
    language: str = "en"

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"document {self.doc_id}: non-positive page size")
        for w in self.words:
            if w.box.x_right > self.width or w.box.y_bottom > self.height:
                raise ValueError(
                    f"document {self.doc_id}: word {w.word_id} box exceeds page")

    def __len__(self) -> int:
        return len(self.words)


@dataclass(frozen=True)
class Entity:
    entity_id: int
    kind: EntityType
    word_ids: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.word_ids:
            raise ValueError(f"entity {self.entity_id}: empty word list")
        if any(b <= a for a, b in zip(self.word_ids, self.word_ids[1:])):
            raise ValueError(
                f"entity {self.entity_id}: word ids not strictly increasing")

    @property
    def first_word(self) -> int:
        return self.word_ids[0]

    @property
    def last_word(self) -> int:
        return self.word_ids[-1]


ErgEdge = tuple[int, EntityRelationLabel, int]
WrgEdge = tuple[int, WordRelationLabel, int]


@dataclass(frozen=True)
class EntityRelationGraph:
    entities: tuple[Entity, ...]
    edges: tuple[ErgEdge, ...]

    def entity_by_id(self, entity_id: int) -> Entity:
        for e in self.entities:
            if e.entity_id == entity_id:
                return e
        raise KeyError(entity_id)


@dataclass(frozen=True)
class WordRelationGraph:
    word_ids: tuple[int, ...]
    edges: tuple[WrgEdge, ...]


def _oriented_wrg_edge(edge: WrgEdge) -> WrgEdge:
    src, label, dst = edge
    if not label.directed and src > dst:
        return (dst, label, src)
    return edge


def canonicalize_wrg(graph: WordRelationGraph) -> WordRelationGraph:
    """Canonical form: undirected edges stored low-to-high, edges sorted,
    duplicate-free.  Two conflicting labels on one unordered pair is an error
    (the single-label invariant)."""
    edges = sorted({_oriented_wrg_edge(e) for e in graph.edges},
                   key=lambda e: (e[0], e[2], LABEL_INDEX[e[1]]))
    seen: dict[tuple[int, int], WordRelationLabel] = {}
    for src, label, dst in edges:
        if label is WordRelationLabel.NO_RELATION:
            raise MalformedGraphError("no-relation edge in a stored graph")
        pair = (min(src, dst), max(src, dst))
        if pair in seen:
            raise MalformedGraphError(
                f"pair {pair} carries both {seen[pair].value} and {label.value}")
        seen[pair] = label
    return WordRelationGraph(tuple(sorted(graph.word_ids)), tuple(edges))


def _oriented_erg_edge(edge: ErgEdge) -> ErgEdge:
    src, label, dst = edge
    if not label.directed and src > dst:
        return (dst, label, src)
    return edge


def canonicalize_erg(graph: EntityRelationGraph) -> EntityRelationGraph:
    """Canonical form: entities renumbered densely in first-word reading
    order, undirected edges stored low-to-high, edges sorted, duplicate-free.
    """
    order = sorted(graph.entities, key=lambda e: e.word_ids)
    remap = {e.entity_id: k for k, e in enumerate(order)}
    if len(remap) != len(graph.entities):
        raise MalformedGraphError("duplicate entity ids")
    seen_words: set[int] = set()
    entities = []
    for k, e in enumerate(order):
        if seen_words.intersection(e.word_ids):
            raise MalformedGraphError(
                f"entity {e.entity_id}: word shared with another entity")
        seen_words.update(e.word_ids)
        entities.append(replace(e, entity_id=k))
    edges = sorted({_oriented_erg_edge((remap[s], z, remap[d]))
                    for s, z, d in graph.edges},
                   key=lambda e: (e[0], e[2], e[1].value))
    seen_pairs: dict[tuple[int, int], EntityRelationLabel] = {}
    for src, label, dst in edges:
        pair = (min(src, dst), max(src, dst))
        if pair in seen_pairs:
            raise MalformedGraphError(
                f"entity pair {pair} carries both {seen_pairs[pair].value} "
                f"and {label.value}")
        seen_pairs[pair] = label
    return EntityRelationGraph(tuple(entities), tuple(edges))


def canonicalize(graph):
    """Dispatching canonicalizer; idempotent on both graph kinds."""
    if isinstance(graph, WordRelationGraph):
        return canonicalize_wrg(graph)
    if isinstance(graph, EntityRelationGraph):
        return canonicalize_erg(graph)
    raise TypeError(f"not a graph: {type(graph).__name__}")


def wrg_from_edges(word_ids: Iterable[int], edges: Iterable[WrgEdge]) -> WordRelationGraph:
    return canonicalize_wrg(WordRelationGraph(tuple(word_ids), tuple(edges)))
