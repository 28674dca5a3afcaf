"""Deterministic, invertible mapping between entity graphs and word graphs.

Word-level projection of entity edges:

* question-answer: last word of the question -> first word of the answer
* header-question: first word of the header -> first word of the question
* proximate_V: first word of A -- first word of B
* proximate_H: last word of A -- first word of B
* same-entity: adjacent words within every entity

The reverse mapping recovers entities as maximal same-entity chains, infers
entity types from incident directed edges, and lifts the remaining word edges
back to entity level.  ``wrg_to_erg(erg_to_wrg(g), d) == g`` for every
well-formed g.
"""
from __future__ import annotations

from dataclasses import dataclass

from .graphs import (
    Document,
    Entity,
    EntityRelationGraph,
    EntityRelationLabel,
    EntityType,
    MalformedGraphError,
    WordRelationGraph,
    WordRelationLabel,
    canonicalize_erg,
    canonicalize_wrg,
)
from .ingest import Neighborhood

_TO_WORD_LABEL = {
    EntityRelationLabel.QUESTION_ANSWER: WordRelationLabel.QUESTION_ANSWER,
    EntityRelationLabel.HEADER_QUESTION: WordRelationLabel.HEADER_QUESTION,
    EntityRelationLabel.PROXIMATE_V: WordRelationLabel.PROXIMATE_V,
    EntityRelationLabel.PROXIMATE_H: WordRelationLabel.PROXIMATE_H,
}
_TO_ENTITY_LABEL = {w: e for e, w in _TO_WORD_LABEL.items()}


class ConversionConflictError(MalformedGraphError):
    """A recovered entity was assigned incompatible types; the offending
    edges are listed in the message."""


def _anchor_words(label: EntityRelationLabel, a: Entity, b: Entity) -> tuple[int, int]:
    if label is EntityRelationLabel.QUESTION_ANSWER:
        return a.last_word, b.first_word
    if label is EntityRelationLabel.HEADER_QUESTION:
        return a.first_word, b.first_word
    if label is EntityRelationLabel.PROXIMATE_V:
        return a.first_word, b.first_word
    return a.last_word, b.first_word  # proximate_H


def erg_to_wrg(erg: EntityRelationGraph) -> WordRelationGraph:
    """Project an entity graph (proximates already added) onto its words."""
    by_id = {e.entity_id: e for e in erg.entities}
    edges = []
    for e in erg.entities:
        for u, v in zip(e.word_ids, e.word_ids[1:]):
            edges.append((u, WordRelationLabel.SAME_ENTITY, v))
    for src, label, dst in erg.edges:
        if src not in by_id or dst not in by_id:
            raise MalformedGraphError(
                f"edge ({src}, {label.value}, {dst}) references a missing entity")
        u, v = _anchor_words(label, by_id[src], by_id[dst])
        edges.append((u, _TO_WORD_LABEL[label], v))
    nodes = tuple(w for e in erg.entities for w in e.word_ids)
    return canonicalize_wrg(WordRelationGraph(nodes, tuple(edges)))


def _chains(wrg: WordRelationGraph) -> list[tuple[int, ...]]:
    """Maximal same-entity chains (singletons for unchained words).

    A word may have at most one same-entity partner on each side (below /
    above itself in reading order); anything else is a branching chain."""
    succ: dict[int, int] = {}
    pred: dict[int, int] = {}
    for s, z, d in wrg.edges:
        if z is not WordRelationLabel.SAME_ENTITY:
            continue
        lo, hi = min(s, d), max(s, d)
        if lo in succ or hi in pred:
            raise MalformedGraphError(
                f"same-entity chain branches at word {lo if lo in succ else hi}")
        succ[lo] = hi
        pred[hi] = lo
    chains = []
    for w in sorted(wrg.word_ids):
        if w in pred:
            continue
        chain = [w]
        while chain[-1] in succ:
            chain.append(succ[chain[-1]])
        chains.append(tuple(chain))
    return chains


def wrg_to_erg(wrg: WordRelationGraph, doc: Document) -> EntityRelationGraph:
    """Invert :func:`erg_to_wrg`.

    Requires a word graph with the decoded-graph guarantees (single label per
    pair, every chain reachable from a question-answer or header-question
    edge).  Chains touched by no such edge cannot be typed and are rejected.
    """
    del doc  # reserved for reading-order context; ids already encode it
    wrg = canonicalize_wrg(wrg)
    chains = _chains(wrg)
    chain_of: dict[int, int] = {}
    for cid, chain in enumerate(chains):
        for w in chain:
            chain_of[w] = cid

    votes: dict[int, dict[EntityType, list]] = {cid: {} for cid in range(len(chains))}

    def vote(cid: int, kind: EntityType, edge) -> None:
        votes[cid].setdefault(kind, []).append(edge)

    entity_edges: set[tuple[int, EntityRelationLabel, int]] = set()
    for edge in wrg.edges:
        s, z, d = edge
        if z is WordRelationLabel.SAME_ENTITY:
            continue
        if s not in chain_of or d not in chain_of:
            raise MalformedGraphError(
                f"edge {edge} references a word outside the graph nodes")
        cs, cd = chain_of[s], chain_of[d]
        if z is WordRelationLabel.QUESTION_ANSWER:
            vote(cs, EntityType.QUESTION, edge)
            vote(cd, EntityType.ANSWER, edge)
        elif z is WordRelationLabel.HEADER_QUESTION:
            vote(cs, EntityType.HEADER, edge)
            vote(cd, EntityType.QUESTION, edge)
        if z.directed:
            entity_edges.add((cs, _TO_ENTITY_LABEL[z], cd))
        else:
            # undirected: the chain whose anchor word comes first is the A side
            a, b = (cs, cd) if min(s, d) == s else (cd, cs)
            lo, hi = (a, b) if a < b else (b, a)
            entity_edges.add((lo, _TO_ENTITY_LABEL[z], hi))

    kinds: list[EntityType] = []
    for cid in range(len(chains)):
        v = votes[cid]
        if not v:
            raise MalformedGraphError(
                f"chain {chains[cid]} has no question-answer or header-question "
                "edge; its entity type cannot be determined")
        if len(v) > 1:
            detail = "; ".join(f"{k.value}: {sorted(map(str, es))}" for k, es in sorted(
                v.items(), key=lambda kv: kv[0].value))
            raise ConversionConflictError(
                f"chain {chains[cid]} typed inconsistently ({detail})")
        kinds.append(next(iter(v)))

    entities = tuple(Entity(entity_id=cid, kind=kinds[cid], word_ids=chains[cid])
                     for cid in range(len(chains)))
    return canonicalize_erg(EntityRelationGraph(entities, tuple(sorted(
        entity_edges, key=lambda e: (e[0], e[2], e[1].value)))))


# ---------------------------------------------------------------------------
# Constraint verification


@dataclass(frozen=True)
class ViolationCounts:
    c1: int
    c2: int
    c3: int
    c4: int
    c5: int
    uncovered_edges: int = 0

    @property
    def total(self) -> int:
        return self.c1 + self.c2 + self.c3 + self.c4 + self.c5

    def as_dict(self) -> dict[str, int]:
        return {"C1": self.c1, "C2": self.c2, "C3": self.c3, "C4": self.c4,
                "C5": self.c5, "uncovered_edges": self.uncovered_edges}


def verify_constraints(wrg: WordRelationGraph, nbhd: Neighborhood,
                       config=None) -> ViolationCounts:
    """Count violated decoding-constraint rows for a word graph.

    Gold graphs and ILP-decoded graphs score zero everywhere; greedy decodes
    generally do not.  Edges whose word pair is not a candidate pair cannot be
    expressed as decision variables and are reported separately.
    """
    import numpy as np

    from .graphs import LABEL_INDEX, WordRelationLabel
    from .ilp import ConstraintConfig, constraint_rows

    config = config or ConstraintConfig()
    wrg = canonicalize_wrg(wrg)
    labels = np.full(len(nbhd), LABEL_INDEX[WordRelationLabel.NO_RELATION],
                     dtype=np.int64)
    assigned: set[int] = set()
    c3 = 0
    uncovered = 0
    for s, z, d in wrg.edges:
        p = nbhd.index_of(s, d)
        if p is None:
            uncovered += 1
            continue
        if p in assigned:
            c3 += 1
            continue
        assigned.add(p)
        labels[p] = LABEL_INDEX[z]
    counts = {"C1": 0, "C2": 0, "C3": c3, "C4": 0, "C5": 0}
    for row in constraint_rows(nbhd, config):
        if not row.satisfied_by(labels):
            counts[row.family] += 1
    return ViolationCounts(c1=counts["C1"], c2=counts["C2"], c3=counts["C3"],
                           c4=counts["C4"], c5=counts["C5"],
                           uncovered_edges=uncovered)
