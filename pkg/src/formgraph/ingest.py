"""Corpus ingestion: FUNSD/XFUND-style JSON loading, reading order, rule-based
proximate relations, candidate neighborhoods, and the canonical on-disk format
for annotated documents.

Only box geometry and entity labels are consumed; no image pixels are ever
read (page dimensions may be taken from an image header when the annotation
file carries no size fields).
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .graphs import (
    BoundingBox,
    Document,
    Entity,
    EntityRelationGraph,
    EntityRelationLabel,
    EntityType,
    Word,
    WordRelationGraph,
    WordRelationLabel,
    canonicalize_erg,
    canonicalize_wrg,
)

DEFAULT_NEIGHBORHOOD = 10


class ParseError(ValueError):
    """Annotation file could not be interpreted; message names the document
    (and entity, where applicable)."""


class ConfigurationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Reading order


def group_lines(words: Sequence[Word]) -> list[list[int]]:
    """Group words into text lines.

    Two words share a line iff the vertical center of each lies within the
    other's [y_top, y_bottom] span; lines are the connected components of that
    relation, ordered by mean y_top.  Returns lists of *indices into words*,
    each line sorted left to right.  Deterministic for any input permutation.
    """
    n = len(words)
    if n == 0:
        return []
    tops = np.array([w.box.y_top for w in words])
    bots = np.array([w.box.y_bottom for w in words])
    centers = 0.5 * (tops + bots)
    # mutual center containment, symmetric by construction
    inside = (centers[:, None] >= tops[None, :]) & (centers[:, None] <= bots[None, :])
    adj = inside & inside.T
    comp = np.full(n, -1, dtype=np.int64)
    n_comp = 0
    for seed in range(n):
        if comp[seed] >= 0:
            continue
        stack = [seed]
        comp[seed] = n_comp
        while stack:
            u = stack.pop()
            for v in np.nonzero(adj[u])[0]:
                if comp[v] < 0:
                    comp[v] = n_comp
                    stack.append(v)
        n_comp += 1
    lines = [list(np.nonzero(comp == c)[0]) for c in range(n_comp)]

    def word_key(k: int):
        b = words[k].box
        return (b.x_left, b.y_top, b.y_bottom, b.x_right, words[k].text)

    for line in lines:
        line.sort(key=word_key)
    lines.sort(key=lambda line: (float(np.mean(tops[line])),
                                 float(np.min(tops[line])),
                                 words[line[0]].box.x_left))
    return lines


def reading_order(words: Sequence[Word]) -> list[int]:
    """Permutation of input indices: lines top to bottom, words left to right."""
    return [k for line in group_lines(words) for k in line]


def sort_reading_order(words: Sequence[Word], width: float, height: float) -> tuple[Word, ...]:
    """Reading-ordered copy of ``words`` with word ids reassigned densely.
    Idempotent: applying it to its own output changes nothing."""
    del width, height  # part of the interface; ordering needs boxes only
    perm = reading_order(words)
    return tuple(Word(word_id=k, text=words[p].text, box=words[p].box)
                 for k, p in enumerate(perm))


def line_index(doc: Document) -> np.ndarray:
    """line_index[word_id] -> 0-based line number of that word."""
    out = np.empty(len(doc.words), dtype=np.int64)
    for li, line in enumerate(group_lines(doc.words)):
        for k in line:
            out[doc.words[k].word_id] = li
    return out


# ---------------------------------------------------------------------------
# Proximate relations


def augment_proximate(erg: EntityRelationGraph, doc: Document) -> EntityRelationGraph:
    """Add undirected proximate-H / proximate-V edges to an entity graph.

    proximate_H: for each entity A, connect it to the closest question or
    header entity whose first word starts in A's last line, right of A's last
    word.  proximate_V: connect A to the leftmost entity B whose first word
    lies in the first line strictly below A's last line, unless B is an
    answer, an edge already exists between A and B, or between A and a parent
    of B (an entity with a directed edge into B).  Existing edges are never
    removed or relabeled; a proximate edge is skipped rather than allowed to
    conflict with an existing edge on the same entity pair.
    """
    lines = line_index(doc)
    entities = sorted(erg.entities, key=lambda e: e.entity_id)
    word_box = {w.word_id: w.box for w in doc.words}

    existing: set[tuple[int, int]] = set()
    parents: dict[int, set[int]] = {}
    for src, label, dst in erg.edges:
        existing.add((min(src, dst), max(src, dst)))
        if label.directed:
            parents.setdefault(dst, set()).add(src)

    def has_edge(a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in existing

    new_edges = list(erg.edges)
    for a in entities:
        a_last_line = int(lines[a.last_word])
        a_last_x = word_box[a.last_word].x_left

        # proximate_H
        cands = [b for b in entities
                 if b.entity_id != a.entity_id
                 and b.kind in (EntityType.QUESTION, EntityType.HEADER)
                 and int(lines[b.first_word]) == a_last_line
                 and word_box[b.first_word].x_left > a_last_x]
        if cands:
            b = min(cands, key=lambda e: (word_box[e.first_word].x_left, e.entity_id))
            if not has_edge(a.entity_id, b.entity_id):
                new_edges.append((a.entity_id, EntityRelationLabel.PROXIMATE_H, b.entity_id))
                existing.add((min(a.entity_id, b.entity_id), max(a.entity_id, b.entity_id)))

        # proximate_V
        below = [e for e in entities if int(lines[e.first_word]) > a_last_line]
        if below:
            first_line = min(int(lines[e.first_word]) for e in below)
            row = [e for e in below if int(lines[e.first_word]) == first_line]
            b = min(row, key=lambda e: (word_box[e.first_word].x_left, e.entity_id))
            blocked = (b.kind is EntityType.ANSWER
                       or has_edge(a.entity_id, b.entity_id)
                       or any(has_edge(a.entity_id, p) for p in parents.get(b.entity_id, ())))
            if not blocked:
                new_edges.append((a.entity_id, EntityRelationLabel.PROXIMATE_V, b.entity_id))
                existing.add((min(a.entity_id, b.entity_id), max(a.entity_id, b.entity_id)))

    return canonicalize_erg(EntityRelationGraph(erg.entities, tuple(new_edges)))


# ---------------------------------------------------------------------------
# Candidate neighborhoods


@dataclass(frozen=True)
class Neighborhood:
    """Candidate word pairs: each word may relate to its next K words in
    reading order.  ``pairs`` is a (P, 2) int array of (i, j) with
    i < j <= i + K, lexicographically ordered; the row number is the dense
    pair index."""

    k: int
    n_words: int
    pairs: np.ndarray
    pair_index: dict[tuple[int, int], int] = field(repr=False)

    def candidates(self, word_id: int) -> list[int]:
        lo = word_id + 1
        hi = min(word_id + self.k, self.n_words - 1)
        return list(range(lo, hi + 1))

    def index_of(self, i: int, j: int) -> int | None:
        return self.pair_index.get((min(i, j), max(i, j)))

    def __len__(self) -> int:
        return len(self.pairs)


def build_neighborhood(doc: Document, k: int = DEFAULT_NEIGHBORHOOD) -> Neighborhood:
    if k < 1:
        raise ConfigurationError(f"neighborhood size must be >= 1, got {k}")
    n = len(doc.words)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, min(i + k, n - 1) + 1)]
    arr = np.array(pairs, dtype=np.int64).reshape(len(pairs), 2)
    return Neighborhood(k=k, n_words=n, pairs=arr,
                        pair_index={p: idx for idx, p in enumerate(pairs)})


def edge_coverage(wrg: WordRelationGraph, nbhd: Neighborhood) -> tuple[int, int]:
    """(covered, total) gold edges whose word pair is a candidate pair."""
    total = len(wrg.edges)
    covered = sum(1 for s, _, d in wrg.edges if nbhd.index_of(s, d) is not None)
    return covered, total


# ---------------------------------------------------------------------------
# Annotated documents and the canonical on-disk format

SCHEMA_TAG = "formgraph/annotated-doc/v1"


@dataclass(frozen=True)
class DocStats:
    raw_entities: int = 0
    raw_words: int = 0
    dropped_other_entities: int = 0
    dropped_other_words: int = 0
    skipped_links: int = 0


@dataclass(frozen=True)
class AnnotatedDocument:
    document: Document
    gold_erg: EntityRelationGraph
    gold_wrg: WordRelationGraph
    stats: DocStats | None = None

    @property
    def doc_id(self) -> str:
        return self.document.doc_id


@dataclass
class DatasetSplit:
    train: list[AnnotatedDocument]
    validation: list[AnnotatedDocument]
    test: list[AnnotatedDocument]


def annotated_to_dict(ann: AnnotatedDocument) -> dict:
    doc = ann.document
    return {
        "schema": SCHEMA_TAG,
        "doc_id": doc.doc_id,
        "language": doc.language,
        "width": doc.width,
        "height": doc.height,
        "words": [{"id": w.word_id, "text": w.text,
                   "box": [w.box.x_left, w.box.y_top, w.box.x_right, w.box.y_bottom]}
                  for w in doc.words],
        "erg": {
            "entities": [{"id": e.entity_id, "kind": e.kind.value,
                          "word_ids": list(e.word_ids)}
                         for e in ann.gold_erg.entities],
            "edges": [[s, z.value, d] for s, z, d in ann.gold_erg.edges],
        },
        "wrg": {"edges": [[s, z.value, d] for s, z, d in ann.gold_wrg.edges]},
    }


def annotated_from_dict(data: dict) -> AnnotatedDocument:
    words = tuple(Word(word_id=w["id"], text=w["text"], box=BoundingBox(*w["box"]))
                  for w in data["words"])
    doc = Document(doc_id=data["doc_id"], width=data["width"], height=data["height"],
                   words=words, language=data.get("language", "en"))
    erg = canonicalize_erg(EntityRelationGraph(
        tuple(Entity(entity_id=e["id"], kind=EntityType(e["kind"]),
                     word_ids=tuple(e["word_ids"]))
              for e in data["erg"]["entities"]),
        tuple((s, EntityRelationLabel(z), d) for s, z, d in data["erg"]["edges"])))
    wrg = canonicalize_wrg(WordRelationGraph(
        tuple(w.word_id for w in words),
        tuple((s, WordRelationLabel(z), d) for s, z, d in data["wrg"]["edges"])))
    return AnnotatedDocument(document=doc, gold_erg=erg, gold_wrg=wrg)


def write_annotated(ann: AnnotatedDocument, path: Path | str) -> None:
    Path(path).write_text(json.dumps(annotated_to_dict(ann), sort_keys=True,
                                     separators=(",", ":")) + "\n")


def read_annotated(path: Path | str) -> AnnotatedDocument:
    return annotated_from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# FUNSD / XFUND parsing

_LINK_RULES = {
    (EntityType.QUESTION, EntityType.ANSWER): EntityRelationLabel.QUESTION_ANSWER,
    (EntityType.HEADER, EntityType.QUESTION): EntityRelationLabel.HEADER_QUESTION,
}

_LABEL_ALIASES = {"question": EntityType.QUESTION, "answer": EntityType.ANSWER,
                  "header": EntityType.HEADER, "section": EntityType.HEADER,
                  "other": EntityType.OTHER}


def _page_size_for(data: dict, path: Path) -> tuple[float, float]:
    if "width" in data and "height" in data:
        return float(data["width"]), float(data["height"])
    img = data.get("img")
    if isinstance(img, dict) and "width" in img and "height" in img:
        return float(img["width"]), float(img["height"])
    # fall back to a companion image next to the annotation directory
    for folder in (path.parent, path.parent.parent / "images"):
        for ext in (".png", ".jpg", ".jpeg"):
            candidate = folder / (path.stem + ext)
            if candidate.exists():
                from PIL import Image

                with Image.open(candidate) as im:
                    return float(im.width), float(im.height)
    raise ParseError(f"{path.name}: no page size field and no companion image")


def _parse_items(items: list, doc_id: str, width: float, height: float,
                 language: str) -> tuple[Document, EntityRelationGraph, DocStats]:
    """Shared FUNSD/XFUND entity-list parser.  Entities labeled "other" and
    their words are dropped; links whose endpoint labels are not
    (question, answer) or (header, question) are skipped and counted."""
    raw_entities = len(items)
    raw_words = 0
    dropped_entities = 0
    dropped_words = 0

    kept: list[tuple[int, EntityType, list[Word]]] = []
    labels: dict[int, EntityType] = {}
    links: set[tuple[int, int]] = set()
    for item in items:
        try:
            fid = item["id"]
            label_raw = item["label"]
            item_words = item["words"]
            linking = item.get("linking", [])
        except (KeyError, TypeError) as exc:
            raise ParseError(f"{doc_id}: malformed form item ({exc})") from exc
        if not isinstance(label_raw, str) or label_raw.lower() not in _LABEL_ALIASES:
            raise ParseError(f"{doc_id}: entity {fid}: unknown label {label_raw!r}")
        kind = _LABEL_ALIASES[label_raw.lower()]
        raw_words += len(item_words)
        if kind is EntityType.OTHER:
            dropped_entities += 1
            dropped_words += len(item_words)
            labels[fid] = kind
            continue
        if not item_words:
            raise ParseError(f"{doc_id}: entity {fid}: empty word list")
        words = []
        for w in item_words:
            try:
                box = BoundingBox(*[float(v) for v in w["box"]])
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{doc_id}: entity {fid}: bad word box ({exc})") from exc
            if box.x_right > width or box.y_bottom > height:
                raise ParseError(f"{doc_id}: entity {fid}: word box outside page")
            words.append(Word(word_id=-1, text=str(w.get("text", "")), box=box))
        if fid in labels:
            raise ParseError(f"{doc_id}: duplicate entity id {fid}")
        labels[fid] = kind
        kept.append((fid, kind, words))
        for pair in linking:
            if len(pair) != 2:
                raise ParseError(f"{doc_id}: entity {fid}: bad linking pair {pair!r}")
            links.add((int(pair[0]), int(pair[1])))

    # global reading order over retained words only
    flat: list[Word] = []
    spans: list[tuple[int, EntityType, int, int]] = []
    for fid, kind, words in kept:
        spans.append((fid, kind, len(flat), len(flat) + len(words)))
        flat.extend(words)
    perm = reading_order(flat)
    new_id = np.empty(len(flat), dtype=np.int64)
    for pos, orig in enumerate(perm):
        new_id[orig] = pos
    sorted_words = tuple(Word(word_id=k, text=flat[p].text, box=flat[p].box)
                         for k, p in enumerate(perm))
    document = Document(doc_id=doc_id, width=width, height=height,
                        words=sorted_words, language=language)

    entities = []
    id_map: dict[int, int] = {}
    for eid, (fid, kind, lo, hi) in enumerate(spans):
        ids = tuple(int(new_id[k]) for k in range(lo, hi))
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise ParseError(
                f"{doc_id}: entity {fid}: words not contiguous in reading order")
        id_map[fid] = eid
        entities.append(Entity(entity_id=eid, kind=kind, word_ids=ids))

    edges = []
    skipped_links = 0
    for u, v in sorted(links):
        if u not in labels or v not in labels:
            missing = u if u not in labels else v
            raise ParseError(f"{doc_id}: linking references unknown entity id {missing}")
        if labels[u] is EntityType.OTHER or labels[v] is EntityType.OTHER:
            skipped_links += 1
            continue
        if (labels[u], labels[v]) in _LINK_RULES:
            src, dst = u, v
        elif (labels[v], labels[u]) in _LINK_RULES:
            src, dst = v, u
        else:
            skipped_links += 1
            continue
        edges.append((id_map[src], _LINK_RULES[(labels[src], labels[dst])], id_map[dst]))

    erg = canonicalize_erg(EntityRelationGraph(tuple(entities), tuple(edges)))
    stats = DocStats(raw_entities=raw_entities, raw_words=raw_words,
                     dropped_other_entities=dropped_entities,
                     dropped_other_words=dropped_words,
                     skipped_links=skipped_links)
    return document, erg, stats


def parse_funsd_file(path: Path | str, language: str = "en"
                     ) -> tuple[Document, EntityRelationGraph, DocStats]:
    """Parse one FUNSD annotation file into a document and its raw entity
    graph (question-answer / header-question edges only; proximate relations
    are added separately by :func:`augment_proximate`)."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path.name}: unreadable annotation ({exc})") from exc
    if "form" not in data:
        raise ParseError(f"{path.name}: missing top-level 'form' array")
    width, height = _page_size_for(data, path)
    items = data["form"]
    if not items:
        warnings.warn(f"{path.name}: empty form array", stacklevel=2)
    return _parse_items(items, path.stem, width, height, language)


def annotate(document: Document, raw_erg: EntityRelationGraph,
             stats: DocStats | None = None) -> AnnotatedDocument:
    """Apply the proximate-relation rules and derive the gold word graph."""
    from .convert import erg_to_wrg

    erg = augment_proximate(raw_erg, document)
    return AnnotatedDocument(document=document, gold_erg=erg,
                             gold_wrg=erg_to_wrg(erg), stats=stats)


def load_funsd(path: Path | str, language: str = "en") -> AnnotatedDocument:
    """One FUNSD file -> fully annotated document (proximates + word graph)."""
    return annotate(*parse_funsd_file(path, language))


def load_xfund(path: Path | str, language: str) -> list[AnnotatedDocument]:
    """Parse an XFUND partition file ({"documents": [...]}) into annotated
    documents.  XFUND uses the same entity/link schema as FUNSD."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path.name}: unreadable annotation ({exc})") from exc
    if "documents" not in data:
        raise ParseError(f"{path.name}: missing top-level 'documents' array")
    out = []
    for entry in data["documents"]:
        doc_id = str(entry.get("id", f"{path.stem}-{len(out)}"))
        img = entry.get("img", {})
        if "width" not in img or "height" not in img:
            raise ParseError(f"{doc_id}: missing img width/height")
        if not entry.get("document"):
            warnings.warn(f"{doc_id}: empty document", stacklevel=2)
        document, erg, stats = _parse_items(entry.get("document", []), doc_id,
                                            float(img["width"]), float(img["height"]),
                                            language)
        out.append(annotate(document, erg, stats))
    return out


def funsd_split(root: Path | str, validation_size: int = 10) -> DatasetSplit:
    """Official-style split: training annotations in lexicographic filename
    order, last ``validation_size`` files held out for validation; the test
    directory is used as-is."""
    root = Path(root)
    train_files = sorted((root / "training_data" / "annotations").glob("*.json"))
    test_files = sorted((root / "testing_data" / "annotations").glob("*.json"))
    if not train_files or not test_files:
        raise ParseError(f"{root}: expected training_data/ and testing_data/ "
                         "with annotations/*.json")
    if len(train_files) <= validation_size:
        raise ParseError(f"{root}: need more than {validation_size} training files")
    cut = len(train_files) - validation_size
    return DatasetSplit(
        train=[load_funsd(p) for p in train_files[:cut]],
        validation=[load_funsd(p) for p in train_files[cut:]],
        test=[load_funsd(p) for p in test_files],
    )
