import pytest
from hypothesis import given, strategies as st

from formgraph.graphs import (
    BoundingBox,
    Document,
    Entity,
    EntityRelationGraph,
    EntityRelationLabel,
    EntityType,
    MalformedGraphError,
    Word,
    WordRelationGraph,
    WordRelationLabel,
    canonicalize,
    canonicalize_wrg,
)

QA = WordRelationLabel.QUESTION_ANSWER
SE = WordRelationLabel.SAME_ENTITY
PH = WordRelationLabel.PROXIMATE_H


def wrg(*edges, words=10):
    return WordRelationGraph(tuple(range(words)), tuple(edges))


def test_undirected_edge_stored_low_high():
    g = canonicalize(wrg((5, PH, 2)))
    assert g.edges == ((2, PH, 5),)


def test_directed_edge_orientation_kept():
    g = canonicalize(wrg((5, QA, 2)))
    assert g.edges == ((5, QA, 2),)


def test_canonicalize_idempotent():
    g = canonicalize(wrg((5, PH, 2), (1, QA, 3), (0, SE, 1)))
    assert canonicalize(g) == g


def test_equality_invariant_to_edge_order():
    a = canonicalize(wrg((1, QA, 2), (3, PH, 4)))
    b = canonicalize(wrg((4, PH, 3), (1, QA, 2)))
    assert a == b


def test_conflicting_labels_on_pair_rejected():
    with pytest.raises(MalformedGraphError):
        canonicalize(wrg((1, QA, 2), (1, SE, 2)))


def test_conflicting_labels_across_orientations_rejected():
    with pytest.raises(MalformedGraphError):
        canonicalize(wrg((1, QA, 2), (2, SE, 1)))


def test_duplicate_identical_edges_deduplicated():
    g = canonicalize(wrg((2, PH, 5), (5, PH, 2)))
    assert g.edges == ((2, PH, 5),)


def test_no_relation_edge_rejected():
    with pytest.raises(MalformedGraphError):
        canonicalize(wrg((1, WordRelationLabel.NO_RELATION, 2)))


def test_self_edge_rejected():
    with pytest.raises(MalformedGraphError):
        canonicalize(wrg((3, SE, 3)))


@given(st.lists(st.tuples(st.integers(0, 8), st.sampled_from(list(WordRelationLabel)[:5]),
                          st.integers(0, 8)), max_size=12))
def test_canonicalize_idempotence_property(edges):
    edges = [(s, z, d) for s, z, d in edges if s != d]
    try:
        g = canonicalize(wrg(*edges))
    except MalformedGraphError:
        return
    assert canonicalize(g) == g


def test_bounding_box_validation():
    with pytest.raises(ValueError):
        BoundingBox(10, 0, 5, 10)
    with pytest.raises(ValueError):
        BoundingBox(-1, 0, 5, 10)
    b = BoundingBox(3, 4, 3, 4)  # zero-area boxes are fine
    assert b.x_center == 3 and b.y_center == 4


def test_document_rejects_word_outside_page():
    w = Word(0, "x", BoundingBox(0, 0, 120, 20))
    with pytest.raises(ValueError):
        Document("d", 100, 100, (w,))


def test_entity_validation():
    with pytest.raises(ValueError):
        Entity(0, EntityType.QUESTION, ())
    with pytest.raises(ValueError):
        Entity(0, EntityType.QUESTION, (3, 2))


def test_erg_canonicalization_renumbers_by_first_word():
    ents = (Entity(7, EntityType.ANSWER, (5, 6)), Entity(2, EntityType.QUESTION, (0, 1)))
    g = canonicalize(EntityRelationGraph(ents, ((2, EntityRelationLabel.QUESTION_ANSWER, 7),)))
    assert [e.entity_id for e in g.entities] == [0, 1]
    assert g.entities[0].kind is EntityType.QUESTION
    assert g.edges == ((0, EntityRelationLabel.QUESTION_ANSWER, 1),)


def test_erg_shared_word_rejected():
    ents = (Entity(0, EntityType.QUESTION, (0, 1)), Entity(1, EntityType.ANSWER, (1, 2)))
    with pytest.raises(MalformedGraphError):
        canonicalize(EntityRelationGraph(ents, ()))
