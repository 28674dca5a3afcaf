import numpy as np
import pytest
from hypothesis import given, strategies as st

from formgraph.features import edge_features, node_features
from formgraph.graphs import BoundingBox

boxes = st.builds(
    lambda x, y, w, h: BoundingBox(x, y, x + w, y + h),
    st.floats(0, 500), st.floats(0, 700), st.floats(0, 200), st.floats(0, 60))


def test_full_page_box():
    f = node_features(BoundingBox(0, 0, 800, 600), 800, 600)
    assert np.allclose(f, [0, 0, 1, 1])


def test_node_features_arithmetic():
    f = node_features(BoundingBox(10, 10, 20, 20), 100, 100)
    assert np.allclose(f, [0.1, 0.1, 0.2, 0.2])


def test_degenerate_box_accepted():
    f = node_features(BoundingBox(30, 40, 30, 40), 100, 200)
    assert np.allclose(f, [0.3, 0.2, 0.3, 0.2])


def test_zero_page_size_rejected():
    with pytest.raises(ValueError):
        node_features(BoundingBox(0, 0, 1, 1), 0, 100)


def test_identical_boxes():
    b = BoundingBox(10, 10, 30, 22)
    d = edge_features(b, b, 100, 100)
    # d_x2 is the box width, d_y2 the height; pure differences vanish
    assert np.allclose(d, [0, 0.2, 0, 0, 0.12, 0])


def test_edge_features_worked_example():
    d = edge_features(BoundingBox(10, 10, 20, 20), BoundingBox(30, 10, 40, 20), 100, 100)
    assert np.allclose(d, [-0.20, -0.10, -0.20, 0.0, 0.10, 0.0])


@given(boxes, boxes)
def test_antisymmetry_of_pure_difference_components(bi, bj):
    dij = edge_features(bi, bj, 1000, 1000)
    dji = edge_features(bj, bi, 1000, 1000)
    for k in (0, 2, 3, 5):  # left-left, right-right along both axes
        assert dij[k] == pytest.approx(-dji[k], abs=1e-12)


@given(boxes, boxes, st.floats(0, 100), st.floats(0, 100))
def test_translation_invariance(bi, bj, dx, dy):
    def shift(b):
        return BoundingBox(b.x_left + dx, b.y_top + dy, b.x_right + dx, b.y_bottom + dy)

    a = edge_features(bi, bj, 2000, 2000)
    b = edge_features(shift(bi), shift(bj), 2000, 2000)
    assert np.allclose(a, b, atol=1e-12)


def test_language_independence_interface():
    # feature functions accept geometry only; there is no text parameter
    import inspect

    for fn in (node_features, edge_features):
        assert "text" not in inspect.signature(fn).parameters
        assert "word" not in inspect.signature(fn).parameters
