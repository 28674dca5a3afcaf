"""Language-independent geometric features.

Node features are page-normalized box corners; edge features are relative
spacings between the normalized boxes of a word pair.  Word text never
reaches this module: the functions take boxes and page size only.
"""
from __future__ import annotations

import numpy as np

from .graphs import BoundingBox, Document

NODE_FEATURE_DIM = 4
EDGE_FEATURE_DIM = 6


def node_features(box: BoundingBox, width: float, height: float) -> np.ndarray:
    """(x_left/W, y_top/H, x_right/W, y_bottom/H), each in [0, 1]."""
    if width <= 0 or height <= 0:
        raise ValueError("page width/height must be positive")
    return np.array([box.x_left / width, box.y_top / height,
                     box.x_right / width, box.y_bottom / height], dtype=np.float64)


def edge_features(box_i: BoundingBox, box_j: BoundingBox,
                  width: float, height: float) -> np.ndarray:
    """Relative spacing vector [d_x1, d_x2, d_x3, d_y1, d_y2, d_y3].

    On normalized coordinates: d_x1 = left-left, d_x2 = right-left,
    d_x3 = right-right differences (i minus j), and likewise along y.
    Invariant under any global translation of both boxes.
    """
    xi = node_features(box_i, width, height)
    xj = node_features(box_j, width, height)
    return np.array([
        xi[0] - xj[0],   # x_i1 - x_j1
        xi[2] - xj[0],   # x_i2 - x_j1
        xi[2] - xj[2],   # x_i2 - x_j2
        xi[1] - xj[1],   # y_i1 - y_j1
        xi[3] - xj[1],   # y_i2 - y_j1
        xi[3] - xj[3],   # y_i2 - y_j2
    ], dtype=np.float64)


def document_node_features(doc: Document) -> np.ndarray:
    """(n, 4) node feature matrix in word-id order."""
    out = np.empty((len(doc.words), NODE_FEATURE_DIM), dtype=np.float64)
    for k, w in enumerate(doc.words):
        out[k] = node_features(w.box, doc.width, doc.height)
    return out


def pair_edge_features(doc: Document, pairs: np.ndarray) -> np.ndarray:
    """(P, 6) edge feature matrix for an array of (i, j) word-id pairs."""
    x = document_node_features(doc)
    i, j = pairs[:, 0], pairs[:, 1]
    return np.stack([
        x[i, 0] - x[j, 0],
        x[i, 2] - x[j, 0],
        x[i, 2] - x[j, 2],
        x[i, 1] - x[j, 1],
        x[i, 3] - x[j, 1],
        x[i, 3] - x[j, 3],
    ], axis=1)
