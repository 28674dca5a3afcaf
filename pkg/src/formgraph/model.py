"""The relation scorer: a single-layer, multi-head graph attention network
over word nodes with relative-spacing edge features, scored by a linear
classifier over pair embeddings.

Everything is plain float64 numpy.  Per-node reductions (attention softmax,
message aggregation) use sorted-incidence segment sums, so a whole packed
batch is a handful of vectorized operations.  The backward pass is written by
hand as the exact reverse of the forward computation; ``loss_and_gradients``
is checked against central finite differences in the test suite.  No function
here ever sees word text.
"""
from __future__ import annotations

import base64
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse

from .features import EDGE_FEATURE_DIM, NODE_FEATURE_DIM, document_node_features, pair_edge_features
from .graphs import LABEL_INDEX, NUM_LABELS, Document, WordRelationGraph, WordRelationLabel
from .ingest import AnnotatedDocument, Neighborhood, build_neighborhood

NO_RELATION = LABEL_INDEX[WordRelationLabel.NO_RELATION]


@dataclass(frozen=True)
class ModelConfig:
    heads: int = 3
    hidden_dim: int = 64
    leaky_slope: float = 0.2
    label_count: int = NUM_LABELS
    seed: int = 0
    learning_rate: float = 1e-3
    max_iterations: int = 500
    patience: int = 100
    k: int = 10
    use_edge_attention: bool = True
    use_edge_classifier: bool = True
    activation: str = "tanh"
    no_relation_weight: float = 1.0
    # spacing features live at ~1e-2 in page units; this fixed gain keeps the
    # useful classifier weights at an Adam-reachable scale
    edge_feature_gain: float = 16.0
    # documents per optimizer step; 0 = one step over the whole corpus
    batch_size: int = 1

    def __post_init__(self) -> None:
        if self.hidden_dim <= 0 or self.heads <= 0:
            raise ValueError("heads and hidden_dim must be positive")
        if self.label_count != NUM_LABELS:
            raise ValueError(f"label_count must be {NUM_LABELS}")
        if self.activation != "tanh":
            raise ValueError("only the tanh aggregation nonlinearity is supported")

    @property
    def attention_dim(self) -> int:
        return self.hidden_dim * (3 if self.use_edge_attention else 2)

    @property
    def classifier_dim(self) -> int:
        return 2 * self.hidden_dim + (EDGE_FEATURE_DIM if self.use_edge_classifier else 0)


ModelParams = dict[str, np.ndarray]

_PARAM_ORDER = ("node_proj", "edge_proj", "attn", "cls_w", "cls_b")


def init_params(cfg: ModelConfig) -> ModelParams:
    """Fan-in-scaled uniform initialization, deterministic in cfg.seed."""
    rng = np.random.default_rng(cfg.seed)

    def uniform(shape: tuple[int, ...], fan_in: int) -> np.ndarray:
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape).astype(np.float64)

    params: ModelParams = {
        "node_proj": uniform((cfg.heads, cfg.hidden_dim, NODE_FEATURE_DIM), NODE_FEATURE_DIM),
    }
    if cfg.use_edge_attention:
        params["edge_proj"] = uniform((cfg.heads, cfg.hidden_dim, EDGE_FEATURE_DIM),
                                      EDGE_FEATURE_DIM)
    params["attn"] = uniform((cfg.heads, cfg.attention_dim), cfg.attention_dim)
    params["cls_w"] = uniform((cfg.label_count, cfg.classifier_dim), cfg.classifier_dim)
    params["cls_b"] = np.zeros(cfg.label_count, dtype=np.float64)
    return params


def count_parameters(params: ModelParams) -> int:
    return int(sum(p.size for p in params.values()))


def zeros_like_params(params: ModelParams) -> ModelParams:
    return {k: np.zeros_like(v) for k, v in params.items()}


def flatten_params(params: ModelParams) -> np.ndarray:
    return np.concatenate([params[k].ravel() for k in _PARAM_ORDER if k in params])


def unflatten_params(flat: np.ndarray, template: ModelParams) -> ModelParams:
    out: ModelParams = {}
    pos = 0
    for k in _PARAM_ORDER:
        if k not in template:
            continue
        size = template[k].size
        out[k] = flat[pos:pos + size].reshape(template[k].shape).copy()
        pos += size
    if pos != flat.size:
        raise ValueError("flat vector size does not match parameter template")
    return out


# ---------------------------------------------------------------------------
# Prepared documents


@dataclass(frozen=True)
class _Segments:
    """Sorted-index view for fast one-dimensional per-node reductions via
    np.add.reduceat / np.maximum.reduceat; segment s belongs to ``ids[s]``."""

    perm: np.ndarray
    starts: np.ndarray
    ids: np.ndarray

    @classmethod
    def over(cls, index: np.ndarray) -> "_Segments":
        perm = np.argsort(index, kind="stable")
        ordered = index[perm]
        if len(ordered) == 0:
            return cls(perm, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
        boundary = np.concatenate([[True], ordered[1:] != ordered[:-1]])
        starts = np.nonzero(boundary)[0]
        return cls(perm, starts, ordered[starts])

    def sum1d(self, values: np.ndarray, out: np.ndarray) -> np.ndarray:
        if len(self.starts):
            out[self.ids] += np.add.reduceat(values[self.perm], self.starts)
        return out

    def max1d(self, values: np.ndarray, out: np.ndarray) -> np.ndarray:
        if len(self.starts):
            out[self.ids] = np.maximum.reduceat(values[self.perm], self.starts)
        return out


@dataclass(frozen=True)
class PreparedDocument:
    """Feature tensors and incidence structure for one document (or a batch
    of documents packed with disjoint node ids).  Incidence slot k < P is
    pair k seen from its lower endpoint; slot k + P is the same pair seen
    from the higher endpoint.  ``scatter_node``/``scatter_other`` are sparse
    (n x 2P) one-hot matrices accumulating slot values onto the slot's own /
    opposite endpoint."""

    doc_id: str
    n_words: int
    pairs: np.ndarray          # (P, 2) word ids, i < j
    node_x: np.ndarray         # (n, 4)
    edge_d: np.ndarray         # (P, 6)
    inc_node: np.ndarray       # (2P,)
    inc_other: np.ndarray      # (2P,)
    node_segments: _Segments
    scatter_node: sparse.csr_matrix
    scatter_other: sparse.csr_matrix
    gold: np.ndarray | None = None     # (P,) gold label ids, NO_RELATION filled
    uncovered_gold: int = 0            # gold edges outside the neighborhood
    doc_slices: tuple[tuple[str, int, int], ...] = ()


def gold_pair_labels(wrg: WordRelationGraph, nbhd: Neighborhood) -> tuple[np.ndarray, int]:
    """Per-candidate-pair gold labels; edges outside the neighborhood are
    excluded and counted as coverage loss."""
    gold = np.full(len(nbhd), NO_RELATION, dtype=np.int64)
    uncovered = 0
    for s, z, d in wrg.edges:
        p = nbhd.index_of(s, d)
        if p is None:
            uncovered += 1
        else:
            gold[p] = LABEL_INDEX[z]
    return gold, uncovered


def _scatter_matrix(index: np.ndarray, n: int) -> sparse.csr_matrix:
    cols = np.arange(len(index), dtype=np.int64)
    data = np.ones(len(index), dtype=np.float64)
    return sparse.csr_matrix((data, (index, cols)), shape=(n, len(index)))


def _assemble(doc_id: str, n: int, pairs: np.ndarray, node_x: np.ndarray,
              edge_d: np.ndarray, gold: np.ndarray | None, uncovered: int,
              slices) -> PreparedDocument:
    inc_node = np.concatenate([pairs[:, 0], pairs[:, 1]])
    inc_other = np.concatenate([pairs[:, 1], pairs[:, 0]])
    return PreparedDocument(doc_id=doc_id, n_words=n, pairs=pairs,
                            node_x=node_x, edge_d=edge_d,
                            inc_node=inc_node, inc_other=inc_other,
                            node_segments=_Segments.over(inc_node),
                            scatter_node=_scatter_matrix(inc_node, n),
                            scatter_other=_scatter_matrix(inc_other, n),
                            gold=gold, uncovered_gold=uncovered,
                            doc_slices=tuple(slices))


def prepare_document(doc: Document, nbhd: Neighborhood | None = None,
                     gold: WordRelationGraph | None = None,
                     k: int = 10) -> PreparedDocument:
    if nbhd is None:
        nbhd = build_neighborhood(doc, k)
    gold_arr, uncovered = (None, 0)
    if gold is not None:
        gold_arr, uncovered = gold_pair_labels(gold, nbhd)
    return _assemble(doc.doc_id, len(doc.words), nbhd.pairs,
                     document_node_features(doc), pair_edge_features(doc, nbhd.pairs),
                     gold_arr, uncovered, [(doc.doc_id, 0, len(nbhd.pairs))])


def prepare_annotated(ann: AnnotatedDocument, k: int) -> PreparedDocument:
    nbhd = build_neighborhood(ann.document, k)
    return prepare_document(ann.document, nbhd, gold=ann.gold_wrg)


def pack_documents(preps: Sequence[PreparedDocument]) -> PreparedDocument:
    """Pack documents into one disjoint graph so an optimizer step is a
    single vectorized forward/backward pass."""
    if len(preps) == 1:
        return preps[0]
    node_off, pair_off = 0, 0
    pairs, xs, ds, golds, slices = [], [], [], [], []
    uncovered = 0
    for prep in preps:
        pairs.append(prep.pairs + node_off)
        xs.append(prep.node_x)
        ds.append(prep.edge_d)
        if prep.gold is not None:
            golds.append(prep.gold)
        slices.append((prep.doc_id, pair_off, pair_off + len(prep.pairs)))
        uncovered += prep.uncovered_gold
        node_off += prep.n_words
        pair_off += len(prep.pairs)
    return _assemble(
        "<batch>", node_off,
        np.concatenate(pairs) if pairs else np.zeros((0, 2), dtype=np.int64),
        np.concatenate(xs) if xs else np.zeros((0, NODE_FEATURE_DIM)),
        np.concatenate(ds) if ds else np.zeros((0, EDGE_FEATURE_DIM)),
        np.concatenate(golds) if golds else None, uncovered, slices)


# ---------------------------------------------------------------------------
# Forward


@dataclass(frozen=True)
class ScoreTable:
    """Per candidate pair, per label: pre-softmax logits and log-softmax."""

    pairs: np.ndarray
    logits: np.ndarray
    log_probs: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    def __len__(self) -> int:
        return len(self.pairs)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    if logits.size == 0:
        return logits.copy()
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _forward_cache(prep: PreparedDocument, params: ModelParams, cfg: ModelConfig) -> dict:
    """Evaluate all heads together, keeping every pair-space array narrow.

    Linearity lets both expensive reductions collapse into feature space:
    the attention logit is a per-head 4- or 6-vector against raw features
    (a . P h = h . (P^T a)), and the aggregated message is the projection of
    the attention-weighted sum of raw features (sum a (P h_o + Q d) =
    P sum(a h_o) + Q sum(a d)).  Nothing of size (pairs, hidden) is ever
    materialized, which matters because this model is memory-bound.
    """
    n, P = prep.n_words, len(prep.pairs)
    H, hid = cfg.heads, cfg.hidden_dim
    inc_n = prep.inc_node
    pi, pj = prep.pairs[:, 0], prep.pairs[:, 1]
    segs = prep.node_segments
    isolated = np.ones(n, dtype=bool)
    isolated[segs.ids] = False
    d = prep.edge_d * cfg.edge_feature_gain

    attn = params["attn"]
    Wn = params["node_proj"]                                   # (H, hid, 4)
    We = params["edge_proj"] if cfg.use_edge_attention else None
    a_i, a_j = attn[:, :hid], attn[:, hid:2 * hid]
    kappa_i = np.einsum("hkd,hk->dh", Wn, a_i)                 # (4, H)
    kappa_j = np.einsum("hkd,hk->dh", Wn, a_j)
    X = prep.node_x

    if P:
        t = (X @ kappa_i)[pi] + (X @ kappa_j)[pj]              # (P, H)
        if cfg.use_edge_attention:
            t = t + d @ np.einsum("hkd,hk->dh", We, attn[:, 2 * hid:])
        lg = np.where(t > 0, t, cfg.leaky_slope * t)
        g = np.concatenate([lg, lg])                           # (2P, H)
        m = np.full((n, H), -np.inf)
        if len(segs.starts):
            m[segs.ids] = np.maximum.reduceat(g[segs.perm], segs.starts, axis=0)
        e = np.exp(g - m[inc_n])
        denom = np.zeros((n, H))
        if len(segs.starts):
            denom[segs.ids] = np.add.reduceat(e[segs.perm], segs.starts, axis=0)
        alpha = e / denom[inc_n]                               # (2P, H)
        # attention-weighted raw-feature aggregates per node and head
        x_other = np.concatenate([X[pj], X[pi]])               # (2P, 4)
        F = (prep.scatter_node @
             (alpha[:, :, None] * x_other[:, None, :]).reshape(2 * P, H * 4)
             ).reshape(n, H, 4)
        S = np.einsum("nhd,hkd->nhk", F, Wn)
        if cfg.use_edge_attention:
            d2 = np.concatenate([d, d])
            G = (prep.scatter_node @
                 (alpha[:, :, None] * d2[:, None, :]).reshape(2 * P, H * EDGE_FEATURE_DIM)
                 ).reshape(n, H, EDGE_FEATURE_DIM)
            S += np.einsum("nhd,hkd->nhk", G, We)
        else:
            G = None
        S = S.reshape(n, H * hid)
        if isolated.any():
            S[isolated] = X[isolated] @ Wn.reshape(H * hid, -1).T
    else:
        t = np.zeros((0, H))
        alpha = np.zeros((0, H))
        F = G = None
        S = X @ Wn.reshape(H * hid, -1).T
    Hh = np.tanh(S)                                            # (n, H*hid)
    emb = Hh.reshape(n, H, hid).mean(axis=1)                   # (n, hid)

    # classifier slices: logits = (emb W_i^T)[pi] + (emb W_j^T)[pj] + d W_d^T + b
    cls_w = params["cls_w"]
    Li = emb @ cls_w[:, :hid].T                                # (n, labels)
    Lj = emb @ cls_w[:, hid:2 * hid].T
    logits = Li[pi] + Lj[pj] + params["cls_b"]
    if cfg.use_edge_classifier:
        logits = logits + d @ cls_w[:, 2 * hid:].T
    return {"t": t, "alpha": alpha, "F": F, "G": G, "Hh": Hh, "emb": emb,
            "logits": logits, "isolated": isolated,
            "log_probs": _log_softmax(logits), "edge_d": d}


def forward(prep: PreparedDocument, params: ModelParams, cfg: ModelConfig) -> ScoreTable:
    cache = _forward_cache(prep, params, cfg)
    return ScoreTable(pairs=prep.pairs, logits=cache["logits"],
                      log_probs=cache["log_probs"])


def score_document(doc: Document, params: ModelParams, cfg: ModelConfig,
                   nbhd: Neighborhood | None = None) -> ScoreTable:
    return forward(prepare_document(doc, nbhd, k=cfg.k), params, cfg)


# ---------------------------------------------------------------------------
# Loss and gradients


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    pair_count: int
    uncovered_gold: int


def _pair_weights(gold: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    w = np.ones(len(gold), dtype=np.float64)
    if cfg.no_relation_weight != 1.0:
        w[gold == NO_RELATION] = cfg.no_relation_weight
    return w


def loss(scores: ScoreTable, gold: np.ndarray, cfg: ModelConfig,
         uncovered_gold: int = 0) -> LossBreakdown:
    """Summed cross entropy of the gold label over all candidate pairs."""
    if len(scores) == 0:
        return LossBreakdown(0.0, 0, uncovered_gold)
    w = _pair_weights(gold, cfg)
    picked = scores.log_probs[np.arange(len(gold)), gold]
    return LossBreakdown(float(-(w * picked).sum()), len(gold), uncovered_gold)


def loss_and_gradients(prep: PreparedDocument, params: ModelParams,
                       cfg: ModelConfig) -> tuple[LossBreakdown, ModelParams]:
    """Exact analytic gradient of the summed cross-entropy loss, via a
    hand-written reverse pass mirroring ``_forward_cache``."""
    if prep.gold is None:
        raise ValueError("prepared document carries no gold labels")
    cache = _forward_cache(prep, params, cfg)
    n, P = prep.n_words, len(prep.pairs)
    hid = cfg.hidden_dim
    grads = zeros_like_params(params)
    lb = loss(ScoreTable(prep.pairs, cache["logits"], cache["log_probs"]),
              prep.gold, cfg, prep.uncovered_gold)
    if P == 0:
        return lb, grads

    inc_n = prep.inc_node
    pi, pj = prep.pairs[:, 0], prep.pairs[:, 1]
    H = cfg.heads
    segs = prep.node_segments
    isolated = cache["isolated"]

    probs = np.exp(cache["log_probs"])
    dlogits = probs.copy()
    dlogits[np.arange(P), prep.gold] -= 1.0
    dlogits *= _pair_weights(prep.gold, cfg)[:, None]

    grads["cls_w"] = dlogits.T @ cache["cls_in"]
    grads["cls_b"] = dlogits.sum(axis=0)
    dcls_in = dlogits @ params["cls_w"]

    # slot layout: [pair seen from i | pair seen from j]
    demb = prep.scatter_node @ np.concatenate([dcls_in[:, :hid], dcls_in[:, hid:2 * hid]])
    demb /= H   # emb is the mean over heads

    Hh = cache["Hh"]
    dS = (np.repeat(demb, H, axis=0).reshape(n, H, hid).reshape(n, H * hid)
          * (1.0 - Hh ** 2))
    dU = np.zeros_like(cache["U"])
    dU[isolated] += dS[isolated]
    dS_inc = dS.copy()
    dS_inc[isolated] = 0.0

    dweighted = dS_inc[inc_n]                               # (2P, H*hid)
    alpha, msg = cache["alpha"], cache["msg"]
    dw3 = dweighted.reshape(2 * P, H, hid)
    dalpha = np.einsum("phk,phk->ph", dw3, msg.reshape(2 * P, H, hid))
    dmsg = (dw3 * alpha[:, :, None]).reshape(2 * P, H * hid)
    dU += prep.scatter_other @ dmsg
    dE = (dmsg[:P] + dmsg[P:]) if cfg.use_edge_attention else None

    # segmented softmax backward over each node's incident slots
    dot = np.zeros((n, H))
    if len(segs.starts):
        dot[segs.ids] = np.add.reduceat((alpha * dalpha)[segs.perm], segs.starts, axis=0)
    dg = alpha * (dalpha - dot[inc_n])
    dlg = dg[:P] + dg[P:]                                   # (P, H)
    dt = dlg * np.where(cache["t"] > 0, 1.0, cfg.leaky_slope)

    attn = params["attn"]
    U3 = cache["U"].reshape(n, H, hid)
    grads["attn"][:, :hid] = np.einsum("ph,phk->hk", dt, U3[pi])
    grads["attn"][:, hid:2 * hid] = np.einsum("ph,phk->hk", dt, U3[pj])
    dnode = np.concatenate([
        (dt[:, :, None] * attn[None, :, :hid]).reshape(P, H * hid),
        (dt[:, :, None] * attn[None, :, hid:2 * hid]).reshape(P, H * hid)])
    dU += prep.scatter_node @ dnode
    if cfg.use_edge_attention:
        E3 = cache["E"].reshape(P, H, hid)
        grads["attn"][:, 2 * hid:] = np.einsum("ph,phk->hk", dt, E3)
        dE += (dt[:, :, None] * attn[None, :, 2 * hid:]).reshape(P, H * hid)
        grads["edge_proj"] = (dE.T @ cache["edge_d"]).reshape(H, hid, -1)
    grads["node_proj"] = (dU.T @ prep.node_x).reshape(H, hid, -1)
    return lb, grads


# ---------------------------------------------------------------------------
# Greedy decoding


def greedy_labels(scores: ScoreTable) -> np.ndarray:
    """Per-pair argmax over all labels; ties resolve to the lower label index."""
    if len(scores) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.argmax(scores.log_probs, axis=1)


def predict_greedy(scores: ScoreTable, n_words: int) -> WordRelationGraph:
    from .ilp import assignment_to_wrg

    return assignment_to_wrg(greedy_labels(scores), scores.pairs, n_words)


# ---------------------------------------------------------------------------
# Checkpoints

CHECKPOINT_TAG = "formgraph/checkpoint/v1"


def _encode_array(arr: np.ndarray) -> dict:
    little = arr.astype("<f8", copy=False)
    return {"shape": list(arr.shape),
            "data": base64.b64encode(little.tobytes(order="C")).decode("ascii")}


def _decode_array(blob: dict) -> np.ndarray:
    raw = base64.b64decode(blob["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(blob["shape"]).astype(np.float64)


def save_checkpoint(path: Path | str, params: ModelParams, cfg: ModelConfig,
                    iteration: int = 0, validation_f1: float = 0.0) -> None:
    payload = {
        "schema": CHECKPOINT_TAG,
        "config": asdict(cfg),
        "iteration": iteration,
        "validation_f1": validation_f1,
        "params": {k: _encode_array(params[k]) for k in _PARAM_ORDER if k in params},
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")


def load_checkpoint(path: Path | str) -> tuple[ModelParams, ModelConfig, dict]:
    payload = json.loads(Path(path).read_text())
    if payload.get("schema") != CHECKPOINT_TAG:
        raise ValueError(f"{path}: not a checkpoint file")
    cfg = ModelConfig(**payload["config"])
    params = {k: _decode_array(v) for k, v in payload["params"].items()}
    meta = {"iteration": payload["iteration"], "validation_f1": payload["validation_f1"]}
    return params, cfg, meta
