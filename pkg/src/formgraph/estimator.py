"""Scikit-learn style estimator facade so the parser composes with the wider
ecosystem (get_params/set_params, fit/predict/score, clone-compatible)."""
from __future__ import annotations

from typing import Sequence

from sklearn.base import BaseEstimator

from .convert import wrg_to_erg
from .graphs import Document, EntityRelationGraph, WordRelationGraph
from .ingest import AnnotatedDocument, DatasetSplit
from .metrics import relation_prf
from .model import ModelConfig, count_parameters
from .pipeline import predict_corpus


def validate_document(doc) -> Document:
    """Input check: a Document with dense reading-order word ids and boxes
    inside the page (box bounds are enforced by the type itself)."""
    if isinstance(doc, AnnotatedDocument):
        doc = doc.document
    if not isinstance(doc, Document):
        raise TypeError(f"expected Document, got {type(doc).__name__}")
    ids = [w.word_id for w in doc.words]
    if ids != list(range(len(ids))):
        raise ValueError(f"document {doc.doc_id}: word ids must be dense and "
                         "reading-ordered (run sort_reading_order first)")
    return doc


def _as_annotated(X, y) -> list[AnnotatedDocument]:
    if y is None:
        if not all(isinstance(x, AnnotatedDocument) for x in X):
            raise TypeError("fit needs AnnotatedDocument inputs or (documents, graphs)")
        return list(X)
    if len(X) != len(y):
        raise ValueError("X and y length mismatch")
    out = []
    for doc, wrg in zip(X, y):
        doc = validate_document(doc)
        if not isinstance(wrg, WordRelationGraph):
            raise TypeError("y must contain WordRelationGraph values")
        out.append(AnnotatedDocument(document=doc, gold_erg=wrg_to_erg(wrg, doc),
                                     gold_wrg=wrg))
    return out


class RelationGraphParser(BaseEstimator):
    """Learns word-relation graphs from page layout alone.

    fit(X, y=None): X is a sequence of AnnotatedDocument (or plain Document
    with y a matching sequence of gold WordRelationGraph).  A validation
    portion drives early stopping and checkpoint selection; pass
    ``validation_data`` to fit to control it explicitly.

    predict(X): list of decoded WordRelationGraph (greedy or exact ILP).
    """

    def __init__(self, heads=3, hidden_dim=64, leaky_slope=0.2,
                 learning_rate=1e-3, max_iterations=500, patience=100,
                 k=10, seed=0, decoder="ilp", use_edge_attention=True,
                 use_edge_classifier=True, no_relation_weight=1.0,
                 validation_fraction=0.1, time_limit=60.0, max_nodes=5000):
        self.heads = heads
        self.hidden_dim = hidden_dim
        self.leaky_slope = leaky_slope
        self.learning_rate = learning_rate
        self.max_iterations = max_iterations
        self.patience = patience
        self.k = k
        self.seed = seed
        self.decoder = decoder
        self.use_edge_attention = use_edge_attention
        self.use_edge_classifier = use_edge_classifier
        self.no_relation_weight = no_relation_weight
        self.validation_fraction = validation_fraction
        self.time_limit = time_limit
        self.max_nodes = max_nodes

    def _config(self) -> ModelConfig:
        return ModelConfig(heads=self.heads, hidden_dim=self.hidden_dim,
                           leaky_slope=self.leaky_slope,
                           learning_rate=self.learning_rate,
                           max_iterations=self.max_iterations,
                           patience=self.patience, k=self.k, seed=self.seed,
                           use_edge_attention=self.use_edge_attention,
                           use_edge_classifier=self.use_edge_classifier,
                           no_relation_weight=self.no_relation_weight)

    def fit(self, X: Sequence, y=None, validation_data: Sequence | None = None):
        from .training import train

        docs = _as_annotated(X, y)
        if validation_data is not None:
            val = list(validation_data)
            trn = docs
        else:
            n_val = max(1, int(round(len(docs) * self.validation_fraction)))
            if n_val >= len(docs):
                raise ValueError("not enough documents to hold out validation data")
            trn, val = docs[:-n_val], docs[-n_val:]
        result = train(DatasetSplit(train=trn, validation=val, test=[]),
                       self._config())
        self.params_ = result.params
        self.history_ = result.log_as_dicts()
        self.n_iter_ = len(result.log)
        self.best_iteration_ = result.best_iteration
        self.validation_f1_ = result.best_f1
        self.n_parameters_ = count_parameters(result.params)
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "params_"):
            raise AttributeError("this RelationGraphParser is not fitted yet")

    def predict(self, X: Sequence, decoder: str | None = None
                ) -> list[WordRelationGraph]:
        self._check_fitted()
        docs = [validate_document(x) for x in X]
        results = predict_corpus(docs, self.params_, self._config(),
                                 decoder=decoder or self.decoder,
                                 time_limit=self.time_limit,
                                 max_nodes=self.max_nodes)
        return [r.wrg for r in results]

    def predict_entities(self, X: Sequence, decoder: str | None = None
                         ) -> list[EntityRelationGraph | None]:
        self._check_fitted()
        docs = [validate_document(x) for x in X]
        results = predict_corpus(docs, self.params_, self._config(),
                                 decoder=decoder or self.decoder,
                                 time_limit=self.time_limit,
                                 max_nodes=self.max_nodes)
        return [r.erg for r in results]

    def score(self, X: Sequence, y=None) -> float:
        """Micro-averaged relation F1 on gold-annotated documents."""
        docs = _as_annotated(X, y)
        preds = self.predict([a.document for a in docs])
        return relation_prf(preds, [a.gold_wrg for a in docs]).f1
