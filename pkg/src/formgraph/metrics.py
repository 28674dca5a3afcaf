"""Micro-averaged precision/recall/F1 for relation and entity predictions,
plus the experiment harnesses (zero-shot transfer, neighborhood tradeoff,
ablations)."""
from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .graphs import (
    EntityRelationGraph,
    WordRelationGraph,
    WordRelationLabel,
    canonicalize_erg,
    canonicalize_wrg,
)
from .ingest import AnnotatedDocument, DatasetSplit, Neighborhood, build_neighborhood, edge_coverage


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass(frozen=True)
class LabelPrf:
    precision: float
    recall: float
    f1: float
    tp: int
    n_pred: int
    n_gold: int


@dataclass(frozen=True)
class PrfReport:
    precision: float
    recall: float
    f1: float
    tp: int
    n_pred: int
    n_gold: int
    per_label: dict[str, LabelPrf]

    def as_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "tp": self.tp, "predicted": self.n_pred, "gold": self.n_gold,
                "per_label": {k: vars(v) for k, v in sorted(self.per_label.items())}}


def _report(tp_by: dict[str, int], pred_by: dict[str, int], gold_by: dict[str, int]
            ) -> PrfReport:
    keys = sorted(set(pred_by) | set(gold_by))
    per_label = {}
    for k in keys:
        tp, np_, ng = tp_by.get(k, 0), pred_by.get(k, 0), gold_by.get(k, 0)
        p = tp / np_ if np_ else 0.0
        r = tp / ng if ng else 0.0
        per_label[k] = LabelPrf(p, r, _f1(p, r), tp, np_, ng)
    tp, np_, ng = sum(tp_by.values()), sum(pred_by.values()), sum(gold_by.values())
    p = tp / np_ if np_ else 0.0
    r = tp / ng if ng else 0.0
    return PrfReport(p, r, _f1(p, r), tp, np_, ng, per_label)


def _as_list(x):
    return list(x) if isinstance(x, (list, tuple)) else [x]


def relation_prf(pred: WordRelationGraph | Sequence[WordRelationGraph],
                 gold: WordRelationGraph | Sequence[WordRelationGraph]) -> PrfReport:
    """Micro-averaged exact-edge match, pooled over documents and labels.

    A predicted edge counts iff (src, label, dst) matches a gold edge under
    canonical (undirected low-to-high) form."""
    preds, golds = _as_list(pred), _as_list(gold)
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predictions vs {len(golds)} gold graphs")
    tp_by: dict[str, int] = {}
    pred_by: dict[str, int] = {}
    gold_by: dict[str, int] = {}
    for pg, gg in zip(preds, golds):
        pe = set(canonicalize_wrg(pg).edges)
        ge = set(canonicalize_wrg(gg).edges)
        for _, z, _ in pe:
            pred_by[z.value] = pred_by.get(z.value, 0) + 1
        for _, z, _ in ge:
            gold_by[z.value] = gold_by.get(z.value, 0) + 1
        for _, z, _ in pe & ge:
            tp_by[z.value] = tp_by.get(z.value, 0) + 1
    return _report(tp_by, pred_by, gold_by)


def relation_prf_by_id(pred: Mapping[str, WordRelationGraph],
                       gold: Mapping[str, WordRelationGraph]) -> PrfReport:
    if set(pred) != set(gold):
        missing = sorted(set(gold) ^ set(pred))
        raise ValueError(f"document sets differ: {missing}")
    keys = sorted(gold)
    return relation_prf([pred[k] for k in keys], [gold[k] for k in keys])


def entity_prf(pred: EntityRelationGraph | None | Sequence,
               gold: EntityRelationGraph | Sequence) -> PrfReport:
    """Exact-match entity recognition: an entity is correct iff its word-id
    set and its type both match a gold entity.  ``None`` predictions (failed
    conversions) contribute no predicted entities."""
    preds, golds = _as_list(pred), _as_list(gold)
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predictions vs {len(golds)} gold graphs")
    tp_by: dict[str, int] = {}
    pred_by: dict[str, int] = {}
    gold_by: dict[str, int] = {}
    for pg, gg in zip(preds, golds):
        pset = (set() if pg is None else
                {(e.kind.value, e.word_ids) for e in canonicalize_erg(pg).entities})
        gset = {(e.kind.value, e.word_ids) for e in canonicalize_erg(gg).entities}
        for k, _ in pset:
            pred_by[k] = pred_by.get(k, 0) + 1
        for k, _ in gset:
            gold_by[k] = gold_by.get(k, 0) + 1
        for k, _ in pset & gset:
            tp_by[k] = tp_by.get(k, 0) + 1
    return _report(tp_by, pred_by, gold_by)


# ---------------------------------------------------------------------------
# Experiment harnesses


def zero_shot_eval(params, cfg, corpora: Mapping[str, Sequence[AnnotatedDocument]],
                   decoder: str = "ilp", constraint_config=None) -> dict:
    """Evaluate one trained checkpoint on several language corpora with no
    retraining.  Returns per-language relation reports plus the plain average
    of the per-language F1 scores."""
    from .pipeline import predict_corpus

    out: dict[str, PrfReport] = {}
    for lang in sorted(corpora):
        docs = list(corpora[lang])
        results = predict_corpus(docs, params, cfg, decoder=decoder,
                                 constraint_config=constraint_config)
        out[lang] = relation_prf([r.wrg for r in results],
                                 [d.gold_wrg for d in docs])
    avg = sum(r.f1 for r in out.values()) / len(out) if out else 0.0
    return {"per_language": out, "average_f1": avg}


@dataclass(frozen=True)
class TradeoffRow:
    k: int
    f1: float
    mean_decode_seconds: float
    mean_total_seconds: float
    coverage: float
    mean_pairs: float


def neighborhood_tradeoff(split: DatasetSplit, cfg, k_values: Sequence[int],
                          constraint_config=None) -> list[TradeoffRow]:
    """Retrain per neighborhood size and measure test F1, solver wall time
    per document (decode only and forward+decode), gold-edge coverage, and
    candidate-pair counts."""
    from .ilp import build_ilp, decode, solve_branch_and_bound
    from .model import forward, greedy_labels, prepare_document
    from .training import train

    rows = []
    for k in k_values:
        cfg_k = replace(cfg, k=k)
        result = train(split, cfg_k)
        covered = total = 0
        pair_count = 0
        decode_s = []
        total_s = []
        preds = []
        for ann in split.test:
            nbhd = build_neighborhood(ann.document, k)
            c, t = edge_coverage(ann.gold_wrg, nbhd)
            covered, total = covered + c, total + t
            pair_count += len(nbhd)
            t0 = time.perf_counter()
            scores = forward(prepare_document(ann.document, nbhd), result.params, cfg_k)
            t1 = time.perf_counter()
            problem = build_ilp(scores, nbhd, constraint_config)
            sol = solve_branch_and_bound(problem, greedy_labels=greedy_labels(scores))
            t2 = time.perf_counter()
            decode_s.append(t2 - t1)
            total_s.append(t2 - t0)
            preds.append(decode(sol, nbhd))
        report = relation_prf(preds, [a.gold_wrg for a in split.test])
        n = max(len(split.test), 1)
        rows.append(TradeoffRow(k=k, f1=report.f1,
                                mean_decode_seconds=sum(decode_s) / n,
                                mean_total_seconds=sum(total_s) / n,
                                coverage=covered / total if total else 1.0,
                                mean_pairs=pair_count / n))
    return rows


EDGE_FEATURE_VARIANTS = {
    "full": dict(use_edge_attention=True, use_edge_classifier=True),
    "edge_attention_only": dict(use_edge_attention=True, use_edge_classifier=False),
    "edge_classifier_only": dict(use_edge_attention=False, use_edge_classifier=True),
    "no_edge_features": dict(use_edge_attention=False, use_edge_classifier=False),
}

CONSTRAINT_VARIANTS = {
    "all_constraints": dict(),
    "no_c1": dict(c1=False),
    "no_c2": dict(c2=False),
    "no_c4_c5": dict(c4=False, c5=False),
}


def ablation_suite(split: DatasetSplit, cfg,
                   suites: Sequence[str] = ("edge-features", "constraints"),
                   params_cache: dict | None = None) -> dict[str, PrfReport]:
    """Feature ablations are retrained and compared under greedy decoding;
    constraint ablations reuse the full model and vary the ILP row families.
    ``params_cache`` maps variant name -> trained params to skip retraining."""
    from .ilp import ConstraintConfig
    from .pipeline import predict_corpus
    from .training import train

    params_cache = params_cache if params_cache is not None else {}
    golds = [a.gold_wrg for a in split.test]
    out: dict[str, PrfReport] = {}

    def trained(name: str, cfg_v):
        if name not in params_cache:
            params_cache[name] = train(split, cfg_v).params
        return params_cache[name]

    if "edge-features" in suites:
        for name, flags in EDGE_FEATURE_VARIANTS.items():
            cfg_v = replace(cfg, **flags)
            params = trained(name, cfg_v)
            results = predict_corpus(split.test, params, cfg_v, decoder="greedy")
            out[f"{name}_greedy"] = relation_prf([r.wrg for r in results], golds)

    if "constraints" in suites:
        params = trained("full", cfg)
        for name, flags in CONSTRAINT_VARIANTS.items():
            ccfg = ConstraintConfig(**flags)
            results = predict_corpus(split.test, params, cfg, decoder="ilp",
                                     constraint_config=ccfg)
            out[f"ilp_{name}"] = relation_prf([r.wrg for r in results], golds)
    return out
