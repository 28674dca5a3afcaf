"""End-to-end prediction: score, decode (greedy or exact ILP), convert to an
entity graph, and verify the constraint families.  Documents are independent,
so corpora can be decoded in parallel worker processes."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .convert import ViolationCounts, verify_constraints, wrg_to_erg
from .graphs import Document, EntityRelationGraph, MalformedGraphError, WordRelationGraph
from .ilp import ConstraintConfig, IlpSolution, build_ilp, decode, solve_branch_and_bound
from .ingest import AnnotatedDocument, build_neighborhood
from .model import ModelConfig, ModelParams, forward, greedy_labels, prepare_document
from .ilp import assignment_to_wrg

DECODERS = ("greedy", "ilp")


@dataclass(frozen=True)
class PredictionResult:
    doc_id: str
    wrg: WordRelationGraph
    erg: EntityRelationGraph | None
    conversion_error: str | None
    violations: ViolationCounts
    optimal: bool
    nodes_explored: int
    objective: float


def _document_of(item) -> Document:
    return item.document if isinstance(item, AnnotatedDocument) else item


def predict_document(item, params: ModelParams, cfg: ModelConfig,
                     decoder: str = "ilp",
                     constraint_config: ConstraintConfig | None = None,
                     time_limit: float = 60.0,
                     max_nodes: int = 5000) -> PredictionResult:
    if decoder not in DECODERS:
        raise ValueError(f"unknown decoder {decoder!r}; expected one of {DECODERS}")
    doc = _document_of(item)
    ccfg = constraint_config or ConstraintConfig()
    nbhd = build_neighborhood(doc, cfg.k)
    scores = forward(prepare_document(doc, nbhd), params, cfg)
    glabels = greedy_labels(scores)
    if decoder == "greedy":
        wrg = assignment_to_wrg(glabels, nbhd.pairs, len(doc.words))
        optimal, nodes, objective = True, 0, 0.0
    else:
        problem = build_ilp(scores, nbhd, ccfg)
        sol: IlpSolution = solve_branch_and_bound(problem, time_limit=time_limit,
                                                  max_nodes=max_nodes,
                                                  greedy_labels=glabels)
        wrg = decode(sol, nbhd)
        optimal, nodes, objective = sol.optimal, sol.nodes_explored, sol.objective
    violations = verify_constraints(wrg, nbhd, ccfg)
    erg, err = None, None
    try:
        erg = wrg_to_erg(wrg, doc)
    except MalformedGraphError as exc:
        err = str(exc)
    return PredictionResult(doc_id=doc.doc_id, wrg=wrg, erg=erg,
                            conversion_error=err, violations=violations,
                            optimal=optimal, nodes_explored=nodes,
                            objective=objective)


def _worker(args) -> PredictionResult:
    return predict_document(*args)


def predict_corpus(items: Sequence, params: ModelParams, cfg: ModelConfig,
                   decoder: str = "ilp",
                   constraint_config: ConstraintConfig | None = None,
                   time_limit: float = 60.0, max_nodes: int = 5000,
                   jobs: int = 1) -> list[PredictionResult]:
    """Decode a corpus; results come back in input order regardless of jobs."""
    tasks = [(item, params, cfg, decoder, constraint_config, time_limit, max_nodes)
             for item in items]
    if jobs <= 1 or len(items) <= 1:
        return [_worker(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_worker, tasks))


def violation_summary(results: Sequence[PredictionResult]) -> dict:
    total = {"C1": 0, "C2": 0, "C3": 0, "C4": 0, "C5": 0}
    for r in results:
        for k, v in r.violations.as_dict().items():
            if k in total:
                total[k] += v
    return {"counts": total, "total": sum(total.values()),
            "documents": len(results),
            "conversion_failures": sum(1 for r in results if r.erg is None),
            "non_optimal": sum(1 for r in results if not r.optimal)}
