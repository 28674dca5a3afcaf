"""Command-line pipeline: synth, prepare, train, predict, evaluate, ablate.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.
Every command is deterministic under fixed --seed and inputs; per-document
outputs are written atomically.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from .config import parse_config_file, provenance, resolve_configs
from .graphs import MalformedGraphError
from .ingest import (
    AnnotatedDocument,
    ConfigurationError,
    DatasetSplit,
    ParseError,
    annotated_to_dict,
    build_neighborhood,
    edge_coverage,
    funsd_split,
    load_xfund,
    read_annotated,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise _UsageError(message)


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _dump_json(path: Path, obj) -> None:
    _write_atomic(path, json.dumps(obj, sort_keys=True, separators=(",", ":"),
                                   ensure_ascii=False) + "\n")


def _configs(args):
    sources = [parse_config_file(args.config)] if getattr(args, "config", None) else []
    overrides = {k: getattr(args, k) for k in
                 ("seed", "k", "max_iterations", "learning_rate", "patience",
                  "decoder", "jobs", "time_limit", "max_nodes")
                 if hasattr(args, k) and getattr(args, k) is not None}
    sources.append(overrides)
    return resolve_configs(*sources)


def _load_annotated_dir(folder: Path) -> list[AnnotatedDocument]:
    files = sorted(folder.glob("*.json"))
    if not files:
        raise ParseError(f"{folder}: no annotated documents found")
    return [read_annotated(p) for p in files]


def _corpus_split(corpus: Path) -> DatasetSplit:
    return DatasetSplit(train=_load_annotated_dir(corpus / "train"),
                        validation=_load_annotated_dir(corpus / "validation"),
                        test=_load_annotated_dir(corpus / "test"))


def _test_docs(corpus: Path) -> list[AnnotatedDocument]:
    folder = corpus / "test" if (corpus / "test").is_dir() else corpus
    return _load_annotated_dir(folder)


# ---------------------------------------------------------------------------
# Commands


def _cmd_synth(args) -> int:
    from .synthetic import XFUND_LANGUAGES, generate_funsd_corpus, generate_xfund_corpus

    out = Path(args.out)
    if args.dataset in ("funsd", "both"):
        generate_funsd_corpus(out / "funsd", n_train=args.train, n_test=args.test,
                              seed=args.seed or 0)
        print(f"wrote synthetic FUNSD-format corpus under {out / 'funsd'}")
    if args.dataset in ("xfund", "both"):
        langs = tuple(args.languages.split(",")) if args.languages else XFUND_LANGUAGES
        generate_xfund_corpus(out / "xfund", languages=langs, n_test=args.test,
                              seed=args.seed or 0)
        print(f"wrote synthetic XFUND-format partitions under {out / 'xfund'}")
    return EXIT_OK


def _manifest(docs: list[AnnotatedDocument], k: int) -> dict:
    entities: dict[str, int] = {}
    edges: dict[str, int] = {}
    words = 0
    raw_entities = raw_words = dropped_e = dropped_w = skipped = 0
    uncovered = covered = total = 0
    for ann in docs:
        words += len(ann.document.words)
        for e in ann.gold_erg.entities:
            entities[e.kind.value] = entities.get(e.kind.value, 0) + 1
        for _, z, _ in ann.gold_wrg.edges:
            edges[z.value] = edges.get(z.value, 0) + 1
        if ann.stats:
            raw_entities += ann.stats.raw_entities
            raw_words += ann.stats.raw_words
            dropped_e += ann.stats.dropped_other_entities
            dropped_w += ann.stats.dropped_other_words
            skipped += ann.stats.skipped_links
        c, t = edge_coverage(ann.gold_wrg, build_neighborhood(ann.document, k))
        covered += c
        total += t
        uncovered += t - c
    return {"documents": len(docs), "words": words, "entities": entities,
            "word_edges": edges, "raw_entities": raw_entities,
            "raw_words": raw_words,
            "deviation_flags": {
                "dropped_other_entities": dropped_e,
                "dropped_other_words": dropped_w,
                "skipped_links": skipped,
                "out_of_neighborhood_gold_edges": uncovered,
            },
            "gold_edge_coverage": covered / total if total else 1.0}


def _cmd_prepare(args) -> int:
    model_cfg, constraint_cfg, runtime = _configs(args)
    out = Path(args.out)
    failures: list[str] = []
    manifest: dict = {"splits": {}, "config": provenance(model_cfg, constraint_cfg, runtime)}
    if args.funsd_dir:
        split = funsd_split(Path(args.funsd_dir),
                            validation_size=runtime["validation_size"])
        for name, docs in (("train", split.train), ("validation", split.validation),
                           ("test", split.test)):
            folder = out / name
            folder.mkdir(parents=True, exist_ok=True)
            for ann in docs:
                _dump_json(folder / f"{ann.doc_id}.json", annotated_to_dict(ann))
            manifest["splits"][name] = _manifest(docs, model_cfg.k)
    else:
        langs = args.lang.split(",") if args.lang else []
        if not langs:
            raise _UsageError("--xfund-dir requires --lang")
        for lang in langs:
            src = Path(args.xfund_dir) / f"{lang}.val.json"
            try:
                docs = load_xfund(src, lang)
            except (ParseError, OSError) as exc:
                failures.append(str(exc))
                continue
            folder = out / lang / "test"
            folder.mkdir(parents=True, exist_ok=True)
            for ann in docs:
                _dump_json(folder / f"{ann.doc_id}.json", annotated_to_dict(ann))
            manifest["splits"][lang] = _manifest(docs, model_cfg.k)
    _dump_json(out / "manifest.json", manifest)
    if failures:
        for f in failures:
            print(f"error: {f}", file=sys.stderr)
        return EXIT_DATA
    print(f"prepared corpus under {out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    from .model import count_parameters, save_checkpoint
    from .training import train

    model_cfg, constraint_cfg, runtime = _configs(args)
    split = _corpus_split(Path(args.corpus))
    result = train(split, model_cfg)
    out = Path(args.out_checkpoint)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out, result.params, model_cfg,
                    iteration=result.best_iteration, validation_f1=result.best_f1)
    log_path = Path(args.log) if args.log else out.with_suffix(".log.json")
    _dump_json(log_path, {
        "config": provenance(model_cfg, constraint_cfg, runtime),
        "parameter_count": count_parameters(result.params),
        "best_iteration": result.best_iteration,
        "best_validation_f1": result.best_f1,
        "uncovered_gold_edges": result.uncovered_gold,
        "iterations": result.log_as_dicts(),
    })
    print(f"checkpoint: {out} (best iteration {result.best_iteration}, "
          f"validation F1 {result.best_f1:.4f})")
    return EXIT_OK


def _erg_dict(erg) -> dict:
    return {"entities": [{"id": e.entity_id, "kind": e.kind.value,
                          "word_ids": list(e.word_ids)} for e in erg.entities],
            "edges": [[s, z.value, d] for s, z, d in erg.edges]}


def _cmd_predict(args) -> int:
    from .model import load_checkpoint
    from .pipeline import predict_corpus, violation_summary

    params, model_cfg, _meta = load_checkpoint(args.checkpoint)
    _, constraint_cfg, runtime = _configs(args)
    docs = _test_docs(Path(args.corpus))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = predict_corpus(docs, params, model_cfg,
                             decoder=runtime["decoder"],
                             constraint_config=constraint_cfg,
                             time_limit=runtime["time_limit"],
                             max_nodes=runtime["max_nodes"],
                             jobs=runtime["jobs"])
    for r in results:
        _dump_json(out / f"{r.doc_id}.pred.json", {
            "doc_id": r.doc_id,
            "decoder": runtime["decoder"],
            "wrg": {"edges": [[s, z.value, d] for s, z, d in r.wrg.edges]},
            "erg": _erg_dict(r.erg) if r.erg is not None else None,
            "conversion_error": r.conversion_error,
            "violations": r.violations.as_dict(),
            "optimal": r.optimal,
        })
    summary = violation_summary(results)
    summary["config"] = provenance(model_cfg, constraint_cfg, runtime)
    _dump_json(out / "summary.json", summary)
    print(json.dumps(summary["counts"], sort_keys=True))
    for r in results:
        if r.conversion_error:
            print(f"warning: {r.doc_id}: {r.conversion_error}", file=sys.stderr)
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    from .graphs import (
        Entity,
        EntityRelationGraph,
        EntityRelationLabel,
        EntityType,
        WordRelationGraph,
        WordRelationLabel,
    )
    from .metrics import entity_prf, relation_prf

    pred_dir, gold_dir = Path(args.pred), Path(args.gold)
    gold_docs = {a.doc_id: a for a in _test_docs(gold_dir)}
    preds = {}
    for path in sorted(pred_dir.glob("*.pred.json")):
        data = json.loads(path.read_text())
        preds[data["doc_id"]] = data
    if set(preds) != set(gold_docs):
        missing = sorted(set(gold_docs) ^ set(preds))
        raise ParseError(f"prediction/gold document sets differ: {missing}")
    keys = sorted(gold_docs)
    if args.level == "word":
        pred_graphs = []
        for k in keys:
            edges = tuple((s, WordRelationLabel(z), d)
                          for s, z, d in preds[k]["wrg"]["edges"])
            words = tuple(w.word_id for w in gold_docs[k].document.words)
            pred_graphs.append(WordRelationGraph(words, edges))
        report = relation_prf(pred_graphs, [gold_docs[k].gold_wrg for k in keys])
    else:
        pred_graphs = []
        for k in keys:
            blob = preds[k]["erg"]
            if blob is None:
                pred_graphs.append(None)
                continue
            entities = tuple(Entity(entity_id=e["id"], kind=EntityType(e["kind"]),
                                    word_ids=tuple(e["word_ids"]))
                             for e in blob["entities"])
            edges = tuple((s, EntityRelationLabel(z), d) for s, z, d in blob["edges"])
            pred_graphs.append(EntityRelationGraph(entities, edges))
        report = entity_prf(pred_graphs, [gold_docs[k].gold_erg for k in keys])
    payload = {"level": args.level, "documents": len(keys), **report.as_dict()}
    if args.out:
        _dump_json(Path(args.out), payload)
    print(f"{'label':<18}{'P':>8}{'R':>8}{'F1':>8}{'gold':>7}{'pred':>7}")
    for name, row in sorted(report.per_label.items()):
        print(f"{name:<18}{row.precision:>8.3f}{row.recall:>8.3f}"
              f"{row.f1:>8.3f}{row.n_gold:>7}{row.n_pred:>7}")
    print(f"{'micro':<18}{report.precision:>8.3f}{report.recall:>8.3f}"
          f"{report.f1:>8.3f}{report.n_gold:>7}{report.n_pred:>7}")
    return EXIT_OK


def _cmd_ablate(args) -> int:
    from .metrics import ablation_suite, neighborhood_tradeoff

    model_cfg, constraint_cfg, runtime = _configs(args)
    split = _corpus_split(Path(args.corpus))
    out = Path(args.out) if args.out else None
    if args.suite == "neighborhood":
        k_values = [int(v) for v in args.k_values.split(",")]
        rows = neighborhood_tradeoff(split, model_cfg, k_values, constraint_cfg)
        if out:
            with out.open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["k", "f1", "mean_decode_seconds",
                                 "mean_total_seconds", "coverage", "mean_pairs"])
                for r in rows:
                    writer.writerow([r.k, f"{r.f1:.6f}", f"{r.mean_decode_seconds:.6f}",
                                     f"{r.mean_total_seconds:.6f}",
                                     f"{r.coverage:.6f}", f"{r.mean_pairs:.1f}"])
        for r in rows:
            print(f"k={r.k:<3} f1={r.f1:.4f} decode={r.mean_decode_seconds * 1e3:.1f}ms "
                  f"coverage={r.coverage:.4f} pairs={r.mean_pairs:.0f}")
        return EXIT_OK
    suites = {"constraints": ("constraints",), "edge-features": ("edge-features",)}
    reports = ablation_suite(split, model_cfg, suites=suites[args.suite])
    payload = {name: rep.as_dict() for name, rep in sorted(reports.items())}
    if out:
        _dump_json(out, {"suite": args.suite, "results": payload,
                         "config": provenance(model_cfg, constraint_cfg, runtime)})
    for name, rep in sorted(reports.items()):
        print(f"{name:<28} P={rep.precision:.4f} R={rep.recall:.4f} F1={rep.f1:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="formgraph",
                     description="Layout-only form understanding: word-relation "
                                 "graph parsing with exact ILP decoding")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[], help="generate synthetic corpora")
    p.add_argument("--out", required=True)
    p.add_argument("--dataset", choices=("funsd", "xfund", "both"), default="both")
    p.add_argument("--train", type=int, default=149)
    p.add_argument("--test", type=int, default=50)
    p.add_argument("--languages", default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("prepare", help="load a dataset and write annotated documents")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--funsd-dir")
    group.add_argument("--xfund-dir")
    p.add_argument("--lang", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--k", type=int, default=None)

    p = sub.add_parser("train", help="train the relation scorer")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--log", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--max-iterations", dest="max_iterations", type=int, default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--patience", type=int, default=None)

    p = sub.add_parser("predict", help="decode a corpus with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--decoder", choices=("greedy", "ilp"), default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--time-limit", dest="time_limit", type=float, default=None)
    p.add_argument("--max-nodes", dest="max_nodes", type=int, default=None)

    p = sub.add_parser("evaluate", help="score predictions against gold")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--level", choices=("word", "entity"), default="word")
    p.add_argument("--out", default=None)

    p = sub.add_parser("ablate", help="run an ablation suite")
    p.add_argument("--corpus", required=True)
    p.add_argument("--suite", choices=("constraints", "edge-features", "neighborhood"),
                   required=True)
    p.add_argument("--k-values", dest="k_values", default="2,4,6,8,10")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    return parser


_COMMANDS = {"synth": _cmd_synth, "prepare": _cmd_prepare, "train": _cmd_train,
             "predict": _cmd_predict, "evaluate": _cmd_evaluate,
             "ablate": _cmd_ablate}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ConfigurationError, MalformedGraphError,
            FileNotFoundError, NotADirectoryError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
