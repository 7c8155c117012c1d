"""Command-line interface: ingest, index, query, serve, and eval."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .corpus import load_corpus, read_corpus_file, write_corpus_file, write_stats_file
from .engine import QueryEngine
from .evalkit import (
    QuestionType,
    read_report,
    run_evaluation,
    write_batch_files,
    write_report,
)
from .prompting import DEFAULT_TEMPLATE, LEGACY_TEMPLATE, load_template
from .retrieval import fit, load_index, save_index
from .service import build_engine, load_service_config, run_server

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vulnqa", description="CVE question answering over NVD feeds")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="parse NVD feed files into a corpus file")
    p_ingest.add_argument("feeds", nargs="+", help="NVD JSON 1.1 feed files (gzip detected by magic bytes)")
    p_ingest.add_argument("-o", "--output", required=True, help="corpus output path (newline-delimited chunks)")
    p_ingest.add_argument("--stats", help="stats JSON path (default: <output>.stats.json)")
    p_ingest.add_argument("--json", action="store_true", help="machine-readable output")

    p_index = sub.add_parser("index", help="build a TF-IDF index from a corpus file")
    p_index.add_argument("-c", "--corpus", required=True)
    p_index.add_argument("-o", "--output", required=True, help="index output path (JSON)")
    p_index.add_argument("--json", action="store_true")

    p_query = sub.add_parser("query", help="answer one question")
    p_query.add_argument("-q", "--question", required=True)
    p_query.add_argument("-c", "--corpus", help="corpus file path")
    p_query.add_argument("-i", "--index", help="index file path")
    p_query.add_argument("--config", help="service config JSON (alternative to -c/-i)")
    p_query.add_argument("--backend", default=None, help="backend id (default from config, else extractor)")
    p_query.add_argument("--k", type=int, default=None)
    p_query.add_argument("--budget", type=int, default=None, help="token budget for prompt truncation")
    p_query.add_argument("--template", help="prompt template file")
    p_query.add_argument("--legacy-template", action="store_true", help="use the known-weak legacy template")
    p_query.add_argument("--json", action="store_true")

    p_serve = sub.add_parser("serve", help="run the HTTP API")
    p_serve.add_argument("-c", "--config", required=True, help="service config JSON")
    p_serve.add_argument("--json", action="store_true")

    p_eval = sub.add_parser("eval", help="run or inspect evaluations")
    eval_sub = p_eval.add_subparsers(dest="eval_command", required=True)

    p_run = eval_sub.add_parser("run", help="generate batches, query a backend, judge, and write a report")
    p_run.add_argument("--backend", required=True)
    p_run.add_argument("--seed", type=int, required=True)
    p_run.add_argument("--n-batches", type=int, default=5)
    p_run.add_argument("--cves-per-batch", type=int, default=5)
    p_run.add_argument("--k", type=int, default=None)
    p_run.add_argument("-c", "--corpus", help="corpus file path")
    p_run.add_argument("-i", "--index", help="index file path")
    p_run.add_argument("--config", help="service config JSON (alternative to -c/-i)")
    p_run.add_argument("-o", "--out-dir", default="reports")
    p_run.add_argument("--json", action="store_true")

    p_report = eval_sub.add_parser("report", help="print tables from a stored report")
    p_report.add_argument("path")
    group = p_report.add_mutually_exclusive_group()
    group.add_argument("--by-qtype", action="store_true")
    group.add_argument("--by-batch", action="store_true")
    group.add_argument("--failures", action="store_true")
    group.add_argument("--efficiency", action="store_true")
    p_report.add_argument("--json", action="store_true")

    return parser


def _make_engine(args) -> QueryEngine:
    if getattr(args, "config", None):
        return build_engine(load_service_config(args.config))
    if not (getattr(args, "corpus", None) and getattr(args, "index", None)):
        raise ValueError("provide either --config or both --corpus and --index")
    template = DEFAULT_TEMPLATE
    if getattr(args, "legacy_template", False):
        template = LEGACY_TEMPLATE
    elif getattr(args, "template", None):
        template = load_template(args.template)
    return QueryEngine(
        corpus=read_corpus_file(args.corpus),
        index=load_index(args.index),
        default_backend=getattr(args, "backend", None) or "extractor",
        template=template,
    )


def _cmd_ingest(args) -> int:
    corpus = load_corpus(args.feeds)
    write_corpus_file(corpus, args.output)
    stats_path = args.stats or f"{args.output}.stats.json"
    assert corpus.stats is not None
    write_stats_file(corpus.stats, stats_path)
    if args.json:
        print(json.dumps({"corpus": args.output, "stats_file": stats_path, "notes": corpus.notes, **corpus.stats.as_dict()}))
    else:
        s = corpus.stats
        print(f"ingested {s.records_in} records -> {s.records_out} "
              f"({s.duplicates_removed} duplicates, {s.dropped_no_description} without description)")
        print(f"corpus: {args.output} ({s.bytes_out} bytes, was {s.bytes_in})")
        print(f"stats: {stats_path}")
        for note in corpus.notes:
            print(f"note: {note}", file=sys.stderr)
    return EXIT_OK


def _cmd_index(args) -> int:
    corpus = read_corpus_file(args.corpus)
    index = fit(corpus.chunks())
    save_index(index, args.output)
    if args.json:
        print(json.dumps({"index": args.output, "rows": index.n_rows, "terms": len(index.vocabulary)}))
    else:
        print(f"indexed {index.n_rows} chunks, {len(index.vocabulary)} terms -> {args.output}")
    return EXIT_OK


def _cmd_query(args) -> int:
    engine = _make_engine(args)
    result = engine.ask(args.question, backend_id=args.backend, k=args.k, budget=args.budget)
    if args.json:
        print(json.dumps(result.as_dict()))
    else:
        if result.failure:
            print(f"backend failure: {result.failure}", file=sys.stderr)
            return EXIT_RUNTIME
        print(result.answer)
        if result.retrieved_cve_ids:
            print(f"[context: {', '.join(result.retrieved_cve_ids)}]", file=sys.stderr)
    return EXIT_OK


def _cmd_serve(args) -> int:
    run_server(load_service_config(args.config))
    return EXIT_OK


def _cmd_eval_run(args) -> int:
    engine = _make_engine(args)
    report = run_evaluation(
        engine,
        backend_id=args.backend,
        seed=args.seed,
        n_batches=args.n_batches,
        cves_per_batch=args.cves_per_batch,
        k=args.k,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / f"{report.backend_id}_seed{report.seed}.json"
    write_report(report, report_path)
    batch_paths = write_batch_files(report, out_dir)
    if args.json:
        print(json.dumps({
            "report": str(report_path),
            "batch_files": [str(p) for p in batch_paths],
            "accuracy": report.overall_accuracy,
            "failure_counts": report.failure_counts,
        }))
    else:
        print(f"report: {report_path}")
        print(f"accuracy: {report.overall_accuracy:.3f} over {len(report.rows)} items")
    return EXIT_OK


def _cmd_eval_report(args) -> int:
    report = read_report(args.path)
    if args.by_qtype:
        payload = {QuestionType(k).label: v for k, v in report.per_qtype_accuracy.items()}
    elif args.by_batch:
        payload = {f"batch {k}": v for k, v in sorted(report.per_batch_accuracy.items())}
    elif args.failures:
        payload = dict(report.failure_counts)
    elif args.efficiency:
        if report.token_efficiency is None:
            payload = {"token_efficiency": None}
        else:
            payload = report.token_efficiency.as_dict()
    else:
        payload = {
            "backend": report.backend_id,
            "items": len(report.rows),
            "accuracy": report.overall_accuracy,
            "error_rate": report.overall_error,
            "failure_counts": report.failure_counts,
        }
    if args.json:
        print(json.dumps(payload))
    else:
        for key, value in payload.items():
            if isinstance(value, float):
                print(f"{key}: {value:.2f}")
            else:
                print(f"{key}: {value}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "ingest": _cmd_ingest,
        "index": _cmd_index,
        "query": _cmd_query,
        "serve": _cmd_serve,
    }
    try:
        if args.command == "eval":
            handler = _cmd_eval_run if args.eval_command == "run" else _cmd_eval_report
            return handler(args)
        return handlers[args.command](args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
