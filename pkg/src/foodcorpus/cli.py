"""Command-line interface: one config file, one subcommand per stage.

Exit status 0 means no stage-fatal error; per-item problems accumulate in
the run report instead of aborting.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import PipelineConfig, load_config
from .corpus import dedup_examples, emit_corpus
from .errors import ConfigError, PipelineError
from .kg import (
    KnowledgeGraph,
    answer_query,
    load_triples,
    make_query_server,
    save_triples,
    start_query_server,
)
from .pipeline import (
    RunReport,
    output_paths,
    prepare_records,
    read_chapters,
    run_pipeline,
    stage_documents,
    stage_filter,
    stage_instructions,
    stage_kg,
    stage_structured,
    write_chapters,
)
from .util import write_jsonl


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foodcorpus",
        description="Build a pre-training corpus, instruction dataset, and knowledge graph "
        "from OCR'd standards documents and structured testing records.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, with_only: bool = True) -> None:
        p.add_argument("--config", required=True, help="pipeline config file (YAML)")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--out", default=None, help="override the output directory")
        if with_only:
            p.add_argument(
                "--only",
                default=None,
                help="override this stage's primary input path",
            )

    add_common(sub.add_parser("run-all", help="run every stage"), with_only=False)
    sub.choices["run-all"].add_argument(
        "--workers", type=int, default=None, help="override the worker count"
    )
    add_common(sub.add_parser("ingest-docs", help="ingest, split, and prefix standard documents"))
    add_common(sub.add_parser("filter", help="perplexity-filter prepared chapters into corpus lines"))
    add_common(sub.add_parser("serialize-structured", help="emit datav1/datav2 corpus lines"))
    add_common(sub.add_parser("build-instructions", help="build the instruction dataset"))
    add_common(sub.add_parser("build-kg", help="build the knowledge-graph triples file"))

    query = sub.add_parser("query-kg", help="query a built graph and print the prompt bundle")
    add_common(query, with_only=False)
    query.add_argument("--query", default=None, help="query text (one-shot mode)")
    query.add_argument("--serve", action="store_true", help="serve POST /query over HTTP")
    query.add_argument("--host", default="127.0.0.1")
    query.add_argument("--port", type=int, default=8080)
    return parser


def _load(args: argparse.Namespace) -> PipelineConfig:
    return load_config(Path(args.config), seed_override=args.seed, out_override=args.out)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return _dispatch(args, config)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args: argparse.Namespace, config: PipelineConfig) -> int:
    if getattr(args, "workers", None):
        config.workers = args.workers
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = output_paths(out_dir)
    only = getattr(args, "only", None)

    if args.command == "run-all":
        report = run_pipeline(config)  # stage-fatal errors raise; per-item errors accumulate
        _summarize(report)
        return 0

    report = RunReport(seed=config.seed, config_hash=config.config_hash(), config=config.to_dict())

    if args.command == "ingest-docs":
        if only:
            config.inputs["standard_document"] = only
        chapters = stage_documents(config, report)
        count = write_chapters(chapters, paths.chapters_path)
        print(f"wrote {count} chapters to {paths.chapters_path}")
    elif args.command == "filter":
        chapters_path = Path(only) if only else paths.chapters_path
        chapters = read_chapters(chapters_path)
        examples = stage_filter(config, chapters, report)
        if config.dedup:
            examples = dedup_examples(examples)
        count = emit_corpus(examples, paths.corpus_path)
        print(f"wrote {count} corpus lines to {paths.corpus_path}")
    elif args.command == "serialize-structured":
        if only:
            config.structured.records = only
        warnings: list[str] = []
        records = prepare_records(config, warnings)
        report.errors.extend(warnings)
        examples = stage_structured(config, records, report)
        if config.dedup:
            examples = dedup_examples(examples)
        count = emit_corpus(examples, out_dir / "structured.jsonl")
        print(f"wrote {count} corpus lines to {out_dir / 'structured.jsonl'}")
    elif args.command == "build-instructions":
        if only:
            config.instructions.forum = only
        pairs = stage_instructions(config, report)
        count = write_jsonl(paths.instructions_path, (p.to_row() for p in pairs))
        print(f"wrote {count} instruction pairs to {paths.instructions_path}")
    elif args.command == "build-kg":
        if only:
            config.structured.records = only
        warnings = []
        records = prepare_records(config, warnings)
        report.errors.extend(warnings)
        triples = stage_kg(config, records, report)
        count = save_triples(paths.graph_path, triples)
        print(f"wrote {count} triples to {paths.graph_path}")
    elif args.command == "query-kg":
        return _query_kg(args, config, paths.graph_path)
    report.save(paths.report_path)
    _summarize(report)
    return 0


def _query_kg(args: argparse.Namespace, config: PipelineConfig, graph_path: Path) -> int:
    if not graph_path.is_file():
        print(f"error: graph file not found: {graph_path} (run build-kg first)", file=sys.stderr)
        return 1
    graph = KnowledgeGraph(load_triples(graph_path))
    if args.serve:
        server = make_query_server(
            graph,
            template=config.kg.prompt_template,
            limit=config.kg.limit,
            host=args.host,
            port=args.port,
        )
        host, port = server.server_address[:2]
        print(f"serving POST /query on http://{host}:{port}")
        start_query_server(server).join()
        return 0
    if not args.query:
        print("error: provide --query TEXT or --serve", file=sys.stderr)
        return 2
    bundle = answer_query(graph, args.query, template=config.kg.prompt_template, limit=config.kg.limit)
    print(json.dumps(bundle.to_dict(), ensure_ascii=False, indent=2))
    return 0


def _summarize(report: RunReport) -> None:
    for stage in report.stages:
        print(
            f"[{stage.name}] ingested={stage.ingested} emitted={stage.emitted} "
            f"skipped={stage.skipped} ({stage.seconds:.2f}s)"
        )
    for err in report.errors[:10]:
        print(f"note: {err}", file=sys.stderr)
    if len(report.errors) > 10:
        print(f"note: ... and {len(report.errors) - 10} more", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
