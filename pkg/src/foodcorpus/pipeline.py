"""End-to-end orchestration: documents -> filter -> structured -> auxiliary
-> dedup -> corpus, then instructions, then the knowledge graph.

Every per-item computation is a pure function of (item, config, derived
seed); workers only change scheduling, never bytes, because results are
re-ordered by stable keys before emission and every output file is written
atomically.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence, TypeVar

from .config import PipelineConfig
from .corpus import TrainingExample, dedup_examples, emit_corpus
from .documents import (
    AUXILIARY_KINDS,
    Chapter,
    DocumentName,
    PatternNameExtractor,
    RawDocument,
    SplitConfig,
    attach_prefix,
    extract_document_name,
    generate_prefix,
    ingest_auxiliary,
    ingest_documents,
    split_chapters,
)
from .errors import GenerationFailed, PipelineError
from .generator import (
    ExternalNameExtractor,
    ExternalPerplexityScorer,
    FallbackGenerator,
    GeneratorClient,
    HttpGeneratorClient,
)
from .instructions import (
    InstructionPair,
    OPERATORS_BY_NAME,
    build_instruction_dataset,
    load_forum_posts,
    load_seed_instructions,
    select_forum_answers,
)
from .kg import GraphSchema, Triple, build_graph, load_triples, save_triples
from .ngram import NgramModel, train_ngram
from .quality import (
    CharCjkTokenizer,
    MaxEnsembleScorer,
    NgramScorer,
    PerplexityScorer,
    ThresholdPolicy,
    filter_chapter,
    segment_sentences,
    wrap_sentences,
)
from .structured import (
    Datav1Config,
    Merge,
    MergeSpec,
    RedactionSpec,
    StructuredRecord,
    build_datav1,
    build_datav2,
    derive_record_rng,
    group_records,
    load_records,
    merge_fields,
    redact,
)
from .util import atomic_write_text, derive_rng, write_jsonl

T = TypeVar("T")
R = TypeVar("R")


@dataclass
class StageStats:
    name: str
    ingested: int = 0
    emitted: int = 0
    skipped: int = 0
    seconds: float = 0.0
    detail: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "ingested": self.ingested,
            "emitted": self.emitted,
            "skipped": self.skipped,
            "seconds": round(self.seconds, 4),
            "detail": self.detail,
        }


@dataclass
class RunReport:
    seed: int
    config_hash: str
    stages: list[StageStats] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    config: dict[str, Any] = field(default_factory=dict)

    def stage(self, name: str) -> StageStats:
        stats = StageStats(name=name)
        self.stages.append(stats)
        return stats

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "config_hash": self.config_hash,
            "stages": [s.to_dict() for s in self.stages],
            "errors": self.errors,
            "config": self.config,
        }

    def save(self, path: Path) -> None:
        atomic_write_text(path, json.dumps(self.to_dict(), ensure_ascii=False, indent=2) + "\n")


def _map_ordered(
    fn: Callable[[T], R], items: Sequence[T], workers: int
) -> list[R]:
    """Apply fn to every item; output order always follows input order."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def make_generator_client(config: PipelineConfig) -> GeneratorClient:
    gen = config.generator
    if gen.endpoint:
        return HttpGeneratorClient(
            endpoint=gen.endpoint, retries=gen.retries, backoff=gen.backoff, timeout=gen.timeout
        )
    return FallbackGenerator()


# --- documents stage -------------------------------------------------------------


@dataclass
class PreparedChapter:
    doc_id: str
    chapter_index: int
    heading: str
    text: str
    prefix: str
    name_raw: str | None
    name_title: str | None

    def to_row(self) -> dict[str, Any]:
        return {
            "doc_id": self.doc_id,
            "chapter_index": self.chapter_index,
            "heading": self.heading,
            "text": self.text,
            "prefix": self.prefix,
            "name_raw": self.name_raw,
            "name_title": self.name_title,
        }


def prepare_document(
    doc: RawDocument, config: PipelineConfig, client: GeneratorClient | None = None
) -> list[PreparedChapter]:
    """Split one document, extract its name once, and prefix every chapter."""
    split = SplitConfig(heading_patterns=tuple(config.documents.heading_patterns))
    chapters = split_chapters(doc, split)
    if config.documents.name_extractor == "external":
        extractor = ExternalNameExtractor(client or make_generator_client(config))
    else:
        extractor = PatternNameExtractor()
    name = extract_document_name(doc.text, extractor)
    rng = derive_rng(config.seed, "prefix", doc.doc_id)
    prepared = []
    for chapter in chapters:
        if name is not None:
            prefix = generate_prefix(name, config.documents.prefix_templates, rng)
        else:
            fallback = DocumentName(raw=doc.doc_id, title="", confidence=0.0)
            prefix = generate_prefix(fallback, [config.documents.fallback_prefix_template], rng)
        prepared.append(
            PreparedChapter(
                doc_id=doc.doc_id,
                chapter_index=chapter.chapter_index,
                heading=chapter.heading,
                text=chapter.text,
                prefix=prefix,
                name_raw=name.raw if name else None,
                name_title=name.title if name else None,
            )
        )
    return prepared


def stage_documents(
    config: PipelineConfig, report: RunReport, client: GeneratorClient | None = None
) -> list[PreparedChapter]:
    stats = report.stage("documents")
    start = time.monotonic()
    chapters: list[PreparedChapter] = []
    input_dir = config.inputs.get("standard_document")
    if input_dir:
        result = ingest_documents(Path(input_dir), "standard_document")
        stats.ingested = len(result.documents) + len(result.skipped)
        stats.skipped = len(result.skipped)
        stats.detail["skipped_files"] = [f"{name}: {reason}" for name, reason in result.skipped]
        docs = sorted(result.documents, key=lambda d: d.doc_id)
        per_doc = _map_ordered(
            lambda d: prepare_document(d, config, client), docs, config.workers
        )
        for prepared in per_doc:
            chapters.extend(prepared)
        stats.emitted = len(result.documents)
    stats.detail["chapters"] = len(chapters)
    stats.seconds = time.monotonic() - start
    return chapters


def write_chapters(chapters: Sequence[PreparedChapter], path: Path) -> int:
    return write_jsonl(path, (c.to_row() for c in chapters))


def read_chapters(path: Path) -> list[PreparedChapter]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                out.append(PreparedChapter(**row))
    return out


# --- filter stage ----------------------------------------------------------------


def build_scorer(
    config: PipelineConfig,
    chapters: Sequence[PreparedChapter],
    client: GeneratorClient | None = None,
) -> PerplexityScorer:
    """Assemble the configured scorer; the n-gram model is loaded from disk
    when model_path is set, otherwise trained on the chapters themselves."""
    flt = config.filter
    ngram_scorer: NgramScorer | None = None
    if flt.scorer in ("ngram", "ensemble"):
        if flt.model_path:
            model = NgramModel.load(Path(flt.model_path))
        else:
            tokenizer = CharCjkTokenizer()
            corpus = []
            for chapter in chapters:
                for sentence in segment_sentences(chapter.text):
                    tokens = tokenizer.tokenize(sentence.text)
                    if tokens:
                        corpus.append(tokens)
            if not corpus:
                raise PipelineError("no scoreable sentences to train the n-gram model on")
            model = train_ngram(corpus, n=flt.n, k=flt.k)
        ngram_scorer = NgramScorer(model=model)
    if flt.scorer == "ngram":
        assert ngram_scorer is not None
        return ngram_scorer
    if client is None:
        client = make_generator_client(config)
    external = ExternalPerplexityScorer(client)
    if flt.scorer == "external":
        return external
    assert ngram_scorer is not None
    return MaxEnsembleScorer(ngram_scorer, external)


def filter_prepared_chapter(
    chapter: PreparedChapter,
    scorer: PerplexityScorer | None,
    policy: ThresholdPolicy,
    max_chars: int,
) -> tuple[list[TrainingExample], int]:
    """Filter one chapter's body, re-attach heading and prefix, and wrap
    long text at sentence boundaries.  Returns (examples, removed count)."""
    if scorer is None:
        kept_text = chapter.text
        removed = 0
    else:
        sentences = segment_sentences(chapter.text)
        filt = filter_chapter(sentences, scorer, policy)
        kept_text = "".join(s.text for s in filt.kept)
        removed = len(filt.removed)
    body = (chapter.heading + kept_text).strip()
    if not body:
        return [], removed
    examples = []
    for piece_index, piece in enumerate(wrap_sentences(body, max_chars)):
        prefixed = attach_prefix(
            Chapter(
                doc_id=chapter.doc_id,
                chapter_index=chapter.chapter_index,
                heading="",
                text=piece,
            ),
            chapter.prefix,
        )
        meta: dict[str, Any] = {
            "doc_id": chapter.doc_id,
            "chapter_index": chapter.chapter_index,
            "piece_index": piece_index,
            "removed_sentences": removed,
        }
        if chapter.name_raw:
            meta["document_name"] = chapter.name_raw
        examples.append(
            TrainingExample.make(source="standard_chapter", text=prefixed.emitted_text, meta=meta)
        )
    return examples, removed


def stage_filter(
    config: PipelineConfig,
    chapters: Sequence[PreparedChapter],
    report: RunReport,
    client: GeneratorClient | None = None,
) -> list[TrainingExample]:
    stats = report.stage("filter")
    start = time.monotonic()
    if not chapters:
        stats.seconds = time.monotonic() - start
        return []
    scorer: PerplexityScorer | None = None
    if config.filter.enabled:
        scorer = build_scorer(config, chapters, client)
    policy = ThresholdPolicy(config.filter.policy_kind, config.filter.policy_value)
    ordered = sorted(chapters, key=lambda c: (c.doc_id, c.chapter_index))
    results = _map_ordered(
        lambda c: filter_prepared_chapter(c, scorer, policy, config.documents.max_example_chars),
        ordered,
        config.workers,
    )
    examples: list[TrainingExample] = []
    removed_total = 0
    for chapter_examples, removed in results:
        examples.extend(chapter_examples)
        removed_total += removed
    stats.ingested = len(chapters)
    stats.emitted = len(examples)
    stats.detail["removed_sentences"] = removed_total
    stats.seconds = time.monotonic() - start
    return examples


# --- structured stage ---------------------------------------------------------------


def prepare_records(config: PipelineConfig, warnings: list[str]) -> list[StructuredRecord]:
    st = config.structured
    if not st.records:
        return []
    records = load_records(Path(st.records), id_field=st.id_field)
    redaction = RedactionSpec(
        denylist=frozenset(st.denylist), value_patterns=tuple(st.value_patterns)
    )
    merge_spec = MergeSpec(
        merges=tuple(
            Merge(
                sources=tuple(m["sources"]),
                target=str(m["target"]),
                joiner=str(m.get("joiner", " ")),
            )
            for m in st.merges
        )
    )
    prepared = []
    for rec in records:
        rec = redact(rec, redaction)
        rec = merge_fields(rec, merge_spec, warnings)
        prepared.append(rec)
    return prepared


def stage_structured(
    config: PipelineConfig,
    records: Sequence[StructuredRecord],
    report: RunReport,
    client: GeneratorClient | None = None,
) -> list[TrainingExample]:
    stats = report.stage("structured")
    start = time.monotonic()
    examples: list[TrainingExample] = []
    st = config.structured
    if records:
        grouping = tuple(st.grouping_fields)
        for group in group_records(records, grouping):
            v1 = build_datav1(
                group,
                Datav1Config(
                    grouping_fields=grouping,
                    item_key=st.item_key,
                    item_fields=tuple(st.item_fields) if st.item_fields else None,
                ),
            )
            examples.append(
                TrainingExample.make(
                    source="datav1",
                    text=v1.render(),
                    meta={"record_ids": [r.record_id for r in group]},
                )
            )
        if client is None:
            client = make_generator_client(config)

        def verbalize(rec: StructuredRecord) -> list[TrainingExample] | str:
            rng = derive_record_rng(config.seed, rec.record_id)
            try:
                return build_datav2(rec, st.K, client, rng, q=st.q)
            except GenerationFailed as exc:
                return f"record {rec.record_id}: {exc}"

        ordered = sorted(records, key=lambda r: r.record_id)
        failures = 0
        for result in _map_ordered(verbalize, ordered, config.workers):
            if isinstance(result, str):
                report.errors.append(result)
                failures += 1
            else:
                examples.extend(result)
        stats.detail["generator_failures"] = failures
        stats.skipped = failures
    stats.ingested = len(records)
    stats.emitted = len(examples)
    stats.seconds = time.monotonic() - start
    return examples


# --- auxiliary stage -----------------------------------------------------------------


def stage_auxiliary(config: PipelineConfig, report: RunReport) -> list[TrainingExample]:
    stats = report.stage("auxiliary")
    start = time.monotonic()
    examples: list[TrainingExample] = []
    skipped_entries = 0
    ingested = 0
    max_chars = config.documents.max_example_chars
    for kind in AUXILIARY_KINDS:
        input_dir = config.inputs.get(kind)
        if not input_dir:
            continue
        result = ingest_documents(Path(input_dir), kind)
        ingested += len(result.documents) + len(result.skipped)
        skipped_entries += len(result.skipped)
        for doc in sorted(result.documents, key=lambda d: d.doc_id):
            aux = ingest_auxiliary(doc)
            skipped_entries += len(aux.skipped)
            for ex in aux.examples:
                pieces = wrap_sentences(ex.text, max_chars)
                if len(pieces) == 1:
                    examples.append(ex)
                else:
                    for i, piece in enumerate(pieces):
                        meta = dict(ex.meta, piece_index=i)
                        examples.append(TrainingExample.make(ex.source, piece, meta))
    stats.ingested = ingested
    stats.emitted = len(examples)
    stats.skipped = skipped_entries
    stats.seconds = time.monotonic() - start
    return examples


# --- instructions stage ---------------------------------------------------------------


def stage_instructions(
    config: PipelineConfig, report: RunReport, client: GeneratorClient | None = None
) -> list[InstructionPair]:
    stats = report.stage("instructions")
    start = time.monotonic()
    ins = config.instructions
    sources: list[InstructionPair] = []
    seed_pairs: list[InstructionPair] = []
    if ins.seeds:
        seeds = load_seed_instructions(Path(ins.seeds))
        stats.detail["seed_count"] = seeds.count
        stats.detail["seed_skipped_lines"] = seeds.skipped
        if seeds.warning:
            stats.detail["seed_warning"] = seeds.warning
        seed_pairs = seeds.pairs
    forum_pairs: list[InstructionPair] = []
    if ins.forum:
        posts, bad_lines = load_forum_posts(Path(ins.forum))
        stats.detail["forum_posts"] = len(posts)
        stats.detail["forum_skipped_lines"] = bad_lines
        forum_pairs = select_forum_answers(
            posts, min_post_count=ins.min_post_count, top_m=ins.top_m
        )
    sources = seed_pairs + forum_pairs
    if ins.evolve_forum:
        evolvable, frozen = sources, []
    else:
        evolvable, frozen = seed_pairs, forum_pairs
    if client is None:
        client = make_generator_client(config)
    ops = [OPERATORS_BY_NAME[name] for name in ins.operators]
    built = build_instruction_dataset(
        evolvable,
        rounds=ins.rounds,
        ops=ops,
        client=client,
        master_seed=config.seed,
        frozen=frozen,
    )
    pairs = built.pairs
    stats.ingested = len(sources)
    stats.emitted = len(pairs)
    stats.detail["evolution_failures"] = len(built.failures)
    stats.detail["round_sizes"] = built.round_sizes
    stats.seconds = time.monotonic() - start
    return pairs


# --- knowledge-graph stage ---------------------------------------------------------


def stage_kg(
    config: PipelineConfig, records: Sequence[StructuredRecord], report: RunReport
) -> list[Triple]:
    stats = report.stage("kg")
    start = time.monotonic()
    kg_cfg = config.kg
    extra = load_triples(Path(kg_cfg.text_triples)) if kg_cfg.text_triples else []
    if kg_cfg.subject_field and kg_cfg.predicates:
        schema = GraphSchema(subject_field=kg_cfg.subject_field, predicates=dict(kg_cfg.predicates))
        built = build_graph(records, schema, extra_triples=extra)
        stats.skipped = len(built.skipped)
        stats.detail["records_missing_subject"] = built.skipped[:20]
        triples = built.graph.triples
    else:
        triples = extra
    stats.ingested = len(records)
    stats.emitted = len(triples)
    stats.seconds = time.monotonic() - start
    return triples


# --- run-all -----------------------------------------------------------------------


@dataclass
class PipelineOutputs:
    corpus_path: Path
    instructions_path: Path
    graph_path: Path
    report_path: Path
    chapters_path: Path


def output_paths(out_dir: Path) -> PipelineOutputs:
    return PipelineOutputs(
        corpus_path=out_dir / "corpus.jsonl",
        instructions_path=out_dir / "instructions.jsonl",
        graph_path=out_dir / "graph.jsonl",
        report_path=out_dir / "report.json",
        chapters_path=out_dir / "chapters.jsonl",
    )


def run_pipeline(config: PipelineConfig) -> RunReport:
    """All stages in order, with atomic writes and a JSON run report."""
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = output_paths(out_dir)
    report = RunReport(seed=config.seed, config_hash=config.config_hash(), config=config.to_dict())
    client = make_generator_client(config)
    try:
        chapters = stage_documents(config, report, client)
        write_chapters(chapters, paths.chapters_path)
        standard_examples = stage_filter(config, chapters, report, client)

        warnings: list[str] = []
        records = prepare_records(config, warnings)
        report.errors.extend(warnings)
        structured_examples = stage_structured(config, records, report, client)

        auxiliary_examples = stage_auxiliary(config, report)

        examples = standard_examples + structured_examples + auxiliary_examples
        emit_stats = report.stage("emit")
        start = time.monotonic()
        emit_stats.ingested = len(examples)
        if config.dedup:
            examples = dedup_examples(examples)
        emit_stats.skipped = emit_stats.ingested - len(examples)
        emit_stats.emitted = emit_corpus(examples, paths.corpus_path)
        emit_stats.seconds = time.monotonic() - start

        pairs = stage_instructions(config, report, client)
        write_jsonl(paths.instructions_path, (p.to_row() for p in pairs))

        triples = stage_kg(config, records, report)
        save_triples(paths.graph_path, triples)
    finally:
        report.save(paths.report_path)
    return report
