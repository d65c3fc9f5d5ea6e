"""foodcorpus: corpus construction for the food-testing domain.

Turns OCR'd standards documents, structured testing records, and auxiliary
text sources into a filtered pre-training corpus, an instruction-tuning
dataset, and a knowledge graph with query-time prompt assembly.
"""

__version__ = "0.1.0"

from .corpus import TrainingExample, dedup_examples, emit_corpus
from .documents import (
    Chapter,
    DocumentName,
    PrefixedChapter,
    RawDocument,
    SplitConfig,
    attach_prefix,
    extract_document_name,
    generate_prefix,
    ingest_auxiliary,
    ingest_documents,
    split_chapters,
)
from .kg import KnowledgeGraph, Triple, assemble_prompt, build_graph, parse_query, retrieve
from .ngram import NgramModel, train_ngram
from .quality import (
    FilterReport,
    NgramScorer,
    Sentence,
    ThresholdPolicy,
    filter_chapter,
    perplexity,
    segment_sentences,
)
from .structured import (
    StructuredRecord,
    build_datav1,
    build_datav2,
    merge_fields,
    redact,
    sample_field_assignment,
    sample_temperature,
)

__all__ = [
    "TrainingExample",
    "dedup_examples",
    "emit_corpus",
    "Chapter",
    "DocumentName",
    "PrefixedChapter",
    "RawDocument",
    "SplitConfig",
    "attach_prefix",
    "extract_document_name",
    "generate_prefix",
    "ingest_auxiliary",
    "ingest_documents",
    "split_chapters",
    "KnowledgeGraph",
    "Triple",
    "assemble_prompt",
    "build_graph",
    "parse_query",
    "retrieve",
    "NgramModel",
    "train_ngram",
    "FilterReport",
    "NgramScorer",
    "Sentence",
    "ThresholdPolicy",
    "filter_chapter",
    "perplexity",
    "segment_sentences",
    "StructuredRecord",
    "build_datav1",
    "build_datav2",
    "merge_fields",
    "redact",
    "sample_field_assignment",
    "sample_temperature",
]
