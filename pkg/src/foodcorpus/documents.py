"""OCR'd document ingestion: chapter splitting, document-name extraction,
and per-chapter prefix generation.

Different standards describe the same testing item differently, so every
chapter gets a prefix naming its owning document before the text enters
the corpus.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from random import Random
from typing import Protocol

from .corpus import TrainingExample
from .errors import ConfigError

SOURCE_KINDS = (
    "standard_document",
    "dictionary",
    "tutorial",
    "sentiment_news",
    "law",
    "exam_question",
)

AUXILIARY_KINDS = tuple(k for k in SOURCE_KINDS if k != "standard_document")


@dataclass(frozen=True)
class RawDocument:
    doc_id: str
    text: str
    source_path: str
    source_kind: str


@dataclass(frozen=True)
class Chapter:
    doc_id: str
    chapter_index: int
    heading: str  # heading line verbatim, terminator included; "" for the preamble
    text: str     # body bytes, verbatim


@dataclass(frozen=True)
class DocumentName:
    raw: str
    title: str
    confidence: float
    position: int = 0


@dataclass(frozen=True)
class PrefixedChapter:
    chapter: Chapter
    prefix: str
    document_name: DocumentName | None

    @property
    def emitted_text(self) -> str:
        return self.prefix + "\n" + self.chapter.text


class NameExtractor(Protocol):
    def candidates(self, text: str) -> list[DocumentName]: ...


# --- ingestion ---------------------------------------------------------------


@dataclass
class IngestResult:
    documents: list[RawDocument]
    skipped: list[tuple[str, str]]  # (file name, reason)


def ingest_documents(input_dir: Path, kind: str) -> IngestResult:
    """One RawDocument per UTF-8 .txt file, ids assigned in file-name order."""
    if kind not in SOURCE_KINDS:
        raise ValueError(f"unknown source kind {kind!r}")
    input_dir = Path(input_dir)
    if not input_dir.is_dir():
        raise FileNotFoundError(f"input directory does not exist: {input_dir}")
    documents: list[RawDocument] = []
    skipped: list[tuple[str, str]] = []
    for path in sorted(input_dir.iterdir(), key=lambda p: p.name):
        if not path.is_file():
            continue
        try:
            text = path.read_bytes().decode("utf-8")
        except UnicodeDecodeError:
            skipped.append((path.name, "not valid UTF-8"))
            continue
        if not text.strip():
            skipped.append((path.name, "empty after trimming"))
            continue
        documents.append(
            RawDocument(doc_id=path.stem, text=text, source_path=str(path), source_kind=kind)
        )
    return IngestResult(documents=documents, skipped=skipped)


# --- chapter splitting --------------------------------------------------------

DEFAULT_HEADING_PATTERNS = (
    r"第\s*[一二三四五六七八九十百千零〇两\d]+\s*[章节篇].*",   # 第X章 / 第X节
    r"\d{1,2}(?:\.\d{1,3})+\s*\S.*",                            # 4.2 检验方法
    r"\d{1,2}\s+\S.*",                                          # 3 术语和定义
    r"附\s*录\s*[A-Z].*",                                       # 附录A
)


@dataclass(frozen=True)
class SplitConfig:
    heading_patterns: tuple[str, ...] = DEFAULT_HEADING_PATTERNS

    def __post_init__(self) -> None:
        if not self.heading_patterns:
            raise ValueError("at least one heading pattern is required")


def _is_heading(line: str, patterns: tuple[str, ...]) -> bool:
    stripped = line.strip()
    if not stripped:
        return False
    return any(re.fullmatch(p, stripped) for p in patterns)


def split_chapters(doc: RawDocument, rules: SplitConfig | None = None) -> list[Chapter]:
    """A chapter starts at every heading line; byte concatenation of
    heading+text over all chapters reproduces the document exactly."""
    rules = rules or SplitConfig()
    if not doc.text:
        raise ValueError(f"document {doc.doc_id} is empty")
    raw: list[tuple[str, list[str]]] = []
    current: tuple[str, list[str]] | None = None
    for line in doc.text.splitlines(keepends=True):
        if _is_heading(line, rules.heading_patterns):
            current = (line, [])
            raw.append(current)
        else:
            if current is None:
                current = ("", [])
                raw.append(current)
            current[1].append(line)
    return [
        Chapter(doc_id=doc.doc_id, chapter_index=i, heading=h, text="".join(body))
        for i, (h, body) in enumerate(raw)
    ]


# --- document-name extraction ---------------------------------------------------

STANDARD_CODE_PATTERN = r"[A-Z]{1,8}(?:/[A-Z]{1,4})*\s?\d+(?:\.\d+)?-(?:19|20)\d{2}"
CJK_TITLE_PATTERN = r"[㐀-䶿一-鿿]+"


# Citation frames like 依据…执行 / 按…实施 put a verb right after the title;
# those verbs are never the tail of a standard's own title.
TITLE_TRAILING_STOPWORDS = ("执行", "实施", "为准", "进行", "办理")


@dataclass
class PatternNameExtractor:
    """Matches standard-code identifiers like "GB 5009.12-2017" plus any
    immediately following CJK title run."""

    code_patterns: tuple[str, ...] = (STANDARD_CODE_PATTERN,)
    title_pattern: str = CJK_TITLE_PATTERN
    title_stopwords: tuple[str, ...] = TITLE_TRAILING_STOPWORDS
    with_title_confidence: float = 0.9
    bare_confidence: float = 0.6

    def _trim_title(self, title: str) -> str:
        trimmed = True
        while trimmed:
            trimmed = False
            for word in self.title_stopwords:
                if title.endswith(word):
                    title = title[: -len(word)]
                    trimmed = True
        return title

    def candidates(self, text: str) -> list[DocumentName]:
        title_re = re.compile(self.title_pattern)
        found: dict[tuple[str, int], DocumentName] = {}
        for pattern in self.code_patterns:
            for m in re.finditer(pattern, text):
                key = (m.group(0), m.start())
                if key in found:
                    continue
                title_m = title_re.match(text, m.end())
                title = self._trim_title(title_m.group(0)) if title_m else ""
                confidence = self.with_title_confidence if title else self.bare_confidence
                found[key] = DocumentName(
                    raw=m.group(0), title=title, confidence=confidence, position=m.start()
                )
        return sorted(found.values(), key=lambda c: (-c.confidence, c.position))


def extract_document_name(text: str, extractor: NameExtractor | None = None) -> DocumentName | None:
    extractor = extractor or PatternNameExtractor()
    candidates = extractor.candidates(text)
    return candidates[0] if candidates else None


# --- prefix generation -----------------------------------------------------------

DEFAULT_PREFIX_TEMPLATES = (
    "【{name} {title}】",
    "以下内容出自{name} {title}。",
    "{name} {title}：",
)

DEFAULT_FALLBACK_PREFIX_TEMPLATE = "【文档 {name}】"


def validate_prefix_templates(templates: tuple[str, ...] | list[str]) -> None:
    problems = [
        f"prefix template {i} missing the {{name}} placeholder: {t!r}"
        for i, t in enumerate(templates)
        if "{name}" not in t
    ]
    if not templates:
        problems.append("prefix template list is empty")
    if problems:
        raise ConfigError(problems)


def generate_prefix(name: DocumentName, templates: list[str] | tuple[str, ...], rng: Random) -> str:
    """Pick one template uniformly and substitute {name} / {title}."""
    validate_prefix_templates(templates)
    template = templates[rng.randrange(len(templates))]
    return template.replace("{name}", name.raw).replace("{title}", name.title)


def attach_prefix(chapter: Chapter, prefix: str, name: DocumentName | None = None) -> PrefixedChapter:
    if not prefix:
        raise ValueError("prefix must be non-empty; a chapter must not lose attribution")
    return PrefixedChapter(chapter=chapter, prefix=prefix, document_name=name)


# --- auxiliary source ingestion ---------------------------------------------------

DICT_SEPARATORS = ("：", ":", "\t")  # ：, :, tab
LAW_PROVISION_RE = re.compile(r"(?m)^\s*第[一二三四五六七八九十百千零〇\d]+条")
EXAM_QUESTION_RE = re.compile(r"(?m)^\s*(?:\d{1,3}\s*[\.．、]|[一二三四五六七八九十]+\s*、|第[一二三四五六七八九十百\d]+题)")


@dataclass
class AuxiliaryResult:
    examples: list[TrainingExample]
    skipped: list[str]


def ingest_auxiliary(doc: RawDocument) -> AuxiliaryResult:
    """Split a non-standard source into corpus entries by its kind's rule."""
    if doc.source_kind == "standard_document":
        raise ValueError("standard documents go through the chapter pipeline")
    if doc.source_kind == "dictionary":
        entries, skipped = _split_dictionary(doc.text)
    elif doc.source_kind == "tutorial":
        entries = [p.strip() for p in re.split(r"\n\s*\n", doc.text) if p.strip()]
        skipped = []
    elif doc.source_kind == "sentiment_news":
        entries = [doc.text.strip()]
        skipped = []
    elif doc.source_kind == "law":
        entries = _split_at_markers(doc.text, LAW_PROVISION_RE)
        skipped = []
    elif doc.source_kind == "exam_question":
        entries = _split_at_markers(doc.text, EXAM_QUESTION_RE)
        skipped = []
    else:
        raise ValueError(f"unknown source kind {doc.source_kind!r}")
    examples = [
        TrainingExample.make(
            source=doc.source_kind,
            text=entry,
            meta={"doc_id": doc.doc_id, "entry_index": i},
        )
        for i, entry in enumerate(entries)
        if entry
    ]
    return AuxiliaryResult(examples=examples, skipped=skipped)


def _split_dictionary(text: str) -> tuple[list[str], list[str]]:
    entries: list[str] = []
    skipped: list[str] = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        cut = min((line.find(s) for s in DICT_SEPARATORS if line.find(s) > 0), default=-1)
        if cut > 0 and line[cut + 1 :].strip():
            entries.append(line)
        else:
            skipped.append(line)
    return entries, skipped


def _split_at_markers(text: str, marker: re.Pattern[str]) -> list[str]:
    starts = [m.start() for m in marker.finditer(text)]
    if not starts:
        return [text.strip()]
    bounds = ([0] if starts[0] > 0 else []) + starts + [len(text)]
    pieces = [text[a:b].strip() for a, b in zip(bounds, bounds[1:])]
    return [p for p in pieces if p]
