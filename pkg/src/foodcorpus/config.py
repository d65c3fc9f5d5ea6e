"""Pipeline configuration: one YAML file drives every stage.

Validation is aggregate: every violation is reported at once, each naming
the offending key path.  Defaults are filled in before anything runs and
the effective config is echoed into the run report.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .documents import (
    DEFAULT_FALLBACK_PREFIX_TEMPLATE,
    DEFAULT_HEADING_PATTERNS,
    DEFAULT_PREFIX_TEMPLATES,
    SOURCE_KINDS,
)
from .errors import ConfigError
from .instructions import OPERATORS_BY_NAME


@dataclass
class DocumentsConfig:
    heading_patterns: list[str] = field(default_factory=lambda: list(DEFAULT_HEADING_PATTERNS))
    prefix_templates: list[str] = field(default_factory=lambda: list(DEFAULT_PREFIX_TEMPLATES))
    fallback_prefix_template: str = DEFAULT_FALLBACK_PREFIX_TEMPLATE
    max_example_chars: int = 2000
    name_extractor: str = "pattern"  # pattern | external


@dataclass
class FilterConfig:
    enabled: bool = True
    scorer: str = "ngram"  # ngram | external | ensemble
    n: int = 3
    k: float = 0.5
    policy_kind: str = "percentile"
    policy_value: float = 90.0
    model_path: str | None = None


@dataclass
class StructuredConfig:
    records: str | None = None
    id_field: str | None = None
    denylist: list[str] = field(default_factory=list)
    value_patterns: list[str] = field(default_factory=list)
    merges: list[dict[str, Any]] = field(default_factory=list)
    grouping_fields: list[str] = field(default_factory=list)
    item_key: str = "检测项目"
    item_fields: list[str] | None = None
    K: int = 2
    q: float = 0.5


@dataclass
class InstructionsConfig:
    forum: str | None = None
    seeds: str | None = None
    min_post_count: int = 0
    top_m: int = 1
    rounds: int = 1
    operators: list[str] = field(default_factory=lambda: list(OPERATORS_BY_NAME))
    evolve_forum: bool = True


@dataclass
class KgConfig:
    subject_field: str | None = None
    predicates: dict[str, str] = field(default_factory=dict)
    text_triples: str | None = None
    limit: int = 8
    prompt_template: str = "已知以下事实：\n{facts}\n请回答问题：{query}"


@dataclass
class GeneratorConfig:
    endpoint: str | None = None  # None -> offline fallback client
    retries: int = 3
    backoff: float = 0.5
    timeout: float = 30.0


@dataclass
class PipelineConfig:
    seed: int
    output_dir: str
    workers: int = 1
    dedup: bool = True
    inputs: dict[str, str] = field(default_factory=dict)
    documents: DocumentsConfig = field(default_factory=DocumentsConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    structured: StructuredConfig = field(default_factory=StructuredConfig)
    instructions: InstructionsConfig = field(default_factory=InstructionsConfig)
    kg: KgConfig = field(default_factory=KgConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


_SECTION_TYPES = {
    "documents": DocumentsConfig,
    "filter": FilterConfig,
    "structured": StructuredConfig,
    "instructions": InstructionsConfig,
    "kg": KgConfig,
    "generator": GeneratorConfig,
}

_TOP_LEVEL_KEYS = {"seed", "output_dir", "workers", "dedup", "inputs"} | set(_SECTION_TYPES)


def load_config(path: Path, seed_override: int | None = None, out_override: str | None = None) -> PipelineConfig:
    """Parse, fill defaults, and validate; raises ConfigError listing every problem."""
    path = Path(path)
    raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")
    problems: list[str] = []

    unknown = sorted(set(raw) - _TOP_LEVEL_KEYS)
    for key in unknown:
        problems.append(f"unknown config key: {key}")

    sections: dict[str, Any] = {}
    for name, section_type in _SECTION_TYPES.items():
        data = raw.get(name, {}) or {}
        if not isinstance(data, dict):
            problems.append(f"{name}: must be a mapping")
            data = {}
        known = {f.name for f in section_type.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        for key in sorted(set(data) - known):
            problems.append(f"unknown config key: {name}.{key}")
        sections[name] = section_type(**{k: v for k, v in data.items() if k in known})

    seed = seed_override if seed_override is not None else raw.get("seed")
    if seed is None:
        problems.append("seed: a master seed is required")
        seed = 0
    output_dir = out_override or raw.get("output_dir")
    if not output_dir:
        problems.append("output_dir: required")
        output_dir = "."

    inputs = raw.get("inputs", {}) or {}
    if not isinstance(inputs, dict):
        problems.append("inputs: must be a mapping of source kind to directory")
        inputs = {}
    for kind in sorted(set(inputs) - set(SOURCE_KINDS)):
        problems.append(f"inputs.{kind}: unknown source kind")
    inputs = {k: str(v) for k, v in inputs.items() if k in SOURCE_KINDS}

    config = PipelineConfig(
        seed=int(seed),
        output_dir=str(output_dir),
        workers=int(raw.get("workers", 1)),
        dedup=bool(raw.get("dedup", True)),
        inputs=inputs,
        **sections,
    )
    _resolve_paths(config, base=path.parent, out_is_cwd_relative=out_override is not None)
    problems.extend(validate(config))
    if problems:
        raise ConfigError(problems)
    return config


def _resolve_paths(config: PipelineConfig, base: Path, out_is_cwd_relative: bool) -> None:
    """Paths in the config file are relative to the config file's directory;
    a CLI --out override stays relative to the working directory."""

    def resolve(p: str) -> str:
        candidate = Path(p)
        return str(candidate if candidate.is_absolute() else (base / candidate))

    config.inputs = {k: resolve(v) for k, v in config.inputs.items()}
    if not out_is_cwd_relative:
        config.output_dir = resolve(config.output_dir)
    if config.filter.model_path:
        config.filter.model_path = resolve(config.filter.model_path)
    if config.structured.records:
        config.structured.records = resolve(config.structured.records)
    if config.instructions.forum:
        config.instructions.forum = resolve(config.instructions.forum)
    if config.instructions.seeds:
        config.instructions.seeds = resolve(config.instructions.seeds)
    if config.kg.text_triples:
        config.kg.text_triples = resolve(config.kg.text_triples)


def validate(config: PipelineConfig) -> list[str]:
    """Config paths must already be resolved (load_config does this)."""
    problems: list[str] = []
    resolve = Path

    if config.workers < 1:
        problems.append("workers: must be >= 1")

    for kind, directory in config.inputs.items():
        if not resolve(directory).is_dir():
            problems.append(f"inputs.{kind}: directory does not exist: {directory}")

    def check_regex(pattern: str, key: str) -> None:
        try:
            re.compile(pattern)
        except re.error as exc:
            problems.append(f"{key}: invalid regex: {exc}")

    docs = config.documents
    if not docs.heading_patterns:
        problems.append("documents.heading_patterns: must be non-empty")
    for i, p in enumerate(docs.heading_patterns):
        check_regex(p, f"documents.heading_patterns[{i}]")
    for i, t in enumerate(docs.prefix_templates):
        if "{name}" not in t:
            problems.append(f"documents.prefix_templates[{i}]: missing {{name}} placeholder")
    if not docs.prefix_templates:
        problems.append("documents.prefix_templates: must be non-empty")
    if "{name}" not in docs.fallback_prefix_template:
        problems.append("documents.fallback_prefix_template: missing {name} placeholder")
    if docs.max_example_chars < 1:
        problems.append("documents.max_example_chars: must be >= 1")
    if docs.name_extractor not in ("pattern", "external"):
        problems.append(f"documents.name_extractor: unknown extractor {docs.name_extractor!r}")
    elif docs.name_extractor == "external" and not config.generator.endpoint:
        problems.append("documents.name_extractor: 'external' needs generator.endpoint")

    flt = config.filter
    if flt.scorer not in ("ngram", "external", "ensemble"):
        problems.append(f"filter.scorer: unknown scorer {flt.scorer!r}")
    if flt.n < 1:
        problems.append("filter.n: must be >= 1")
    if flt.k <= 0:
        problems.append("filter.k: must be > 0")
    if flt.policy_kind not in ("percentile", "absolute"):
        problems.append(f"filter.policy_kind: unknown policy {flt.policy_kind!r}")
    elif flt.policy_kind == "percentile" and not 0 < flt.policy_value < 100:
        problems.append("filter.policy_value: percentile must be in (0, 100)")
    elif flt.policy_kind == "absolute" and flt.policy_value <= 0:
        problems.append("filter.policy_value: absolute threshold must be > 0")
    if flt.model_path and not resolve(flt.model_path).is_file():
        problems.append(f"filter.model_path: file does not exist: {flt.model_path}")
    if flt.scorer in ("external", "ensemble") and not config.generator.endpoint:
        problems.append(f"filter.scorer: {flt.scorer!r} needs generator.endpoint")

    st = config.structured
    if st.records and not resolve(st.records).is_file():
        problems.append(f"structured.records: file does not exist: {st.records}")
    for i, p in enumerate(st.value_patterns):
        check_regex(p, f"structured.value_patterns[{i}]")
    if st.K < 1:
        problems.append("structured.K: must be >= 1 (datav2.K)")
    if not 0 <= st.q <= 1:
        problems.append("structured.q: must be in [0, 1]")
    if st.records and not st.grouping_fields:
        problems.append("structured.grouping_fields: required when records are configured")
    for i, m in enumerate(st.merges):
        if not isinstance(m, dict) or "sources" not in m or "target" not in m:
            problems.append(f"structured.merges[{i}]: needs 'sources' and 'target'")

    ins = config.instructions
    if ins.forum and not resolve(ins.forum).is_file():
        problems.append(f"instructions.forum: file does not exist: {ins.forum}")
    if ins.seeds and not resolve(ins.seeds).is_file():
        problems.append(f"instructions.seeds: file does not exist: {ins.seeds}")
    if ins.min_post_count < 0:
        problems.append("instructions.min_post_count: must be >= 0")
    if ins.top_m < 1:
        problems.append("instructions.top_m: must be >= 1")
    if ins.rounds < 0:
        problems.append("instructions.rounds: must be >= 0")
    for name in ins.operators:
        if name not in OPERATORS_BY_NAME:
            problems.append(f"instructions.operators: unknown operator {name!r}")

    kg = config.kg
    if kg.limit < 1:
        problems.append("kg.limit: must be >= 1")
    for placeholder in ("{facts}", "{query}"):
        if placeholder not in kg.prompt_template:
            problems.append(f"kg.prompt_template: missing {placeholder} placeholder")
    if kg.text_triples and not resolve(kg.text_triples).is_file():
        problems.append(f"kg.text_triples: file does not exist: {kg.text_triples}")
    if st.records and not kg.subject_field and kg.predicates:
        problems.append("kg.subject_field: required when kg.predicates are configured")

    gen = config.generator
    if gen.retries < 1:
        problems.append("generator.retries: must be >= 1")
    if gen.backoff < 0:
        problems.append("generator.backoff: must be >= 0")

    return problems
