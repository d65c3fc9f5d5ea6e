"""Structured testing records to pre-training text.

Two serializations: datav1 is a dict whose testing-item key holds a
markdown table of the item's rows; datav2 verbalizes each record as K
natural-language texts under sampling rules that bound how often each
field is used.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from pathlib import Path
from random import Random
from typing import Iterable, Sequence

from .corpus import TrainingExample
from .generator import GenerationParams, GeneratorClient, generate_text
from .mdtable import render_table
from .util import derive_seed


@dataclass(frozen=True)
class StructuredRecord:
    record_id: str
    fields: dict[str, str]

    def __post_init__(self) -> None:
        if any(not name for name in self.fields):
            raise ValueError(f"record {self.record_id}: field names may not be empty")


def load_records(path: Path, id_field: str | None = None) -> list[StructuredRecord]:
    """Read records from CSV (header row) or JSONL, preserving field order."""
    path = Path(path)
    rows: list[dict[str, str]]
    if path.suffix.lower() == ".csv":
        with open(path, encoding="utf-8", newline="") as fh:
            rows = [
                {k: (v if v is not None else "") for k, v in r.items() if k is not None}
                for r in csv.DictReader(fh)
            ]
    else:
        rows = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rows.append({str(k): str(v) for k, v in json.loads(line).items()})
    records = []
    for i, row in enumerate(rows):
        if id_field is not None:
            record_id = row.pop(id_field, None) or f"r{i:06d}"
        else:
            record_id = f"r{i:06d}"
        records.append(StructuredRecord(record_id=record_id, fields=row))
    return records


# --- redaction and merging -----------------------------------------------------


@dataclass(frozen=True)
class RedactionSpec:
    denylist: frozenset[str] = frozenset()
    value_patterns: tuple[str, ...] = ()


def redact(record: StructuredRecord, spec: RedactionSpec) -> StructuredRecord:
    """Drop denylisted fields and scrub value-pattern matches; order preserved."""
    out: dict[str, str] = {}
    for name, value in record.fields.items():
        if name in spec.denylist:
            continue
        for pattern in spec.value_patterns:
            value = re.sub(pattern, "", value)
        out[name] = value
    return StructuredRecord(record_id=record.record_id, fields=out)


@dataclass(frozen=True)
class Merge:
    sources: tuple[str, ...]
    target: str
    joiner: str = " "


@dataclass(frozen=True)
class MergeSpec:
    merges: tuple[Merge, ...] = ()

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for m in self.merges:
            for s in m.sources:
                if s in seen:
                    raise ValueError(f"field {s!r} appears in more than one merge")
                seen.add(s)


def merge_fields(
    record: StructuredRecord,
    spec: MergeSpec,
    warnings: list[str] | None = None,
) -> StructuredRecord:
    """Replace each merge's source fields, at the first source's position,
    with their non-empty values joined. Missing sources warn and are skipped."""
    all_sources = {s for m in spec.merges for s in m.sources}
    for m in spec.merges:
        if m.target in record.fields and m.target not in all_sources:
            raise ValueError(f"merge target {m.target!r} collides with a surviving field")
    out: dict[str, str] = {}
    merge_at: dict[str, Merge] = {}
    for m in spec.merges:
        present = [s for s in m.sources if s in record.fields]
        if len(present) < len(m.sources) and warnings is not None:
            missing = [s for s in m.sources if s not in record.fields]
            warnings.append(f"record {record.record_id}: merge {m.target!r} missing {missing}")
        if present:
            merge_at[present[0]] = m
    for name, value in record.fields.items():
        if name in merge_at:
            m = merge_at[name]
            values = [record.fields[s] for s in m.sources if record.fields.get(s, "")]
            out[m.target] = m.joiner.join(values)
        elif name in all_sources:
            continue
        else:
            out[name] = value
    return StructuredRecord(record_id=record.record_id, fields=out)


# --- datav1: dict with a markdown-table value ------------------------------------


@dataclass(frozen=True)
class Datav1Config:
    grouping_fields: tuple[str, ...]
    item_key: str = "检测项目"
    item_fields: tuple[str, ...] | None = None  # default: every non-grouping field


@dataclass
class Datav1Example:
    entries: dict[str, str]

    def render(self) -> str:
        # Single line; JSON escapes the table's newlines.
        return json.dumps(self.entries, ensure_ascii=False)


def build_datav1(group: Sequence[StructuredRecord], config: Datav1Config) -> Datav1Example:
    """One food item's records become shared scalar entries plus a markdown
    table with one row per testing record, in input order."""
    if not group:
        raise ValueError("datav1 group is empty")
    first = group[0]
    for name in config.grouping_fields:
        if name not in first.fields:
            raise ValueError(f"grouping field {name!r} missing from record {first.record_id}")
    shared = {name: first.fields[name] for name in config.grouping_fields}
    for rec in group[1:]:
        for name in config.grouping_fields:
            if rec.fields.get(name) != shared[name]:
                raise ValueError(
                    f"record {rec.record_id} disagrees on grouping field {name!r}"
                )
    item_fields = config.item_fields or tuple(
        name for name in first.fields if name not in config.grouping_fields
    )
    rows = [[rec.fields.get(name, "") for name in item_fields] for rec in group]
    entries = dict(shared)
    entries[config.item_key] = render_table(list(item_fields), rows)
    return Datav1Example(entries=entries)


def group_records(
    records: Iterable[StructuredRecord], grouping_fields: tuple[str, ...]
) -> list[list[StructuredRecord]]:
    """Group by the grouping-field values, in first-appearance order.
    Records missing a grouping field are skipped by the caller's contract."""
    groups: dict[tuple[str, ...], list[StructuredRecord]] = {}
    for rec in records:
        if any(name not in rec.fields for name in grouping_fields):
            continue
        key = tuple(rec.fields[name] for name in grouping_fields)
        groups.setdefault(key, []).append(rec)
    return list(groups.values())


# --- datav2: constrained random verbalization --------------------------------------


class InfeasibleAssignment(ValueError):
    """K texts cannot be filled when K exceeds twice the field count."""


@dataclass
class FieldAssignment:
    per_text: list[list[str]]
    usage: dict[str, int]


def sample_field_assignment(
    field_names: Sequence[str],
    K: int,
    rng: Random,
    q: float = 0.5,
) -> FieldAssignment:
    """Deal-then-extend-then-repair sampler.

    Every field appears twice in a shuffled deck; one card is dealt to each
    of the K texts, each remaining card joins a uniformly chosen text that
    lacks the field with probability q, and any field left unused is
    repaired into a uniform text.  Guarantees: every text non-empty, every
    field used once or twice.
    """
    names = list(field_names)
    if K < 1:
        raise ValueError("K must be >= 1")
    if not names:
        raise ValueError("field set is empty")
    if K > 2 * len(names):
        raise InfeasibleAssignment(
            f"{K} texts cannot each get a field: {len(names)} fields used at most twice"
        )
    deck = [name for name in names for _ in range(2)]
    rng.shuffle(deck)
    texts: list[set[str]] = [{deck[i]} for i in range(K)]
    for name in deck[K:]:
        if rng.random() < q:
            eligible = [t for t in texts if name not in t]
            if eligible:
                eligible[rng.randrange(len(eligible))].add(name)
    for name in names:
        if not any(name in t for t in texts):
            eligible = [t for t in texts if name not in t]
            eligible[rng.randrange(len(eligible))].add(name)
    order = {name: i for i, name in enumerate(names)}
    per_text = [sorted(t, key=order.__getitem__) for t in texts]
    usage = {name: sum(name in t for t in texts) for name in names}
    return FieldAssignment(per_text=per_text, usage=usage)


def sample_temperature(rng: Random) -> float:
    return 0.5 + 0.5 * rng.random()


def build_datav2(
    record: StructuredRecord,
    K: int,
    client: GeneratorClient,
    rng: Random,
    q: float = 0.5,
) -> list[TrainingExample]:
    """K verbalized texts for one (already redacted and merged) record."""
    assignment = sample_field_assignment(list(record.fields), K, rng, q=q)
    examples: list[TrainingExample] = []
    for i, subset in enumerate(assignment.per_text):
        params = GenerationParams(
            temperature=sample_temperature(rng),
            seed=rng.randrange(2**32),
            fields_in_prompt=tuple(subset),
        )
        projection = {name: record.fields[name] for name in subset}
        text = generate_text(client, projection, params)
        examples.append(
            TrainingExample.make(
                source="datav2",
                text=text,
                meta={
                    "record_id": record.record_id,
                    "text_index": i,
                    "fields_used": list(subset),
                    "temperature": params.temperature,
                    "seed": params.seed,
                },
            )
        )
    return examples


def derive_record_rng(master_seed: int, record_id: str) -> Random:
    return Random(derive_seed(master_seed, "datav2", record_id))
