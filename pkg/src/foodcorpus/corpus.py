"""Training-corpus line type, deduplication, and JSONL emission."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .util import atomic_write_text, content_id

# Source tags a corpus line may carry; fixed by the output schema.
SOURCES = (
    "standard_chapter",
    "datav1",
    "datav2",
    "dictionary",
    "tutorial",
    "sentiment_news",
    "law",
    "exam_question",
)


@dataclass
class TrainingExample:
    id: str
    text: str
    source: str
    meta: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def make(cls, source: str, text: str, meta: dict[str, Any] | None = None) -> "TrainingExample":
        return cls(id=content_id(source, text), text=text, source=source, meta=meta or {})

    def to_row(self) -> dict[str, Any]:
        # Key order is part of the file contract.
        return {"id": self.id, "text": self.text, "source": self.source, "meta": self.meta}


def dedup_examples(examples: Iterable[TrainingExample]) -> list[TrainingExample]:
    """Corpus-wide exact-text dedup, keeping the duplicate with min (source, id).

    The relative order of the surviving examples is preserved.
    """
    examples = list(examples)
    best: dict[str, TrainingExample] = {}
    for ex in examples:
        cur = best.get(ex.text)
        if cur is None or (ex.source, ex.id) < (cur.source, cur.id):
            best[ex.text] = ex
    out = []
    seen: set[str] = set()
    for ex in examples:
        if best[ex.text] is ex and ex.text not in seen:
            out.append(ex)
            seen.add(ex.text)
    return out


def emit_corpus(examples: Iterable[TrainingExample], out_path: Path) -> int:
    """Write one JSON object per line (UTF-8, fixed key order, no BOM)."""
    rows = [ex.to_row() for ex in examples]
    for row in rows:
        if not row["text"]:
            raise ValueError(f"example {row['id']} has empty text")
    atomic_write_text(out_path, "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows))
    return len(rows)


def load_corpus(path: Path) -> list[TrainingExample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                out.append(TrainingExample(row["id"], row["text"], row["source"], row["meta"]))
    return out
