"""Hashing, seeded stream derivation, and atomic JSONL I/O helpers."""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from random import Random
from typing import Any, Iterable, Iterator


def stable_digest(*parts: object) -> bytes:
    """Hash a tuple of values into 16 bytes, stable across runs and platforms."""
    h = hashlib.blake2b(digest_size=16)
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(b"\x1f")
    return h.digest()


def derive_seed(*parts: object) -> int:
    return int.from_bytes(stable_digest(*parts), "big")


def derive_rng(*parts: object) -> Random:
    """Independent RNG stream keyed by (master seed, ids); scheduling-proof."""
    return Random(derive_seed(*parts))


def content_id(source: str, text: str) -> str:
    """Stable example id: truncated SHA-256 of the (source, text) pair."""
    h = hashlib.sha256()
    h.update(source.encode("utf-8"))
    h.update(b"\x00")
    h.update(text.encode("utf-8"))
    return h.hexdigest()[:16]


def atomic_write_text(path: Path, text: str) -> None:
    """Write via a same-directory temp file + rename so no partial file can land."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp.{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def dump_jsonl(rows: Iterable[dict[str, Any]]) -> str:
    return "".join(json.dumps(row, ensure_ascii=False) + "\n" for row in rows)


def write_jsonl(path: Path, rows: Iterable[dict[str, Any]]) -> int:
    rows = list(rows)
    atomic_write_text(path, dump_jsonl(rows))
    return len(rows)


def read_jsonl(path: Path) -> Iterator[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)
