"""Count-based n-gram language model with additive smoothing.

Stands in for a neural scorer behind the perplexity contract: same seam,
no model weights.  Sequences are padded with n-1 start markers and one end
marker; the prediction vocabulary holds the observed tokens plus UNK and
the end marker (the start marker only ever appears in contexts).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

START = "<s>"
END = "</s>"
UNK = "<unk>"

_FORMAT_TAG = "ngram-counts"
_FORMAT_VERSION = "1"


@dataclass
class NgramModel:
    n: int
    k: float
    vocab: set[str] = field(default_factory=lambda: {UNK, END})
    counts: dict[tuple[str, ...], dict[str, int]] = field(default_factory=dict)
    totals: dict[tuple[str, ...], int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("order n must be >= 1")
        if self.k <= 0:
            raise ValueError("smoothing k must be > 0")

    def _map(self, token: str) -> str:
        return token if token in self.vocab else UNK

    def prob(self, token: str, context: Sequence[str]) -> float:
        """Smoothed p(token | context); unseen tokens map to UNK."""
        token = self._map(token)
        ctx = tuple(t if (t == START or t in self.vocab) else UNK for t in context)
        count = self.counts.get(ctx, {}).get(token, 0)
        total = self.totals.get(ctx, 0)
        return (count + self.k) / (total + self.k * len(self.vocab))

    def logprob_sequence(self, tokens: Sequence[str]) -> tuple[float, int]:
        """Sum of ln p over the padded sequence and the scored-token count
        (tokens plus the end marker)."""
        padded = [START] * (self.n - 1) + [self._map(t) for t in tokens] + [END]
        total = 0.0
        for i in range(self.n - 1, len(padded)):
            total += math.log(self.prob(padded[i], padded[i - self.n + 1 : i]))
        return total, len(tokens) + 1

    def save(self, path: Path) -> None:
        """Line-oriented count table; header carries n, k, vocab size."""
        lines = [f"{_FORMAT_TAG}\t{_FORMAT_VERSION}\t{self.n}\t{self.k!r}\t{len(self.vocab)}"]
        for ctx in sorted(self.counts):
            row = self.counts[ctx]
            for token in sorted(row):
                lines.append(f"{' '.join(ctx)}\t{token}\t{row[token]}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "NgramModel":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n").split("\t")
            if len(header) != 5 or header[0] != _FORMAT_TAG or header[1] != _FORMAT_VERSION:
                raise ValueError(f"not a {_FORMAT_TAG} v{_FORMAT_VERSION} file: {path}")
            model = cls(n=int(header[2]), k=float(header[3]))
            declared_vocab = int(header[4])
            for lineno, line in enumerate(fh, start=2):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise ValueError(f"{path}:{lineno}: malformed count line")
                ctx = tuple(parts[0].split(" ")) if parts[0] else ()
                token, count = parts[1], int(parts[2])
                model.counts.setdefault(ctx, {})[token] = count
                model.totals[ctx] = model.totals.get(ctx, 0) + count
                if token != UNK:
                    model.vocab.add(token)
        if len(model.vocab) != declared_vocab:
            raise ValueError(
                f"vocab size mismatch in {path}: header says {declared_vocab}, "
                f"reconstructed {len(model.vocab)}"
            )
        return model


def train_ngram(corpus: Iterable[Sequence[str]], n: int, k: float) -> NgramModel:
    """Exact n-gram counts over padded sequences.

    Every window target feeds both the (context, token) count and the
    context total, so each smoothed conditional distribution sums to 1.
    """
    sequences = [list(seq) for seq in corpus]
    if not sequences:
        raise ValueError("training corpus is empty")
    model = NgramModel(n=n, k=k)
    for seq in sequences:
        model.vocab.update(seq)
    for seq in sequences:
        padded = [START] * (n - 1) + seq + [END]
        for i in range(n - 1, len(padded)):
            ctx = tuple(padded[i - n + 1 : i])
            row = model.counts.setdefault(ctx, {})
            row[padded[i]] = row.get(padded[i], 0) + 1
            model.totals[ctx] = model.totals.get(ctx, 0) + 1
    return model
