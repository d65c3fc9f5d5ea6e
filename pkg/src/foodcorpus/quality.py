"""Sentence segmentation, perplexity scoring, and high-perplexity filtering.

OCR output of standards documents carries mangled tables and formulas;
scoring each sentence with a language model and dropping the high-perplexity
tail removes most of that damage while keeping fluent text.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .ngram import NgramModel

TERMINALS = "。！？；!?."  # 。！？；!?.
CLOSERS = "”’」』）)]】》〉>\"'"  # ”’」』）)]】》〉>"'


@dataclass(frozen=True)
class SegmentConfig:
    terminals: str = TERMINALS
    closers: str = CLOSERS


@dataclass
class Sentence:
    text: str
    index: int
    ppl: float | None = None


class UnscoreableSentence(ValueError):
    """The sentence tokenizes to zero tokens, so it has no perplexity."""


def segment_sentences(text: str, rules: SegmentConfig | None = None) -> list[Sentence]:
    """Split on terminal punctuation; closing quotes/brackets stay with the
    sentence they end.  Concatenating the pieces reproduces the input."""
    rules = rules or SegmentConfig()
    pieces: list[str] = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        if text[i] in rules.terminals:
            j = i + 1
            while j < n and text[j] in rules.closers:
                j += 1
            pieces.append(text[start:j])
            start = j
            i = j
        else:
            i += 1
    if start < n:
        pieces.append(text[start:])
    return [Sentence(text=p, index=idx) for idx, p in enumerate(pieces) if p]


class Tokenizer(Protocol):
    def tokenize(self, text: str) -> list[str]: ...


class CharCjkTokenizer:
    """Character tokens for CJK (any non-ASCII char), whitespace-delimited
    word tokens for ASCII runs."""

    def tokenize(self, text: str) -> list[str]:
        tokens: list[str] = []
        word: list[str] = []
        for ch in text:
            if ch.isspace():
                if word:
                    tokens.append("".join(word))
                    word = []
            elif ord(ch) < 128:
                word.append(ch)
            else:
                if word:
                    tokens.append("".join(word))
                    word = []
                tokens.append(ch)
        if word:
            tokens.append("".join(word))
        return tokens


class PerplexityScorer(Protocol):
    def score(self, text: str) -> float: ...


def perplexity(model: NgramModel, text: str, tokenizer: Tokenizer) -> float:
    """exp of the mean negative log-likelihood per token, end marker included."""
    tokens = tokenizer.tokenize(text)
    if not tokens:
        raise UnscoreableSentence(f"no tokens in {text!r}")
    logsum, count = model.logprob_sequence(tokens)
    return math.exp(-logsum / count)


@dataclass
class NgramScorer:
    model: NgramModel
    tokenizer: Tokenizer = field(default_factory=CharCjkTokenizer)

    def score(self, text: str) -> float:
        return perplexity(self.model, text, self.tokenizer)


@dataclass
class MaxEnsembleScorer:
    """Optional two-scorer mode: a sentence is as bad as its worst score."""

    first: PerplexityScorer
    second: PerplexityScorer

    def score(self, text: str) -> float:
        return max(self.first.score(text), self.second.score(text))


@dataclass(frozen=True)
class ThresholdPolicy:
    kind: str  # "absolute" | "percentile"
    value: float

    def __post_init__(self) -> None:
        if self.kind == "absolute":
            if self.value <= 0:
                raise ValueError("absolute threshold must be > 0")
        elif self.kind == "percentile":
            if not 0 < self.value < 100:
                raise ValueError("percentile must be in (0, 100)")
        else:
            raise ValueError(f"unknown policy kind {self.kind!r}")

    @classmethod
    def absolute(cls, value: float) -> "ThresholdPolicy":
        return cls("absolute", value)

    @classmethod
    def percentile(cls, value: float) -> "ThresholdPolicy":
        return cls("percentile", value)


def nearest_rank_percentile(values: Sequence[float], p: float) -> float:
    """p-th percentile by the nearest-rank rule (no interpolation)."""
    if not values:
        raise ValueError("no values")
    ordered = sorted(values)
    rank = math.ceil(p / 100 * len(ordered))
    return ordered[max(rank, 1) - 1]


@dataclass
class FilterReport:
    kept: list[Sentence]
    removed: list[Sentence]
    threshold_used: float | None

    @property
    def unscored(self) -> int:
        return sum(1 for s in self.kept if s.ppl is None)


def filter_chapter(
    sentences: Sequence[Sentence],
    scorer: PerplexityScorer,
    policy: ThresholdPolicy,
) -> FilterReport:
    """Score every sentence and drop those strictly above the threshold.

    Percentile thresholds are computed over this chapter's own scores.
    Sentences with no tokens cannot be scored and are always kept.
    """
    if not sentences:
        return FilterReport(kept=[], removed=[], threshold_used=None)
    scored: list[Sentence] = []
    for s in sentences:
        if s.ppl is not None:
            scored.append(s)
            continue
        try:
            ppl = scorer.score(s.text)
        except UnscoreableSentence:
            ppl = None
        scored.append(Sentence(text=s.text, index=s.index, ppl=ppl))
    ppls = [s.ppl for s in scored if s.ppl is not None]
    if not ppls:
        return FilterReport(kept=scored, removed=[], threshold_used=None)
    if policy.kind == "absolute":
        threshold = policy.value
    else:
        threshold = nearest_rank_percentile(ppls, policy.value)
    kept = [s for s in scored if s.ppl is None or s.ppl <= threshold]
    removed = [s for s in scored if s.ppl is not None and s.ppl > threshold]
    return FilterReport(kept=kept, removed=removed, threshold_used=threshold)


def wrap_sentences(text: str, max_chars: int, rules: SegmentConfig | None = None) -> list[str]:
    """Greedily pack whole sentences into pieces of at most max_chars.

    A single sentence longer than the budget stays intact on its own piece;
    text is never cut mid-sentence.
    """
    if len(text) <= max_chars:
        return [text] if text else []
    pieces: list[str] = []
    buf: list[str] = []
    size = 0
    for sentence in segment_sentences(text, rules):
        if buf and size + len(sentence.text) > max_chars:
            pieces.append("".join(buf))
            buf = []
            size = 0
        buf.append(sentence.text)
        size += len(sentence.text)
    if buf:
        pieces.append("".join(buf))
    return pieces
