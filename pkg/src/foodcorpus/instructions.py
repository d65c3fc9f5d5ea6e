"""Instruction fine-tuning dataset: forum Q&A ranking plus iterative
rewrite-style expansion of expert seed instructions."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from .errors import GenerationFailed
from .generator import GeneratorClient
from .util import content_id, derive_rng, derive_seed

log = logging.getLogger(__name__)

EXPECTED_SEED_COUNT = 100


@dataclass(frozen=True)
class ForumPost:
    question_id: str
    question_text: str
    answer_text: str
    author_id: str
    author_post_count: int
    timestamp: int


@dataclass(frozen=True)
class Lineage:
    parent_id: str
    operator: str


@dataclass
class InstructionPair:
    instruction: str
    response: str
    origin: str  # forum | seed | evolved
    lineage: Lineage | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.origin == "evolved" and self.lineage is None:
            raise ValueError("evolved pairs must carry lineage")
        if self.origin in ("seed", "forum") and self.lineage is not None:
            raise ValueError(f"{self.origin} pairs carry no lineage")

    @property
    def pair_id(self) -> str:
        return content_id(self.origin, self.instruction + "\x00" + self.response)

    def to_row(self) -> dict[str, Any]:
        lineage = (
            {"parent_id": self.lineage.parent_id, "operator": self.lineage.operator}
            if self.lineage
            else None
        )
        return {
            "instruction": self.instruction,
            "response": self.response,
            "origin": self.origin,
            "lineage": lineage,
            "meta": self.meta,
        }


# --- forum ranking -------------------------------------------------------------


def select_forum_answers(
    posts: Sequence[ForumPost],
    min_post_count: int = 0,
    top_m: int = 1,
) -> list[InstructionPair]:
    """Keep each question's top answers by answerer posting frequency.

    Qualifying answers are ordered by (post count desc, timestamp asc,
    author id asc); questions with no qualifying answer are dropped.
    """
    if top_m < 1:
        raise ValueError("top_m must be >= 1")
    by_question: dict[str, list[ForumPost]] = {}
    question_order: list[str] = []
    for post in posts:
        if post.question_id not in by_question:
            question_order.append(post.question_id)
        by_question.setdefault(post.question_id, []).append(post)
    pairs: list[InstructionPair] = []
    for qid in question_order:
        answers = [p for p in by_question[qid] if p.author_post_count >= min_post_count]
        answers.sort(key=lambda p: (-p.author_post_count, p.timestamp, p.author_id))
        for post in answers[:top_m]:
            pairs.append(
                InstructionPair(
                    instruction=post.question_text,
                    response=post.answer_text,
                    origin="forum",
                    meta={"question_id": qid, "author_id": post.author_id},
                )
            )
    return pairs


# --- seed instructions --------------------------------------------------------------


@dataclass
class SeedLoadResult:
    pairs: list[InstructionPair]
    count: int
    skipped: list[int]  # 1-based line numbers
    warning: str | None


def load_seed_instructions(path: Path) -> SeedLoadResult:
    """Load JSONL {instruction, response} seeds; the expected count is 100."""
    pairs: list[InstructionPair] = []
    skipped: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                pairs.append(
                    InstructionPair(
                        instruction=str(row["instruction"]),
                        response=str(row["response"]),
                        origin="seed",
                        meta={"line": lineno},
                    )
                )
            except (ValueError, KeyError, TypeError):
                skipped.append(lineno)
    warning = None
    if len(pairs) != EXPECTED_SEED_COUNT:
        warning = f"expected {EXPECTED_SEED_COUNT} seed instructions, found {len(pairs)}"
        log.warning("%s (%s)", warning, path)
    return SeedLoadResult(pairs=pairs, count=len(pairs), skipped=skipped, warning=warning)


# --- evolution -----------------------------------------------------------------------


@dataclass(frozen=True)
class EvolOperator:
    name: str
    prompt_template: str

    def __post_init__(self) -> None:
        if "{instruction}" not in self.prompt_template:
            raise ValueError(f"operator {self.name}: template missing {{instruction}}")


DEFAULT_OPERATORS: tuple[EvolOperator, ...] = (
    EvolOperator("add_constraints", "请为下面的指令加入一条约束条件，使其更难：{instruction}"),
    EvolOperator("deepen", "请加深下面指令的深度和广度：{instruction}"),
    EvolOperator("concretize", "请将下面指令中的笼统概念替换为更具体的概念：{instruction}"),
    EvolOperator("increase_reasoning", "请改写下面的指令，使其需要多步推理：{instruction}"),
    EvolOperator("in_breadth", "请基于下面的指令创作一个同领域但更罕见的新指令：{instruction}"),
)

OPERATORS_BY_NAME = {op.name: op for op in DEFAULT_OPERATORS}


class EvolutionFailure(GenerationFailed):
    """The operator produced nothing usable for this pair."""


def _normalize(text: str) -> str:
    return re.sub(r"\s+", "", text.strip())


def evolve(
    pair: InstructionPair,
    op: EvolOperator,
    client: GeneratorClient,
    seed: int,
) -> InstructionPair:
    """One rewrite of one instruction; the response comes from a second
    generator call.  Output identical to the parent is rejected."""
    if not pair.instruction:
        raise ValueError("cannot evolve an empty instruction")
    prompt = op.prompt_template.replace("{instruction}", pair.instruction)
    data = client.request(
        "evolve",
        {"instruction": pair.instruction, "operator": op.name, "prompt": prompt, "seed": seed},
    )
    new_instruction = data.get("text", "")
    if not isinstance(new_instruction, str) or not new_instruction.strip():
        raise EvolutionFailure(f"operator {op.name}: empty instruction generated")
    if _normalize(new_instruction) == _normalize(pair.instruction):
        raise EvolutionFailure(f"operator {op.name}: generated instruction equals its parent")
    answer = client.request("answer", {"instruction": new_instruction, "seed": seed})
    response = answer.get("text", "")
    if not isinstance(response, str) or not response:
        raise EvolutionFailure(f"operator {op.name}: empty response generated")
    meta: dict[str, Any] = {"seed": seed}
    if answer.get("placeholder"):
        meta["publishable"] = False
    return InstructionPair(
        instruction=new_instruction,
        response=response,
        origin="evolved",
        lineage=Lineage(parent_id=pair.pair_id, operator=op.name),
        meta=meta,
    )


@dataclass
class InstructionBuildResult:
    pairs: list[InstructionPair]
    failures: list[dict[str, str]]  # parent_id, operator, reason
    round_sizes: list[int]


def build_instruction_dataset(
    sources: Iterable[InstructionPair],
    rounds: int,
    ops: Sequence[EvolOperator],
    client: GeneratorClient,
    master_seed: int,
    frozen: Iterable[InstructionPair] = (),
) -> InstructionBuildResult:
    """Apply every operator to each previous round's pairs, dedup by
    normalized instruction keeping the earliest, then shuffle seeded.

    Pairs passed as `frozen` join round 0 but are never evolved.
    """
    if rounds < 0:
        raise ValueError("rounds must be >= 0")
    frontier = list(sources)
    collected = list(frontier) + list(frozen)
    failures: list[dict[str, str]] = []
    round_sizes = [len(collected)]
    for r in range(1, rounds + 1):
        produced: list[InstructionPair] = []
        for pair in frontier:
            for op in ops:
                seed = derive_seed(master_seed, "evolve", r, pair.pair_id, op.name)
                try:
                    child = evolve(pair, op, client, seed)
                except GenerationFailed as exc:
                    failures.append(
                        {"parent_id": pair.pair_id, "operator": op.name, "reason": str(exc)}
                    )
                    continue
                produced.append(child)
        collected.extend(produced)
        round_sizes.append(len(produced))
        frontier = produced
    deduped: list[InstructionPair] = []
    seen: set[str] = set()
    for pair in collected:
        key = _normalize(pair.instruction)
        if key not in seen:
            seen.add(key)
            deduped.append(pair)
    derive_rng(master_seed, "instructions.shuffle").shuffle(deduped)
    return InstructionBuildResult(pairs=deduped, failures=failures, round_sizes=round_sizes)


def load_forum_posts(path: Path) -> tuple[list[ForumPost], list[int]]:
    posts: list[ForumPost] = []
    skipped: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                posts.append(
                    ForumPost(
                        question_id=str(row["question_id"]),
                        question_text=str(row["question_text"]),
                        answer_text=str(row["answer_text"]),
                        author_id=str(row["author_id"]),
                        author_post_count=int(row["author_post_count"]),
                        timestamp=int(row["timestamp"]),
                    )
                )
            except (ValueError, KeyError, TypeError):
                skipped.append(lineno)
    return posts, skipped
