"""Text-generation wire contract: one endpoint shape, task-multiplexed.

Request body: {"task": <name>, ...task fields...}; tasks used across the
pipeline are "generate", "evolve", "answer", "extract_name", "perplexity".
An offline fallback client realizes every task deterministically so the
whole pipeline runs hermetically.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Any, Mapping, Protocol

import requests

from .documents import DocumentName, PatternNameExtractor
from .errors import GenerationFailed
from .util import derive_seed


@dataclass(frozen=True)
class GenerationParams:
    temperature: float
    seed: int
    fields_in_prompt: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not 0.5 <= self.temperature <= 1.0:
            raise ValueError(f"temperature {self.temperature} outside [0.5, 1.0]")


class GeneratorClient(Protocol):
    def request(self, task: str, payload: Mapping[str, Any]) -> dict[str, Any]: ...


@dataclass
class HttpGeneratorClient:
    """POSTs {"task": ..., **payload} as JSON; retries with exponential backoff."""

    endpoint: str
    retries: int = 3
    backoff: float = 0.5
    timeout: float = 30.0

    def request(self, task: str, payload: Mapping[str, Any]) -> dict[str, Any]:
        body = {"task": task, **payload}
        last_error: Exception | None = None
        for attempt in range(self.retries):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = requests.post(self.endpoint, json=body, timeout=self.timeout)
                if resp.status_code // 100 != 2:
                    last_error = GenerationFailed(f"HTTP {resp.status_code} from {self.endpoint}")
                    continue
                data = resp.json()
                if not isinstance(data, dict):
                    last_error = GenerationFailed("response JSON is not an object")
                    continue
                return data
            except (requests.RequestException, ValueError) as exc:
                last_error = exc
        raise GenerationFailed(f"task {task!r} failed after {self.retries} attempts: {last_error}")


# --- offline fallback ----------------------------------------------------------

_SINGLE_FIELD_TEMPLATES = (
    "本条记录中，{pairs}。",
    "据检测档案，{pairs}。",
    "{pairs}，该项信息已登记在案。",
)

_MULTI_FIELD_TEMPLATES = (
    "在本次检测中，{pairs}。",
    "检测记录显示：{pairs}。",
    "{pairs}，以上信息来自检测台账。",
    "本批样品情况如下：{pairs}。",
)

_EVOLVE_TRANSFORMS = {
    "add_constraints": lambda s: "在符合现行食品安全标准的前提下，" + s,
    "deepen": lambda s: s + "，并逐项说明判定依据。",
    "concretize": lambda s: s + "，请以具体食品和具体检测项目为例。",
    "increase_reasoning": lambda s: s + "，要求给出分步推理过程。",
    "in_breadth": lambda s: "围绕同一主题另行提出一个相关问题：" + s,
}


def temperature_bucket(temperature: float) -> int:
    """[0.5, 1.0] mapped onto five buckets; 1.0 lands in the last one."""
    return min(int((temperature - 0.5) * 10), 4)


@dataclass
class FallbackGenerator:
    """Deterministic offline realization of every wire task.

    Generated text embeds every requested field value verbatim; the
    template is picked by hashing (seed, temperature bucket), so the
    temperature still influences surface variety.
    """

    name_extractor: PatternNameExtractor | None = None

    def request(self, task: str, payload: Mapping[str, Any]) -> dict[str, Any]:
        if task == "generate":
            return {"text": self._generate(payload)}
        if task == "evolve":
            return {"text": self._evolve(payload)}
        if task == "answer":
            instruction = payload["instruction"]
            return {
                "text": f"【离线占位回答】针对指令“{instruction}”的回答需由生成服务提供。",
                "placeholder": True,
            }
        if task == "extract_name":
            extractor = self.name_extractor or PatternNameExtractor()
            return {
                "candidates": [
                    {"raw": c.raw, "title": c.title, "confidence": c.confidence, "position": c.position}
                    for c in extractor.candidates(payload["text"])
                ]
            }
        if task == "perplexity":
            raise GenerationFailed("offline fallback has no perplexity model; use the n-gram scorer")
        raise GenerationFailed(f"unknown task {task!r}")

    def _generate(self, payload: Mapping[str, Any]) -> str:
        fields: Mapping[str, str] = payload["fields"]
        if not fields:
            raise GenerationFailed("generate task needs at least one field")
        seed = int(payload.get("seed", 0))
        bucket = temperature_bucket(float(payload.get("temperature", 0.5)))
        templates = _SINGLE_FIELD_TEMPLATES if len(fields) == 1 else _MULTI_FIELD_TEMPLATES
        template = templates[derive_seed("generate", seed, bucket) % len(templates)]
        pairs = "，".join(f"{name}为{value}" for name, value in fields.items())
        return template.format(pairs=pairs)

    def _evolve(self, payload: Mapping[str, Any]) -> str:
        operator = payload["operator"]
        transform = _EVOLVE_TRANSFORMS.get(operator)
        if transform is None:
            raise GenerationFailed(f"fallback has no transform for operator {operator!r}")
        return transform(payload["instruction"])


# --- task adapters ----------------------------------------------------------------


def generate_text(client: GeneratorClient, fields: Mapping[str, str], params: GenerationParams) -> str:
    data = client.request(
        "generate",
        {"fields": dict(fields), "temperature": params.temperature, "seed": params.seed},
    )
    text = data.get("text")
    if not isinstance(text, str) or not text:
        raise GenerationFailed("generate response missing a non-empty 'text'")
    return text


@dataclass
class ExternalNameExtractor:
    """Document-name extraction served over the generator wire contract."""

    client: GeneratorClient

    def candidates(self, text: str) -> list[DocumentName]:
        data = self.client.request("extract_name", {"text": text})
        out = [
            DocumentName(
                raw=c["raw"],
                title=c.get("title", ""),
                confidence=float(c.get("confidence", 0.0)),
                position=int(c.get("position", 0)),
            )
            for c in data.get("candidates", [])
        ]
        return sorted(out, key=lambda c: (-c.confidence, c.position))


@dataclass
class ExternalPerplexityScorer:
    """Perplexity scoring served over the generator wire contract."""

    client: GeneratorClient

    def score(self, text: str) -> float:
        data = self.client.request("perplexity", {"text": text})
        ppl = data.get("ppl")
        if not isinstance(ppl, (int, float)) or not ppl > 0:
            raise GenerationFailed("perplexity response missing a positive 'ppl'")
        return float(ppl)
