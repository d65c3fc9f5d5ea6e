"""Triple store with entity linking, retrieval, and prompt assembly.

Queries are parsed by greedy longest-match against the graph's entity
vocabulary; matching triples are ranked by entity overlap and pasted into
a prompt template together with the original query.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Iterable, Sequence

from .errors import ConfigError
from .structured import StructuredRecord
from .util import atomic_write_text


@dataclass(frozen=True)
class Triple:
    subject: str
    predicate: str
    object: str
    provenance: str

    def __post_init__(self) -> None:
        if not (self.subject and self.predicate and self.object and self.provenance):
            raise ValueError("triples need non-empty subject, predicate, object, provenance")


class KnowledgeGraph:
    """Immutable after construction; lookups go through an entity index
    and a character trie for longest-match scanning."""

    def __init__(self, triples: Sequence[Triple]):
        self.triples = list(triples)
        self._index: dict[str, list[int]] = {}
        self._trie: dict[str, Any] = {}
        for i, t in enumerate(self.triples):
            for entity in (t.subject, t.object):
                ids = self._index.setdefault(entity, [])
                if not ids or ids[-1] != i:
                    ids.append(i)
        for entity in self._index:
            node = self._trie
            for ch in entity:
                node = node.setdefault(ch, {})
            node[""] = entity  # terminal marker

    @property
    def vocabulary(self) -> set[str]:
        return set(self._index)

    def triples_for(self, entity: str) -> list[Triple]:
        return [self.triples[i] for i in self._index.get(entity, [])]

    def longest_match(self, text: str, start: int) -> str | None:
        node = self._trie
        best: str | None = None
        for i in range(start, len(text)):
            node = node.get(text[i])
            if node is None:
                break
            if "" in node:
                best = node[""]
        return best


@dataclass(frozen=True)
class GraphSchema:
    subject_field: str
    predicates: dict[str, str]  # source field -> predicate name


@dataclass
class GraphBuildResult:
    graph: KnowledgeGraph
    skipped: list[str]  # record ids missing the subject field


def build_graph(
    records: Iterable[StructuredRecord],
    schema: GraphSchema,
    extra_triples: Iterable[Triple] = (),
) -> GraphBuildResult:
    """One triple per non-empty mapped field per record; duplicate (s, p, o)
    keep their first provenance."""
    triples: list[Triple] = []
    seen: set[tuple[str, str, str]] = set()
    skipped: list[str] = []

    def add(t: Triple) -> None:
        key = (t.subject, t.predicate, t.object)
        if key not in seen:
            seen.add(key)
            triples.append(t)

    for rec in records:
        subject = rec.fields.get(schema.subject_field, "")
        if not subject:
            skipped.append(rec.record_id)
            continue
        for source_field, predicate in schema.predicates.items():
            value = rec.fields.get(source_field, "")
            if value:
                add(Triple(subject=subject, predicate=predicate, object=value, provenance=rec.record_id))
    for t in extra_triples:
        add(t)
    return GraphBuildResult(graph=KnowledgeGraph(triples), skipped=skipped)


# --- query parsing and retrieval ------------------------------------------------


@dataclass
class EntityMatch:
    entity: str
    start: int
    end: int


@dataclass
class ParsedQuery:
    query: str
    matches: list[EntityMatch]
    residue: str

    @property
    def entities(self) -> list[str]:
        out: list[str] = []
        for m in self.matches:
            if m.entity not in out:
                out.append(m.entity)
        return out


def parse_query(query: str, graph: KnowledgeGraph) -> ParsedQuery:
    """Greedy left-to-right longest-match scan over the graph vocabulary."""
    matches: list[EntityMatch] = []
    residue: list[str] = []
    i = 0
    while i < len(query):
        entity = graph.longest_match(query, i)
        if entity is None:
            residue.append(query[i])
            i += 1
        else:
            matches.append(EntityMatch(entity=entity, start=i, end=i + len(entity)))
            i += len(entity)
    return ParsedQuery(query=query, matches=matches, residue="".join(residue))


def retrieve(graph: KnowledgeGraph, parsed: ParsedQuery, limit: int = 8) -> list[Triple]:
    """Triples touching any matched entity, ranked by how many distinct
    entities they touch, subject hits before object-only hits, stable order."""
    if limit < 1:
        raise ValueError("limit must be >= 1")
    entities = parsed.entities
    if not entities:
        return []
    hits: dict[int, tuple[set[str], bool]] = {}
    for entity in entities:
        for i in graph._index.get(entity, []):
            touched, subject_hit = hits.get(i, (set(), False))
            touched.add(entity)
            t = graph.triples[i]
            subject_hit = subject_hit or t.subject == entity
            hits[i] = (touched, subject_hit)
    ranked = sorted(
        hits.items(), key=lambda kv: (-len(kv[1][0]), not kv[1][1], kv[0])
    )
    return [graph.triples[i] for i, _ in ranked[:limit]]


# --- prompt assembly --------------------------------------------------------------


@dataclass
class PromptBundle:
    facts_block: str
    query: str
    prompt: str
    triples_used: list[Triple]

    def to_dict(self) -> dict[str, Any]:
        return {
            "facts": self.facts_block,
            "query": self.query,
            "prompt": self.prompt,
            "triples_used": [_triple_row(t) for t in self.triples_used],
        }


DEFAULT_PROMPT_TEMPLATE = "已知以下事实：\n{facts}\n请回答问题：{query}"


def assemble_prompt(query: str, triples: Sequence[Triple], template: str = DEFAULT_PROMPT_TEMPLATE) -> PromptBundle:
    for placeholder in ("{facts}", "{query}"):
        if placeholder not in template:
            raise ConfigError(f"prompt template missing the {placeholder} placeholder")
    fact_lines = [f"{t.subject} | {t.predicate} | {t.object}" for t in triples]
    facts_block = "\n".join(fact_lines)
    prompt = template.replace("{facts}", facts_block).replace("{query}", query)
    return PromptBundle(
        facts_block=facts_block, query=query, prompt=prompt, triples_used=list(triples)
    )


def answer_query(
    graph: KnowledgeGraph, query: str, template: str = DEFAULT_PROMPT_TEMPLATE, limit: int = 8
) -> PromptBundle:
    parsed = parse_query(query, graph)
    return assemble_prompt(query, retrieve(graph, parsed, limit=limit) if parsed.matches else [], template)


# --- persistence -----------------------------------------------------------------


def _triple_row(t: Triple) -> dict[str, str]:
    return {"s": t.subject, "p": t.predicate, "o": t.object, "provenance": t.provenance}


def save_triples(path: Path, triples: Iterable[Triple]) -> int:
    rows = [_triple_row(t) for t in triples]
    atomic_write_text(Path(path), "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows))
    return len(rows)


def load_triples(path: Path) -> list[Triple]:
    triples: list[Triple] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                triples.append(
                    Triple(
                        subject=row["s"],
                        predicate=row["p"],
                        object=row["o"],
                        provenance=row["provenance"],
                    )
                )
    return triples


# --- local query endpoint -----------------------------------------------------------


def make_query_server(
    graph: KnowledgeGraph,
    template: str = DEFAULT_PROMPT_TEMPLATE,
    limit: int = 8,
    host: str = "127.0.0.1",
    port: int = 0,
) -> ThreadingHTTPServer:
    """POST /query {"query": "..."} -> PromptBundle JSON.  Serves programs,
    not people; start_query_server runs it on a daemon thread."""

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self) -> None:  # noqa: N802 (http.server API)
            if self.path != "/query":
                self._reply(404, {"error": "unknown path"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                body = json.loads(self.rfile.read(length).decode("utf-8"))
                query = body["query"]
                if not isinstance(query, str):
                    raise TypeError("query must be a string")
            except (ValueError, KeyError, TypeError) as exc:
                self._reply(400, {"error": f"bad request: {exc}"})
                return
            bundle = answer_query(graph, query, template=template, limit=limit)
            self._reply(200, bundle.to_dict())

        def _reply(self, status: int, payload: dict[str, Any]) -> None:
            data = json.dumps(payload, ensure_ascii=False).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def log_message(self, fmt: str, *args: Any) -> None:  # quiet by default
            pass

    return ThreadingHTTPServer((host, port), Handler)


def start_query_server(server: ThreadingHTTPServer) -> threading.Thread:
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return thread
