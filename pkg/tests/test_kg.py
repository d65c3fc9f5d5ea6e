from __future__ import annotations

from pathlib import Path
from random import Random

import pytest
import requests

from foodcorpus.errors import ConfigError
from foodcorpus.kg import (
    GraphSchema,
    KnowledgeGraph,
    Triple,
    answer_query,
    assemble_prompt,
    build_graph,
    load_triples,
    make_query_server,
    parse_query,
    retrieve,
    save_triples,
    start_query_server,
)
from foodcorpus.structured import StructuredRecord


def _graph(*triples: tuple[str, str, str]) -> KnowledgeGraph:
    return KnowledgeGraph(
        [Triple(subject=s, predicate=p, object=o, provenance=f"t{i}") for i, (s, p, o) in enumerate(triples)]
    )


# --- building -----------------------------------------------------------------


def test_build_graph_maps_fields_to_predicates() -> None:
    record = StructuredRecord("r1", {"食品": "牛奶", "检测项目": "铅", "限量": "0.05 mg/kg"})
    schema = GraphSchema(subject_field="食品", predicates={"检测项目": "has_test_item", "限量": "has_limit"})
    built = build_graph([record], schema)
    got = {(t.subject, t.predicate, t.object) for t in built.graph.triples}
    assert got == {("牛奶", "has_test_item", "铅"), ("牛奶", "has_limit", "0.05 mg/kg")}
    assert all(t.provenance == "r1" for t in built.graph.triples)


def test_duplicate_triples_keep_first_provenance() -> None:
    records = [
        StructuredRecord("r1", {"食品": "牛奶", "项目": "铅"}),
        StructuredRecord("r2", {"食品": "牛奶", "项目": "铅"}),
    ]
    built = build_graph(records, GraphSchema("食品", {"项目": "p"}))
    assert len(built.graph.triples) == 1
    assert built.graph.triples[0].provenance == "r1"


def test_missing_subject_recorded_as_skip() -> None:
    records = [StructuredRecord("r1", {"项目": "铅"})]
    built = build_graph(records, GraphSchema("食品", {"项目": "p"}))
    assert built.graph.triples == []
    assert built.skipped == ["r1"]


def test_empty_mapped_fields_make_no_triples() -> None:
    records = [StructuredRecord("r1", {"食品": "牛奶", "项目": ""})]
    built = build_graph(records, GraphSchema("食品", {"项目": "p"}))
    assert built.graph.triples == []


def test_triple_count_matches_linear_scan_oracle() -> None:
    rng = Random(3)
    foods = [f"食品{i}" for i in range(30)]
    items = [f"项目{i}" for i in range(40)]
    records = [
        StructuredRecord(
            f"r{i:04d}",
            {"食品": rng.choice(foods), "项目": rng.choice(items), "限量": f"{rng.randint(1, 99)} mg/kg"},
        )
        for i in range(1000)
    ]
    schema = GraphSchema("食品", {"项目": "has_item", "限量": "has_limit"})
    built = build_graph(records, schema)
    seen = set()
    for rec in records:  # independent flat scan
        for source, pred in (("项目", "has_item"), ("限量", "has_limit")):
            if rec.fields[source]:
                seen.add((rec.fields["食品"], pred, rec.fields[source]))
    assert len(built.graph.triples) == len(seen)


def test_index_completeness() -> None:
    graph = _graph(("牛奶", "p", "铅"), ("面包", "p", "铅"), ("牛奶", "q", "砷"))
    for entity in graph.vocabulary:
        via_index = graph.triples_for(entity)
        via_filter = [t for t in graph.triples if entity in (t.subject, t.object)]
        assert via_index == via_filter


def test_triple_requires_nonempty_components() -> None:
    with pytest.raises(ValueError):
        Triple(subject="", predicate="p", object="o", provenance="x")


# --- parsing ---------------------------------------------------------------------


def test_parse_finds_entities_at_positions() -> None:
    graph = _graph(("牛奶", "p", "铅"))
    parsed = parse_query("牛奶中铅的限量是多少", graph)
    assert [(m.entity, m.start) for m in parsed.matches] == [("牛奶", 0), ("铅", 3)]
    assert parsed.residue == "中的限量是多少"


def test_parse_empty_query() -> None:
    parsed = parse_query("", _graph(("牛奶", "p", "铅")))
    assert parsed.matches == [] and parsed.residue == ""


def test_longest_match_wins() -> None:
    graph = _graph(("牛奶", "p", "x"), ("牛奶粉", "p", "y"))
    parsed = parse_query("牛奶粉标准", graph)
    assert [m.entity for m in parsed.matches] == ["牛奶粉"]


def test_parse_matches_exhaustive_scan_oracle() -> None:
    rng = Random(9)
    entities = ["牛奶", "牛奶粉", "铅", "砷含量", "大米", "食品添加剂"]
    graph = _graph(*[(e, "p", f"v{i}") for i, e in enumerate(entities)])
    vocab = graph.vocabulary
    for _ in range(200):
        query = "".join(
            rng.choice(entities + ["的", "中", "是", "多少", "标准"]) for _ in range(rng.randint(0, 6))
        )
        parsed = parse_query(query, graph)
        # oracle: scan every position, try every vocab entry, take the longest
        expected = []
        i = 0
        while i < len(query):
            best = ""
            for entity in vocab:
                if query.startswith(entity, i) and len(entity) > len(best):
                    best = entity
            if best:
                expected.append((best, i))
                i += len(best)
            else:
                i += 1
        assert [(m.entity, m.start) for m in parsed.matches] == expected


def test_parse_spans_are_sound_and_disjoint() -> None:
    graph = _graph(("牛奶", "p", "铅"), ("奶粉", "p", "砷"))
    parsed = parse_query("牛奶粉中奶粉和铅", graph)
    last_end = 0
    for m in parsed.matches:
        assert parsed.query[m.start : m.end] == m.entity
        assert m.start >= last_end
        last_end = m.end


# --- retrieval -------------------------------------------------------------------


def test_retrieve_filters_by_entity() -> None:
    graph = _graph(("牛奶", "has_limit", "0.05 mg/kg"), ("面包", "has_limit", "0.1 mg/kg"))
    parsed = parse_query("牛奶的限量", graph)
    got = retrieve(graph, parsed)
    assert [t.subject for t in got] == ["牛奶"]


def test_retrieve_empty_for_no_entities() -> None:
    graph = _graph(("牛奶", "p", "铅"))
    assert retrieve(graph, parse_query("没有匹配", graph)) == []


def test_two_entity_triple_ranks_first() -> None:
    graph = _graph(("牛奶", "检出", "铅"), ("面包", "检出", "铅"))
    parsed = parse_query("牛奶和铅", graph)
    got = retrieve(graph, parsed)
    assert [(t.subject, t.object) for t in got] == [("牛奶", "铅"), ("面包", "铅")]


def test_subject_match_outranks_object_only() -> None:
    graph = _graph(("铅", "属于", "重金属"), ("牛奶", "检出", "铅"))
    parsed = parse_query("铅", graph)
    got = retrieve(graph, parsed)
    assert (got[0].subject, got[0].object) == ("铅", "重金属")


def test_limit_truncates() -> None:
    triples = [(f"食品{i}", "含", "铅") for i in range(20)]
    graph = _graph(*triples)
    parsed = parse_query("铅", graph)
    assert len(retrieve(graph, parsed, limit=8)) == 8
    with pytest.raises(ValueError):
        retrieve(graph, parsed, limit=0)


def _retrieve_oracle(graph: KnowledgeGraph, entities: list[str], limit: int) -> list[Triple]:
    """Independent full linear scan + scoring."""
    scored = []
    for idx, t in enumerate(graph.triples):
        touched = {e for e in entities if e in (t.subject, t.object)}
        if touched:
            subject_hit = any(t.subject == e for e in entities)
            scored.append((-len(touched), not subject_hit, idx))
    scored.sort()
    return [graph.triples[idx] for _, _, idx in scored[:limit]]


def test_retrieve_matches_linear_scan_oracle() -> None:
    rng = Random(21)
    entities_pool = [f"实体{i}" for i in range(40)]
    values = [f"值{i}" for i in range(30)]
    triples = [
        (rng.choice(entities_pool), f"p{rng.randint(0, 5)}", rng.choice(entities_pool + values))
        for _ in range(800)
    ]
    graph = _graph(*triples)
    for _ in range(50):
        query = "，".join(rng.sample(entities_pool, rng.randint(0, 4)))
        parsed = parse_query(query, graph)
        got = retrieve(graph, parsed, limit=8)
        want = _retrieve_oracle(graph, parsed.entities, 8)
        assert got == want


# --- prompt assembly ---------------------------------------------------------------


def test_assemble_prompt_substitutes_facts_and_query() -> None:
    t = Triple("牛奶", "has_limit", "0.05 mg/kg", "r1")
    bundle = assemble_prompt("牛奶的铅限量?", [t], "已知：\n{facts}\n问题：{query}")
    assert "牛奶 | has_limit | 0.05 mg/kg" in bundle.prompt
    assert "牛奶的铅限量?" in bundle.prompt
    assert bundle.triples_used == [t]


def test_assemble_prompt_empty_facts() -> None:
    bundle = assemble_prompt("问题?", [], "已知：\n{facts}\n问题：{query}")
    assert bundle.facts_block == ""
    assert "问题?" in bundle.prompt


def test_assemble_prompt_preserves_retrieval_order() -> None:
    triples = [Triple(f"s{i}", "p", f"o{i}", "x") for i in range(3)]
    bundle = assemble_prompt("q", triples, "{facts}|{query}")
    assert bundle.facts_block.split("\n") == [f"s{i} | p | o{i}" for i in range(3)]


def test_assemble_prompt_missing_placeholder_rejected() -> None:
    with pytest.raises(ConfigError):
        assemble_prompt("q", [], "no placeholders")
    with pytest.raises(ConfigError):
        assemble_prompt("q", [], "only {facts}")


# --- persistence -----------------------------------------------------------------------


def test_triples_round_trip(tmp_path: Path) -> None:
    triples = [
        Triple("牛奶", "has_limit", "0.05 mg/kg", "r1"),
        Triple("面包|特殊", "p", "带\n换行", "doc:9"),
    ]
    path = tmp_path / "graph.jsonl"
    save_triples(path, triples)
    assert load_triples(path) == triples
    save_triples(tmp_path / "again.jsonl", load_triples(path))
    assert (tmp_path / "again.jsonl").read_bytes() == path.read_bytes()


# --- query endpoint -----------------------------------------------------------------------


def test_http_query_endpoint_round_trip() -> None:
    graph = _graph(("牛奶", "has_limit", "0.05 mg/kg"))
    server = make_query_server(graph, template="已知{facts}问{query}", limit=8)
    start_query_server(server)
    try:
        host, port = server.server_address[:2]
        resp = requests.post(f"http://{host}:{port}/query", json={"query": "牛奶的限量"}, timeout=5)
        assert resp.status_code == 200
        body = resp.json()
        assert body["query"] == "牛奶的限量"
        assert "牛奶 | has_limit | 0.05 mg/kg" in body["facts"]
        assert body["triples_used"][0]["s"] == "牛奶"

        bad = requests.post(f"http://{host}:{port}/query", data=b"{not json", timeout=5)
        assert bad.status_code == 400
        missing = requests.post(f"http://{host}:{port}/other", json={"query": "x"}, timeout=5)
        assert missing.status_code == 404
    finally:
        server.shutdown()
        server.server_close()


def test_answer_query_composes_parse_retrieve_assemble() -> None:
    graph = _graph(("牛奶", "has_limit", "0.05 mg/kg"), ("面包", "has_limit", "0.1 mg/kg"))
    bundle = answer_query(graph, "牛奶的限量是多少", limit=8)
    assert len(bundle.triples_used) == 1
    assert bundle.triples_used[0].subject == "牛奶"
    assert bundle.query in bundle.prompt
