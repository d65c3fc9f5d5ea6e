"""Deterministic corpus fixture: standards documents with OCR-style damage,
testing records, forum posts, seed instructions, and a pipeline config."""

from __future__ import annotations

import json
from pathlib import Path
from random import Random

import yaml

FOODS = [
    "牛奶", "面包", "大米", "食用油", "酱油", "蜂蜜", "奶粉", "饮用水", "茶叶", "果汁",
    "腊肉", "皮蛋", "豆腐", "饼干", "糖果", "食盐", "味精", "陈醋", "黄酒", "咖啡",
    "罐头", "香肠", "乳酪", "燕麦", "花生", "核桃", "紫菜", "海带", "木耳", "香菇",
]
ITEMS = [
    "铅", "镉", "汞", "砷", "铬", "苯并芘", "黄曲霉毒素", "亚硝酸盐", "二氧化硫", "山梨酸",
    "苯甲酸", "糖精钠", "甜蜜素", "防腐剂", "大肠菌群", "菌落总数", "霉菌", "农药残留", "兽药残留", "三聚氰胺",
]
UNITS = ["mg/kg", "μg/kg", "g/kg", "CFU/g", "mg/L"]

_SUBJECTS = ["样品", "试液", "器皿", "溶液", "标准品", "滤膜", "试剂", "容器"]
_PREDICATES = [
    "应按规定保存", "须在避光处放置", "经高温灭菌后使用", "用纯水稀释至刻度", "置于干燥器中冷却",
    "应现用现配", "不得与酸性物质混放", "应标明批号与有效期", "须经校准后方可使用", "应在通风橱内操作",
]
_SECTION_TITLES = ["范围", "规范性引用文件", "术语和定义", "原理", "试剂和材料", "仪器设备", "分析步骤"]
_GARBAGE_CHARS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789#@%&*+=~^"


def _sentence(rng: Random) -> str:
    return rng.choice(_SUBJECTS) + rng.choice(_PREDICATES) + "。"


def _garbage_sentence(rng: Random) -> str:
    words = [
        "".join(rng.choice(_GARBAGE_CHARS) for _ in range(rng.randint(3, 8)))
        for _ in range(rng.randint(2, 5))
    ]
    return " ".join(words) + "。"


def make_standard_document(rng: Random, index: int, with_code: bool) -> str:
    lines: list[str] = []
    if with_code:
        code = f"GB {4000 + index}.{rng.randint(1, 9)}-{rng.randint(2008, 2023)}"
        lines.append(f"{code}食品安全国家标准{rng.choice(FOODS)}中{rng.choice(ITEMS)}的测定")
    else:
        lines.append("扫描件质量报告（无标准号）")
    lines.append("前言")
    lines.append(_sentence(rng) + _sentence(rng))
    for sec, title in enumerate(_SECTION_TITLES, start=1):
        lines.append(f"{sec} {title}")
        n_sentences = rng.randint(12, 16)
        body = [_sentence(rng) for _ in range(n_sentences)]
        if rng.random() < 0.4:
            body[rng.randrange(len(body))] = _garbage_sentence(rng)
        # a few sentences per line, OCR-style
        while body:
            take = rng.randint(1, 3)
            lines.append("".join(body[:take]))
            body = body[take:]
    return "\n".join(lines) + "\n"


def write_documents(root: Path, rng: Random, count: int, codeless: int | None = None) -> Path:
    if codeless is None:
        codeless = max(1, count // 20)  # a few scans with no extractable code
    docs_dir = root / "standard_docs"
    docs_dir.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        text = make_standard_document(rng, i, with_code=i >= codeless)
        (docs_dir / f"doc{i:03d}.txt").write_text(text, encoding="utf-8")
    return docs_dir


def write_records(root: Path, rng: Random, count: int) -> Path:
    path = root / "records.csv"
    header = [
        "样品编号", "食品名称", "检测项目", "检测结果", "限量值", "限量单位",
        "企业名称", "联系电话", "企业地址", "检验员", "采样编号",
    ]
    rows = [",".join(header)]
    for i in range(count):
        rows.append(
            ",".join(
                [
                    f"S{i:05d}",
                    FOODS[i % len(FOODS)],
                    ITEMS[rng.randrange(len(ITEMS))],
                    f"{rng.randint(1, 400) / 100} {rng.choice(UNITS)}",
                    f"{rng.randint(1, 500) / 100}",
                    rng.choice(UNITS),
                    f"机密企业{i:04d}号",
                    f"1390000{i:04d}",
                    f"机密地址{i:04d}弄",
                    f"检验老师{i:04d}",
                    f"采样点{i:04d}区",
                ]
            )
        )
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path


SENSITIVE_FIELDS = ["企业名称", "联系电话", "企业地址", "检验员", "采样编号"]


def sensitive_values(count: int) -> list[str]:
    values = []
    for i in range(count):
        values += [
            f"机密企业{i:04d}号",
            f"1390000{i:04d}",
            f"机密地址{i:04d}弄",
            f"检验老师{i:04d}",
            f"采样点{i:04d}区",
        ]
    return values


def write_forum(root: Path, rng: Random, count: int) -> Path:
    path = root / "forum.jsonl"
    rows = []
    for i in range(count):
        qid = f"q{i % (count // 2 or 1):03d}"
        rows.append(
            json.dumps(
                {
                    "question_id": qid,
                    "question_text": f"{FOODS[i % len(FOODS)]}中{ITEMS[i % len(ITEMS)]}的限量是多少？",
                    "answer_text": f"按现行标准为{rng.randint(1, 99) / 100} mg/kg。",
                    "author_id": f"user{i:03d}",
                    "author_post_count": rng.randint(0, 500),
                    "timestamp": 1_600_000_000 + rng.randint(0, 10_000_000),
                },
                ensure_ascii=False,
            )
        )
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path


def write_seeds(root: Path, count: int) -> Path:
    path = root / "seeds.jsonl"
    rows = [
        json.dumps(
            {
                "instruction": f"请说明{FOODS[i % len(FOODS)]}中{ITEMS[i % len(ITEMS)]}的检测要点。",
                "response": f"要点{i}：取样、前处理、上机测定与结果判定。",
            },
            ensure_ascii=False,
        )
        for i in range(count)
    ]
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path


def write_auxiliary(root: Path, rng: Random) -> dict[str, Path]:
    dirs: dict[str, Path] = {}

    d = root / "dictionary"
    d.mkdir(parents=True, exist_ok=True)
    lines = [f"{ITEMS[i % len(ITEMS)]}指标{i}：{_sentence(rng)}" for i in range(30)]
    lines.insert(7, "这一行没有分隔符")
    (d / "terms.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    dirs["dictionary"] = d

    d = root / "tutorials"
    d.mkdir(exist_ok=True)
    for i in range(2):
        paragraphs = ["".join(_sentence(rng) for _ in range(4)) for _ in range(5)]
        (d / f"tut{i}.txt").write_text("\n\n".join(paragraphs) + "\n", encoding="utf-8")
    dirs["tutorial"] = d

    d = root / "news"
    d.mkdir(exist_ok=True)
    for i in range(3):
        (d / f"news{i}.txt").write_text(
            f"近日{FOODS[i]}抽检情况通报。" + "".join(_sentence(rng) for _ in range(6)) + "\n",
            encoding="utf-8",
        )
    dirs["sentiment_news"] = d

    d = root / "laws"
    d.mkdir(exist_ok=True)
    provisions = [f"第{n}条 {_sentence(rng)}{_sentence(rng)}" for n in ("一", "二", "三", "四", "五")]
    (d / "law0.txt").write_text("\n".join(provisions) + "\n", encoding="utf-8")
    dirs["law"] = d

    d = root / "exams"
    d.mkdir(exist_ok=True)
    questions = [
        f"{n}、下列关于{ITEMS[n % len(ITEMS)]}的说法正确的是？\n解析：{_sentence(rng)}"
        for n in range(1, 6)
    ]
    (d / "exam0.txt").write_text("\n".join(questions) + "\n", encoding="utf-8")
    dirs["exam_question"] = d
    return dirs


def write_text_triples(root: Path) -> Path:
    path = root / "text_triples.jsonl"
    rows = [
        json.dumps({"s": "黄曲霉毒素", "p": "属于", "o": "真菌毒素", "provenance": "doc:manual"}, ensure_ascii=False),
        json.dumps({"s": "铅", "p": "属于", "o": "重金属", "provenance": "doc:manual"}, ensure_ascii=False),
    ]
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path


def build_fixture(
    root: Path,
    n_docs: int = 100,
    n_records: int = 1000,
    n_forum: int = 50,
    n_seeds: int = 10,
    seed: int = 2024,
    workers: int = 1,
    master_seed: int = 7,
) -> Path:
    """Create the full input tree plus a config file; returns the config path."""
    rng = Random(seed)
    root.mkdir(parents=True, exist_ok=True)
    docs_dir = write_documents(root, rng, n_docs)
    records = write_records(root, rng, n_records)
    forum = write_forum(root, rng, n_forum)
    seeds = write_seeds(root, n_seeds)
    aux_dirs = write_auxiliary(root, rng)
    triples = write_text_triples(root)

    config = {
        "seed": master_seed,
        "output_dir": "out",
        "workers": workers,
        "inputs": {
            "standard_document": docs_dir.name,
            "dictionary": aux_dirs["dictionary"].name,
            "tutorial": aux_dirs["tutorial"].name,
            "sentiment_news": aux_dirs["sentiment_news"].name,
            "law": aux_dirs["law"].name,
            "exam_question": aux_dirs["exam_question"].name,
        },
        "filter": {"scorer": "ngram", "n": 3, "k": 0.5, "policy_kind": "percentile", "policy_value": 90},
        "structured": {
            "records": records.name,
            "id_field": "样品编号",
            "denylist": SENSITIVE_FIELDS,
            "merges": [{"sources": ["限量值", "限量单位"], "target": "限量", "joiner": " "}],
            "grouping_fields": ["食品名称"],
            "item_key": "检测项目",
            "K": 2,
        },
        "instructions": {
            "forum": forum.name,
            "seeds": seeds.name,
            "min_post_count": 5,
            "top_m": 1,
            "rounds": 1,
        },
        "kg": {
            "subject_field": "食品名称",
            "predicates": {"检测项目": "检出项目", "限量": "限量为"},
            "text_triples": triples.name,
        },
    }
    config_path = root / "config.yaml"
    config_path.write_text(yaml.safe_dump(config, allow_unicode=True), encoding="utf-8")
    return config_path
