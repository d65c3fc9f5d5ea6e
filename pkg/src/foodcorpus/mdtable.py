"""GitHub-style pipe tables with a lossless render/parse round trip.

Cell escaping: backslash -> "\\\\", "|" -> "\\|", a literal "<br>" -> "\\<br>",
and a real newline -> "<br>".  The parser is the exact inverse, so arbitrary
cell content (pipes, newlines, CJK) survives a round trip unchanged.
"""

from __future__ import annotations


class TableFormatError(ValueError):
    pass


def escape_cell(cell: str) -> str:
    return (
        cell.replace("\\", "\\\\")
        .replace("|", "\\|")
        .replace("<br>", "\\<br>")
        .replace("\n", "<br>")
    )


def unescape_cell(cell: str) -> str:
    out: list[str] = []
    i = 0
    n = len(cell)
    while i < n:
        ch = cell[i]
        if ch == "\\" and i + 1 < n:
            out.append(cell[i + 1])
            i += 2
        elif cell.startswith("<br>", i):
            out.append("\n")
            i += 4
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def render_table(header: list[str], rows: list[list[str]]) -> str:
    if len(header) < 1:
        raise TableFormatError("header must have at least one column")
    for idx, row in enumerate(rows):
        if len(row) != len(header):
            raise TableFormatError(
                f"row {idx} has {len(row)} cells, expected {len(header)}"
            )
    lines = [_render_line(header), _render_line(["---"] * len(header))]
    lines.extend(_render_line(row) for row in rows)
    return "\n".join(lines)


def _render_line(cells: list[str]) -> str:
    return "| " + " | ".join(escape_cell(c) for c in cells) + " |"


def parse_table(text: str) -> tuple[list[str], list[list[str]]]:
    """Invert render_table, recovering (header, rows) exactly."""
    lines = text.split("\n")
    if len(lines) < 2:
        raise TableFormatError("table needs a header line and a delimiter line")
    header = _parse_line(lines[0])
    delim = _parse_line(lines[1])
    if delim != ["---"] * len(header):
        raise TableFormatError("second line is not a delimiter row")
    rows = []
    for idx, line in enumerate(lines[2:]):
        row = _parse_line(line)
        if len(row) != len(header):
            raise TableFormatError(f"row {idx} arity mismatch")
        rows.append([unescape_cell(c) for c in row])
    return [unescape_cell(c) for c in header], rows


def _parse_line(line: str) -> list[str]:
    if not (line.startswith("| ") and line.endswith(" |")):
        raise TableFormatError(f"not a table line: {line!r}")
    body = line[2:-2]
    cells: list[str] = []
    cur: list[str] = []
    i = 0
    n = len(body)
    while i < n:
        ch = body[i]
        if ch == "\\" and i + 1 < n:
            cur.append(ch)
            cur.append(body[i + 1])
            i += 2
        elif body.startswith(" | ", i):
            cells.append("".join(cur))
            cur = []
            i += 3
        else:
            cur.append(ch)
            i += 1
    cells.append("".join(cur))
    return cells
