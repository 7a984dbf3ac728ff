"""Row tables with an embedded run configuration, as CSV or JSON.

CSV files start with ``# config: {...}`` (and optionally ``# result: {...}``)
comment lines holding compact JSON, followed by a normal header and rows.
Nothing time-dependent is written, so equal inputs give equal bytes.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os

__all__ = ["write_table", "render_table", "read_table"]


def _cell(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _jsonable(v):
    if isinstance(v, float) and math.isnan(v):
        return None
    return v


def render_table(rows, columns, config, result=None, fmt="csv") -> str:
    if fmt == "json":
        doc = {"config": config}
        if result is not None:
            doc["result"] = result
        doc["rows"] = [{c: _jsonable(r[c]) for c in columns} for r in rows]
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(config, separators=(",", ":")) + "\n")
    if result is not None:
        buf.write("# result: " + json.dumps(result, separators=(",", ":")) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r[c]) for c in columns])
    return buf.getvalue()


def write_table(path, rows, columns, config, result=None, fmt="csv") -> None:
    text = render_table(rows, columns, config, result, fmt)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _number(text):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def read_table(source):
    """Inverse of :func:`write_table`: ``(config, result, rows)``.

    Numeric-looking cells come back as numbers; the format is detected from
    the first non-blank character.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = source.read()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        rows = [{k: (math.nan if v is None else v) for k, v in r.items()} for r in doc.get("rows", [])]
        return doc.get("config", {}), doc.get("result"), rows
    config, result, body = {}, None, []
    for line in text.splitlines():
        if line.startswith("# config: "):
            config = json.loads(line[len("# config: "):])
        elif line.startswith("# result: "):
            result = json.loads(line[len("# result: "):])
        elif not line.startswith("#"):
            body.append(line)
    rows = [{k: _number(v) for k, v in r.items()} for r in csv.DictReader(body)]
    return config, result, rows
