"""Versioned output files: JSON, JSON Lines and CSV with an embedded header.

Every artifact starts with a header record carrying the schema version,
the artifact kind, the full run configuration and the code version.  No
timestamps are written, so re-running a configuration reproduces the
file byte for byte.

* JSON: ``{"header": {...}, "payload": ...}``
* JSONL: first line is the header, one record per following line.
* CSV: first line is ``# `` followed by the header as JSON, then a
  regular CSV table with a column-name row.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

from . import __version__
from .errors import ValidationError

SCHEMA_VERSION = 1
SUPPORTED_SCHEMAS = {1}


def make_header(kind, config):
    return {
        "record": "header",
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "config": config,
        "code_version": __version__,
    }


def check_header(header, path="<artifact>"):
    if not isinstance(header, dict) or header.get("record") != "header":
        raise ValidationError(f"{path}: missing header record")
    version = header.get("schema_version")
    if version not in SUPPORTED_SCHEMAS:
        raise ValidationError(f"{path}: unsupported schema version {version!r}")
    return header


def atomic_write(path, data: str | bytes):
    """Write to a sibling temp file, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, allow_nan=True)


def format_json(header, payload):
    return _dumps({"header": header, "payload": payload}) + "\n"


def format_jsonl(header, records):
    lines = [_dumps(header)]
    lines.extend(_dumps(r) for r in records)
    return "\n".join(lines) + "\n"


def format_csv(header, columns, rows):
    buf = io.StringIO()
    buf.write("# " + _dumps(header) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_csv_cell(v) for v in row])
    return buf.getvalue()


def _csv_cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_json(path, header, payload):
    atomic_write(path, format_json(header, payload))


def write_jsonl(path, header, records):
    atomic_write(path, format_jsonl(header, records))


def write_csv(path, header, columns, rows):
    atomic_write(path, format_csv(header, columns, rows))


def read_json(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return check_header(doc.get("header"), path), doc.get("payload")


def read_jsonl(path):
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise ValidationError(f"{path}: empty file")
    header = check_header(json.loads(lines[0]), path)
    return header, [json.loads(ln) for ln in lines[1:]]


def read_csv(path):
    """Return (header, column names, rows as dicts of floats where possible)."""
    text = Path(path).read_text(encoding="utf-8")
    first, _, rest = text.partition("\n")
    if not first.startswith("# "):
        raise ValidationError(f"{path}: missing CSV header comment")
    header = check_header(json.loads(first[2:]), path)
    reader = csv.reader(io.StringIO(rest))
    columns = next(reader)
    rows = []
    for raw in reader:
        row = {}
        for name, cell in zip(columns, raw):
            try:
                row[name] = float(cell)
            except ValueError:
                row[name] = cell
        rows.append(row)
    return header, columns, rows
