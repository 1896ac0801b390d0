"""File formats: ``t,y`` CSV datasets, ``key = value`` configs, JSON reports."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError, EmptyDatasetError, ParseError
from .separable import Dataset

__all__ = [
    "parse_dataset",
    "format_dataset",
    "file_digest",
    "parse_config",
    "dumps_report",
    "format_number",
]


def parse_dataset(path):
    """Read a UTF-8 CSV with header ``t,y``; LF or CRLF line endings.

    Rows are numbered as in the file, the header being row 1.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["t", "y"]:
        raise ParseError(f"{path}: line 1 must be the header 't,y'", line=1)
    t, y = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ParseError(f"{path}: row {lineno} has {len(row)} fields, expected 2", line=lineno)
        for column, cell, target in (("t", row[0], t), ("y", row[1], y)):
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(
                    f"{path}: row {lineno}, column {column}: {cell!r} is not a number",
                    line=lineno, column=column,
                ) from None
            if not math.isfinite(value):
                raise ParseError(
                    f"{path}: row {lineno}, column {column}: value must be finite",
                    line=lineno, column=column,
                )
            target.append(value)
    if not t:
        raise EmptyDatasetError(f"{path}: no data rows after the header", line=2)
    return Dataset(np.array(t), np.array(y))


def format_number(value):
    """17 significant digits, enough to round-trip any double."""
    return format(float(value), ".17g")


def format_dataset(data):
    lines = ["t,y"]
    lines += [f"{format_number(t)},{format_number(y)}" for t, y in zip(data.t, data.y)]
    return "\n".join(lines) + "\n"


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def parse_config(path):
    """Flat ``dotted.key = value`` file; ``#`` starts a comment line.

    Returns an insertion-ordered ``dict`` of raw string values.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _dump(obj, indent, level, out):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, bool):
        out.write({None: "null", True: "true", False: "false"}[obj])
    elif isinstance(obj, (int, np.integer)):
        out.write(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.write(format_number(obj) if math.isfinite(obj) else "null")
    elif isinstance(obj, str):
        out.write(_encode_str(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.write("{}")
            return
        out.write("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.write(f"{pad}{_encode_str(str(k))}: ")
            _dump(v, indent, level + 1, out)
            out.write(",\n" if i < len(obj) - 1 else "\n")
        out.write(end + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        items = list(obj)
        if not items:
            out.write("[]")
        elif all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in items):
            out.write("[")
            for i, v in enumerate(items):
                if i:
                    out.write(", ")
                _dump(v, indent, level + 1, out)
            out.write("]")
        else:
            out.write("[\n")
            for i, v in enumerate(items):
                out.write(pad)
                _dump(v, indent, level + 1, out)
                out.write(",\n" if i < len(items) - 1 else "\n")
            out.write(end + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def _encode_str(s):
    return json.dumps(s, ensure_ascii=False)


def dumps_report(report, indent=2):
    """Serialize with fixed key order and 17-significant-digit floats; non-finite becomes null."""
    buf = io.StringIO()
    _dump(report, indent, 0, buf)
    buf.write("\n")
    return buf.getvalue()
