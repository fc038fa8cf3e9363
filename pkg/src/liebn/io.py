"""Report and matrix-file serialization.

Matrix files are plain text: a header line ``dim n count m`` followed by
``m * n`` rows of ``n`` whitespace-separated floats written with 17
significant digits, matrices concatenated in row-major order.

Reports are JSON documents carrying ``"schema_version": "1"``; the schema
ships with the package as ``report_schema.json``.
"""

import csv
import io as _io
import json
from functools import lru_cache
from importlib import resources

import jsonschema
import numpy as np

from .errors import InvalidInput

TIMING_KEYS = ("wall_clock_s", "timing")


def format_matrices(mats):
    mats = np.asarray(mats, dtype=float)
    if mats.ndim == 2:
        mats = mats[None]
    if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
        raise InvalidInput("expected a stack of square matrices")
    m, n, _ = mats.shape
    lines = [f"dim {n} count {m}"]
    for A in mats:
        for row in A:
            lines.append(" ".join(f"{x:.17g}" for x in row))
    return "\n".join(lines) + "\n"


def parse_matrices(text):
    """Inverse of :func:`format_matrices`; returns an ``(m, n, n)`` array."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise InvalidInput("empty matrix file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "dim" or head[2] != "count":
        raise InvalidInput(f"bad matrix header {lines[0]!r}")
    try:
        n, m = int(head[1]), int(head[3])
        rows = [[float(x) for x in ln.split()] for ln in lines[1:]]
    except ValueError as exc:
        raise InvalidInput(f"malformed matrix file: {exc}") from exc
    if n < 1 or m < 0 or len(rows) != m * n or any(len(r) != n for r in rows):
        raise InvalidInput(f"matrix file body does not match header dim {n} count {m}")
    return np.array(rows, dtype=float).reshape(m, n, n)


def write_matrices(path, mats):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_matrices(mats))


def read_matrices(path):
    with open(path, encoding="utf-8") as fh:
        return parse_matrices(fh.read())


@lru_cache(maxsize=1)
def load_schema():
    text = resources.files("liebn").joinpath("report_schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate_report(doc):
    """Raise ``jsonschema.ValidationError`` if ``doc`` violates the schema."""
    jsonschema.Draft202012Validator(load_schema()).validate(doc)


def dumps_report(doc):
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _cell(v):
    if isinstance(v, (dict, list)):
        return json.dumps(v, sort_keys=True, allow_nan=False)
    return "" if v is None else v


def records_to_csv(records):
    """One CSV row per record; nested values are JSON-encoded."""
    keys = []
    for r in records:
        for k in r:
            if k not in keys:
                keys.append(k)
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys)
    for r in records:
        w.writerow([_cell(r.get(k)) for k in keys])
    return buf.getvalue()


def strip_timing(doc):
    """Copy of a report with every wall-clock field removed."""
    if isinstance(doc, dict):
        return {k: strip_timing(v) for k, v in doc.items() if k not in TIMING_KEYS}
    if isinstance(doc, list):
        return [strip_timing(v) for v in doc]
    return doc
