"""Delimited-table and JSON writers with byte-stable formatting."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def emit_table(rows: Iterable[Mapping], schema: Sequence[str], path) -> Path:
    """Write ``rows`` as comma-separated text with a header row.

    Floats carry 17 significant digits, so reading them back with ``float``
    reproduces the source values exactly.  Line endings are LF.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    schema = list(schema)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(schema)
        for row in rows:
            extra = set(row) - set(schema)
            missing = set(schema) - set(row)
            if extra or missing:
                raise ValueError(f"row does not match schema {schema}: extra={sorted(extra)} missing={sorted(missing)}")
            w.writerow([format_value(row[k]) for k in schema])
    return path


def read_table(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else None
    return v


def emit_json(obj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def emit_rows(rows, schema, path_stem, fmt: str = "csv") -> Path:
    """Table as ``<stem>.csv`` or as a JSON list of records ``<stem>.json``."""
    path_stem = Path(path_stem)
    if fmt == "csv":
        return emit_table(rows, schema, path_stem.with_suffix(".csv"))
    if fmt == "json":
        return emit_json([{k: r[k] for k in schema} for r in rows], path_stem.with_suffix(".json"))
    raise ValueError(f"unknown format {fmt!r}")
