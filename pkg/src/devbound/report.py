"""Deterministic artifact writing: delimited rows, summaries, config hashes.

Byte-for-byte reproducibility is the contract here.  Floats print with 17
significant digits (enough to round-trip a double), row order follows trial
order, and the only run-dependent field (wall time) lives in the summary
JSON, never in the data file.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

FLOAT_DIGITS = 17


def format_value(value: Any) -> str:
    """Fixed textual form for one cell; floats at 17 significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if bool(value) else "false"
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, f".{FLOAT_DIGITS}g")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    return str(value)


def config_hash(params: dict[str, Any]) -> str:
    """Short stable digest of a resolved parameter mapping."""
    canon = json.dumps(params, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def render_params(params: dict[str, Any]) -> str:
    def one(value: Any) -> str:
        if isinstance(value, (list, tuple)):
            return ";".join(one(v) for v in value)
        return format_value(value)

    return " ".join(f"{key}={one(params[key])}" for key in sorted(params))


def _csv_cell(value: Any) -> str:
    text = format_value(value)
    if "," in text or '"' in text or "\n" in text:
        text = '"' + text.replace('"', '""') + '"'
    return text


def rows_to_csv(
    experiment: str,
    params: dict[str, Any],
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
) -> str:
    """Delimited text with a two-line comment header carrying the config hash."""
    lines = [
        f"# devbound {experiment} config={config_hash(params)}",
        f"# {render_params(params)}",
        ",".join(columns),
    ]
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} cells for {len(columns)} columns")
        lines.append(",".join(_csv_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def rows_to_json(
    experiment: str,
    params: dict[str, Any],
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
) -> str:
    """Same table as a JSON document, one object per row."""
    payload = {
        "experiment": experiment,
        "config_hash": config_hash(params),
        "params": _jsonable(params),
        "rows": [dict(zip(columns, (_jsonable(v) for v in row))) for row in rows],
    }
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _jsonable(value: Any):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def summary_document(
    experiment: str,
    seed: int,
    params: dict[str, Any],
    aggregates: dict[str, Any],
    artifacts: list[str],
    wall_time: float,
) -> str:
    payload = {
        "experiment": experiment,
        "seed": seed,
        "config_hash": config_hash(params),
        "params": _jsonable(params),
        "aggregates": _jsonable(aggregates),
        "artifacts": artifacts,
        "wall_time_s": wall_time,
    }
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_text(path: str | Path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8", newline="\n")
