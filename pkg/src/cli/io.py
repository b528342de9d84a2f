"""JSON data input and CSV outputs.

Data files hold one JSON object mapping field names to scalars or nested
row-major arrays. Every CSV float is written with 17 significant digits.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np

from ..core.exceptions import OutputPathError, SchemaError
from ..core.optimizer import TracePoint
from ..utils.common import format_float
from ..utils.log_manager import log_manager

logger = log_manager.get_logger(__name__)

DIAGNOSTIC_HEADER = ("iter", "elapsed_seconds", "elbo")


def load_data(path: Path) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as e:
        raise SchemaError(str(path), f"cannot read data file: {e.strerror}") from e
    except json.JSONDecodeError as e:
        raise SchemaError(str(path), f"invalid JSON at line {e.lineno}") from e
    if not isinstance(raw, dict):
        raise SchemaError(str(path), "top level must be a JSON object")
    return raw


def write_json(path: Path, payload: Dict[str, Any]) -> None:
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2)
            f.write("\n")
    except OSError as e:
        raise OutputPathError(f"cannot write {path}: {e.strerror}") from e
    logger.info(f"Wrote {path}")


def _cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return format_float(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> int:
    """Write a CSV with a fixed header; returns the number of data rows."""
    count = 0
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
                count += 1
    except OSError as e:
        raise OutputPathError(f"cannot write {path}: {e.strerror}") from e
    logger.info(f"Wrote {count} rows to {path}", extra={"path": str(path), "rows": count})
    return count


def write_samples(path: Path, names: Sequence[str], theta: np.ndarray) -> int:
    return write_rows(path, names, (list(row) for row in np.atleast_2d(theta)))


def write_diagnostics(path: Path, trace: Sequence[TracePoint], wallclock: bool = True) -> int:
    rows = ((p.iteration, float(p.elapsed) if wallclock else 0.0, float(p.elbo)) for p in trace)
    return write_rows(path, DIAGNOSTIC_HEADER, rows)


def read_samples(path: Path) -> Tuple[List[str], np.ndarray]:
    """Read a samples CSV written by :func:`write_samples`."""
    rows: List[List[float]] = []
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            for row in reader:
                if not row:
                    continue
                if len(row) != len(header):
                    raise SchemaError(str(path), f"line {reader.line_num} has {len(row)} values, "
                                                 f"expected {len(header)}")
                rows.append([float(v) for v in row])
    except OSError as e:
        raise SchemaError(str(path), f"cannot read samples file: {e.strerror}") from e
    except (StopIteration, ValueError) as e:
        raise SchemaError(str(path), "not a samples CSV") from e
    if not rows:
        raise SchemaError(str(path), "samples file has no draws")
    return header, np.array(rows, dtype=float)
