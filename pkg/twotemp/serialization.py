"""Deterministic serialization of reports, ledgers and fields."""

import csv
import json
import math
from dataclasses import asdict, is_dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Sequence, Union

import numpy as np

# Maximum depth for nested object serialization
MAX_DEPTH = 10

PathLike = Union[str, Path]


def _serialize_float(value: float) -> Any:
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def safe_serialize(obj: Any, depth: int = 0) -> Any:
    """Convert an object to a JSON-compatible structure.

    Handles numpy scalars and arrays, dataclasses, objects exposing ``to_dict``, enums and
    non-finite floats (written as the strings "nan", "inf", "-inf").

    Args:
        obj: Object to serialize
        depth: Current recursion depth

    Returns:
        JSON-serializable representation of the object
    """
    if depth > MAX_DEPTH:
        return f"<max_depth_exceeded:{type(obj).__name__}>"

    if obj is None or isinstance(obj, (bool, str)):
        return obj

    if isinstance(obj, np.bool_):
        return bool(obj)

    if isinstance(obj, (int, np.integer)):
        return int(obj)

    if isinstance(obj, (float, np.floating)):
        return _serialize_float(float(obj))

    if isinstance(obj, Enum):
        return safe_serialize(obj.value, depth + 1)

    if isinstance(obj, np.ndarray):
        return safe_serialize(obj.tolist(), depth + 1)

    if isinstance(obj, (list, tuple)):
        return [safe_serialize(item, depth + 1) for item in obj]

    if isinstance(obj, dict):
        return {str(key): safe_serialize(value, depth + 1) for key, value in obj.items()}

    if hasattr(obj, "to_dict"):
        return safe_serialize(obj.to_dict(), depth + 1)

    if is_dataclass(obj) and not isinstance(obj, type):
        return safe_serialize(asdict(obj), depth + 1)

    if isinstance(obj, Path):
        return str(obj)

    return f"<{type(obj).__module__}.{type(obj).__name__}>"


def dumps_report(data: Any) -> str:
    """Serialize a report to canonical JSON.

    Keys are sorted and indentation fixed so that equal reports produce equal bytes.

    Raises:
        ValueError: If serialization fails
    """
    try:
        return json.dumps(safe_serialize(data), sort_keys=True, indent=2, allow_nan=False) + "\n"
    except (TypeError, ValueError) as e:
        raise ValueError(f"Serialization failed: {e}")


def write_json(path: PathLike, data: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_report(data), encoding="utf-8")
    return path


def _csv_cell(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if value is None:
        return ""
    return value


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Write rows in a fixed column order, floats at full ``repr`` precision.

    Args:
        path: Output file
        header: Column names
        rows: Row values in header order

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([_csv_cell(v) for v in row])
    return path


def read_csv(path: PathLike) -> list:
    """Read a CSV written by ``write_csv`` back as a list of dicts of strings."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
