"""File output helpers shared by the CLI and the MCP tools."""

from collections.abc import Iterable, Mapping, Sequence
import csv
import dataclasses
from enum import Enum
import json
import math
from pathlib import Path
import sys
from typing import Any

import numpy as np
from pydantic import BaseModel

FLOAT_FORMAT = ".17g"


def to_jsonable(value: Any) -> Any:
    """Convert models, dataclasses, enums and numpy values into plain JSON types."""
    if isinstance(value, BaseModel):
        return to_jsonable(value.model_dump(mode="python"))
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: to_jsonable(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Mapping):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        return [to_jsonable(v) for v in value]
    return value


def format_float(value: float) -> str:
    """Seventeen significant digits, always readable back as a float."""
    if not math.isfinite(value):
        return json.dumps(value)
    text = format(value, FLOAT_FORMAT)
    if not any(c in text for c in ".eEn"):
        text += ".0"
    return text


def finite_or_none(value: float) -> float | None:
    """Infinite margins (nothing was compared) become JSON null."""
    return value if math.isfinite(value) else None


def _encode(value: Any, indent: int, level: int) -> str:
    if isinstance(value, bool) or value is None:
        return json.dumps(value)
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, int | str):
        return json.dumps(value)

    pad = "\n" + " " * (indent * (level + 1))
    close = "\n" + " " * (indent * level)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{json.dumps(k)}: {_encode(v, indent, level + 1)}" for k, v in value.items()]
        return "{" + pad + ("," + pad).join(items) + close + "}"
    if isinstance(value, list):
        if not value:
            return "[]"
        if all(isinstance(v, int | float) and not isinstance(v, bool) for v in value):
            return "[" + ", ".join(_encode(v, indent, level) for v in value) + "]"
        items = [_encode(v, indent, level + 1) for v in value]
        return "[" + pad + ("," + pad).join(items) + close + "]"
    raise TypeError(f"cannot encode {type(value).__name__} as JSON")


def dumps_json(value: Any, indent: int = 2) -> str:
    return _encode(to_jsonable(value), indent, 0) + "\n"


def write_json(value: Any, path: Path | None = None) -> None:
    """Write ``value`` as JSON to ``path``, or to standard output when ``path`` is None."""
    text = dumps_json(value)
    if path is None:
        sys.stdout.write(text)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def read_json(path: Path) -> Any:
    with path.open(encoding="utf-8") as f:
        return json.load(f)


def write_csv(
    header: Sequence[str], rows: Iterable[Sequence[Any]], path: Path | None = None
) -> None:
    """Write rows with a fixed header; floats use the JSON float format."""

    def cell(value: Any) -> Any:
        value = to_jsonable(value)
        return format_float(value) if isinstance(value, float) else value

    if path is None:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([cell(v) for v in row] for row in rows)
        return

    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([cell(v) for v in row] for row in rows)
