# io_utils.py - Artifact writers with round-trip float precision

import json
from datetime import date
from pathlib import Path
from typing import Any, Dict

import numpy as np
import pandas as pd

SCHEMA_VERSION = "1.0"
FLOAT_FORMAT = "%.17g"


def _to_builtin(value: Any):
    """json.dumps fallback for numpy scalars, arrays, dates and pydantic models."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (date, Path)):
        return str(value)
    if hasattr(value, "model_dump"):
        return value.model_dump(mode="json")
    raise TypeError(f"cannot serialize {type(value).__name__}")


def dumps(payload: Dict[str, Any]) -> str:
    """JSON text with a schema version, sorted keys and shortest round-trip floats."""
    body = {"schema_version": SCHEMA_VERSION, **payload}
    return json.dumps(body, default=_to_builtin, sort_keys=True, indent=2, allow_nan=True) + "\n"


def write_json(path, payload: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(payload), encoding="utf-8")
    return path


def read_json(path) -> Dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_frame(path, frame: pd.DataFrame) -> Path:
    """
    Write a table as CSV with 17 significant digits.

    Args:
        path (str | Path): Target file
        frame (pandas.DataFrame): Table to write

    Returns:
        Path: the written file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def read_frame(path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")
