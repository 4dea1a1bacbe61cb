"""Thread-safe serialization utilities for glelab.

Centralized JSON conversion for configs, reports, and numerical results.
No global state is mutated, so every function may be called concurrently.
"""

import hashlib
import json
import math
from dataclasses import asdict, is_dataclass
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel


def to_serializable(obj: Any) -> Any:
    """Convert an object to a JSON-serializable form.

    Recursively converts:
    - Pydantic models -> dict (JSON mode)
    - Dataclasses -> dict
    - numpy arrays -> nested lists, numpy scalars -> Python scalars
    - Enums -> value, Paths -> str
    - Non-finite floats -> None
    - Objects with to_dict() -> dict
    """
    if obj is None or isinstance(obj, (str, bool, int)):
        return obj

    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None

    if isinstance(obj, np.generic):
        return to_serializable(obj.item())

    if isinstance(obj, np.ndarray):
        return [to_serializable(x) for x in obj.tolist()]

    if isinstance(obj, BaseModel):
        return to_serializable(obj.model_dump(mode="json"))

    if is_dataclass(obj) and not isinstance(obj, type):
        return to_serializable(asdict(obj))

    if isinstance(obj, Enum):
        return obj.value

    if isinstance(obj, Path):
        return str(obj)

    if hasattr(obj, "to_dict") and callable(obj.to_dict):
        return to_serializable(obj.to_dict())

    if isinstance(obj, dict):
        return {str(k): to_serializable(v) for k, v in obj.items()}

    if isinstance(obj, (list, tuple, set)):
        return [to_serializable(item) for item in obj]

    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def to_json(obj: Any, pretty: bool = True, sort_keys: bool = False) -> str:
    """Convert an object to a JSON string.

    Example:
        >>> to_json({"D": np.float64(1.0)}, pretty=False)
        '{"D": 1.0}'
    """
    data = to_serializable(obj)
    if pretty:
        return json.dumps(data, indent=2, sort_keys=sort_keys, ensure_ascii=False)
    return json.dumps(data, sort_keys=sort_keys, ensure_ascii=False)


def canonical_json(obj: Any) -> str:
    """Key-sorted, whitespace-free JSON used for hashing."""
    return json.dumps(
        to_serializable(obj), sort_keys=True, separators=(",", ":"), ensure_ascii=True
    )


def config_hash(effective: dict[str, Any]) -> str:
    """sha256 of the canonical JSON of an effective config.

    The output directory is not part of the hash.
    """
    content = {k: v for k, v in effective.items() if k != "out"}
    return hashlib.sha256(canonical_json(content).encode("utf-8")).hexdigest()
