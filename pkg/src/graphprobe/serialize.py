"""JSON encoding with every float written as a 17-significant-digit decimal."""

from __future__ import annotations

import json
import math

import numpy as np


def _encode(obj) -> str:
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(bool(obj) if obj is not None else None)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise ValueError(f"cannot encode non-finite float {x!r}")
        s = format(x, ".17g")
        # keep the token a JSON float so it reads back as float, not int
        return s if ("." in s or "e" in s) else s + ".0"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{_encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ",".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot encode object of type {type(obj).__name__}")


def dumps(obj) -> str:
    """Compact JSON text; floats round-trip bit-exactly."""
    return _encode(obj)


def loads(text: str):
    return json.loads(text)
