"""Deterministic JSON reports."""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .model import SCHEMA_VERSION, MarketModel, dump_model


def model_hash(model: MarketModel) -> str:
    """sha256 of the normalized model document."""
    return hashlib.sha256(dump_model(model).encode()).hexdigest()


def jsonable(obj):
    """Convert numpy containers and scalars to plain JSON types.

    Non-finite floats become the strings ``"inf"``, ``"-inf"`` and ``"nan"``.
    """
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def render(report: dict) -> str:
    doc = {"schema_version": SCHEMA_VERSION, **report}
    return json.dumps(jsonable(doc), indent=2, sort_keys=True) + "\n"


def write(report: dict, path: str | Path | None) -> str:
    text = render(report)
    if path is not None:
        Path(path).write_text(text)
    return text
