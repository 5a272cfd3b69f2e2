"""Shared helpers for the experiment runners."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from cartsim import __version__


def clean(obj):
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    return obj


def write_json(path: Path, payload: dict) -> None:
    payload = {"version": __version__, **payload}
    path.write_text(json.dumps(clean(payload), indent=2, sort_keys=True) + "\n")


def out_dir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
