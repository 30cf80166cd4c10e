"""On-disk cache of analytic curves keyed by family, parameters and grid."""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .measures import MeasureSpec
from .spectra import SpectrumCurve, analytic_curves


def cache_dir() -> Path:
    env = os.environ.get("MFHS_CACHE_DIR")
    return Path(env) if env else Path.home() / ".cache" / "mfhs"


def _h(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def cache_key(spec: MeasureSpec, q_grid: np.ndarray) -> str:
    grid = ",".join(repr(float(x)) for x in q_grid)
    return f"{spec.family}-{_h(repr(sorted(spec.params().items())))}-{_h(grid)}"


def _payload_hash(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def store(spec: MeasureSpec, q_grid, curves: dict[str, SpectrumCurve], root: Path | None = None) -> Path:
    root = cache_dir() if root is None else root
    root.mkdir(parents=True, exist_ok=True)
    payload = {"q": [float(x) for x in q_grid],
               "curves": {k: [float(v) for v in c.values] for k, c in sorted(curves.items())}}
    path = root / (cache_key(spec, q_grid) + ".json")
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps({"hash": _payload_hash(payload), "payload": payload}, sort_keys=True))
    tmp.replace(path)
    return path


def load(spec: MeasureSpec, q_grid, root: Path | None = None) -> dict[str, SpectrumCurve] | None:
    """Cached curves, or None on a miss or a content-hash mismatch."""
    root = cache_dir() if root is None else root
    path = root / (cache_key(spec, q_grid) + ".json")
    try:
        doc = json.loads(path.read_text())
        payload = doc["payload"]
        if doc["hash"] != _payload_hash(payload):
            return None
        q = np.array(payload["q"])
        if q.shape != np.shape(q_grid) or np.any(q != q_grid):
            return None
        fns = analytic_curves(spec)
        stored = payload["curves"]
        if set(stored) != set(fns):
            return None
        # keep the family's natural curve order so reports match fresh runs
        return {k: SpectrumCurve(q, np.array(stored[k]), k, fn) for k, fn in fns.items()}
    except (OSError, ValueError, KeyError, TypeError):
        return None


def curves_for(spec: MeasureSpec, q_grid, use_cache: bool = True) -> dict[str, SpectrumCurve]:
    q_grid = np.asarray(q_grid, dtype=float)
    if use_cache:
        hit = load(spec, q_grid)
        if hit is not None:
            return hit
    curves = {k: SpectrumCurve.from_function(k, fn, q_grid) for k, fn in analytic_curves(spec).items()}
    if use_cache:
        try:
            store(spec, q_grid, curves)
        except OSError:
            pass
    return curves
