"""CSV ingestion and JSON/CSV/markdown emission.

The JSON schema is versioned (``schema: 1``) and floats are written with 17
significant digits so that re-parsing reproduces every numeric field
bit-exactly.
"""

from __future__ import annotations

import json
import math

import numpy as np
import pandas as pd

from .exceptions import EmptyAfterFiltering, MissingColumn, ParseError
from .sample import RdSample

__all__ = ["load_csv", "emit_json", "write_json", "binned_means", "SCHEMA_VERSION"]

SCHEMA_VERSION = 1


def load_csv(
    path,
    x: str = "x",
    y: str = "y",
    t: str | None = None,
    z: list[str] | None = None,
    cutoff: float = 0.0,
) -> RdSample:
    """Read a headered CSV into a sample, rejecting non-finite rows.

    The returned sample keeps the original running variable; side splits use
    the cutoff.  Rows with non-finite required fields are dropped with their
    row numbers recorded on the raised error when nothing survives.
    """
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    needed = [x, y] + ([t] if t else []) + list(z or [])
    for col in needed:
        if col not in frame.columns:
            raise MissingColumn(f"column {col!r} not found in {path}", column=col)
    sub = frame[needed].apply(pd.to_numeric, errors="coerce")
    finite = np.isfinite(sub.to_numpy(dtype=float)).all(axis=1)
    dropped = [int(i) + 2 for i in np.flatnonzero(~finite)]  # 1-based + header
    sub = sub[finite]
    if sub.empty:
        raise EmptyAfterFiltering(
            f"no usable rows in {path} after dropping non-finite values",
            dropped_rows=dropped[:50],
        )
    return RdSample(
        x=sub[x].to_numpy(dtype=float),
        y=sub[y].to_numpy(dtype=float),
        t=sub[t].to_numpy(dtype=float) if t else None,
        z=sub[list(z)].to_numpy(dtype=float) if z else None,
        cutoff=float(cutoff),
    )


def _format_float(v: float) -> str:
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return format(v, ".17g")


class _FloatEncoder(json.JSONEncoder):
    def default(self, o):
        if isinstance(o, (np.integer,)):
            return int(o)
        if isinstance(o, (np.floating,)):
            return float(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        return super().default(o)

    def iterencode(self, o, _one_shot=False):
        return super().iterencode(_round_trip(o), _one_shot)


def _round_trip(obj):
    """Wrap floats so json emits them at 17 significant digits."""
    if isinstance(obj, float):
        return _RawFloat(obj)
    if isinstance(obj, dict):
        return {k: _round_trip(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_trip(v) for v in obj]
    if isinstance(obj, np.floating):
        return _RawFloat(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_round_trip(v) for v in obj.tolist()]
    return obj


class _RawFloat(float):
    def __repr__(self):
        return _format_float(float(self))


def emit_json(payload: dict) -> str:
    body = {"schema": SCHEMA_VERSION, **payload}
    return json.dumps(_round_trip(body), indent=2, allow_nan=True)


def write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        fh.write(emit_json(payload))
        fh.write("\n")


def binned_means(x, y, n_bins: int = 50):
    """Equal-width bin means over the range of x (one side at a time).

    Returns (centers, means, counts); empty bins are dropped.  Weighting bin
    means by counts recovers the overall mean exactly.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lo, hi = float(x.min()), float(x.max())
    if hi <= lo:
        return np.array([lo]), np.array([y.mean()]), np.array([x.size])
    edges = np.linspace(lo, hi, n_bins + 1)
    idx = np.clip(np.digitize(x, edges) - 1, 0, n_bins - 1)
    centers, means, counts = [], [], []
    for b in range(n_bins):
        mask = idx == b
        if mask.any():
            centers.append(0.5 * (edges[b] + edges[b + 1]))
            means.append(float(y[mask].mean()))
            counts.append(int(mask.sum()))
    return np.asarray(centers), np.asarray(means), np.asarray(counts)
