"""Stable on-disk formats: matrix CSV and deterministic JSON."""

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .errors import InputError

FLOAT_FMT = "{:.17g}"


def read_matrix_csv(path):
    """Read a matrix CSV whose first line is ``rows,cols``.

    Every following line holds one row of comma-separated floats.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise InputError(f"{path}: empty file")
    try:
        rows, cols = (int(v) for v in lines[0].split(","))
    except ValueError as exc:
        raise InputError(f"{path}: header must be 'rows,cols'") from exc
    if rows < 1 or cols < 1:
        raise InputError(f"{path}: dimensions must be positive")
    if len(lines) - 1 != rows:
        raise InputError(f"{path}: header says {rows} rows, found {len(lines) - 1}")
    out = np.empty((rows, cols))
    for i, ln in enumerate(lines[1:]):
        parts = ln.split(",")
        if len(parts) != cols:
            raise InputError(f"{path}: row {i} has {len(parts)} entries, expected {cols}")
        try:
            out[i] = [float(p) for p in parts]
        except ValueError as exc:
            raise InputError(f"{path}: row {i}: {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise InputError(f"{path}: entries must be finite")
    return out


def write_matrix_csv(path, a):
    """Write a matrix (vectors become ``k x 1``) with 17 significant digits."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    lines = [f"{a.shape[0]},{a.shape[1]}"]
    lines += [",".join(FLOAT_FMT.format(v) for v in row) for row in a]
    Path(path).write_text("\n".join(lines) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return x


def dumps(obj):
    """JSON with sorted keys; non-finite floats become the strings ``"inf"``/``"nan"``."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj))


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from exc


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
