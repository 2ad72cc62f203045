"""Input checking helpers shared by the public entry points.

Each helper returns the validated (and possibly converted) array so call
sites can write ``x = check_matrix(x, "x")`` and move on.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DimensionError


def check_matrix(arr, name: str, rows=None, cols=None) -> np.ndarray:
    """Require a finite 2-D float64 array, optionally of fixed shape."""
    out = np.ascontiguousarray(arr, dtype=np.float64)
    if out.ndim != 2:
        raise DimensionError(f"{name} must be 2-d, got {out.ndim}-d")
    if rows is not None and out.shape[0] != rows:
        raise DimensionError(f"{name} must have {rows} rows, got {out.shape[0]}")
    if cols is not None and out.shape[1] != cols:
        raise DimensionError(f"{name} must have {cols} columns, got {out.shape[1]}")
    if out.size and not np.all(np.isfinite(out)):
        raise ContractError(f"{name} contains NaN or infinity")
    return out


def check_labels(arr, name: str, n=None, low=None, high=None) -> np.ndarray:
    """Require a 1-D integer label vector, optionally bounded to [low, high]."""
    out = np.asarray(arr)
    if out.ndim != 1:
        raise DimensionError(f"{name} must be 1-d, got {out.ndim}-d")
    if not np.issubdtype(out.dtype, np.integer):
        cast = out.astype(np.int64, copy=True) if out.size else out.astype(np.int64)
        if out.size and not np.array_equal(cast, out):
            raise ContractError(f"{name} must hold integers")
        out = cast
    out = out.astype(np.int64, copy=False)
    if n is not None and out.shape[0] != n:
        raise DimensionError(f"{name} must have length {n}, got {out.shape[0]}")
    if out.size:
        if low is not None and out.min() < low:
            raise ContractError(f"{name} has value {out.min()} below {low}")
        if high is not None and out.max() > high:
            raise ContractError(f"{name} has value {out.max()} above {high}")
    return out


def check_same_length(name_a: str, a, name_b: str, b):
    if len(a) != len(b):
        raise DimensionError(
            f"{name_a} and {name_b} lengths differ: {len(a)} vs {len(b)}")


def check_positive(value, name: str) -> float:
    value = float(value)
    if not value > 0:
        raise ContractError(f"{name} must be positive, got {value}")
    return value


def check_fraction(value, name: str) -> float:
    """Require a float strictly inside (0, 1)."""
    value = float(value)
    if not (0.0 < value < 1.0):
        raise ContractError(f"{name} must lie strictly between 0 and 1, got {value}")
    return value
