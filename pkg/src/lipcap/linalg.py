"""Dense vectors and matrices with the max norm, the induced infinity norm,
and the truncation / zero-padding operators.

Everything is float64.  Public operations validate shapes and finiteness at
the boundary so that reports built on top of them are reproducible and fail
loudly instead of propagating NaNs.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import ShapeError


def as_vector(v: Iterable[float]) -> np.ndarray:
    """Coerce ``v`` to a 1-d float64 array."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"expected a 1-d vector, got shape {arr.shape}")
    return arr


def as_matrix(m: Iterable[Iterable[float]]) -> np.ndarray:
    """Coerce ``m`` to a 2-d float64 array with at least one row and column."""
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-d matrix, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"matrix must have positive dimensions, got {arr.shape}")
    return arr


def require_finite(arr: np.ndarray, what: str = "value") -> np.ndarray:
    if not np.isfinite(arr).all():
        raise ShapeError(f"{what} contains non-finite entries")
    return arr


def max_norm(v: Iterable[float]) -> float:
    """Largest absolute entry of ``v``."""
    arr = as_vector(v)
    if arr.size == 0:
        raise ShapeError("max_norm of an empty vector")
    require_finite(arr, "vector")
    return float(np.abs(arr).max())


def inf_norm(m: Iterable[Iterable[float]]) -> float:
    """Maximum absolute row sum: the max-norm Lipschitz constant of x -> M x."""
    arr = as_matrix(m)
    require_finite(arr, "matrix")
    return float(np.abs(arr).sum(axis=1).max())


def truncate_pad(v: Iterable[float], m: int) -> np.ndarray:
    """First ``m`` entries of ``v``, or ``v`` extended with zeros to length ``m``."""
    arr = as_vector(v)
    m = int(m)
    if m < 1:
        raise ValueError(f"target length must be a positive integer, got {m}")
    if m <= arr.size:
        return arr[:m].copy()
    out = np.zeros(m, dtype=np.float64)
    out[: arr.size] = arr
    return out


def chain_truncate_pad(v: Iterable[float], ms: Sequence[int]) -> np.ndarray:
    """Left-to-right composition of :func:`truncate_pad` over ``ms``."""
    ms = list(ms)
    if not ms:
        raise ValueError("chain_truncate_pad needs at least one target length")
    out = as_vector(v)
    for m in ms:
        out = truncate_pad(out, m)
    return out
