"""Numerical oracles: finite-difference Jacobians and sampled Lipschitz estimation.

These are deliberately independent of the analytic machinery they are used
to verify.  Sampled estimates are *lower* bounds on the true local Lipschitz
constant by construction and are never reported as certified constants.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import ShapeError
from .linalg import as_vector, max_norm

# Axis-aligned probe pairs use this fraction of the box width.  Piecewise
# linear maps attain their constant along coordinate directions that uniform
# pairs miss, so half of all pairs are micro-perturbations.
AXIS_STEP_FRACTION = 1e-4

_BLOCK = 128  # pairs generated per seeded block; fixed so prefixes are stable


@dataclass(eq=False)
class Region:
    """An axis-aligned box, given by per-dimension (lo, hi) bounds."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = as_vector(self.lo)
        self.hi = as_vector(self.hi)
        if self.lo.shape != self.hi.shape:
            raise ShapeError("lo and hi must have the same length")
        if self.lo.size == 0:
            raise ShapeError("region needs at least one dimension")
        if not (np.isfinite(self.lo).all() and np.isfinite(self.hi).all()):
            raise ShapeError("region bounds must be finite")
        if (self.lo > self.hi).any():
            raise ShapeError("region has lo > hi in some dimension")

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    @classmethod
    def cube(cls, lo: float, hi: float, dim: int) -> "Region":
        return cls(lo=np.full(dim, float(lo)), hi=np.full(dim, float(hi)))


@dataclass(eq=False)
class LipEstimate:
    """A sampled lower estimate of a local Lipschitz constant."""

    value: float
    pairs_evaluated: int
    argmax_x: Optional[np.ndarray]
    argmax_x2: Optional[np.ndarray]


def _as_batch_output(fx: np.ndarray, n: int) -> np.ndarray:
    out = np.asarray(fx, dtype=np.float64)
    if out.ndim == 1:
        out = out[:, None]
    if out.ndim != 2 or out.shape[0] != n:
        raise ShapeError(
            f"function returned shape {np.shape(fx)} for a batch of {n} inputs"
        )
    return out


def rowwise(f: Callable[[np.ndarray], np.ndarray]) -> Callable[[np.ndarray], np.ndarray]:
    """Adapt a single-vector function to the (batch, d) -> (batch, k) contract."""

    def wrapped(X: np.ndarray) -> np.ndarray:
        return np.stack([np.atleast_1d(np.asarray(f(row), dtype=np.float64)) for row in X])

    return wrapped


def _seed_tuple(seed: Union[int, Sequence[int]]) -> tuple:
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    return tuple(int(s) for s in seed)


def _generate_pairs(region: Region, n_pairs: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic pair stream: even indices are uniform pairs, odd indices
    are axis-aligned micro-perturbations cycling over the dimensions.

    Pairs are generated in fixed-size seeded blocks, so the first ``n`` pairs
    are identical for every ``n_pairs >= n`` (the estimate is monotone in
    ``n_pairs``).
    """
    base = _seed_tuple(seed)
    d = region.dim
    lo, w = region.lo, region.widths
    X1 = np.empty((n_pairs, d))
    X2 = np.empty((n_pairs, d))
    n_blocks = (n_pairs + _BLOCK - 1) // _BLOCK
    for blk in range(n_blocks):
        rng = np.random.default_rng(base + (blk,))
        u1 = rng.random((_BLOCK, d))
        u2 = rng.random((_BLOCK, d))
        start = blk * _BLOCK
        count = min(_BLOCK, n_pairs - start)
        a = lo + u1[:count] * w
        b = lo + u2[:count] * w
        t = np.arange(start, start + count)
        axis_rows = t % 2 == 1
        if axis_rows.any():
            j = (t[axis_rows] // 2) % d
            delta = AXIS_STEP_FRACTION * w[j]
            b[axis_rows] = a[axis_rows]
            stepped = a[axis_rows, j] + delta
            over = stepped > region.hi[j]
            stepped[over] = a[axis_rows, j][over] - delta[over]
            b[axis_rows, j] = stepped
        X1[start : start + count] = a
        X2[start : start + count] = b
    return X1, X2


def sampled_lipschitz(
    f: Callable[[np.ndarray], np.ndarray],
    region: Region,
    n_pairs: int,
    seed: Union[int, Sequence[int]] = 0,
) -> LipEstimate:
    """Largest max-norm difference quotient of ``f`` over sampled pairs.

    ``f`` must map a (batch, dim) array to a (batch, k) array (wrap
    single-vector functions with :func:`rowwise`).  Deterministic for a
    fixed seed, including the reported argmax pair; ties are broken toward
    the lexicographically smallest pair so that any evaluation order agrees.
    """
    if n_pairs < 1:
        raise ValueError(f"n_pairs must be >= 1, got {n_pairs}")
    if not (region.widths > 0).any():
        raise ValueError("degenerate region: every dimension has zero width")
    X1, X2 = _generate_pairs(region, int(n_pairs), seed)
    F1 = _as_batch_output(f(X1), n_pairs)
    F2 = _as_batch_output(f(X2), n_pairs)
    if not (np.isfinite(F1).all() and np.isfinite(F2).all()):
        raise ValueError("function returned non-finite values on the region")
    num = np.abs(F1 - F2).max(axis=1)
    den = np.abs(X1 - X2).max(axis=1)
    valid = den > 0
    if not valid.any():
        return LipEstimate(0.0, int(n_pairs), None, None)
    q = np.where(valid, num / np.where(valid, den, 1.0), -np.inf)
    best = float(q.max())
    ties = np.flatnonzero(q == best)
    key = np.hstack([X1[ties], X2[ties]])
    order = np.lexsort(key.T[::-1])
    pick = ties[order[0]]
    return LipEstimate(best, int(n_pairs), X1[pick].copy(), X2[pick].copy())


def directional_quotient(
    f: Callable[[np.ndarray], np.ndarray],
    x,
    direction,
    step: float,
) -> float:
    """Difference quotient of ``f`` from ``x`` along ``direction`` (max norms)."""
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    x0 = as_vector(x)
    d = as_vector(direction)
    if x0.shape != d.shape:
        raise ShapeError("x and direction must have the same length")
    f0 = as_vector(np.atleast_1d(f(x0)))
    f1 = as_vector(np.atleast_1d(f(x0 + step * d)))
    if not (np.isfinite(f0).all() and np.isfinite(f1).all()):
        raise ValueError("function returned non-finite values")
    return max_norm(f1 - f0) / (step * max_norm(d))


def finite_diff_jacobian(
    f: Callable[[np.ndarray], np.ndarray],
    x,
    h: float,
) -> np.ndarray:
    """Central-difference Jacobian of ``f`` at ``x`` with step ``h``."""
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    x0 = as_vector(x)
    n = x0.size
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        fp = np.atleast_1d(np.asarray(f(x0 + e), dtype=np.float64))
        fm = np.atleast_1d(np.asarray(f(x0 - e), dtype=np.float64))
        if not (np.isfinite(fp).all() and np.isfinite(fm).all()):
            raise ValueError("function returned non-finite values near x")
        cols.append((fp - fm) / (2.0 * h))
    return np.stack(cols, axis=1)
