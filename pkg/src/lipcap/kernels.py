"""Compute backends for the hot path: batched analysis-mode network evaluation.

Two interchangeable implementations exist:

* ``numba``: the network is packed into flat arrays and evaluated by a
  jitted kernel with explicit loops.  Ahead on groupwise-normalized nets
  (per-sample statistics do not vectorize as matmuls) and on large batches
  of narrow nets; the per-call packing (~20 us) makes numpy competitive for
  tiny repeated calls.
* ``numpy``: a vectorized per-layer loop over the batch.  Ahead on
  matmul-dominated shapes, where BLAS wins.

Selection is via the ``LIPCAP_BACKEND`` environment variable (``numba``,
``numpy``, or ``auto``); ``auto`` picks numba when it imports.  Both paths
compute the same quantities; results agree to floating-point roundoff (they
are not bit-identical because summation orders differ).  Each single backend
is fully deterministic.  ``benchmarks/bench_backends.py`` measures both
across the workload regimes.
"""

from __future__ import annotations

import math
import os
from typing import NamedTuple

import numpy as np

_ACT_CODE = {"relu": 0, "identity": 1, "sigmoid": 2, "tanh": 3}
_KIND_CODE = {"none": 0, "bn": 1, "ln": 2, "gn": 3}


def _resolve_backend() -> str:
    requested = os.environ.get("LIPCAP_BACKEND", "auto").strip().lower() or "auto"
    if requested not in ("auto", "numba", "numpy"):
        raise ValueError(
            f"LIPCAP_BACKEND must be 'numba', 'numpy', or 'auto', got {requested!r}"
        )
    if requested == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if requested == "numba":
            raise
        return "numpy"
    return "numba"


BACKEND = _resolve_backend()


def backend() -> str:
    """Name of the active backend ('numba' or 'numpy')."""
    return BACKEND


class PackedNet(NamedTuple):
    n0: int
    rows: np.ndarray      # (K,) int64
    cols: np.ndarray      # (K,) int64
    w_flat: np.ndarray    # concatenated row-major weights
    w_off: np.ndarray     # (K+1,) offsets into w_flat
    act: np.ndarray       # (K,) activation codes
    kind: np.ndarray      # (K,) normalizer codes
    mu_flat: np.ndarray   # per-unit BN shifts (zeros elsewhere)
    scale_flat: np.ndarray  # per-unit BN scales 1/sqrt(var+eps) (ones elsewhere)
    u_off: np.ndarray     # (K+1,) per-unit offsets by layer width
    eps: np.ndarray       # (K,) eps for ln/gn layers
    gid_flat: np.ndarray  # per-unit group ids for gn layers (0 elsewhere)
    gcount: np.ndarray    # (K,) group counts (1 for non-gn layers)


def pack_network(spec) -> PackedNet:
    """Flatten a validated spec into the arrays the jitted kernel consumes."""
    K = spec.depth
    rows = np.empty(K, dtype=np.int64)
    cols = np.empty(K, dtype=np.int64)
    act = np.empty(K, dtype=np.int64)
    kind = np.empty(K, dtype=np.int64)
    eps = np.zeros(K, dtype=np.float64)
    gcount = np.ones(K, dtype=np.int64)
    w_parts, mu_parts, scale_parts, gid_parts = [], [], [], []
    for l, layer in enumerate(spec.layers):
        n = layer.out_dim
        rows[l] = n
        cols[l] = layer.in_dim
        act[l] = _ACT_CODE[layer.activation.value]
        kind[l] = _KIND_CODE[layer.norm.kind]
        w_parts.append(np.ascontiguousarray(layer.W, dtype=np.float64).ravel())
        mu = np.zeros(n)
        scale = np.ones(n)
        gid = np.zeros(n, dtype=np.int64)
        if layer.norm.kind == "bn":
            stats = layer.norm.params
            mu = stats.mu
            scale = 1.0 / np.sqrt(stats.sigma2 + stats.eps)
        elif layer.norm.kind == "ln":
            eps[l] = layer.norm.params.eps
        elif layer.norm.kind == "gn":
            gcfg = layer.norm.params
            eps[l] = gcfg.eps
            gcount[l] = len(gcfg.groups)
            for g, members in enumerate(gcfg.groups):
                for i in members:
                    gid[i] = g
        mu_parts.append(mu)
        scale_parts.append(scale)
        gid_parts.append(gid)
    w_off = np.zeros(K + 1, dtype=np.int64)
    u_off = np.zeros(K + 1, dtype=np.int64)
    np.cumsum([p.size for p in w_parts], out=w_off[1:])
    np.cumsum(rows, out=u_off[1:])
    return PackedNet(
        n0=spec.input_dim,
        rows=rows,
        cols=cols,
        w_flat=np.concatenate(w_parts),
        w_off=w_off,
        act=act,
        kind=kind,
        mu_flat=np.concatenate(mu_parts),
        scale_flat=np.concatenate(scale_parts),
        u_off=u_off,
        eps=eps,
        gid_flat=np.concatenate(gid_parts),
        gcount=gcount,
    )


def forward_batch_numpy(spec, X: np.ndarray) -> np.ndarray:
    """Pure-numpy analysis-mode forward over a (batch, n0) block."""
    from .network import _norm_frozen_batch, act_apply

    H = np.asarray(X, dtype=np.float64)
    for i, layer in enumerate(spec.layers, start=1):
        Y = H @ layer.W.T
        Z = _norm_frozen_batch(layer.norm, Y, i)
        H = act_apply(layer.activation, Z)
    return H


if BACKEND == "numba":
    from numba import njit

    @njit(cache=True)
    def _forward_packed(X, n0, rows, cols, w_flat, w_off, act, kind,
                        mu_flat, scale_flat, u_off, eps, gid_flat, gcount, out):
        B = X.shape[0]
        K = rows.shape[0]
        maxw = n0
        maxg = 1
        for l in range(K):
            if rows[l] > maxw:
                maxw = rows[l]
            if gcount[l] > maxg:
                maxg = gcount[l]
        h = np.empty(maxw)
        y = np.empty(maxw)
        gmean = np.empty(maxg)
        gstd = np.empty(maxg)
        gcnt = np.empty(maxg)
        for b in range(B):
            for j in range(n0):
                h[j] = X[b, j]
            for l in range(K):
                r = rows[l]
                c = cols[l]
                base = w_off[l]
                for i in range(r):
                    acc = 0.0
                    row = base + i * c
                    for j in range(c):
                        acc += w_flat[row + j] * h[j]
                    y[i] = acc
                kd = kind[l]
                ub = u_off[l]
                if kd == 1:
                    for i in range(r):
                        y[i] = (y[i] - mu_flat[ub + i]) * scale_flat[ub + i]
                elif kd == 2:
                    mu = 0.0
                    for i in range(r):
                        mu += y[i]
                    mu /= r
                    var = 0.0
                    for i in range(r):
                        d = y[i] - mu
                        var += d * d
                    s = math.sqrt(var / r + eps[l])
                    for i in range(r):
                        y[i] = (y[i] - mu) / s
                elif kd == 3:
                    ng = gcount[l]
                    for g in range(ng):
                        gmean[g] = 0.0
                        gstd[g] = 0.0
                        gcnt[g] = 0.0
                    for i in range(r):
                        g = gid_flat[ub + i]
                        gmean[g] += y[i]
                        gcnt[g] += 1.0
                    for g in range(ng):
                        gmean[g] /= gcnt[g]
                    for i in range(r):
                        g = gid_flat[ub + i]
                        d = y[i] - gmean[g]
                        gstd[g] += d * d
                    for g in range(ng):
                        gstd[g] = math.sqrt(gstd[g] / gcnt[g] + eps[l])
                    for i in range(r):
                        g = gid_flat[ub + i]
                        y[i] = (y[i] - gmean[g]) / gstd[g]
                ak = act[l]
                if ak == 0:
                    for i in range(r):
                        if y[i] < 0.0:
                            y[i] = 0.0
                elif ak == 2:
                    for i in range(r):
                        y[i] = 1.0 / (1.0 + math.exp(-y[i]))
                elif ak == 3:
                    for i in range(r):
                        y[i] = math.tanh(y[i])
                for i in range(r):
                    h[i] = y[i]
            nk = rows[K - 1]
            for i in range(nk):
                out[b, i] = h[i]
        return out

    def forward_batch_numba(spec, X: np.ndarray) -> np.ndarray:
        p = pack_network(spec)
        X = np.ascontiguousarray(X, dtype=np.float64)
        out = np.empty((X.shape[0], spec.output_dim))
        _forward_packed(X, p.n0, p.rows, p.cols, p.w_flat, p.w_off, p.act, p.kind,
                        p.mu_flat, p.scale_flat, p.u_off, p.eps, p.gid_flat,
                        p.gcount, out)
        return out

    forward_batch = forward_batch_numba
else:
    forward_batch_numba = None
    forward_batch = forward_batch_numpy
