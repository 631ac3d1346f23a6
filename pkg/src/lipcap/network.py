"""Feedforward network specifications and evaluation.

A network is a stack of layers ``h_i = g_i(NO_i(W_i h_{i-1}))`` with
1-Lipschitz activations, no biases, and an optional normalizer per layer.

Two evaluation modes exist for batch-norm layers:

* ``"analysis"`` (default): frozen recorded statistics, making the whole
  network a fixed deterministic map.  This is the mode every bound and
  oracle in the package works with.
* ``"batch"``: statistics computed from the evaluated batch itself, used
  only by the training loop and by batch instrumentation.

The mode is always an explicit argument, never ambient state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from .errors import ConfigError, ShapeError
from .linalg import as_matrix, as_vector, inf_norm
from .normalizers import GnCfg, NormalizerCfg


class Activation(str, Enum):
    RELU = "relu"
    IDENTITY = "identity"
    SIGMOID = "sigmoid"
    TANH = "tanh"


def act_apply(kind: Activation, y: np.ndarray) -> np.ndarray:
    if kind == Activation.RELU:
        return np.maximum(y, 0.0)
    if kind == Activation.IDENTITY:
        return y
    if kind == Activation.SIGMOID:
        return 1.0 / (1.0 + np.exp(-y))
    if kind == Activation.TANH:
        return np.tanh(y)
    raise ConfigError(f"unknown activation {kind!r}")


def act_deriv(kind: Activation, y: np.ndarray) -> np.ndarray:
    """Derivative at pre-activation ``y``; the ReLU subgradient at 0 is 1."""
    if kind == Activation.RELU:
        return (y >= 0.0).astype(np.float64)
    if kind == Activation.IDENTITY:
        return np.ones_like(y)
    if kind == Activation.SIGMOID:
        s = 1.0 / (1.0 + np.exp(-y))
        return s * (1.0 - s)
    if kind == Activation.TANH:
        t = np.tanh(y)
        return 1.0 - t * t
    raise ConfigError(f"unknown activation {kind!r}")


@dataclass(eq=False)
class LayerSpec:
    """One layer: weight matrix, optional normalizer, activation, norm bound."""

    W: np.ndarray
    norm: NormalizerCfg = field(default_factory=NormalizerCfg.none)
    activation: Activation = Activation.RELU
    s_bound: Optional[float] = None

    def __post_init__(self):
        self.W = as_matrix(self.W)
        self.activation = Activation(self.activation)

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]


@dataclass(eq=False)
class NetworkSpec:
    input_dim: int
    layers: List[LayerSpec]

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def widths(self) -> Tuple[int, ...]:
        """(n_0, n_1, ..., n_K)."""
        return (self.input_dim,) + tuple(l.out_dim for l in self.layers)

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim


def validate_network(spec: NetworkSpec) -> NetworkSpec:
    """Check shape compatibility, normalizer coverage, and norm bounds.

    Returns the spec with weights canonicalized to contiguous float64.
    Every violation names the offending layer (1-based).
    """
    if spec.depth < 1:
        raise ConfigError("network needs at least one layer")
    if spec.input_dim < 1:
        raise ConfigError(f"input_dim must be positive, got {spec.input_dim}")
    prev = spec.input_dim
    for i, layer in enumerate(spec.layers, start=1):
        layer.W = np.ascontiguousarray(as_matrix(layer.W), dtype=np.float64)
        if layer.in_dim != prev:
            raise ShapeError(
                f"layer {i}: weight expects {layer.in_dim} inputs "
                f"but the previous width is {prev}"
            )
        n = layer.out_dim
        cfg = layer.norm
        try:
            if cfg.kind == "bn" and cfg.params.width != n:
                raise ConfigError(
                    f"batch-norm stats cover {cfg.params.width} units, layer width is {n}"
                )
            if cfg.kind == "ln" and n < 2:
                raise ConfigError("layer normalization needs width >= 2")
            if cfg.kind == "gn":
                cfg.params.check_cover(n)
        except ConfigError as exc:
            raise ConfigError(f"layer {i}: {exc}") from None
        if layer.s_bound is not None:
            if not layer.s_bound > 0:
                raise ConfigError(f"layer {i}: s_bound must be positive")
            wn = inf_norm(layer.W)
            if wn > layer.s_bound * (1.0 + 1e-12):
                raise ConfigError(
                    f"layer {i}: weight norm {wn} exceeds the bound {layer.s_bound}"
                )
        prev = n
    return spec


def _norm_frozen_batch(cfg: NormalizerCfg, Y: np.ndarray, layer_idx: int) -> np.ndarray:
    """Apply a normalizer to a (batch, n) block using frozen statistics."""
    if cfg.kind == "none":
        return Y
    if cfg.kind == "bn":
        stats = cfg.params
        return (Y - stats.mu) / np.sqrt(stats.sigma2 + stats.eps)
    if cfg.kind == "ln":
        V = Y - Y.mean(axis=1, keepdims=True)
        s = np.sqrt((V * V).mean(axis=1, keepdims=True) + cfg.params.eps)
        return V / s
    if cfg.kind == "gn":
        gcfg: GnCfg = cfg.params
        out = np.empty_like(Y)
        for g in gcfg.groups:
            idx = list(g)
            V = Y[:, idx] - Y[:, idx].mean(axis=1, keepdims=True)
            s = np.sqrt((V * V).mean(axis=1, keepdims=True) + gcfg.eps)
            out[:, idx] = V / s
        return out
    raise ConfigError(f"unknown normalizer kind {cfg.kind!r}")


def _norm_batchmode_batch(cfg: NormalizerCfg, Y: np.ndarray) -> np.ndarray:
    """Like :func:`_norm_frozen_batch` but BN uses the batch's own statistics."""
    if cfg.kind == "bn":
        mu = Y.mean(axis=0)
        var = Y.var(axis=0)
        return (Y - mu) / np.sqrt(var + cfg.params.eps)
    return _norm_frozen_batch(cfg, Y, 0)


def forward(spec: NetworkSpec, x) -> np.ndarray:
    """Evaluate the network on one input (analysis mode)."""
    out, _ = forward_trace(spec, x)
    return out


@dataclass(eq=False)
class LayerTrace:
    """Per-layer intermediate values of one forward evaluation."""

    pre_norm: List[np.ndarray]
    post_norm: List[np.ndarray]
    post_activation: List[np.ndarray]


def forward_trace(spec: NetworkSpec, x) -> Tuple[np.ndarray, LayerTrace]:
    """Evaluate one input and record every intermediate vector."""
    arr = as_vector(x)
    if arr.size != spec.input_dim:
        raise ShapeError(
            f"input has {arr.size} entries, network expects {spec.input_dim}"
        )
    trace = LayerTrace(pre_norm=[], post_norm=[], post_activation=[])
    h = arr
    for i, layer in enumerate(spec.layers, start=1):
        y = layer.W @ h
        z = _norm_frozen_batch(layer.norm, y[None, :], i)[0]
        h = act_apply(layer.activation, z)
        trace.pre_norm.append(y)
        trace.post_norm.append(z)
        trace.post_activation.append(h)
    return h, trace


def forward_batch(spec: NetworkSpec, X, mode: str = "analysis") -> np.ndarray:
    """Evaluate a (batch, input_dim) block of inputs.

    Analysis mode dispatches to the selected compute backend (see
    :mod:`lipcap.kernels`); batch mode is plain numpy.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise ShapeError(
            f"expected a (batch, {spec.input_dim}) array, got shape {X.shape}"
        )
    if mode == "analysis":
        from . import kernels

        return kernels.forward_batch(spec, X)
    if mode != "batch":
        raise ConfigError(f"unknown evaluation mode {mode!r}")
    H = X
    for layer in spec.layers:
        Y = H @ layer.W.T
        Z = _norm_batchmode_batch(layer.norm, Y)
        H = act_apply(layer.activation, Z)
    return H


def layer_outputs_batch(spec: NetworkSpec, X, mode: str = "analysis") -> List[dict]:
    """Per-layer pre-norm / post-norm / post-activation blocks for a batch."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise ShapeError(
            f"expected a (batch, {spec.input_dim}) array, got shape {X.shape}"
        )
    if mode not in ("analysis", "batch"):
        raise ConfigError(f"unknown evaluation mode {mode!r}")
    records = []
    H = X
    for i, layer in enumerate(spec.layers, start=1):
        Y = H @ layer.W.T
        if mode == "batch":
            Z = _norm_batchmode_batch(layer.norm, Y)
        else:
            Z = _norm_frozen_batch(layer.norm, Y, i)
        H = act_apply(layer.activation, Z)
        records.append({"pre_norm": Y, "post_norm": Z, "post_activation": H})
    return records


def weight_norm_product(spec: NetworkSpec) -> float:
    """Product of the per-layer induced infinity norms of the weights."""
    p = 1.0
    for layer in spec.layers:
        p *= inf_norm(layer.W)
    return p


@dataclass(eq=False)
class PrenormVariance:
    """Per-unit batch variance of each layer's total input ``y_i = W_i h_{i-1}``."""

    per_layer: List[np.ndarray]
    mean: np.ndarray  # (K,) mean over units
    max: np.ndarray   # (K,) max over units


def batch_prenorm_variance(spec: NetworkSpec, batch, mode: str = "analysis") -> PrenormVariance:
    """Population variance (divisor m) of each layer's pre-normalization input."""
    X = np.asarray(batch, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ShapeError("batch must be a nonempty (m, input_dim) array")
    per_layer = [rec["pre_norm"].var(axis=0) for rec in layer_outputs_batch(spec, X, mode)]
    return PrenormVariance(
        per_layer=per_layer,
        mean=np.array([v.mean() for v in per_layer]),
        max=np.array([v.max() for v in per_layer]),
    )
