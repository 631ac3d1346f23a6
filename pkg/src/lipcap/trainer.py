"""Reverse-mode gradients and a minimal instrumented training loop.

The backward pass differentiates exactly through every normalizer kind,
including batch-norm batch statistics in batch mode.  Subgradient
conventions are fixed: ReLU takes 1 at zero (matching the ">= 0" indicator
of the witness gradients) and the l1 loss takes 0 at zero.

Every optimization step records the quantities the capacity analysis cares
about: per-layer weight norms, their product, per-unit pre-normalization
batch variances (mean and max over units), the product of the per-layer
reduction factors realized on the batch, and the batch loss/accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import ConfigError, ShapeError
from .linalg import inf_norm
from .network import Activation, LayerSpec, NetworkSpec, act_apply, act_deriv, validate_network
from .normalizers import DEFAULT_EPS, BnStats, GnCfg, NormalizerCfg

BN_MOMENTUM = 0.1  # running statistics: r = (1 - momentum) * r + momentum * batch


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 1
    batch_size: int = 128
    weight_decay: float = 1e-4
    seed: int = 0
    optimizer: str = "adam"  # adam | sgd
    loss: str = "l1"         # l1 | mse

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be nonnegative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.loss not in ("l1", "mse"):
            raise ConfigError(f"unknown loss {self.loss!r}")


def loss_l1(pred, target) -> float:
    """Sum of absolute differences."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"prediction {p.shape} and target {t.shape} differ in shape")
    return float(np.abs(p - t).sum())


def loss_mse(pred, target) -> float:
    """Squared error summed over outputs."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"prediction {p.shape} and target {t.shape} differ in shape")
    return float(((p - t) ** 2).sum())


def _loss_batch(kind: str, P: np.ndarray, T: np.ndarray) -> np.ndarray:
    if kind == "l1":
        return np.abs(P - T).sum(axis=1)
    if kind == "mse":
        return ((P - T) ** 2).sum(axis=1)
    raise ConfigError(f"unknown loss {kind!r}")


def _loss_grad_batch(kind: str, P: np.ndarray, T: np.ndarray) -> np.ndarray:
    if kind == "l1":
        return np.sign(P - T)  # subgradient 0 at exact zeros
    if kind == "mse":
        return 2.0 * (P - T)
    raise ConfigError(f"unknown loss {kind!r}")


def _forward_cached(spec: NetworkSpec, X: np.ndarray, mode: str) -> Tuple[np.ndarray, List[dict]]:
    """Batch forward keeping what the backward pass needs per layer."""
    caches: List[dict] = []
    H = X
    for layer in spec.layers:
        Y = H @ layer.W.T
        cache: Dict[str, object] = {"H_in": H, "kind": layer.norm.kind}
        kind = layer.norm.kind
        if kind == "none":
            Z = Y
        elif kind == "bn":
            stats: BnStats = layer.norm.params
            if mode == "batch":
                mu = Y.mean(axis=0)
                var = Y.var(axis=0)
                cache["batch_stats"] = (mu, var)
            else:
                mu, var = stats.mu, stats.sigma2
            s = np.sqrt(var + stats.eps)
            Z = (Y - mu) / s
            cache["s"] = s
            cache["Z"] = Z
            cache["batch_mode"] = mode == "batch"
        elif kind == "ln":
            eps = layer.norm.params.eps
            V = Y - Y.mean(axis=1, keepdims=True)
            s = np.sqrt((V * V).mean(axis=1, keepdims=True) + eps)
            Z = V / s
            cache["s"] = s
            cache["Z"] = Z
        elif kind == "gn":
            gcfg: GnCfg = layer.norm.params
            Z = np.empty_like(Y)
            gcache = []
            for g in gcfg.groups:
                idx = list(g)
                V = Y[:, idx] - Y[:, idx].mean(axis=1, keepdims=True)
                s = np.sqrt((V * V).mean(axis=1, keepdims=True) + gcfg.eps)
                Z[:, idx] = V / s
                gcache.append((idx, s))
            cache["gcache"] = gcache
            cache["Z"] = Z
        else:
            raise ConfigError(f"unknown normalizer kind {kind!r}")
        A = act_apply(layer.activation, Z)
        cache["pre_act"] = Z
        cache["post_act"] = A
        cache["Y"] = Y
        caches.append(cache)
        H = A
    return H, caches


def _centered_scale_backward(G: np.ndarray, Z: np.ndarray, s: np.ndarray, axis: int) -> np.ndarray:
    """Backward through z = (y - mean(y)) / sqrt(var(y) + eps) along ``axis``."""
    g_mean = G.mean(axis=axis, keepdims=True)
    gz_mean = (G * Z).mean(axis=axis, keepdims=True)
    return (G - g_mean - Z * gz_mean) / s


def backward(
    spec: NetworkSpec,
    batch,
    targets,
    loss: str = "l1",
    mode: str = "analysis",
) -> List[np.ndarray]:
    """Exact gradients of the mean batch loss in every weight matrix."""
    X = np.asarray(batch, dtype=np.float64)
    T = np.asarray(targets, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ShapeError("batch must be a nonempty (m, input_dim) array")
    if T.shape != (X.shape[0], spec.output_dim):
        raise ShapeError(
            f"targets must have shape ({X.shape[0]}, {spec.output_dim}), got {T.shape}"
        )
    P, caches = _forward_cached(spec, X, mode)
    G = _loss_grad_batch(loss, P, T) / X.shape[0]
    return _backward_from_caches(spec, caches, G)


def _backward_from_caches(
    spec: NetworkSpec,
    caches: List[dict],
    G_out: np.ndarray,
) -> List[np.ndarray]:
    grads: List[np.ndarray] = [np.empty(0)] * spec.depth
    G = G_out
    for l in range(spec.depth - 1, -1, -1):
        layer = spec.layers[l]
        cache = caches[l]
        G = G * act_deriv(layer.activation, cache["pre_act"])
        kind = cache["kind"]
        if kind == "none":
            Gy = G
        elif kind == "bn":
            if cache["batch_mode"]:
                Gy = _centered_scale_backward(G, cache["Z"], cache["s"], axis=0)
            else:
                Gy = G / cache["s"]
        elif kind == "ln":
            Gy = _centered_scale_backward(G, cache["Z"], cache["s"], axis=1)
        else:  # gn
            Gy = np.empty_like(G)
            Z = cache["Z"]
            for idx, s in cache["gcache"]:
                Gy[:, idx] = _centered_scale_backward(G[:, idx], Z[:, idx], s, axis=1)
        H_in = cache["H_in"]
        grads[l] = Gy.T @ H_in
        G = Gy @ layer.W
    return grads


@dataclass(eq=False)
class TrainTrace:
    """Per-step instrumentation of a training run."""

    steps: List[int] = field(default_factory=list)
    epochs: List[int] = field(default_factory=list)
    w_norms: List[np.ndarray] = field(default_factory=list)       # (K,)
    pw: List[float] = field(default_factory=list)
    var_mean: List[np.ndarray] = field(default_factory=list)      # (K,)
    var_max: List[np.ndarray] = field(default_factory=list)       # (K,)
    inv_sigma_product: List[float] = field(default_factory=list)
    train_acc: List[float] = field(default_factory=list)
    train_loss: List[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)


def _realized_reduction_factor(layer: LayerSpec, Y: np.ndarray) -> float:
    """Per-layer normalizer factor realized on the batch's statistics."""
    cfg = layer.norm
    if cfg.kind == "none":
        return 1.0
    if cfg.kind == "bn":
        var = Y.var(axis=0)
        return float((1.0 / np.sqrt(var + cfg.params.eps)).max())
    n = Y.shape[1]
    if cfg.kind == "ln":
        V = Y - Y.mean(axis=1, keepdims=True)
        smin = float(np.sqrt((V * V).mean(axis=1) + cfg.params.eps).min())
        return (1.0 - 1.0 / n) / smin
    gcfg: GnCfg = cfg.params
    worst = 0.0
    for g in gcfg.groups:
        idx = list(g)
        V = Y[:, idx] - Y[:, idx].mean(axis=1, keepdims=True)
        smin = float(np.sqrt((V * V).mean(axis=1) + gcfg.eps).min())
        worst = max(worst, (1.0 - 1.0 / len(g)) / smin)
    return worst


def he_init(widths: Sequence[int], seed: int) -> List[np.ndarray]:
    """Gaussian weights with variance 2 / fan_in, deterministic per seed."""
    widths = [int(n) for n in widths]
    if len(widths) < 2 or any(n < 1 for n in widths):
        raise ConfigError("widths must list at least (n_0, n_1), all positive")
    rng = np.random.default_rng(seed)
    return [
        rng.normal(0.0, np.sqrt(2.0 / widths[k]), size=(widths[k + 1], widths[k]))
        for k in range(len(widths) - 1)
    ]


def build_mlp(
    widths: Sequence[int],
    norm: str = "none",
    seed: int = 0,
    eps: float = DEFAULT_EPS,
    group_size: int = 2,
    normalize_output: bool = False,
) -> NetworkSpec:
    """He-initialized ReLU stack with the chosen normalizer on hidden layers.

    The final layer uses the identity activation and, unless
    ``normalize_output`` is set, no normalizer.
    """
    weights = he_init(widths, seed)
    layers = []
    for k, W in enumerate(weights):
        last = k == len(weights) - 1
        n = W.shape[0]
        if last and not normalize_output:
            cfg = NormalizerCfg.none()
        elif norm == "none":
            cfg = NormalizerCfg.none()
        elif norm == "bn":
            cfg = NormalizerCfg.bn(np.zeros(n), np.ones(n), eps=eps)
        elif norm == "ln":
            cfg = NormalizerCfg.ln(eps=eps)
        elif norm == "gn":
            if n % group_size:
                raise ConfigError(f"width {n} is not divisible by group size {group_size}")
            groups = tuple(
                tuple(range(i, i + group_size)) for i in range(0, n, group_size)
            )
            cfg = NormalizerCfg.gn(groups, eps=eps)
        else:
            raise ConfigError(f"unknown normalizer kind {norm!r}")
        layers.append(
            LayerSpec(
                W=W,
                norm=cfg,
                activation=Activation.IDENTITY if last else Activation.RELU,
            )
        )
    return validate_network(NetworkSpec(input_dim=int(widths[0]), layers=layers))


def _clone_spec(spec: NetworkSpec) -> NetworkSpec:
    layers = [
        LayerSpec(
            W=l.W.copy(),
            norm=l.norm,
            activation=l.activation,
            s_bound=l.s_bound,
        )
        for l in spec.layers
    ]
    return NetworkSpec(input_dim=spec.input_dim, layers=layers)


def train(
    spec: NetworkSpec,
    X,
    Y,
    cfg: TrainConfig,
) -> Tuple[NetworkSpec, TrainTrace]:
    """Mini-batch training with per-step instrumentation.

    ``Y`` holds vector targets (one-hot class rows for the l1 loss).  Batch
    normalization always runs in batch mode during training; running
    statistics (momentum 0.1) are accumulated and frozen into the returned
    spec.  Deterministic for a fixed seed, including the shuffling.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ShapeError("training data must be a nonempty (m, d) array")
    if Y.shape != (X.shape[0], spec.output_dim):
        raise ShapeError(
            f"targets must have shape ({X.shape[0]}, {spec.output_dim}), got {Y.shape}"
        )
    work = _clone_spec(validate_network(spec))
    rng = np.random.default_rng(cfg.seed)
    running: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
    for l, layer in enumerate(work.layers):
        if layer.norm.kind == "bn":
            running[l] = (layer.norm.params.mu.copy(), layer.norm.params.sigma2.copy())
    adam_m = [np.zeros_like(l.W) for l in work.layers]
    adam_v = [np.zeros_like(l.W) for l in work.layers]
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    t_adam = 0
    trace = TrainTrace()
    step = 0
    m = X.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(m)
        for start in range(0, m, cfg.batch_size):
            sel = order[start : start + cfg.batch_size]
            Xb, Tb = X[sel], Y[sel]
            P, caches = _forward_cached(work, Xb, mode="batch")
            losses = _loss_batch(cfg.loss, P, Tb)
            batch_loss = float(losses.mean())
            if not np.isfinite(batch_loss):
                raise RuntimeError(
                    f"non-finite loss at step {step} (epoch {epoch}); aborting"
                )
            acc = float((P.argmax(axis=1) == Tb.argmax(axis=1)).mean())

            w_norms = np.array([inf_norm(l.W) for l in work.layers])
            variances = [c["Y"].var(axis=0) for c in caches]
            factors = [
                _realized_reduction_factor(l, c["Y"])
                for l, c in zip(work.layers, caches)
            ]
            trace.steps.append(step)
            trace.epochs.append(epoch)
            trace.w_norms.append(w_norms)
            trace.pw.append(float(np.prod(w_norms)))
            trace.var_mean.append(np.array([v.mean() for v in variances]))
            trace.var_max.append(np.array([v.max() for v in variances]))
            trace.inv_sigma_product.append(float(np.prod(factors)))
            trace.train_acc.append(acc)
            trace.train_loss.append(batch_loss)

            G = _loss_grad_batch(cfg.loss, P, Tb) / Xb.shape[0]
            grads = _backward_from_caches(work, caches, G)
            if cfg.weight_decay:
                grads = [g + cfg.weight_decay * l.W for g, l in zip(grads, work.layers)]
            if cfg.optimizer == "sgd":
                for l, g in zip(work.layers, grads):
                    l.W -= cfg.learning_rate * g
            else:
                t_adam += 1
                for k, (l, g) in enumerate(zip(work.layers, grads)):
                    adam_m[k] = beta1 * adam_m[k] + (1 - beta1) * g
                    adam_v[k] = beta2 * adam_v[k] + (1 - beta2) * g * g
                    m_hat = adam_m[k] / (1 - beta1**t_adam)
                    v_hat = adam_v[k] / (1 - beta2**t_adam)
                    l.W -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + adam_eps)
            for l_idx, cache in enumerate(caches):
                if cache["kind"] == "bn":
                    mu_b, var_b = cache["batch_stats"]
                    r_mu, r_var = running[l_idx]
                    running[l_idx] = (
                        (1 - BN_MOMENTUM) * r_mu + BN_MOMENTUM * mu_b,
                        (1 - BN_MOMENTUM) * r_var + BN_MOMENTUM * var_b,
                    )
            step += 1
    for l_idx, (r_mu, r_var) in running.items():
        eps = work.layers[l_idx].norm.params.eps
        work.layers[l_idx].norm = NormalizerCfg.bn(r_mu, r_var, eps=eps)
    return work, trace


def one_hot(labels, classes: int) -> np.ndarray:
    """Row-wise one-hot encoding of integer class labels."""
    lab = np.asarray(labels, dtype=np.int64)
    if lab.ndim != 1:
        raise ShapeError("labels must be a 1-d integer array")
    if lab.min() < 0 or lab.max() >= classes:
        raise ValueError(f"labels must lie in 0..{classes - 1}")
    out = np.zeros((lab.size, classes))
    out[np.arange(lab.size), lab] = 1.0
    return out
