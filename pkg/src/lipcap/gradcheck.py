"""Finite-difference verification of the reverse-mode weight gradients.

The oracle below touches only the forward pass, so it stays independent of
the backward implementation it checks.  Random instances are resampled until
every ReLU input and every l1 residual clears a kink margin; at a kink the
two sides disagree and no subgradient convention can match a centered
difference.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .network import Activation, LayerSpec, NetworkSpec, forward_batch, layer_outputs_batch, validate_network
from .normalizers import NormalizerCfg
from .trainer import _loss_batch, backward

FD_STEP = 1e-6
KINK_MARGIN = 1e-4
# Centered differences of a float64 loss carry rounding noise of roughly
# |loss| * 1e-16 / (2 * FD_STEP) ~ 1e-10.  A 1e-5 relative comparison is
# therefore only meaningful when the gradient clears this floor; instances
# whose gradients all vanish (saturated normalizer groups) are resampled.
GRAD_SCALE_FLOOR = 1e-3

NORM_MODES = ("none", "bn-batch", "bn-frozen", "ln", "gn")


def _batch_loss(spec: NetworkSpec, X, T, loss: str, mode: str) -> float:
    P = forward_batch(spec, X, mode=mode)
    return float(_loss_batch(loss, P, T).mean())


def fd_weight_gradients(
    spec: NetworkSpec,
    X,
    T,
    loss: str = "l1",
    mode: str = "analysis",
    h: float = FD_STEP,
) -> List[np.ndarray]:
    """Centered finite differences of the mean batch loss in every weight."""
    grads = []
    for layer in spec.layers:
        g = np.empty_like(layer.W)
        it = np.nditer(layer.W, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = layer.W[idx]
            layer.W[idx] = orig + h
            up = _batch_loss(spec, X, T, loss, mode)
            layer.W[idx] = orig - h
            down = _batch_loss(spec, X, T, loss, mode)
            layer.W[idx] = orig
            g[idx] = (up - down) / (2.0 * h)
            it.iternext()
        grads.append(g)
    return grads


def relative_gradient_error(analytic: Sequence[np.ndarray], numeric: Sequence[np.ndarray]) -> float:
    diff = max(np.abs(a - n).max() for a, n in zip(analytic, numeric))
    scale = max(
        1e-8,
        max(np.abs(a).max() for a in analytic),
        max(np.abs(n).max() for n in numeric),
    )
    return float(diff / scale)


def _clear_of_kinks(spec: NetworkSpec, X, T, loss: str, mode: str) -> bool:
    records = layer_outputs_batch(spec, X, mode=mode)
    for layer, rec in zip(spec.layers, records):
        if layer.activation == Activation.RELU:
            if np.abs(rec["post_norm"]).min() < KINK_MARGIN:
                return False
    if loss == "l1":
        P = records[-1]["post_activation"]
        if np.abs(P - T).min() < KINK_MARGIN:
            return False
    return True


def _random_instance(
    rng: np.random.Generator,
    norm_mode: str,
) -> Tuple[NetworkSpec, np.ndarray, np.ndarray, str]:
    depth = int(rng.integers(1, 4))
    widths = [int(rng.integers(2, 7)) for _ in range(depth + 1)]
    batch = int(rng.integers(3, 7))
    mode = "batch" if norm_mode == "bn-batch" else "analysis"
    layers = []
    for k in range(depth):
        n = widths[k + 1]
        W = rng.normal(0.0, 0.8, size=(n, widths[k]))
        if norm_mode in ("bn-batch", "bn-frozen"):
            cfg = NormalizerCfg.bn(
                rng.normal(0.0, 0.3, n), rng.uniform(0.5, 2.0, n), eps=1e-3
            )
        elif norm_mode == "ln" and n >= 2:
            cfg = NormalizerCfg.ln(eps=1e-3)
        elif norm_mode == "gn" and n >= 2:
            half = n // 2
            groups: Tuple[Tuple[int, ...], ...]
            if half >= 1 and n - half >= 2 and half >= 2:
                groups = (tuple(range(half)), tuple(range(half, n)))
            else:
                groups = (tuple(range(n)),)
            cfg = NormalizerCfg.gn(groups, eps=1e-3)
        else:
            cfg = NormalizerCfg.none()
        act = Activation.RELU if k < depth - 1 or rng.random() < 0.5 else (
            Activation.TANH if rng.random() < 0.5 else Activation.IDENTITY
        )
        layers.append(LayerSpec(W=W, norm=cfg, activation=act))
    spec = validate_network(NetworkSpec(input_dim=widths[0], layers=layers))
    X = rng.normal(0.0, 1.5, size=(batch, widths[0]))
    T = rng.normal(0.0, 1.0, size=(batch, widths[-1]))
    loss = "l1" if rng.random() < 0.5 else "mse"
    return spec, X, T, loss


@dataclass(eq=False)
class GradCheckResult:
    norm_mode: str
    loss: str
    rel_error: float
    passed: bool


def gradient_check_battery(
    n_checks: int,
    seed: int = 0,
    tol: float = 1e-5,
    norm_modes: Sequence[str] = NORM_MODES,
) -> List[GradCheckResult]:
    """Run ``n_checks`` randomized analytic-vs-numeric gradient comparisons."""
    rng = np.random.default_rng(seed)
    results = []
    for c in range(n_checks):
        norm_mode = norm_modes[c % len(norm_modes)]
        mode = "batch" if norm_mode == "bn-batch" else "analysis"
        for _ in range(100):
            spec, X, T, loss = _random_instance(rng, norm_mode)
            if not _clear_of_kinks(spec, X, T, loss, mode):
                continue
            analytic = backward(spec, X, T, loss=loss, mode=mode)
            if max(np.abs(g).max() for g in analytic) >= GRAD_SCALE_FLOOR:
                break
        else:
            raise RuntimeError("could not sample a kink-free, resolvable instance")
        numeric = fd_weight_gradients(spec, X, T, loss=loss, mode=mode)
        err = relative_gradient_error(analytic, numeric)
        results.append(
            GradCheckResult(
                norm_mode=norm_mode, loss=loss, rel_error=err, passed=err <= tol
            )
        )
    return results
