"""Witness networks that attain the capacity bounds exactly.

The constructions use scaled truncation/zero-padding matrices as weights, so
on the relevant inputs the whole network collapses to an explicit linear map
whose Lipschitz constant and gradients are known in closed form:

* input witness: ``forward(x) = (prod a_k) * relu(chain_truncate_pad(x, ...))``,
  so the input Lipschitz constant is exactly ``prod a_k``;
* weight witness: layers above a pivot layer ``i`` are scaled truncations,
  making the sensitivity to the layer-``i`` weights exactly
  ``(prod_{k>i} a_k) * max_norm(truncated h_{i-1}(x))``;
* gradient witness: a scalar head ``g(c * sum(h_K))`` on top of the weight
  witness, whose per-row loss gradient has the closed form evaluated by
  :func:`analytic_gradient`; rows beyond the minimum upper width have
  exactly zero gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, ShapeError
from .linalg import chain_truncate_pad, max_norm
from .network import (
    Activation,
    LayerSpec,
    NetworkSpec,
    act_apply,
    forward,
    validate_network,
)


@dataclass(frozen=True)
class WitnessCfg:
    """Shared configuration for the witness constructions.

    ``widths`` is the full chain ``(n_0, ..., n_K)``; ``a[k]`` scales layer
    ``k+1``.  ``pivot`` (1-based, ``1 <= pivot < K``) selects the layer whose
    weights the weight/gradient witnesses leave free; entries of ``a`` at and
    below the pivot are ignored by those constructions.  ``c`` and
    ``outer_activation`` only apply to the gradient witness.
    """

    widths: Tuple[int, ...]
    a: Tuple[float, ...]
    pivot: Optional[int] = None
    c: float = 1.0
    outer_activation: Activation = Activation.IDENTITY

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(n) for n in self.widths))
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        object.__setattr__(self, "outer_activation", Activation(self.outer_activation))
        if len(self.widths) < 2:
            raise ConfigError("widths must contain at least (n_0, n_1)")
        if any(n < 1 for n in self.widths):
            raise ConfigError("every width must be >= 1")
        if len(self.a) != len(self.widths) - 1:
            raise ConfigError(
                f"need one scale per layer: {len(self.widths) - 1} layers "
                f"but {len(self.a)} scales"
            )
        if any(v < 0 for v in self.a):
            raise ConfigError("scales must be nonnegative")
        if self.pivot is not None and not 1 <= self.pivot < self.depth:
            raise ConfigError(
                f"pivot must satisfy 1 <= pivot < {self.depth}, got {self.pivot}"
            )

    @property
    def depth(self) -> int:
        return len(self.widths) - 1


def make_trunc_pad_matrix(n_out: int, n_in: int) -> np.ndarray:
    """The matrix with the identity of size min(n_out, n_in) in its top-left.

    Satisfies ``M @ v == truncate_pad(v, n_out)`` for every v of length n_in.
    """
    n_out, n_in = int(n_out), int(n_in)
    if n_out < 1 or n_in < 1:
        raise ValueError("dimensions must be >= 1")
    m = np.zeros((n_out, n_in))
    k = min(n_out, n_in)
    m[:k, :k] = np.eye(k)
    return m


def build_input_witness(cfg: WitnessCfg) -> Tuple[NetworkSpec, float]:
    """ReLU network with weights ``a_k * trunc_pad`` whose input Lipschitz
    constant equals ``prod a_k`` exactly."""
    layers = []
    for k in range(cfg.depth):
        W = cfg.a[k] * make_trunc_pad_matrix(cfg.widths[k + 1], cfg.widths[k])
        layers.append(
            LayerSpec(W=W, activation=Activation.RELU, s_bound=cfg.a[k] or None)
        )
    spec = validate_network(NetworkSpec(input_dim=cfg.widths[0], layers=layers))
    return spec, float(np.prod(cfg.a))


def _upper_layers(cfg: WitnessCfg) -> List[LayerSpec]:
    """Layers pivot+1 .. K of the weight/gradient witnesses."""
    i = cfg.pivot
    layers = []
    for k in range(i, cfg.depth):
        W = cfg.a[k] * make_trunc_pad_matrix(cfg.widths[k + 1], cfg.widths[k])
        layers.append(
            LayerSpec(W=W, activation=Activation.RELU, s_bound=cfg.a[k] or None)
        )
    return layers


def _check_lower_layers(cfg: WitnessCfg, lower_layers: Sequence[LayerSpec]) -> List[LayerSpec]:
    if cfg.pivot is None:
        raise ConfigError("this construction needs cfg.pivot")
    if len(lower_layers) != cfg.pivot:
        raise ConfigError(
            f"need {cfg.pivot} caller-supplied layers (1..pivot), got {len(lower_layers)}"
        )
    for k, layer in enumerate(lower_layers, start=1):
        if layer.activation != Activation.RELU or layer.norm.kind != "none":
            raise ConfigError(
                f"layer {k}: witness layers must be plain ReLU without normalizers"
            )
    return list(lower_layers)


def build_weight_witness(
    cfg: WitnessCfg,
    lower_layers: Sequence[LayerSpec],
) -> Tuple[NetworkSpec, float, Callable[[np.ndarray], float]]:
    """Network whose sensitivity to the pivot layer's weights is known exactly.

    Layers above the pivot get weights ``a_k * trunc_pad``; layers up to and
    including the pivot are caller-supplied.  Returns the spec, the exact
    Lipschitz constant with respect to the pivot layer's total input
    (``prod_{k>pivot} a_k``), and a function mapping an input ``x`` to the
    exact Lipschitz constant with respect to the pivot weights at that input.
    """
    lower = _check_lower_layers(cfg, lower_layers)
    spec = validate_network(
        NetworkSpec(input_dim=cfg.widths[0], layers=lower + _upper_layers(cfg))
    )
    i = cfg.pivot
    exact_y = float(np.prod(cfg.a[i:]))
    chain = list(cfg.widths[i + 1 :])

    def exact_w_fn(x) -> float:
        h_prev = _hidden_output(spec, x, i - 1)
        return exact_y * max_norm(chain_truncate_pad(h_prev, chain))

    return spec, exact_y, exact_w_fn


def _hidden_output(spec: NetworkSpec, x, upto: int) -> np.ndarray:
    """Output of layer ``upto`` (0 = the input itself)."""
    h = np.asarray(x, dtype=np.float64)
    for layer in spec.layers[:upto]:
        h = act_apply(layer.activation, layer.W @ h)
    return h


@dataclass(frozen=True)
class ScalarLoss:
    """Differentiable scalar loss with its derivative in the prediction."""

    name: str
    value: Callable[[float, float], float]
    deriv: Callable[[float, float], float]


#: Loss that is simply the prediction (targets ignored).
IDENTITY_LOSS = ScalarLoss("identity", lambda p, t: p, lambda p, t: 1.0)

#: Squared error (p - t)^2.
SQUARED_LOSS = ScalarLoss("squared", lambda p, t: (p - t) ** 2, lambda p, t: 2.0 * (p - t))


@dataclass(eq=False)
class GradientWitness:
    """Scalar-output model ``g(c * 1^T h_K(x))`` built on a weight witness."""

    inner: NetworkSpec
    cfg: WitnessCfg

    @property
    def pivot(self) -> int:
        return self.cfg.pivot

    @property
    def gradient_rows(self) -> int:
        """Rows of the pivot weight matrix that can carry nonzero gradient."""
        return min(self.cfg.widths[self.pivot + 1 :])

    def head(self, x) -> float:
        """The scalar pre-activation ``u(x) = c * sum(h_K(x))``."""
        return float(self.cfg.c * forward(self.inner, x).sum())

    def predict(self, x) -> float:
        u = np.array([self.head(x)])
        return float(act_apply(self.cfg.outer_activation, u)[0])

    def loss(self, X, targets, loss: ScalarLoss) -> float:
        X = np.asarray(X, dtype=np.float64)
        targets = np.asarray(targets, dtype=np.float64)
        return float(
            np.mean([loss.value(self.predict(x), t) for x, t in zip(X, targets)])
        )


def build_gradient_witness(
    cfg: WitnessCfg,
    lower_layers: Sequence[LayerSpec],
) -> GradientWitness:
    """Attach the scalar head to a weight witness.

    The outer activation must be differentiable, so ReLU is rejected.
    """
    if cfg.outer_activation == Activation.RELU:
        raise ConfigError("the outer activation must be differentiable; relu is not")
    lower = _check_lower_layers(cfg, lower_layers)
    inner = validate_network(
        NetworkSpec(input_dim=cfg.widths[0], layers=lower + _upper_layers(cfg))
    )
    return GradientWitness(inner=inner, cfg=cfg)


def act_deriv_scalar(kind: Activation, u: float) -> float:
    from .network import act_deriv

    return float(act_deriv(kind, np.array([u]))[0])


def analytic_gradient(
    witness: GradientWitness,
    X,
    targets,
    loss: ScalarLoss,
    t: int,
) -> np.ndarray:
    """Closed-form gradient of the mean loss in row ``t`` of the pivot weights.

    Row indices are 1-based to match the layer convention; rows beyond
    ``witness.gradient_rows`` return the zero vector.
    """
    cfg = witness.cfg
    i = witness.pivot
    X = np.asarray(X, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ShapeError("X must be a nonempty (m, n_0) array")
    if targets.size != X.shape[0]:
        raise ShapeError("need one target per sample")
    n_rows = cfg.widths[i]
    if not 1 <= t <= n_rows:
        raise ValueError(f"row index must be in 1..{n_rows}, got {t}")
    grad = np.zeros(cfg.widths[i - 1])
    if t > witness.gradient_rows:
        return grad
    a_prod = float(np.prod(cfg.a[i:]))
    W_i = witness.inner.layers[i - 1].W
    m = X.shape[0]
    for x, tgt in zip(X, targets):
        h_prev = _hidden_output(witness.inner, x, i - 1)
        u = witness.head(x)
        dfg = loss.deriv(
            float(act_apply(cfg.outer_activation, np.array([u]))[0]), float(tgt)
        ) * act_deriv_scalar(cfg.outer_activation, u)
        indicator = 1.0 if float(W_i[t - 1] @ h_prev) >= 0.0 else 0.0
        grad += dfg * indicator * h_prev
    return cfg.c * a_prod / m * grad
