"""Analytic capacity bounds and derived optimization-cost quantities.

All bounds compose two ingredients per layer: the induced infinity norm of
the weight matrix and the normalizer's Lipschitz factor.  The input bound is
their product over all layers; weight-direction bounds take the tail product
above the perturbed layer times the empirical activation sup below it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import ConfigError, ShapeError
from .linalg import inf_norm
from .network import NetworkSpec, layer_outputs_batch
from .normalizers import norm_lipschitz


def layer_norm_factors(spec: NetworkSpec) -> np.ndarray:
    """Per-layer normalizer Lipschitz factors (1.0 for unnormalized layers)."""
    factors = np.empty(spec.depth)
    for i, layer in enumerate(spec.layers, start=1):
        try:
            factors[i - 1] = norm_lipschitz(layer.norm, layer.out_dim)
        except ConfigError as exc:
            raise ConfigError(f"layer {i}: {exc}") from None
    return factors


def input_lipschitz_upper(spec: NetworkSpec) -> float:
    """Product over layers of weight norm times normalizer factor."""
    factors = layer_norm_factors(spec)
    bound = 1.0
    for layer, f in zip(spec.layers, factors):
        bound *= inf_norm(layer.W) * f
    return float(bound)


def estimate_activation_sup(spec: NetworkSpec, data) -> np.ndarray:
    """Empirical sup of each layer output's max norm over ``data``.

    Returns ``A_0..A_K`` where ``A_0`` covers the inputs themselves.  These
    are maxima over the supplied sample, not analytic suprema.
    """
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ShapeError("data must be a nonempty (m, input_dim) array")
    sups = np.empty(spec.depth + 1)
    sups[0] = np.abs(X).max()
    for i, rec in enumerate(layer_outputs_batch(spec, X), start=1):
        sups[i] = np.abs(rec["post_activation"]).max()
    return sups


def weight_lipschitz_upper(spec: NetworkSpec, i: int, A) -> Tuple[float, float]:
    """Bounds on the network's sensitivity to layer ``i`` (1-based).

    Returns ``(w_bound, y_bound)``: ``y_bound`` bounds the Lipschitz constant
    with respect to the layer's total input; ``w_bound = A[i-1] * y_bound``
    bounds it with respect to the weight matrix itself (induced infinity
    metric on weight perturbations).
    """
    K = spec.depth
    if not 1 <= i <= K:
        raise ValueError(f"layer index must be in 1..{K}, got {i}")
    A = np.asarray(A, dtype=np.float64)
    if A.size != K + 1:
        raise ShapeError(f"A must have {K + 1} entries (A_0..A_K), got {A.size}")
    factors = layer_norm_factors(spec)
    if i == K:
        y_bound = float(factors[K - 1])
    else:
        tail = 1.0
        for k in range(i, K):  # layers i+1..K in 1-based terms
            tail *= inf_norm(spec.layers[k].W)
        y_bound = tail * float(np.prod(factors[i - 1 :]))
    return float(A[i - 1]) * y_bound, y_bound


def loss_weight_lipschitz_upper(spec: NetworkSpec, i: int, A) -> float:
    """Sensitivity bound of the l1 training loss to layer ``i``.

    The l1 loss is 1-Lipschitz in the prediction, so this equals the
    ``w_bound`` of :func:`weight_lipschitz_upper`.
    """
    w_bound, _ = weight_lipschitz_upper(spec, i, A)
    return w_bound


@dataclass(eq=False)
class ReductionFactors:
    """Cumulative normalizer reduction: per-layer factors and two aggregate forms."""

    per_layer: np.ndarray
    tight: float               # product of the per-layer factors
    coarse: float              # sigma_floor ** -(number of normalized layers)
    sigma_floor: Optional[float]
    normalized_layers: int


def _layer_sigma_floor(layer) -> Optional[float]:
    """Smallest recorded sqrt(var + eps) for a normalized layer, if any."""
    cfg = layer.norm
    if cfg.kind == "bn":
        stats = cfg.params
        return float(np.sqrt(stats.sigma2 + stats.eps).min())
    if cfg.kind in ("ln", "gn"):
        if cfg.sigma_min is None:
            return float(np.sqrt(cfg.params.eps))
        return float(np.atleast_1d(np.asarray(cfg.sigma_min, dtype=np.float64)).min())
    return None


def reduction_factors(spec: NetworkSpec) -> ReductionFactors:
    """Tight (per-layer product) and coarse (min-sigma power) reduction forms.

    The coarse form uses the smallest recorded ``sqrt(var + eps)`` across all
    normalized layers, raised to minus the number of normalized layers; it
    always dominates the tight product.
    """
    per_layer = layer_norm_factors(spec)
    floors = [f for f in (_layer_sigma_floor(l) for l in spec.layers) if f is not None]
    n_norm = len(floors)
    sigma_floor = min(floors) if floors else None
    coarse = sigma_floor ** (-n_norm) if sigma_floor is not None else 1.0
    return ReductionFactors(
        per_layer=per_layer,
        tight=float(np.prod(per_layer)),
        coarse=float(coarse),
        sigma_floor=sigma_floor,
        normalized_layers=n_norm,
    )


@dataclass(eq=False)
class LayerOptCost:
    """Order constants for reaching an alpha-stationary point in layer i.

    These are the constants inside the asymptotic statements, reported
    verbatim; they are not absolute iteration counts.
    """

    layer: int
    iteration_lower: float        # prod_{k>i} s_k / alpha
    evals_unnormalized: float     # prod_{k>i} s_k / alpha^2
    evals_normalized: Optional[float]  # sigma^(-K+i-1) * prod_{k>i} s_k / alpha^2


def optimization_report(spec: NetworkSpec, alpha: float) -> List[LayerOptCost]:
    """Per-layer optimization-cost constants from the declared norm bounds."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    K = spec.depth
    s = []
    for i, layer in enumerate(spec.layers, start=1):
        if layer.s_bound is None:
            raise ConfigError(f"layer {i}: optimization constants need s_bound")
        s.append(float(layer.s_bound))
    red = reduction_factors(spec)
    out = []
    for i in range(1, K):
        tail = float(np.prod(s[i:]))  # s_{i+1} .. s_K
        evals_norm = None
        if red.sigma_floor is not None:
            evals_norm = red.sigma_floor ** (-K + i - 1) * tail / alpha**2
        out.append(
            LayerOptCost(
                layer=i,
                iteration_lower=tail / alpha,
                evals_unnormalized=tail / alpha**2,
                evals_normalized=evals_norm,
            )
        )
    return out


@dataclass(eq=False)
class CapacityReport:
    """Everything the `analyze` command reports about one network."""

    w_norms: np.ndarray                  # (K,)
    norm_factors: np.ndarray             # (K,)
    pw: float
    input_upper: float
    reduction: ReductionFactors
    a_sup: Optional[np.ndarray]          # (K+1,), data-dependent
    y_bounds: Optional[np.ndarray]       # (K,)
    w_bounds: Optional[np.ndarray]       # (K,)
    loss_w_bounds: Optional[np.ndarray]  # (K,)
    optimization: Optional[List[LayerOptCost]]
    alpha: Optional[float]


def capacity_report(
    spec: NetworkSpec,
    data=None,
    alpha: Optional[float] = None,
) -> CapacityReport:
    """Assemble the full capacity report.

    ``data`` enables the activation sups and the weight/loss sensitivity
    bounds; ``alpha`` (with declared s_bounds) enables the optimization-cost
    constants.
    """
    w_norms = np.array([inf_norm(l.W) for l in spec.layers])
    factors = layer_norm_factors(spec)
    pw = float(np.prod(w_norms))
    a_sup = y_bounds = w_bounds = loss_w_bounds = None
    if data is not None:
        a_sup = estimate_activation_sup(spec, data)
        y_bounds = np.empty(spec.depth)
        w_bounds = np.empty(spec.depth)
        for i in range(1, spec.depth + 1):
            w_bounds[i - 1], y_bounds[i - 1] = weight_lipschitz_upper(spec, i, a_sup)
        loss_w_bounds = w_bounds.copy()
    opt = optimization_report(spec, alpha) if alpha is not None else None
    return CapacityReport(
        w_norms=w_norms,
        norm_factors=factors,
        pw=pw,
        input_upper=input_lipschitz_upper(spec),
        reduction=reduction_factors(spec),
        a_sup=a_sup,
        y_bounds=y_bounds,
        w_bounds=w_bounds,
        loss_w_bounds=loss_w_bounds,
        optimization=opt,
        alpha=alpha,
    )
