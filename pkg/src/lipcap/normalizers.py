"""Batch, layer, and group normalization without affine parameters.

Each operator is the pure centering-and-rescaling map ``(x - mean) / sqrt(var
+ eps)``; the three kinds differ only in where the statistics come from.
Besides the forward maps, this module provides analytic Jacobians and the
per-operator max-norm Lipschitz factors consumed by the capacity bounds:

* batch norm uses recorded per-unit statistics, so its factor
  ``max_k 1 / sqrt(sigma_k^2 + eps)`` is exact;
* layer norm and group norm compute statistics from the input itself, so
  their factors ``(1 - 1/n) / sigma`` depend on a recorded minimum standard
  deviation ``sigma_min`` (data-dependent) or fall back to the global
  ``sqrt(eps)`` floor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .errors import ConfigError, ShapeError
from .linalg import as_vector, require_finite

DEFAULT_EPS = 1e-5

# Central finite differences with this relative step keep truncation and
# rounding balanced at float64; used by the Jacobian self-checks and tests.
FD_STEP_SCALE = 1e-5


@dataclass(frozen=True, eq=False)
class BnStats:
    """Recorded per-unit mean/variance statistics for batch normalization."""

    mu: np.ndarray
    sigma2: np.ndarray
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        object.__setattr__(self, "mu", as_vector(self.mu))
        object.__setattr__(self, "sigma2", as_vector(self.sigma2))
        if self.mu.shape != self.sigma2.shape:
            raise ShapeError(
                f"mu and sigma2 must have equal length, got {self.mu.size} and {self.sigma2.size}"
            )
        if (self.sigma2 < 0).any():
            raise ConfigError("variances must be nonnegative")
        if not self.eps > 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")

    @property
    def width(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class LnCfg:
    """Layer normalization configuration (statistics come from the input)."""

    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")


@dataclass(frozen=True)
class GnCfg:
    """Group normalization: disjoint index groups, each normalized like LN.

    Group indices are 0-based.  Every group must have at least two members,
    otherwise the within-group variance is identically zero.
    """

    groups: Tuple[Tuple[int, ...], ...]
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        groups = tuple(tuple(int(i) for i in g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        if not groups:
            raise ConfigError("group normalization needs at least one group")
        seen: set[int] = set()
        for k, g in enumerate(groups):
            if len(g) < 2:
                raise ConfigError(f"group {k} has size {len(g)}; every group needs size >= 2")
            if len(set(g)) != len(g) or seen & set(g):
                raise ConfigError(f"group {k} overlaps another group or repeats an index")
            seen |= set(g)
        if not self.eps > 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")

    def check_cover(self, n: int) -> None:
        """Require the groups to partition ``{0, ..., n-1}`` exactly."""
        covered = sorted(i for g in self.groups for i in g)
        if covered != list(range(n)):
            raise ConfigError(
                f"groups must cover indices 0..{n - 1} exactly, got {covered}"
            )


@dataclass(frozen=True, eq=False)
class NormalizerCfg:
    """Tagged union over the normalizer kinds, plus the bound statistics.

    ``sigma_min`` is the recorded minimum of ``sqrt(var(x) + eps)`` over a
    data sample: a scalar for LN, a scalar or per-group vector for GN.  It is
    only used by :func:`norm_lipschitz`; the forward maps never touch it.
    """

    kind: str = "none"  # none | bn | ln | gn
    params: Union[BnStats, LnCfg, GnCfg, None] = None
    sigma_min: Union[float, np.ndarray, None] = None

    def __post_init__(self):
        expected = {"none": type(None), "bn": BnStats, "ln": LnCfg, "gn": GnCfg}
        if self.kind not in expected:
            raise ConfigError(f"unknown normalizer kind {self.kind!r}")
        if not isinstance(self.params, expected[self.kind]):
            raise ConfigError(
                f"normalizer kind {self.kind!r} requires params of type "
                f"{expected[self.kind].__name__}"
            )
        if self.sigma_min is not None:
            sm = np.atleast_1d(np.asarray(self.sigma_min, dtype=np.float64))
            if (sm <= 0).any():
                raise ConfigError("sigma_min entries must be positive")

    @classmethod
    def none(cls) -> "NormalizerCfg":
        return cls(kind="none")

    @classmethod
    def bn(cls, mu, sigma2, eps: float = DEFAULT_EPS) -> "NormalizerCfg":
        return cls(kind="bn", params=BnStats(mu=mu, sigma2=sigma2, eps=eps))

    @classmethod
    def ln(cls, eps: float = DEFAULT_EPS, sigma_min=None) -> "NormalizerCfg":
        return cls(kind="ln", params=LnCfg(eps=eps), sigma_min=sigma_min)

    @classmethod
    def gn(cls, groups, eps: float = DEFAULT_EPS, sigma_min=None) -> "NormalizerCfg":
        return cls(kind="gn", params=GnCfg(groups=tuple(groups), eps=eps), sigma_min=sigma_min)

    @property
    def eps(self) -> Optional[float]:
        return None if self.params is None else self.params.eps


def bn_apply(x, s: BnStats) -> np.ndarray:
    """Normalize each entry by its recorded statistics: (x - mu) / sqrt(var + eps)."""
    arr = as_vector(x)
    if arr.size != s.width:
        raise ShapeError(f"input has {arr.size} entries but stats cover {s.width}")
    return (arr - s.mu) / np.sqrt(s.sigma2 + s.eps)


def bn_jacobian_diag(s: BnStats) -> np.ndarray:
    """Diagonal of the (constant, diagonal) batch-norm Jacobian."""
    return 1.0 / np.sqrt(s.sigma2 + s.eps)


def _center_scale(arr: np.ndarray, eps: float) -> Tuple[np.ndarray, float]:
    v = arr - arr.mean()
    s = float(np.sqrt((v * v).mean() + eps))
    return v, s


def ln_apply(x, c: LnCfg) -> np.ndarray:
    """Center ``x`` and rescale by the population standard deviation."""
    arr = as_vector(x)
    if arr.size < 2:
        raise ValueError("layer normalization needs at least 2 entries")
    v, s = _center_scale(arr, c.eps)
    return v / s


def ln_jacobian(x, c: LnCfg) -> np.ndarray:
    """Exact Jacobian of :func:`ln_apply` at ``x``.

    With ``z`` the normalized output and ``s = sqrt(var + eps)``:
    ``J[i, k] = (delta_ik - 1/n - z_i z_k / n) / s``.
    """
    arr = as_vector(x)
    if arr.size < 2:
        raise ValueError("layer normalization needs at least 2 entries")
    n = arr.size
    v, s = _center_scale(arr, c.eps)
    z = v / s
    return (np.eye(n) - 1.0 / n - np.outer(z, z) / n) / s


def gn_apply(x, c: GnCfg) -> np.ndarray:
    """Normalize each index group of ``x`` independently."""
    arr = as_vector(x)
    c.check_cover(arr.size)
    out = np.empty_like(arr)
    for g in c.groups:
        idx = list(g)
        v, s = _center_scale(arr[idx], c.eps)
        out[idx] = v / s
    return out


def gn_jacobian(x, c: GnCfg) -> np.ndarray:
    """Block-diagonal Jacobian of :func:`gn_apply` (one LN block per group)."""
    arr = as_vector(x)
    c.check_cover(arr.size)
    n = arr.size
    jac = np.zeros((n, n))
    for g in c.groups:
        idx = np.array(g)
        jac[np.ix_(idx, idx)] = ln_jacobian(arr[idx], LnCfg(eps=c.eps))
    return jac


def _sigma_min_entries(cfg: NormalizerCfg, count: int) -> np.ndarray:
    """Resolve sigma_min to ``count`` entries, falling back to sqrt(eps)."""
    if cfg.sigma_min is None:
        return np.full(count, float(np.sqrt(cfg.params.eps)))
    sm = np.atleast_1d(np.asarray(cfg.sigma_min, dtype=np.float64))
    if sm.size == 1:
        return np.full(count, float(sm[0]))
    if sm.size != count:
        raise ConfigError(
            f"sigma_min has {sm.size} entries but {count} are required"
        )
    return sm


def norm_lipschitz(cfg: NormalizerCfg, n: int) -> float:
    """Max-norm Lipschitz factor of the normalizer on a width-``n`` layer.

    * none: 1.
    * bn:   exact, ``max_k 1/sqrt(sigma_k^2 + eps)``.
    * ln:   ``(1 - 1/n) / sigma_min`` (``sigma_min`` already includes eps);
            without a recorded sigma_min the global ``sqrt(eps)`` floor is used.
    * gn:   groupwise maximum of ``(1 - 1/|S|) / sigma_S``.
    """
    n = int(n)
    if n < 1:
        raise ConfigError(f"layer width must be positive, got {n}")
    if cfg.kind == "none":
        return 1.0
    if cfg.kind == "bn":
        stats: BnStats = cfg.params
        if stats.width != n:
            raise ConfigError(
                f"batch-norm stats cover {stats.width} units but the layer has {n}"
            )
        return float(bn_jacobian_diag(stats).max())
    if cfg.kind == "ln":
        if n < 2:
            raise ConfigError("layer normalization needs width >= 2")
        sigma = float(_sigma_min_entries(cfg, 1)[0])
        return (1.0 - 1.0 / n) / sigma
    if cfg.kind == "gn":
        gcfg: GnCfg = cfg.params
        gcfg.check_cover(n)
        sigmas = _sigma_min_entries(cfg, len(gcfg.groups))
        factors = [(1.0 - 1.0 / len(g)) / s for g, s in zip(gcfg.groups, sigmas)]
        return float(max(factors))
    raise ConfigError(f"unknown normalizer kind {cfg.kind!r}")


def realized_sigma(cfg: NormalizerCfg, x) -> np.ndarray:
    """``sqrt(var + eps)`` realized by LN/GN at input ``x`` (one value per group).

    Useful for recording data-dependent ``sigma_min`` statistics.
    """
    arr = require_finite(as_vector(x), "input")
    if cfg.kind == "ln":
        _, s = _center_scale(arr, cfg.params.eps)
        return np.array([s])
    if cfg.kind == "gn":
        gcfg: GnCfg = cfg.params
        gcfg.check_cover(arr.size)
        return np.array([_center_scale(arr[list(g)], gcfg.eps)[1] for g in gcfg.groups])
    raise ConfigError("realized_sigma applies to ln/gn normalizers only")
