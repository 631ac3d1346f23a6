"""Seeded synthetic datasets for the training and bound experiments."""

from __future__ import annotations

from typing import Tuple

import numpy as np

from .errors import ConfigError


def gaussian_blobs(
    n: int,
    classes: int = 3,
    dim: int = 2,
    seed: int = 0,
    spread: float = 6.0,
    std: float = 1.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """Balanced isotropic Gaussian blobs around equally spaced centers.

    Centers sit on a circle of radius ``spread`` in the first two dimensions
    (zero elsewhere).  Returns ``(X, labels)`` with labels in ``0..classes-1``.
    """
    if not 2 <= classes <= 4:
        raise ConfigError(f"classes must be within 2..4, got {classes}")
    if dim not in (2, 3):
        raise ConfigError(f"dim must be 2 or 3, got {dim}")
    if n < classes:
        raise ConfigError("need at least one sample per class")
    rng = np.random.default_rng(seed)
    angles = 2.0 * np.pi * np.arange(classes) / classes
    centers = np.zeros((classes, dim))
    centers[:, 0] = spread * np.cos(angles)
    centers[:, 1] = spread * np.sin(angles)
    labels = rng.permutation(np.arange(n) % classes)
    X = centers[labels] + rng.normal(0.0, std, size=(n, dim))
    return X, labels


def annulus(
    n: int,
    seed: int = 0,
    r_inner: float = 2.0,
    r_outer: float = 5.0,
    noise: float = 0.3,
) -> Tuple[np.ndarray, np.ndarray]:
    """Two classes in the plane: an inner disk and a surrounding ring."""
    if not 0 < r_inner < r_outer:
        raise ConfigError("need 0 < r_inner < r_outer")
    if n < 2:
        raise ConfigError("need at least two samples")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % 2)
    radii = np.where(
        labels == 0,
        r_inner * np.sqrt(rng.random(n)),
        rng.uniform(r_inner + noise, r_outer, n),
    )
    theta = rng.uniform(0.0, 2.0 * np.pi, n)
    X = np.column_stack([radii * np.cos(theta), radii * np.sin(theta)])
    X += rng.normal(0.0, noise, size=X.shape)
    return X, labels
