"""Synthetic labeled pools for desk-scale benchmarks."""

from __future__ import annotations

import numpy as np

from .data import FeaturePool


def blob_centers(num_classes: int, dim: int, separation: float = 1.0, offset: float = 0.0) -> np.ndarray:
    """Class ``c`` sits at ``separation * e_c``, all shifted by ``offset`` along the all-ones diagonal.

    Pairwise center distance is ``separation * sqrt(2)``.
    """
    if dim < num_classes:
        raise ValueError(f"dim ({dim}) must be >= num_classes ({num_classes})")
    centers = np.zeros((num_classes, dim))
    centers[np.arange(num_classes), np.arange(num_classes)] = separation
    return centers + offset / np.sqrt(dim)


def gaussian_blobs(num_classes: int, per_class: int, dim: int, sigma: float,
                   separation: float = 1.0, offset: float = 0.0, seed: int = 0) -> FeaturePool:
    """Isotropic Gaussian classes around :func:`blob_centers`."""
    rng = np.random.default_rng(seed)
    centers = blob_centers(num_classes, dim, separation, offset)
    labels = np.repeat(np.arange(num_classes), per_class)
    feats = centers[labels] + sigma * rng.standard_normal((labels.size, dim))
    ids = tuple(f"c{c}_{i}" for c in range(num_classes) for i in range(per_class))
    return FeaturePool(ids, labels, feats)


def nearest_center_accuracy(pool: FeaturePool, centers: np.ndarray) -> float:
    """Accuracy of the nearest-true-center rule (Bayes-optimal for equal isotropic blobs)."""
    d2 = ((pool.features[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return float(np.mean(np.argmin(d2, axis=1) == pool.labels))
