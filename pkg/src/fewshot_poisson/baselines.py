"""Label propagation (Laplace-learning style) baseline.

Iterates ``F <- alpha S F + (1 - alpha) Y`` with ``S = D^-1/2 W D^-1/2``.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sparse

from .errors import ConfigError, DataError, NumericalError
from .graph import SparseGraph


def label_propagation(graph: SparseGraph, Y: np.ndarray, alpha: float = 0.99,
                      iters: int = 1000, tol: float = 1e-6,
                      history: list[float] | None = None) -> np.ndarray:
    """Propagate the one-hot rows of ``Y`` (zero rows for unlabeled vertices).

    Stops once the fixed-point residual ``|F - (alpha S F + (1-alpha) Y)|_inf``
    drops to ``tol`` or after ``iters`` updates. Residuals are appended to
    ``history`` when given.
    """
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    if iters < 1:
        raise ConfigError(f"iters must be >= 1, got {iters}")
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape[0] != graph.m:
        raise DataError(f"label matrix has {Y.shape[0]} rows, graph has {graph.m} vertices")
    if np.any(graph.degrees <= 0):
        raise DataError("label propagation needs every vertex to have positive degree")
    s = 1.0 / np.sqrt(graph.degrees)
    S = (sparse.diags(s) @ graph.weights @ sparse.diags(s)).tocsr()
    base = (1.0 - alpha) * Y
    F = Y.copy()
    for _ in range(iters):
        F_next = alpha * (S @ F) + base
        residual = float(np.max(np.abs(F_next - F), initial=0.0))
        if history is not None:
            history.append(residual)
        F = F_next
        if residual <= tol:
            break
    if not np.all(np.isfinite(F)):
        raise NumericalError("label propagation produced non-finite values")
    return F


def onehot_rows(m: int, labeled_index, labels, num_classes: int) -> np.ndarray:
    Y = np.zeros((m, num_classes))
    Y[np.asarray(labeled_index, dtype=np.int64), np.asarray(labels, dtype=np.int64)] = 1.0
    return Y
