"""Graph Poisson learning: source term, mixing-time step count, fixed-point iteration.

The iteration ``G <- G + D^-1 (A^T - L G)`` is a Jacobi sweep for
``L G = A^T``. Because ``1^T L = 0`` it preserves the degree-weighted column
sums of ``G``, so starting from zero it converges (on a connected, non-bipartite
graph) to the solution satisfying ``sum_i d_i G_ic = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np
import scipy.linalg
import scipy.sparse as sparse

from .data import EpisodeData, Role
from .errors import DataError, NumericalError
from .graph import SparseGraph

DENSE_ORACLE_MAX_M = 500


@dataclass(frozen=True, eq=False)
class SourceMatrix:
    """Point sources ``y_s - ybar`` on labeled rows, zero elsewhere (m x C)."""

    entries: np.ndarray
    ybar: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


def source_from_labels(m: int, labeled_index, labels, num_classes: int) -> SourceMatrix:
    labeled_index = np.asarray(labeled_index, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if labeled_index.size == 0:
        return SourceMatrix(np.zeros((m, num_classes)), np.zeros(num_classes))
    if labels.min() < 0 or labels.max() >= num_classes:
        raise DataError(f"labels must lie in [0, {num_classes})")
    onehot = np.eye(num_classes)[labels]
    ybar = onehot.mean(axis=0)
    entries = np.zeros((m, num_classes))
    entries[labeled_index] = onehot - ybar
    return SourceMatrix(entries, ybar)


def build_source(episode: EpisodeData) -> SourceMatrix:
    support = np.where(episode.mask(Role.SUPPORT))[0]
    return source_from_labels(episode.m, support, episode.labels[support], episode.num_classes)


def _as_array(source) -> np.ndarray:
    return source.entries if isinstance(source, SourceMatrix) else np.asarray(source, dtype=np.float64)


def mixing_time(graph: SparseGraph, labeled_count: int, tp_max: int = 100) -> int:
    """Number of Poisson steps: first tp >= 1 where the walk from the labeled set mixes.

    ``sp_0`` has ones on the first ``labeled_count`` vertices; ``sp_t = W D^-1 sp_{t-1}``
    until ``max|sp_t - W1 / 1^T W 1| <= 1/m``, capped at ``tp_max``.
    """
    m = graph.m
    if not 1 <= labeled_count <= m:
        raise DataError(f"labeled_count must lie in [1, {m}], got {labeled_count}")
    target = graph.degrees / graph.degrees.sum()
    walk = (graph.weights @ sparse.diags(1.0 / graph.degrees)).tocsr()
    sp = np.zeros(m)
    sp[:labeled_count] = 1.0
    for tp in range(1, tp_max + 1):
        sp = walk @ sp
        if np.max(np.abs(sp - target)) <= 1.0 / m:
            return tp
    return tp_max


def iter_poisson(graph: SparseGraph, source) -> Iterator[np.ndarray]:
    """Yield ``G`` after each update, starting from ``G = 0``."""
    A = _as_array(source)
    if A.shape[0] != graph.m:
        raise DataError(f"source has {A.shape[0]} rows, graph has {graph.m} vertices")
    inv_deg = 1.0 / graph.degrees[:, None]
    G = np.zeros_like(A)
    while True:
        G = G + inv_deg * (A - graph.laplacian @ G)
        yield G


def poisson_iterate(graph: SparseGraph, source, steps: int) -> np.ndarray:
    if steps < 1:
        raise DataError(f"steps must be >= 1, got {steps}")
    for step, G in enumerate(iter_poisson(graph, source), start=1):
        if step == steps:
            break
    if not np.all(np.isfinite(G)):
        raise NumericalError("Poisson iteration produced non-finite values")
    return G


def poisson_converge(graph: SparseGraph, source, tol: float = 1e-10,
                     max_steps: int = 200_000) -> tuple[np.ndarray, int]:
    """Run the iteration until ``|L G - A^T|_inf <= tol``.

    On bipartite graphs the iterates oscillate with period two, so the
    convergence test (and the returned estimate) uses the mean of two
    consecutive iterates, which is the Cesaro limit of the same sequence.
    Returns ``(G, steps)``.
    """
    A = _as_array(source)
    prev = np.zeros_like(A)
    for step, G in enumerate(iter_poisson(graph, A), start=1):
        mid = 0.5 * (prev + G)
        if np.max(np.abs(graph.laplacian @ mid - A), initial=0.0) <= tol:
            return mid, step
        if not np.all(np.isfinite(G)):
            raise NumericalError(f"Poisson iteration diverged at step {step}")
        if step >= max_steps:
            raise NumericalError(f"Poisson iteration did not reach tol={tol} in {max_steps} steps")
        prev = G
    raise AssertionError("unreachable")


def poisson_solve_dense(graph: SparseGraph, source, max_m: int = DENSE_ORACLE_MAX_M) -> np.ndarray:
    """Direct solve of ``L G = A^T`` with ``sum_i d_i G_ic = 0``, via a bordered system."""
    A = _as_array(source)
    m = graph.m
    if m > max_m:
        raise DataError(f"dense oracle limited to m <= {max_m}, got m={m}")
    if graph.n_components != 1:
        raise DataError("dense oracle refuses disconnected graphs (constraint is ambiguous per component)")
    if np.max(np.abs(A.sum(axis=0)), initial=0.0) > 1e-9 * max(1.0, np.abs(A).max(initial=0.0)):
        raise DataError("source columns must sum to zero")
    d = graph.degrees
    M = np.zeros((m + 1, m + 1))
    M[:m, :m] = graph.laplacian.toarray()
    M[:m, m] = d
    M[m, :m] = d
    rhs = np.zeros((m + 1, A.shape[1]))
    rhs[:m] = A
    sol = scipy.linalg.solve(M, rhs)
    G = sol[:m]
    residual = np.max(np.abs(graph.laplacian @ G - A), initial=0.0)
    if residual > 1e-9:
        raise NumericalError(f"dense Poisson solve residual {residual:.3e} exceeds 1e-9")
    return G


def degree_weighted_sums(graph: SparseGraph, G: np.ndarray) -> np.ndarray:
    return graph.degrees @ np.asarray(G)
