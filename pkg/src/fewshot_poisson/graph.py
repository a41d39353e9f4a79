"""kNN Gaussian-weight graph and its unnormalized Laplacian."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.sparse as sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from .errors import ConfigError, DataError

log = logging.getLogger(__name__)


class Neighbors(NamedTuple):
    """``index[i]`` are the k nearest vertices of i (nearest first), ``dist`` their distances."""

    index: np.ndarray
    dist: np.ndarray
    d_k: np.ndarray


def knn_neighbors(features: np.ndarray, k: int) -> Neighbors:
    """Exact k-nearest neighbours by brute force.

    Ties in distance go to the lower vertex index. A vertex is never its own
    neighbour, even when duplicated points sit at distance zero.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"features must be 2-D, got shape {X.shape}")
    m = X.shape[0]
    if not 1 <= k < m:
        raise ConfigError(f"knn k must satisfy 1 <= k < m (k={k}, m={m})")
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite feature passed to knn_neighbors")
    dist = cdist(X, X, metric="euclidean")
    np.fill_diagonal(dist, np.inf)
    index = np.argsort(dist, axis=1, kind="stable")[:, :k]
    nd = np.take_along_axis(dist, index, axis=1)
    return Neighbors(index, nd, nd[:, -1].copy())


def gaussian_weights(neighbors: Neighbors) -> sparse.csr_matrix:
    """Directed weights ``w_ij = exp(-4 |z_i - z_j|^2 / d_K(z_i)^2)`` on kNN edges.

    When the k-th neighbour sits at distance zero (duplicated points) the
    bandwidth falls back to the smallest nonzero neighbour distance.
    """
    index, dist, d_k = neighbors
    m, k = index.shape
    bandwidth = np.array(d_k, dtype=np.float64)
    for i in np.where(~(bandwidth > 0))[0]:
        nonzero = dist[i][dist[i] > 0]
        if nonzero.size == 0:
            raise DataError(f"degenerate neighborhood at vertex {i}: all {k} neighbors coincide with it")
        bandwidth[i] = nonzero.min()
    w = np.exp(-4.0 * dist**2 / bandwidth[:, None] ** 2)
    rows = np.repeat(np.arange(m), k)
    W = sparse.csr_matrix((w.ravel(), (rows, index.ravel())), shape=(m, m))
    W.eliminate_zeros()
    return W


@dataclass(frozen=True, eq=False)
class SparseGraph:
    """Symmetric weight matrix with its degrees and Laplacian ``L = D - W``."""

    weights: sparse.csr_matrix
    degrees: np.ndarray
    laplacian: sparse.csr_matrix
    n_components: int = 1

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    def energy(self, g: np.ndarray) -> float:
        """Graph-cut energy ``trace(g^T L g)``."""
        g = np.asarray(g, dtype=np.float64)
        return float(np.sum(g * (self.laplacian @ g)))

    def dump_edges(self, path: str | Path) -> None:
        """Write the upper triangle as ``i j w_ij`` lines."""
        upper = sparse.triu(self.weights, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        with Path(path).open("w") as fh:
            for i, j, w in zip(upper.row[order], upper.col[order], upper.data[order]):
                fh.write(f"{int(i)} {int(j)} {float(w)!r}\n")


def assemble_graph(directed: sparse.spmatrix | np.ndarray) -> SparseGraph:
    """Symmetrize by averaging, ``W = (W_dir + W_dir^T) / 2``, and derive D and L."""
    Wd = sparse.csr_matrix(directed, dtype=np.float64)
    if Wd.shape[0] != Wd.shape[1]:
        raise DataError(f"weight matrix must be square, got {Wd.shape}")
    if Wd.nnz and Wd.data.min() < 0:
        raise DataError("negative edge weight")
    if np.any(Wd.diagonal() != 0):
        raise DataError("self-loop weights must be zero")
    W = ((Wd + Wd.T) * 0.5).tocsr()
    W.eliminate_zeros()
    W.sort_indices()
    degrees = np.asarray(W.sum(axis=1)).ravel()
    isolated = np.where(~(degrees > 0))[0]
    if isolated.size:
        raise DataError(f"isolated vertex {isolated[0]} ({isolated.size} total) after graph assembly")
    n_comp, _ = connected_components(W, directed=False)
    if n_comp > 1:
        log.warning("graph has %d connected components; mass constraint applied globally", n_comp)
    L = (sparse.diags(degrees) - W).tocsr()
    return SparseGraph(W, degrees, L, n_comp)


def build_graph(features: np.ndarray, k: int) -> SparseGraph:
    return assemble_graph(gaussian_weights(knn_neighbors(features, k)))


def load_edges(path: str | Path, m: int) -> SparseGraph:
    """Inverse of :meth:`SparseGraph.dump_edges`."""
    rows, cols, vals = [], [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            i, j, w = line.split()
            rows.append(int(i))
            cols.append(int(j))
            vals.append(float(w))
        except ValueError:
            raise DataError(f"{path}:{lineno}: expected 'i j w'") from None
    upper = sparse.csr_matrix((vals, (rows, cols)), shape=(m, m))
    # each undirected edge listed once; assemble_graph halves (U + U^T)
    return assemble_graph(upper + upper.T)
