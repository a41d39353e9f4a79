"""Poisson-MBO: Poisson propagation followed by volume-constrained MBO refinement.

Each outer iteration alternates M2 explicit gradient steps on the quadratic
energy ``E1(G) = tr(G^T L G) - mu * sum(A^T * G)`` with a thresholding step
that snaps every row to the nearest simplex vertex after reweighting the
classes by ``r``. ``r`` is fitted so the class fractions approach the prior.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibration import preprocess
from .config import SolverConfig
from .data import EpisodeData, Role, require_valid
from .errors import DataError, NumericalError
from .graph import SparseGraph, build_graph
from .poisson import SourceMatrix, build_source, mixing_time, poisson_iterate

log = logging.getLogger(__name__)


def uniform_prior(num_classes: int) -> np.ndarray:
    return np.full(num_classes, 1.0 / num_classes)


def check_prior(prior, num_classes: int) -> np.ndarray:
    o = np.asarray(prior, dtype=np.float64).reshape(-1)
    if o.shape != (num_classes,):
        raise DataError(f"prior has {o.size} entries, expected {num_classes}")
    if not np.all(np.isfinite(o)) or np.any(o <= 0):
        raise DataError("prior entries must be finite and > 0")
    if abs(o.sum() - 1.0) > 1e-9:
        raise DataError(f"prior must sum to 1, got {o.sum():.12g}")
    return o


def simplex_project(scores) -> np.ndarray:
    """Closest simplex vertex ``e_j`` to a score vector; ties go to the lowest index."""
    s = np.asarray(scores, dtype=np.float64)
    out = np.zeros_like(s)
    out[np.argmax(s)] = 1.0
    return out


def project_rows(G: np.ndarray) -> np.ndarray:
    """Row-wise :func:`simplex_project`."""
    out = np.zeros_like(G)
    out[np.arange(G.shape[0]), np.argmax(G, axis=1)] = 1.0
    return out


def predict_labels(G_query: np.ndarray) -> np.ndarray:
    G_query = np.atleast_2d(np.asarray(G_query))
    if G_query.shape[0] < 1:
        raise DataError("no query rows to predict")
    return np.argmax(G_query, axis=1)


def mbo_gradient_steps(graph: SparseGraph, source, G: np.ndarray, mu: float,
                       dmx: float, m2: int) -> np.ndarray:
    A = source.entries if isinstance(source, SourceMatrix) else np.asarray(source)
    if m2 < 1:
        raise DataError(f"m2 must be >= 1, got {m2}")
    L = graph.laplacian
    fidelity = mu * A
    G = np.array(G, dtype=np.float64)
    for _ in range(m2):
        G = G - dmx * (L @ G - fidelity)
    if not np.all(np.isfinite(G)):
        raise NumericalError("MBO gradient steps produced non-finite values")
    return G


@dataclass(frozen=True, eq=False)
class VolumeState:
    r: np.ndarray
    o_hat: np.ndarray


def assignment_fractions(G: np.ndarray, r: np.ndarray) -> np.ndarray:
    labels = np.argmax(G * r, axis=1)
    return np.bincount(labels, minlength=G.shape[1]) / G.shape[0]


def volume_constraint_fit(G: np.ndarray, prior, phi: float, clip_lo: float,
                          clip_hi: float, m3: int) -> VolumeState:
    """Fit class weights ``r`` so the thresholded fractions of ``G diag(r)`` track ``prior``.

    ``r`` starts at ones; each of the ``m3`` steps computes the fractions
    ``o_hat`` (over all vertices) and sets ``r <- clip(r + phi (prior - o_hat))``.
    """
    if m3 < 1:
        raise DataError(f"m3 must be >= 1, got {m3}")
    if not clip_lo < clip_hi:
        raise DataError(f"clip_lo ({clip_lo}) must be < clip_hi ({clip_hi})")
    o = np.asarray(prior, dtype=np.float64)
    r = np.ones(G.shape[1])
    for _ in range(m3):
        o_hat = assignment_fractions(G, r)
        r = np.clip(r + phi * (o - o_hat), clip_lo, clip_hi)
    return VolumeState(r, assignment_fractions(G, r))


def mbo_energy(graph: SparseGraph, source, G: np.ndarray, mu: float) -> float:
    A = source.entries if isinstance(source, SourceMatrix) else np.asarray(source)
    return graph.energy(G) - mu * float(np.sum(A * G))


@dataclass
class MBOTrace:
    """Per-outer-iteration record of ``o_hat``, ``r`` and the energy E1."""

    rows: list[dict] = field(default_factory=list)

    def write_csv(self, path: str | Path) -> None:
        if not self.rows:
            Path(path).write_text("")
            return
        with Path(path).open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(self.rows[0]))
            writer.writeheader()
            writer.writerows(self.rows)


@dataclass(frozen=True, eq=False)
class PoissonMBOResult:
    scores: np.ndarray          # all m rows, one-hot after the final projection
    query_scores: np.ndarray    # last V rows
    predictions: np.ndarray
    graph: SparseGraph
    poisson_steps: int
    trace: MBOTrace


def mbo_refine(graph: SparseGraph, source, G: np.ndarray, prior, config: SolverConfig,
               trace: MBOTrace | None = None) -> np.ndarray:
    """MBO loop on a Poisson initialization ``G``; returns the one-hot ``m x C`` result."""
    A = source.entries if isinstance(source, SourceMatrix) else np.asarray(source)
    dmx = 1.0 / np.max(graph.degrees)
    G = config.mu * G
    for it in range(config.m1):
        G = mbo_gradient_steps(graph, A, G, config.mu, dmx, config.m2)
        state = volume_constraint_fit(G, prior, config.phi, config.clip_lo, config.clip_hi, config.m3)
        G = project_rows(G * state.r)
        if trace is not None:
            row = {"iteration": it + 1, "energy": mbo_energy(graph, A, G, config.mu)}
            row.update({f"r{c}": float(v) for c, v in enumerate(state.r)})
            row.update({f"o_hat{c}": float(v) for c, v in enumerate(state.o_hat)})
            trace.rows.append(row)
    return G


def effective_k(config: SolverConfig, m: int) -> int:
    if config.knn_k < m:
        return config.knn_k
    log.warning("knn_k=%d >= m=%d; using k=%d", config.knn_k, m, m - 1)
    return m - 1


def poisson_mbo_detailed(episode: EpisodeData, config: SolverConfig | None = None,
                         prior=None, calibrate: bool = True) -> PoissonMBOResult:
    config = config or SolverConfig()
    require_valid(episode)
    o = uniform_prior(episode.num_classes) if prior is None else check_prior(prior, episode.num_classes)
    feats = preprocess(episode, normalize=config.normalize, with_calibration=calibrate,
                       renormalize=config.renormalize_queries)
    graph = build_graph(feats.features, effective_k(config, episode.m))
    source = build_source(episode)
    tp = mixing_time(graph, episode.n_support, config.tp_max)
    log.info("m=%d C=%d: %d Poisson steps, %d graph component(s)", episode.m, episode.num_classes,
             tp, graph.n_components)
    G = poisson_iterate(graph, source, tp)
    trace = MBOTrace()
    G = mbo_refine(graph, source, G, o, config, trace)
    query = G[episode.mask(Role.QUERY)]
    return PoissonMBOResult(G, query, predict_labels(query), graph, tp, trace)


def poisson_mbo(episode: EpisodeData, config: SolverConfig | None = None, prior=None,
                calibrate: bool = True) -> np.ndarray:
    """Query-row label matrix (V x C, one-hot rows) from the full pipeline."""
    return poisson_mbo_detailed(episode, config, prior, calibrate).query_scores
