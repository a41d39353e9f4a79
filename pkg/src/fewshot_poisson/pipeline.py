"""One entry point per inference method."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .baselines import label_propagation, onehot_rows
from .calibration import preprocess
from .config import SolverConfig
from .data import EpisodeData, Role, require_valid
from .errors import ConfigError
from .graph import SparseGraph, build_graph
from .mbo import MBOTrace, effective_k, poisson_mbo_detailed, predict_labels


class Method(str, Enum):
    PTN = "ptn"            # calibrated Poisson-MBO on (externally fine-tuned) features
    DPN = "dpn"            # calibrated Poisson-MBO on pre-trained features
    POISSON = "poisson"    # Poisson-MBO without query calibration
    LP = "lp"

    @classmethod
    def parse(cls, value: "str | Method") -> "Method":
        if isinstance(value, Method):
            return value
        aliases = {"ptn-infer": "ptn", "poissonmbo-raw": "poisson", "poissonmbo": "poisson"}
        key = str(value).strip().lower()
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ConfigError(f"unknown method {value!r}; choose from ptn, dpn, poisson, lp") from None


@dataclass(frozen=True, eq=False)
class Inference:
    method: Method
    query_ids: tuple[str, ...]
    query_scores: np.ndarray
    predictions: np.ndarray
    graph: SparseGraph
    trace: MBOTrace | None = None
    poisson_steps: int | None = None


def infer(episode: EpisodeData, method: "str | Method" = Method.DPN,
          config: SolverConfig | None = None, prior=None,
          calibrate: bool | None = None) -> Inference:
    """Predict query labels. ``calibrate`` overrides the method's default when given."""
    method = Method.parse(method)
    config = config or SolverConfig()
    if method is Method.LP:
        require_valid(episode)
        feats = preprocess(episode, normalize=config.normalize, with_calibration=bool(calibrate),
                           renormalize=config.renormalize_queries)
        graph = build_graph(feats.features, effective_k(config, episode.m))
        support = np.where(episode.mask(Role.SUPPORT))[0]
        Y = onehot_rows(episode.m, support, episode.labels[support], episode.num_classes)
        F = label_propagation(graph, Y, config.lp_alpha, config.lp_max_iter, config.lp_tol)
        query = F[episode.mask(Role.QUERY)]
        return Inference(method, episode.query_ids, query, predict_labels(query), graph)

    if calibrate is None:
        calibrate = method is not Method.POISSON
    res = poisson_mbo_detailed(episode, config, prior, calibrate=calibrate)
    return Inference(method, episode.query_ids, res.query_scores, res.predictions,
                     res.graph, res.trace, res.poisson_steps)
