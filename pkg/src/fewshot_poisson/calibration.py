"""Query feature calibration: shift queries so their mean matches the support pool."""

from __future__ import annotations

import numpy as np

from .data import EpisodeData, Role, l2_normalize
from .errors import DataError


def cross_class_bias(episode: EpisodeData) -> np.ndarray:
    """Mean of the support pool (support + extra unlabeled) minus mean of the queries."""
    pool = ~episode.mask(Role.QUERY)
    query = episode.mask(Role.QUERY)
    if not query.any():
        raise DataError("cross-class bias needs at least one query point")
    if not pool.any():
        raise DataError("cross-class bias needs at least one support-pool point")
    return episode.features[pool].mean(axis=0) - episode.features[query].mean(axis=0)


def calibrate_queries(episode: EpisodeData, delta: np.ndarray, renormalize: bool = False) -> EpisodeData:
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != (episode.d,):
        raise DataError(f"bias has shape {delta.shape}, episode dimension is {episode.d}")
    query = episode.mask(Role.QUERY)
    feats = np.array(episode.features)
    feats[query] += delta
    if renormalize:
        norms = np.linalg.norm(feats[query], axis=1, keepdims=True)
        if np.any(norms == 0):
            raise DataError("calibrated query collapsed to the zero vector")
        feats[query] /= norms
    return episode.with_features(feats)


def calibrate(episode: EpisodeData, renormalize: bool = False) -> EpisodeData:
    return calibrate_queries(episode, cross_class_bias(episode), renormalize=renormalize)


def preprocess(episode: EpisodeData, normalize: bool = True, with_calibration: bool = True,
               renormalize: bool = False) -> EpisodeData:
    """Feature pipeline ahead of graph construction: L2-normalize, then calibrate queries."""
    if normalize:
        episode = l2_normalize(episode)
    if with_calibration:
        episode = calibrate(episode, renormalize=renormalize)
    return episode
