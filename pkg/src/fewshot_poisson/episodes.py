"""Few-shot episode sampling and the accuracy benchmark harness."""

from __future__ import annotations

import functools
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from .config import SolverConfig
from .data import EpisodeData, FeaturePool, Role, UNLABELED
from .errors import ConfigError, DataError, FewShotError
from .pipeline import Method, infer

log = logging.getLogger(__name__)


class NMode(str, Enum):
    PER_CLASS = "per-class"
    TOTAL = "total"


@dataclass(frozen=True)
class EpisodeSpec:
    """``ways`` (C), ``shots`` (K), ``queries`` per class (V), ``unlabeled`` (N)."""

    ways: int = 5
    shots: int = 1
    queries: int = 15
    unlabeled: int = 0
    n_mode: NMode = NMode.PER_CLASS
    distractor: bool = False
    num_episodes: int = 600
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_mode", NMode(self.n_mode))
        if self.ways < 2:
            raise ConfigError(f"ways must be >= 2, got {self.ways}")
        if self.shots < 1:
            raise ConfigError(f"shots must be >= 1, got {self.shots}")
        if self.queries < 1:
            raise ConfigError(f"queries must be >= 1, got {self.queries}")
        if self.unlabeled < 0:
            raise ConfigError(f"unlabeled must be >= 0, got {self.unlabeled}")
        if self.num_episodes < 1:
            raise ConfigError(f"num_episodes must be >= 1, got {self.num_episodes}")

    @property
    def total_unlabeled(self) -> int:
        return self.unlabeled * self.ways if self.n_mode is NMode.PER_CLASS else self.unlabeled

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["n_mode"] = self.n_mode.value
        return out


def episode_rng(seed: int, episode_index: int) -> np.random.Generator:
    """Counter-based stream keyed on (seed, episode index)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, episode_index])))


def sample_episode(pool: FeaturePool, spec: EpisodeSpec, episode_index: int) -> EpisodeData:
    """Draw one episode; the query ground truth rides along in ``query_truth``.

    Support, query and unlabeled draws are disjoint. In distractor mode the
    unlabeled points come only from classes outside the chosen ``ways``.
    """
    rng = episode_rng(spec.seed, episode_index)
    classes = pool.classes
    C, K, V = spec.ways, spec.shots, spec.queries
    if classes.size < C:
        raise DataError(f"capacity error: pool has {classes.size} classes, episode needs {C}")
    if spec.distractor and spec.total_unlabeled > 0 and classes.size <= C:
        raise DataError(f"capacity error: distractor mode needs classes beyond the {C} chosen, "
                        f"pool has only {classes.size}")
    chosen = rng.choice(classes, size=C, replace=False)
    per_class_u = spec.unlabeled if (spec.n_mode is NMode.PER_CLASS and not spec.distractor) else 0

    support, query, query_truth, leftovers, unlabeled = [], [], [], [], []
    for pos, cls in enumerate(chosen):
        members = rng.permutation(np.where(pool.labels == cls)[0])
        need = K + V + per_class_u
        if members.size < need:
            raise DataError(f"capacity error: class {cls} has {members.size} points, episode needs {need}")
        support.extend(members[:K])
        query.extend(members[K:K + V])
        query_truth.extend([pos] * V)
        unlabeled.extend(members[K + V:K + V + per_class_u])
        leftovers.extend(members[K + V + per_class_u:])

    if spec.distractor:
        source = np.where(~np.isin(pool.labels, chosen))[0]
        take = spec.total_unlabeled
    elif spec.n_mode is NMode.TOTAL:
        source = np.sort(np.asarray(leftovers, dtype=np.int64))
        take = spec.unlabeled
    else:
        source, take = np.empty(0, dtype=np.int64), 0
    if take:
        if source.size < take:
            where = "distractor classes" if spec.distractor else f"classes {sorted(chosen.tolist())}"
            raise DataError(f"capacity error: {where} have {source.size} spare points, episode needs {take}")
        unlabeled.extend(rng.choice(source, size=take, replace=False))

    unlabeled = rng.permutation(np.asarray(unlabeled, dtype=np.int64))
    qorder = rng.permutation(len(query))
    query = np.asarray(query, dtype=np.int64)[qorder]
    query_truth = np.asarray(query_truth, dtype=np.int64)[qorder]
    support = np.asarray(support, dtype=np.int64)

    rows = np.concatenate([support, unlabeled, query])
    roles = [Role.SUPPORT] * support.size + [Role.UNLABELED] * unlabeled.size + [Role.QUERY] * query.size
    labels = np.full(rows.size, UNLABELED)
    labels[:support.size] = np.repeat(np.arange(C), K)
    return EpisodeData(tuple(pool.ids[i] for i in rows), tuple(roles), labels,
                       pool.features[rows], C, K, query_truth)


@dataclass
class BenchReport:
    """Accuracy summary. ``per_episode`` holds fractions in [0, 1]; the mean and
    CI are percentages (``mean_accuracy == 100 * mean(per_episode)``)."""

    mean_accuracy: float
    ci95: float
    per_episode: list[float]
    config: dict[str, Any] = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def num_episodes(self) -> int:
        return len(self.per_episode)

    def summary(self) -> str:
        return f"{self.mean_accuracy:.2f} +- {self.ci95:.2f}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "mean_accuracy": self.mean_accuracy,
            "ci95": self.ci95,
            "num_episodes": self.num_episodes,
            "per_episode": self.per_episode,
            "config": self.config,
            "wall_time": self.wall_time,
        }


def summarize(per_episode) -> tuple[float, float]:
    """``(mean %, 1.96 * sample std / sqrt(n) %)``; a single episode gets CI 0."""
    acc = np.asarray(per_episode, dtype=np.float64)
    n = acc.size
    std = float(np.std(acc, ddof=1)) if n > 1 else 0.0
    return 100.0 * float(np.mean(acc)), 100.0 * 1.96 * std / math.sqrt(n)


def run_episode(pool: FeaturePool, spec: EpisodeSpec, method: Method, config: SolverConfig,
                prior, query_offset, episode_index: int) -> float:
    try:
        episode = sample_episode(pool, spec, episode_index)
        if query_offset is not None:
            feats = np.array(episode.features)
            feats[episode.mask(Role.QUERY)] += query_offset
            episode = episode.with_features(feats)
        result = infer(episode, method, config, prior)
    except FewShotError as exc:
        raise type(exc)(f"episode {episode_index}: {exc}") from exc
    return float(np.mean(result.predictions == episode.query_truth))


def run_benchmark(pool: FeaturePool, spec: EpisodeSpec, method: "str | Method" = Method.DPN,
                  config: SolverConfig | None = None, prior=None, jobs: int = 1,
                  query_offset=None) -> BenchReport:
    """Run ``spec.num_episodes`` episodes and aggregate their query accuracy.

    ``query_offset`` (optional, length d) is added to every query feature
    after sampling, to simulate a support/query distribution shift.
    Results are stored by episode index, so ``jobs`` never changes the output.
    """
    method = Method.parse(method)
    config = config or SolverConfig()
    if query_offset is not None:
        query_offset = np.asarray(query_offset, dtype=np.float64)
    log.info("running %d episodes of %d-way %d-shot with %s (jobs=%d)", spec.num_episodes,
             spec.ways, spec.shots, method.value, jobs)
    task = functools.partial(run_episode, pool, spec, method, config, prior, query_offset)
    indices = range(spec.num_episodes)
    start = time.perf_counter()
    if jobs > 1 and spec.num_episodes > 1:
        chunk = max(1, spec.num_episodes // (4 * jobs))
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            per_episode = list(ex.map(task, indices, chunksize=chunk))
    else:
        per_episode = [task(i) for i in indices]
    wall = time.perf_counter() - start
    mean, ci = summarize(per_episode)
    echo = {"spec": spec.to_dict(), "method": method.value, "solver": config.to_dict()}
    if query_offset is not None:
        echo["query_offset"] = query_offset.tolist()
    return BenchReport(mean, ci, per_episode, echo, wall)
