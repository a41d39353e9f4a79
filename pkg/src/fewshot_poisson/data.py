"""Episode types, feature-CSV ingestion, L2 normalization and validation.

Feature CSV layout::

    id,role,label,f0,f1,...,f{d-1}

``role`` is one of ``S`` (support), ``U`` (extra unlabeled) or ``Q`` (query);
``label`` is a class index for support rows and ``-1`` otherwise.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

UNLABELED = -1


class Role(str, Enum):
    SUPPORT = "S"
    UNLABELED = "U"
    QUERY = "Q"


_ROLE_ORDER = {Role.SUPPORT: 0, Role.UNLABELED: 1, Role.QUERY: 2}


@dataclass(frozen=True)
class FeaturePoint:
    id: str
    role: Role
    label: int | None
    vector: np.ndarray


def _frozen(a: np.ndarray, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class EpisodeData:
    """One few-shot episode stored column-wise.

    Rows are expected in canonical order: ``K*C`` support points, then ``N``
    extra unlabeled points, then ``V`` queries (see :func:`validate_episode`).
    ``labels`` holds ``-1`` for every non-support row. ``query_truth`` is
    optional ground truth for the queries; solvers never read it.
    """

    ids: tuple[str, ...]
    roles: tuple[Role, ...]
    labels: np.ndarray
    features: np.ndarray
    num_classes: int
    shots: int
    query_truth: np.ndarray | None = field(default=None)

    def __post_init__(self) -> None:
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        object.__setattr__(self, "roles", tuple(Role(r) for r in self.roles))
        object.__setattr__(self, "labels", _frozen(self.labels, np.int64).reshape(-1))
        feats = _frozen(self.features, np.float64)
        if feats.ndim != 2:
            raise DataError(f"features must be a 2-D array, got shape {feats.shape}")
        object.__setattr__(self, "features", feats)
        if self.query_truth is not None:
            object.__setattr__(self, "query_truth", _frozen(self.query_truth, np.int64).reshape(-1))
        m = feats.shape[0]
        if len(self.ids) != m or len(self.roles) != m or self.labels.shape[0] != m:
            raise DataError("ids, roles, labels and features disagree on the number of points")

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def C(self) -> int:
        return self.num_classes

    @property
    def K(self) -> int:
        return self.shots

    def _count(self, role: Role) -> int:
        return sum(1 for r in self.roles if r is role)

    @property
    def n_support(self) -> int:
        return self._count(Role.SUPPORT)

    @property
    def n_unlabeled(self) -> int:
        return self._count(Role.UNLABELED)

    @property
    def n_query(self) -> int:
        return self._count(Role.QUERY)

    N = n_unlabeled
    V = n_query

    def mask(self, role: Role) -> np.ndarray:
        return np.array([r is role for r in self.roles], dtype=bool)

    @property
    def support_labels(self) -> np.ndarray:
        return self.labels[self.mask(Role.SUPPORT)]

    @property
    def query_ids(self) -> tuple[str, ...]:
        return tuple(i for i, r in zip(self.ids, self.roles) if r is Role.QUERY)

    @property
    def points(self) -> list[FeaturePoint]:
        return [
            FeaturePoint(i, r, None if lab == UNLABELED else int(lab), self.features[n])
            for n, (i, r, lab) in enumerate(zip(self.ids, self.roles, self.labels))
        ]

    def with_features(self, features: np.ndarray) -> "EpisodeData":
        features = np.asarray(features, dtype=np.float64)
        if features.shape != self.features.shape:
            raise DataError(f"feature shape {features.shape} != {self.features.shape}")
        return EpisodeData(self.ids, self.roles, self.labels, features,
                           self.num_classes, self.shots, self.query_truth)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EpisodeData):
            return NotImplemented
        truth_eq = (self.query_truth is None and other.query_truth is None) or (
            self.query_truth is not None and other.query_truth is not None
            and np.array_equal(self.query_truth, other.query_truth)
        )
        return (
            self.ids == other.ids
            and self.roles == other.roles
            and self.num_classes == other.num_classes
            and self.shots == other.shots
            and np.array_equal(self.labels, other.labels)
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
            and truth_eq
        )

    __hash__ = None  # type: ignore[assignment]

    @classmethod
    def from_points(cls, points: Iterable[FeaturePoint], num_classes: int | None = None,
                    shots: int | None = None, canonical: bool = True) -> "EpisodeData":
        """Assemble an episode from points, sorting into canonical order if asked.

        ``num_classes`` defaults to ``max(support label) + 1`` and ``shots`` to
        the largest per-class support count.
        """
        pts = list(points)
        if canonical:
            pts.sort(key=lambda p: _ROLE_ORDER[Role(p.role)])  # stable
        if not pts:
            raise DataError("episode has no points")
        support_labels = [p.label for p in pts if Role(p.role) is Role.SUPPORT and p.label is not None]
        if num_classes is None:
            num_classes = max(support_labels) + 1 if support_labels else 0
        if shots is None:
            counts = Counter(support_labels)
            shots = max(counts.values()) if counts else 0
        labels = [UNLABELED if p.label is None else int(p.label) for p in pts]
        dims = {np.asarray(p.vector).shape for p in pts}
        if len(dims) != 1:
            raise DataError(f"inconsistent feature dimensions {sorted(dims)}")
        feats = np.stack([np.asarray(p.vector, dtype=np.float64) for p in pts])
        return cls(tuple(p.id for p in pts), tuple(Role(p.role) for p in pts),
                   np.array(labels), feats, num_classes, shots)


def validate_episode(episode: EpisodeData) -> list[str]:
    """Return every invariant violation found; an empty list means valid."""
    problems: list[str] = []
    C, K = episode.num_classes, episode.shots

    dupes = sorted(i for i, n in Counter(episode.ids).items() if n > 1)
    if dupes:
        problems.append(f"duplicate id: {', '.join(dupes[:5])}")
    if not np.all(np.isfinite(episode.features)):
        bad = [episode.ids[i] for i in np.where(~np.isfinite(episode.features).all(axis=1))[0]]
        problems.append(f"non-finite feature at point(s): {', '.join(bad[:5])}")
    if C < 2:
        problems.append(f"need at least 2 classes, got C={C}")
    if K < 1:
        problems.append(f"need at least 1 shot per class, got K={K}")
    if episode.m < C:
        problems.append(f"m={episode.m} is smaller than C={C}")

    for i, (pid, role, lab) in enumerate(zip(episode.ids, episode.roles, episode.labels)):
        if role is Role.SUPPORT:
            if lab == UNLABELED:
                problems.append(f"support point {pid} has no label")
            elif not 0 <= lab < C:
                problems.append(f"support point {pid} label {lab} outside [0, {C})")
        elif lab != UNLABELED:
            problems.append(f"{role.name.lower()} point {pid} carries label {lab}")

    counts = Counter(int(x) for x in episode.support_labels if x != UNLABELED)
    for c in range(max(C, 0)):
        if counts.get(c, 0) != K:
            problems.append(f"class {c} has {counts.get(c, 0)}/{K} shots")

    order = [_ROLE_ORDER[r] for r in episode.roles]
    if order != sorted(order):
        problems.append("points are not in canonical [support, unlabeled, query] order")
    if episode.n_query == 0:
        problems.append("episode has no query points")
    if episode.query_truth is not None and episode.query_truth.shape[0] != episode.n_query:
        problems.append("query_truth length does not match the query count")
    return problems


def require_valid(episode: EpisodeData) -> EpisodeData:
    problems = validate_episode(episode)
    if problems:
        raise DataError("invalid episode: " + "; ".join(problems))
    return episode


def l2_normalize(episode: EpisodeData) -> EpisodeData:
    norms = np.linalg.norm(episode.features, axis=1)
    zero = np.where(~(norms > 0))[0]
    if zero.size:
        raise DataError(f"cannot normalize zero-norm vector at point {episode.ids[zero[0]]}")
    return episode.with_features(episode.features / norms[:, None])


# ---------------------------------------------------------------- CSV I/O

def _parse_rows(path: Path, require_labels: bool):
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DataError(f"cannot open feature file {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if header[:3] != ["id", "role", "label"] or len(header) < 4:
            raise DataError(f"{path}:1: header must be id,role,label,f0,...; got {','.join(header[:4])}")
        d = len(header) - 3
        for row in reader:
            lineno = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != d + 3:
                raise DataError(f"{path}:{lineno}: dimension error, expected {d} features, got {len(row) - 3}")
            pid, role_raw, label_raw = (c.strip() for c in row[:3])
            try:
                role = Role(role_raw.upper())
            except ValueError:
                raise DataError(f"{path}:{lineno}: parse error, unknown role {role_raw!r}") from None
            try:
                label = int(label_raw)
                vec = np.array([float(c) for c in row[3:]], dtype=np.float64)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: parse error, {exc}") from None
            if not np.all(np.isfinite(vec)):
                raise DataError(f"{path}:{lineno}: non-finite feature in point {pid}")
            if require_labels:
                if label < 0:
                    raise DataError(f"{path}:{lineno}: label error, pool rows must be labeled")
            elif role is Role.SUPPORT and label < 0:
                raise DataError(f"{path}:{lineno}: label error, support point {pid} has no label")
            elif role is not Role.SUPPORT and label != UNLABELED:
                raise DataError(f"{path}:{lineno}: role error, {role.name.lower()} point {pid} carries label {label}")
            yield lineno, FeaturePoint(pid, role, label if label >= 0 else None, vec)


def load_feature_file(path: str | Path, num_classes: int | None = None,
                      strict: bool = True) -> EpisodeData:
    """Read an episode CSV and return it in canonical role order.

    With ``strict`` set, any :func:`validate_episode` violation raises
    :class:`DataError`.
    """
    path = Path(path)
    points = []
    for lineno, p in _parse_rows(path, require_labels=False):
        if num_classes is not None and p.label is not None and not 0 <= p.label < num_classes:
            raise DataError(f"{path}:{lineno}: label error, {p.label} outside [0, {num_classes})")
        points.append(p)
    if not points:
        raise DataError(f"{path}: no data rows")
    episode = EpisodeData.from_points(points, num_classes=num_classes)
    if strict:
        require_valid(episode)
    return episode


def save_feature_file(episode: EpisodeData, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "role", "label"] + [f"f{j}" for j in range(episode.d)])
        for pid, role, lab, vec in zip(episode.ids, episode.roles, episode.labels, episode.features):
            writer.writerow([pid, role.value, int(lab)] + [repr(float(x)) for x in vec])


@dataclass(frozen=True, eq=False)
class FeaturePool:
    """A fully labeled feature set that episodes are sampled from."""

    ids: tuple[str, ...]
    labels: np.ndarray
    features: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        object.__setattr__(self, "labels", _frozen(self.labels, np.int64).reshape(-1))
        object.__setattr__(self, "features", _frozen(self.features, np.float64))
        if not (len(self.ids) == self.labels.shape[0] == self.features.shape[0]):
            raise DataError("pool ids, labels and features disagree on size")
        if np.any(self.labels < 0):
            raise DataError("pool labels must be non-negative")

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.labels)

    def __len__(self) -> int:
        return len(self.ids)


def load_pool(path: str | Path) -> FeaturePool:
    path = Path(path)
    rows = [p for _, p in _parse_rows(path, require_labels=True)]
    if not rows:
        raise DataError(f"{path}: no data rows")
    dupes = [i for i, n in Counter(p.id for p in rows).items() if n > 1]
    if dupes:
        raise DataError(f"{path}: duplicate id {dupes[0]}")
    return FeaturePool(tuple(p.id for p in rows), np.array([p.label for p in rows]),
                       np.stack([p.vector for p in rows]))


def save_pool(pool: FeaturePool, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "role", "label"] + [f"f{j}" for j in range(pool.features.shape[1])])
        for pid, lab, vec in zip(pool.ids, pool.labels, pool.features):
            writer.writerow([pid, "S", int(lab)] + [repr(float(x)) for x in vec])


def make_episode(support: Sequence[Sequence[float]], support_labels: Sequence[int],
                 query: Sequence[Sequence[float]], unlabeled: Sequence[Sequence[float]] = (),
                 num_classes: int | None = None) -> EpisodeData:
    """Convenience constructor from raw coordinate lists (ids s0.., u0.., q0..)."""
    support = np.atleast_2d(np.asarray(support, dtype=np.float64))
    query = np.atleast_2d(np.asarray(query, dtype=np.float64))
    d = support.shape[1]
    unlabeled = np.asarray(unlabeled, dtype=np.float64).reshape(-1, d)
    pts = [FeaturePoint(f"s{i}", Role.SUPPORT, int(lab), v) for i, (v, lab) in enumerate(zip(support, support_labels))]
    pts += [FeaturePoint(f"u{i}", Role.UNLABELED, None, v) for i, v in enumerate(unlabeled)]
    pts += [FeaturePoint(f"q{i}", Role.QUERY, None, v) for i, v in enumerate(query)]
    return EpisodeData.from_points(pts, num_classes=num_classes)
