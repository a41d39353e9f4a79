"""Unsupervised transfer loss: NT-Xent contrastive term plus a softmax-KL regularizer.

Both terms come with exact analytic gradients with respect to the two feature
views, so an external trainer can backpropagate them into an embedding.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import log_softmax, logsumexp

from .errors import ConfigError, DataError


@dataclass(frozen=True, eq=False)
class ContrastiveBatch:
    """Two views of n samples; row i of ``z_t`` pairs with row i of ``z_tp``."""

    z_t: np.ndarray
    z_tp: np.ndarray

    def __post_init__(self) -> None:
        a = np.atleast_2d(np.asarray(self.z_t, dtype=np.float64))
        b = np.atleast_2d(np.asarray(self.z_tp, dtype=np.float64))
        if a.shape != b.shape:
            raise DataError(f"views disagree in shape: {a.shape} vs {b.shape}")
        if a.shape[0] < 1:
            raise DataError("batch must contain at least one pair")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise DataError("non-finite feature in contrastive batch")
        object.__setattr__(self, "z_t", a)
        object.__setattr__(self, "z_tp", b)

    @property
    def n(self) -> int:
        return self.z_t.shape[0]

    @property
    def d(self) -> int:
        return self.z_t.shape[1]


def _check_tau(tau: float) -> None:
    if not tau > 0:
        raise ConfigError(f"tau must be > 0, got {tau}")


def _nt_xent(batch: ContrastiveBatch, tau: float, want_grad: bool):
    n = batch.n
    Z = np.vstack([batch.z_t, batch.z_tp])
    norms = np.linalg.norm(Z, axis=1)
    if np.any(norms == 0):
        raise DataError("zero-norm feature row: cosine similarity undefined")
    U = Z / norms[:, None]
    logits = (U @ U.T) / tau
    np.fill_diagonal(logits, -np.inf)
    pos = np.concatenate([np.arange(n, 2 * n), np.arange(n)])
    rows = np.arange(2 * n)
    lse = logsumexp(logits, axis=1)
    loss = float(np.mean(lse - logits[rows, pos]))
    if not want_grad:
        return loss, None, None

    # dL/dlogits: (softmax over k != i) - onehot(positive), averaged over anchors
    P = np.exp(logits - lse[:, None])
    P[rows, pos] -= 1.0
    P /= 2 * n
    dU = (P + P.T) @ U / tau
    # back through u = z / |z|
    dZ = (dU - U * np.sum(dU * U, axis=1, keepdims=True)) / norms[:, None]
    return loss, dZ[:n], dZ[n:]


def nt_xent_loss(batch: ContrastiveBatch, tau: float = 0.1) -> float:
    """Mean NT-Xent over all 2n anchors of the fused batch.

    Each anchor's denominator runs over the other 2n-1 points, its positive
    included.
    """
    _check_tau(tau)
    return _nt_xent(batch, tau, want_grad=False)[0]


def _kl(batch: ContrastiveBatch, want_grad: bool):
    logp = log_softmax(batch.z_t, axis=1)
    logq = log_softmax(batch.z_tp, axis=1)
    p = np.exp(logp)
    gap = logp - logq
    per_row = np.sum(p * gap, axis=1)
    loss = float(np.mean(per_row))
    if not want_grad:
        return loss, None, None
    n = batch.n
    g_t = p * (gap - per_row[:, None]) / n
    g_tp = (np.exp(logq) - p) / n
    return loss, g_t, g_tp


def kl_regularizer(batch: ContrastiveBatch) -> float:
    """Mean over pairs of ``KL(softmax(z_t,i) || softmax(z_tp,i))``."""
    return max(_kl(batch, want_grad=False)[0], 0.0)


def ut_loss_and_grad(batch: ContrastiveBatch, tau: float = 0.1,
                     lam: float = 1.0) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """``nt_xent + lam * kl`` and its gradient with respect to ``(z_t, z_tp)``."""
    _check_tau(tau)
    c_loss, c_t, c_tp = _nt_xent(batch, tau, want_grad=True)
    if lam == 0:
        return c_loss, (c_t, c_tp)
    k_loss, k_t, k_tp = _kl(batch, want_grad=True)
    return c_loss + lam * k_loss, (c_t + lam * k_t, c_tp + lam * k_tp)


def load_views(path) -> ContrastiveBatch:
    """Read a two-view CSV with header ``pair,view,f0,...``; ``view`` is 1 or 2.

    Rows are matched by ``pair``; pair order follows first appearance.
    """
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DataError(f"cannot open views file {path}: {exc.strerror}") from None
    views: dict[str, dict[int, np.ndarray]] = {}
    with fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header[:2] != ["pair", "view"] or len(header) < 3:
            raise DataError(f"{path}:1: header must be pair,view,f0,...")
        d = len(header) - 2
        for row in reader:
            if not row:
                continue
            lineno = reader.line_num
            if len(row) != d + 2:
                raise DataError(f"{path}:{lineno}: dimension error, expected {d} features")
            try:
                view = int(row[1])
                vec = np.array([float(c) for c in row[2:]])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: parse error, {exc}") from None
            if view not in (1, 2):
                raise DataError(f"{path}:{lineno}: view must be 1 or 2, got {view}")
            slot = views.setdefault(row[0].strip(), {})
            if view in slot:
                raise DataError(f"{path}:{lineno}: pair {row[0]} repeats view {view}")
            slot[view] = vec
    if not views:
        raise DataError(f"{path}: no data rows")
    missing = [k for k, v in views.items() if len(v) != 2]
    if missing:
        raise DataError(f"{path}: pair {missing[0]} lacks one of its two views")
    return ContrastiveBatch(np.stack([v[1] for v in views.values()]),
                            np.stack([v[2] for v in views.values()]))


def save_views(batch: ContrastiveBatch, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pair", "view"] + [f"f{j}" for j in range(batch.d)])
        for i in range(batch.n):
            writer.writerow([f"p{i}", 1] + [repr(float(x)) for x in batch.z_t[i]])
            writer.writerow([f"p{i}", 2] + [repr(float(x)) for x in batch.z_tp[i]])
