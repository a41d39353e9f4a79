import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fewshot_poisson.contrastive import (
    ContrastiveBatch, kl_regularizer, load_views, nt_xent_loss, save_views, ut_loss_and_grad,
)
from fewshot_poisson.errors import ConfigError, DataError


def brute_nt_xent(z_t, z_tp, tau):
    """Loop over every anchor of the fused batch and every other point."""
    Z = [np.asarray(v, float) for v in list(z_t) + list(z_tp)]
    n = len(z_t)
    cos = lambda a, b: float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
    total = 0.0
    for i in range(2 * n):
        j = i + n if i < n else i - n
        denom = sum(math.exp(cos(Z[i], Z[k]) / tau) for k in range(2 * n) if k != i)
        total += -math.log(math.exp(cos(Z[i], Z[j]) / tau) / denom)
    return total / (2 * n)


def brute_kl(z_t, z_tp):
    total = 0.0
    for a, b in zip(z_t, z_tp):
        p = np.exp(a) / np.exp(a).sum()
        q = np.exp(b) / np.exp(b).sum()
        total += sum(pi * math.log(pi / qi) for pi, qi in zip(p, q))
    return total / len(z_t)


def test_single_pair_loss_is_zero(rng):
    for _ in range(5):
        v = rng.standard_normal((1, 4))
        assert nt_xent_loss(ContrastiveBatch(v, rng.standard_normal((1, 4))), 0.3) == 0.0
        loss, _ = ut_loss_and_grad(ContrastiveBatch(v, v), 0.1, 1.0)
        assert loss == 0.0


def test_two_pair_example():
    e = np.eye(2)
    value = nt_xent_loss(ContrastiveBatch(e, e), 1.0)
    # positive at cos 1, duplicate-free negatives: one at 0 from each view
    expected = math.log(1 + 2 / math.e)
    assert brute_nt_xent(e, e, 1.0) == pytest.approx(expected, abs=1e-15)
    assert value == pytest.approx(expected, abs=1e-14)
    assert value == pytest.approx(0.551444713932051, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(1, 16), st.floats(0.05, 2.0))
def test_matches_brute_force(seed, n, d, tau):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((n, d)), rng.standard_normal((n, d))
    if d == 1:
        a, b = a + 3, b + 3  # keep rows off zero
    batch = ContrastiveBatch(a, b)
    assert nt_xent_loss(batch, tau) == pytest.approx(brute_nt_xent(a, b, tau), rel=1e-10, abs=1e-12)
    assert kl_regularizer(batch) == pytest.approx(brute_kl(a, b), rel=1e-10, abs=1e-12)
    assert nt_xent_loss(batch, tau) >= 0


def test_scale_invariance(rng):
    a, b = rng.standard_normal((5, 6)), rng.standard_normal((5, 6))
    base = nt_xent_loss(ContrastiveBatch(a, b), 0.2)
    assert nt_xent_loss(ContrastiveBatch(10 * a, 10 * b), 0.2) == pytest.approx(base, rel=1e-12)
    s = rng.uniform(0.1, 5, (5, 1))
    assert nt_xent_loss(ContrastiveBatch(s * a, b), 0.2) == pytest.approx(base, rel=1e-12)


def test_zero_row_rejected():
    with pytest.raises(DataError, match="zero-norm"):
        nt_xent_loss(ContrastiveBatch(np.zeros((2, 2)), np.ones((2, 2))), 0.1)


@pytest.mark.parametrize("tau", [0.0, -1.0])
def test_tau_must_be_positive(tau):
    with pytest.raises(ConfigError):
        nt_xent_loss(ContrastiveBatch(np.ones((2, 2)), np.ones((2, 2))), tau)


def test_kl_examples(rng):
    a = rng.standard_normal((4, 3))
    assert kl_regularizer(ContrastiveBatch(a, a)) == 0.0
    p = np.exp([1.0, 0.0]) / np.exp([1.0, 0.0]).sum()
    q = p[::-1]
    direct = p[0] * math.log(p[0] / q[0]) + p[1] * math.log(p[1] / q[1])
    assert kl_regularizer(ContrastiveBatch([[1.0, 0.0]], [[0.0, 1.0]])) == pytest.approx(direct, rel=1e-14)
    shifted = a + rng.standard_normal((4, 1))
    assert kl_regularizer(ContrastiveBatch(a, shifted)) == pytest.approx(0.0, abs=1e-15)
    b = rng.standard_normal((4, 3))
    assert kl_regularizer(ContrastiveBatch(a + 7.0, b)) == pytest.approx(kl_regularizer(ContrastiveBatch(a, b)))


def test_lambda_zero_is_contrastive_only(rng):
    batch = ContrastiveBatch(rng.standard_normal((4, 5)), rng.standard_normal((4, 5)))
    assert ut_loss_and_grad(batch, 0.5, 0.0)[0] == nt_xent_loss(batch, 0.5)


def test_identical_views_kl_contributes_nothing(rng):
    a = rng.standard_normal((4, 5))
    batch = ContrastiveBatch(a, a)
    l0, (g0t, g0p) = ut_loss_and_grad(batch, 0.5, 0.0)
    l1, (g1t, g1p) = ut_loss_and_grad(batch, 0.5, 3.0)
    assert l0 == l1
    np.testing.assert_allclose(g1t, g0t, atol=1e-15)
    np.testing.assert_allclose(g1p, g0p, atol=1e-15)


def finite_difference(a, b, tau, lam, h=1e-5):
    ga, gb = np.zeros_like(a), np.zeros_like(b)
    for target, grad in ((a, ga), (b, gb)):
        for idx in np.ndindex(target.shape):
            old = target[idx]
            target[idx] = old + h
            up = ut_loss_and_grad(ContrastiveBatch(a, b), tau, lam)[0]
            target[idx] = old - h
            down = ut_loss_and_grad(ContrastiveBatch(a, b), tau, lam)[0]
            target[idx] = old
            grad[idx] = (up - down) / (2 * h)
    return ga, gb


def gradient_rel_error(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(2, 9)), int(rng.integers(2, 17))
    a, b = rng.standard_normal((n, d)), rng.standard_normal((n, d))
    tau, lam = float(rng.uniform(0.2, 1.0)), float(rng.uniform(0, 2))
    _, (ga, gb) = ut_loss_and_grad(ContrastiveBatch(a, b), tau, lam)
    fa, fb = finite_difference(a.copy(), b.copy(), tau, lam)
    analytic = np.concatenate([ga.ravel(), gb.ravel()])
    numeric = np.concatenate([fa.ravel(), fb.ravel()])
    return np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_gradient_matches_finite_differences(seed):
    assert gradient_rel_error(seed) <= 1e-4


def test_permutation_invariance(rng):
    a, b = rng.standard_normal((6, 4)), rng.standard_normal((6, 4))
    perm = rng.permutation(6)
    l1, (g1a, g1b) = ut_loss_and_grad(ContrastiveBatch(a, b), 0.3, 0.7)
    l2, (g2a, g2b) = ut_loss_and_grad(ContrastiveBatch(a[perm], b[perm]), 0.3, 0.7)
    assert l2 == pytest.approx(l1, rel=1e-13)
    np.testing.assert_allclose(g2a, g1a[perm], atol=1e-13)
    np.testing.assert_allclose(g2b, g1b[perm], atol=1e-13)


def test_views_roundtrip(tmp_path, rng):
    batch = ContrastiveBatch(rng.standard_normal((3, 4)), rng.standard_normal((3, 4)))
    save_views(batch, tmp_path / "v.csv")
    back = load_views(tmp_path / "v.csv")
    assert np.array_equal(back.z_t, batch.z_t) and np.array_equal(back.z_tp, batch.z_tp)


def test_views_missing_partner(tmp_path):
    p = tmp_path / "v.csv"
    p.write_text("pair,view,f0\na,1,1.0\na,2,2.0\nb,1,3.0\n")
    with pytest.raises(DataError, match="pair b"):
        load_views(p)
