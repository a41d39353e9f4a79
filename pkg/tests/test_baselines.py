import numpy as np
import pytest

from fewshot_poisson.baselines import label_propagation, onehot_rows
from fewshot_poisson.data import make_episode
from fewshot_poisson.errors import ConfigError
from fewshot_poisson.pipeline import infer

from conftest import blob_episode, random_connected_graph


def test_small_alpha_limit(rng):
    g = random_connected_graph(rng)
    Y = onehot_rows(g.m, [0, 1, 2], [0, 1, 2], 3)
    F = label_propagation(g, Y, alpha=1e-12, iters=5)
    np.testing.assert_allclose(F, Y, atol=1e-10)


@pytest.mark.parametrize("alpha", [0.0, 1.0, 1.5])
def test_alpha_range(rng, alpha):
    g = random_connected_graph(rng)
    with pytest.raises(ConfigError):
        label_propagation(g, np.zeros((g.m, 2)), alpha=alpha)


def test_separable_blobs_perfect(rng):
    ep, truth = blob_episode(rng, C=3, K=1, N_per=50, V_per=15, sigma=0.1, sep=10.0)
    # nearest-centroid oracle
    Q = ep.features[-truth.size:]
    assert np.array_equal(np.argmin(((Q[:, None] - 10 * np.eye(3, ep.d)[None]) ** 2).sum(-1), 1), truth)
    assert np.array_equal(infer(ep, "lp").predictions, truth)


def test_mirror_symmetry(rng):
    s = np.array([1.0, 0.3, 0.2])
    flip = np.array([-1.0, 1, 1])
    support = np.vstack([s, s * flip])
    centers = support[rng.integers(0, 2, 16)]
    U = centers[:10] + 0.4 * rng.standard_normal((10, 3))
    Q = centers[10:] + 0.4 * rng.standard_normal((6, 3))
    a = infer(make_episode(support, [0, 1], Q, U), "lp").predictions
    b = infer(make_episode(support * flip, [1, 0], Q * flip, U * flip), "lp").predictions
    assert np.array_equal(a, 1 - b)


def test_residual_reaches_tolerance(rng):
    for _ in range(10):
        g = random_connected_graph(rng)
        Y = onehot_rows(g.m, [0, 1, 2], [0, 1, 2], 3)
        hist = []
        F = label_propagation(g, Y, alpha=0.99, iters=5000, tol=1e-6, history=hist)
        assert hist[-1] <= 1e-6 and len(hist) < 5000
        s = 1 / np.sqrt(g.degrees)
        S = s[:, None] * g.weights.toarray() * s[None, :]
        assert np.max(np.abs(F - (0.99 * S @ F + 0.01 * Y))) <= 1e-6


def test_residual_walk_norm_monotone(rng):
    # D^-1/2 (F_t+1 - F_t) = alpha D^-1 W D^-1/2 (F_t - F_t-1): a max-norm contraction
    g = random_connected_graph(rng)
    Y = onehot_rows(g.m, [0, 1], [0, 1], 2)
    inv_sqrt = 1 / np.sqrt(g.degrees)[:, None]
    norms = []
    prev = Y
    for iters in range(1, 200):
        F = label_propagation(g, Y, alpha=0.99, iters=iters, tol=0.0)
        norms.append(np.max(np.abs(inv_sqrt * (F - prev))))
        prev = F
    assert np.all(np.diff(norms) <= 1e-15)


def test_permutation_equivariance(rng):
    g = random_connected_graph(rng)
    labels = np.array([0, 1, 2, 1])
    F = label_propagation(g, onehot_rows(g.m, [0, 1, 2, 3], labels, 3))
    perm = np.array([2, 0, 1])
    Fp = label_propagation(g, onehot_rows(g.m, [0, 1, 2, 3], perm[labels], 3))
    np.testing.assert_array_equal(Fp[:, perm], F)
