import numpy as np
import pytest

from fewshot_poisson.data import make_episode
from fewshot_poisson.graph import build_graph
from fewshot_poisson.synthetic import gaussian_blobs

FIXTURES = __import__("pathlib").Path(__file__).parent / "fixtures"


def random_connected_graph(rng, m_range=(5, 60)):
    """kNN graph on random points, resampled until connected."""
    while True:
        m = int(rng.integers(m_range[0], m_range[1] + 1))
        d = int(rng.integers(2, 6))
        k = int(rng.integers(2, min(8, m - 1) + 1))
        g = build_graph(rng.standard_normal((m, d)), k)
        if g.n_components == 1:
            return g


def random_episode(rng, C=3, K=1, N=6, V=4, d=5, shift=None):
    support = rng.standard_normal((C * K, d))
    labels = np.repeat(np.arange(C), K)
    query = rng.standard_normal((V, d))
    if shift is not None:
        query = query + shift
    unlabeled = rng.standard_normal((N, d))
    return make_episode(support, labels, query, unlabeled, num_classes=C)


def blob_episode(rng, C=3, K=1, N_per=50, V_per=15, d=4, sigma=0.1, sep=10.0):
    """Well-separated blobs with ground truth attached to the queries."""
    centers = np.zeros((C, d))
    centers[np.arange(C), np.arange(C)] = sep
    support = np.concatenate([centers[c] + sigma * rng.standard_normal((K, d)) for c in range(C)])
    labels = np.repeat(np.arange(C), K)
    unlabeled = np.concatenate([centers[c] + sigma * rng.standard_normal((N_per, d)) for c in range(C)])
    truth = np.repeat(np.arange(C), V_per)
    query = centers[truth] + sigma * rng.standard_normal((truth.size, d))
    ep = make_episode(support, labels, query, unlabeled, num_classes=C)
    return ep, truth


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def blob_pool():
    return gaussian_blobs(4, 60, 4, 0.05, separation=1.0, seed=3)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
