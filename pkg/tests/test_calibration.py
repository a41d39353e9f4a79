import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fewshot_poisson.calibration import calibrate, calibrate_queries, cross_class_bias, preprocess
from fewshot_poisson.data import Role, l2_normalize, make_episode
from fewshot_poisson.errors import DataError

from conftest import random_episode


def test_bias_examples():
    ep = make_episode([[1.0, 0.0], [1.0, 0.0]], [0, 1], [[0.0, 1.0]])
    np.testing.assert_array_equal(cross_class_bias(ep), [1.0, -1.0])
    same = make_episode([[1.0, 0.0], [0.0, 1.0]], [0, 1], [[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(cross_class_bias(same), [0.0, 0.0])


def test_bias_hand_arithmetic():
    # B = {(1, 0)} twice so both classes have a shot; mean is still (1, 0)
    ep = make_episode([[1.0, 0.0], [1.0, 0.0]], [0, 1], [[0.6, 0.8], [0.8, 0.6]])
    np.testing.assert_allclose(cross_class_bias(ep), [0.3, -0.7], atol=1e-15)


def test_bias_includes_unlabeled():
    ep = make_episode([[1.0, 0.0], [1.0, 0.0]], [0, 1], [[0.0, 0.0]], unlabeled=[[-2.0, 4.0]])
    np.testing.assert_allclose(cross_class_bias(ep), [0.0, 4.0 / 3.0])


def test_calibrate_queries_examples():
    ep = make_episode([[1.0, 0.0], [1.0, 0.0]], [0, 1], [[0.0, 1.0]])
    assert calibrate_queries(ep, np.zeros(2)) == ep
    out = calibrate_queries(ep, np.array([1.0, -1.0]))
    np.testing.assert_array_equal(out.features[ep.mask(Role.QUERY)], [[1.0, 0.0]])


def test_dimension_mismatch():
    ep = make_episode([[1.0, 0.0], [1.0, 0.0]], [0, 1], [[0.0, 1.0]])
    with pytest.raises(DataError):
        calibrate_queries(ep, np.zeros(3))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5), st.integers(1, 3), st.integers(0, 10), st.integers(1, 8))
def test_calibration_properties(seed, C, K, N, V):
    rng = np.random.default_rng(seed)
    ep = l2_normalize(random_episode(rng, C=C, K=K, N=N, V=V, d=6, shift=rng.standard_normal(6)))
    out = calibrate(ep)
    B = ~ep.mask(Role.QUERY)
    Q = ep.mask(Role.QUERY)
    assert np.max(np.abs(out.features[Q].mean(0) - out.features[B].mean(0))) <= 1e-9
    # support pool is bit-identical
    assert np.array_equal(out.features[B], ep.features[B])
    # fixed point: second bias is zero
    assert np.max(np.abs(cross_class_bias(out))) <= 1e-12


def test_renormalize_flag(rng):
    ep = l2_normalize(random_episode(rng, shift=3.0))
    out = calibrate(ep, renormalize=True)
    Q = ep.mask(Role.QUERY)
    np.testing.assert_allclose(np.linalg.norm(out.features[Q], axis=1), 1.0)
    plain = calibrate(ep)
    assert not np.allclose(np.linalg.norm(plain.features[Q], axis=1), 1.0)


def test_preprocess_order(rng):
    ep = random_episode(rng, shift=2.0)
    out = preprocess(ep)
    expected = calibrate(l2_normalize(ep))
    assert np.array_equal(out.features, expected.features)
    raw = preprocess(ep, normalize=False, with_calibration=False)
    assert np.array_equal(raw.features, ep.features)
