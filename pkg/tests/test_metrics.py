import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kumanet.activations import Kumaraswamy, Mode, NoisyRelu, Relu, Sigmoid
from kumanet.metrics import activity_report, classification_error, hidden_activity, mean_test_cross_entropy
from kumanet.model import MlpParams, forward


def test_classification_error():
    assert classification_error([1, 2, 3], [1, 0, 3]) == pytest.approx(1 / 3)
    assert classification_error([4, 5], [4, 5]) == 0.0
    assert classification_error([0, 0], [1, 1]) == 1.0
    with pytest.raises(ValueError):
        classification_error([], [])
    with pytest.raises(ValueError):
        classification_error([1], [1, 2])


@given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), min_size=1, max_size=50), st.randoms())
def test_classification_error_permutation_invariant(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    a = classification_error(*zip(*pairs))
    b = classification_error(*zip(*shuffled))
    assert a == b and 0.0 <= a <= 1.0


def test_mean_test_cross_entropy():
    assert mean_test_cross_entropy(np.full((4, 10), 0.1), [1, 2, 3, 4]) == pytest.approx(math.log(10))
    assert mean_test_cross_entropy(np.eye(3), [0, 1, 2]) == 0.0
    probs = np.array([[0.8, 0.2], [0.3, 0.7]])
    expected = (-math.log(0.8) - math.log(0.7)) / 2
    assert mean_test_cross_entropy(probs, [0, 1]) == pytest.approx(expected, abs=1e-15)


def _net(seed, M=30, D=12):
    rng = np.random.default_rng(seed)
    return MlpParams(rng.normal(0, 1, (M, D)), rng.normal(0, 1, M), rng.normal(size=(10, M)), np.zeros(10))


@pytest.mark.parametrize("kind", [Sigmoid(), Relu(), NoisyRelu(1.0), Kumaraswamy(5.0, 6.0), Kumaraswamy(8.0, 30.0)], ids=str)
def test_activity_means_match_direct_recomputation(kind):
    p = _net(1)
    x = np.random.default_rng(2).uniform(size=(200, 12))
    rep = activity_report(p, x, kind)
    direct = forward(p, x, kind, mode=Mode.EVAL)[0].act.mean(axis=0)
    np.testing.assert_allclose(rep.mean_activity, direct, rtol=0, atol=1e-12)
    assert rep.n_below_001 == int(np.sum(direct < 0.01))
    assert rep.n_above_05 == int(np.sum(direct > 0.5))
    assert rep.n_below_001 + int(np.sum(direct >= 0.01)) == 30
    assert rep.histogram_counts.sum() == 30 and len(rep.histogram_counts) == 50
    assert rep.histogram_edges[-1] == max(1.0, direct.max())


def test_sigmoid_zero_weights_give_half_activity():
    p = MlpParams(np.zeros((5, 4)), np.zeros(5), np.zeros((10, 5)), np.zeros(10))
    rep = activity_report(p, np.random.default_rng(0).uniform(size=(10, 4)), Sigmoid())
    assert np.all(rep.mean_activity == 0.5)
    assert rep.n_below_001 == 0 and rep.n_above_05 == 0


def test_sigmoid_activity_always_positive_and_kumaraswamy_bounded():
    p = _net(3)
    p.W *= 5
    x = np.random.default_rng(4).uniform(size=(100, 12))
    assert np.all(activity_report(p, x, Sigmoid()).mean_activity > 0)
    assert np.all(activity_report(p, x, Kumaraswamy(8.0, 30.0)).mean_activity <= 1)


def test_dead_relu_units_are_counted():
    p = _net(5)
    p.c[:7] = -1e3  # these units never fire
    x = np.random.default_rng(6).uniform(size=(100, 12))
    rep = activity_report(p, x, Relu())
    assert np.all(rep.mean_activity[:7] == 0)
    assert rep.n_below_001 >= 7
    assert rep.n_below_001 == int(np.sum(hidden_activity(p, x, Relu()).mean(axis=0) < 0.01))


def test_histogram_extends_past_one_for_strong_relu_units():
    p = _net(7)
    p.c[:3] = 5.0
    rep = activity_report(p, np.random.default_rng(8).uniform(size=(50, 12)), Relu())
    assert rep.histogram_edges[-1] > 1.0
    assert rep.n_above_05 >= 3
