import numpy as np
from hypothesis import given, strategies as st

from trainbias.classify import bayes_classify, stochastic_classify
from trainbias.priors import estimate_prior_from_predictions


def test_bayes_examples():
    assert bayes_classify([[0.2, 0.5, 0.3]]).tolist() == [1]
    assert bayes_classify([[0.5, 0.5]]).tolist() == [0]
    eye = np.eye(4)[[2, 0, 3, 1]]
    assert bayes_classify(eye).tolist() == [2, 0, 3, 1]
    assert bayes_classify(np.empty((0, 3))).size == 0


@given(st.integers(0, 1000), st.floats(0.01, 100))
def test_bayes_scale_invariant(seed, c):
    m = np.random.default_rng(seed).dirichlet(np.ones(3), size=30)
    scaled = m * c
    np.testing.assert_array_equal(bayes_classify(scaled / scaled.sum(axis=1, keepdims=True)),
                                  bayes_classify(m))


def test_stochastic_degenerate_rows():
    rows = np.tile([1.0, 0.0], (100, 1))
    for seed in range(5):
        assert np.all(stochastic_classify(rows, seed) == 0)
    rows = np.tile([0.0, 0.0, 1.0], (100, 1))
    assert np.all(stochastic_classify(rows, 1) == 2)


def test_stochastic_rare_class_count():
    n = 10**5
    labels = stochastic_classify(np.tile([0.6, 0.38, 0.02], (n, 1)), seed=12)
    sd = np.sqrt(n * 0.02 * 0.98)
    assert abs(np.sum(labels == 2) - 2000) <= 5 * sd


def test_stochastic_deterministic():
    m = np.random.default_rng(0).dirichlet(np.ones(4), size=500)
    np.testing.assert_array_equal(stochastic_classify(m, 9), stochastic_classify(m, 9))
    assert not np.array_equal(stochastic_classify(m, 9), stochastic_classify(m, 10))


def test_stochastic_marginals_match_column_means():
    n = 20_000
    m = np.random.default_rng(5).dirichlet([2.0, 1.0, 0.3], size=n)
    labels = stochastic_classify(m, seed=3)
    freq = np.bincount(labels, minlength=3)
    mean = estimate_prior_from_predictions(m)
    # sum of independent Bernoulli draws: variance sum p(1-p)
    sd = np.sqrt((m * (1 - m)).sum(axis=0))
    assert np.all(np.abs(freq - n * mean) <= 5 * sd)
