import numpy as np
import pytest
from hypothesis import given, strategies as st

from trainbias.classify import stochastic_classify
from trainbias.core import DataError
from trainbias.metrics import (
    METRICS, ExpectedCounts, expected_counts, kl_rows, mean_kl_by_class, observed_metrics,
    overshoot, predicted_metrics,
)
from trainbias.simgen import default_spec, oracle_matrix, sample_dataset


def test_expected_counts_example():
    probs = np.array([[0.9, 0.1], [0.7, 0.3]])
    c = expected_counts(probs, [0, 0])
    assert c.etp[0] == pytest.approx(1.6)
    assert c.efp[0] == pytest.approx(0.4)
    assert c.vtp[0] == pytest.approx(0.09 + 0.21)
    assert c.efn[1] == pytest.approx(0.4)
    assert c.n_pos.tolist() == [2, 0]


def test_expected_counts_one_hot_and_empty():
    probs = np.eye(3)[[0, 2, 1, 1]]
    c = expected_counts(probs, probs.argmax(axis=1))
    assert np.all(c.efp == 0) and np.all(c.efn == 0)
    assert np.all(c.vtp == 0) and np.all(c.vfn == 0)
    e = expected_counts(np.empty((0, 3)), np.empty(0, dtype=int))
    assert np.all(e.etp == 0) and np.all(e.n_pos == 0)
    with pytest.raises(DataError):
        expected_counts(probs, [0, 1])


@given(st.integers(0, 10_000), st.integers(1, 60))
def test_count_conservation(seed, n):
    rng = np.random.default_rng(seed)
    probs = rng.dirichlet(np.ones(3), size=n)
    assigned = rng.integers(0, 3, n)
    c = expected_counts(probs, assigned)
    np.testing.assert_allclose(c.etp + c.efp, c.n_pos, atol=1e-12)
    assert c.n_pos.sum() == n
    assert c.etp.sum() + c.efn.sum() == pytest.approx(n)


def test_predicted_metrics_from_counts():
    c = ExpectedCounts(*(np.array([v]) for v in (1.6, 0.4, 0.5, 0.3, 0.3, 0.2)),
                       n_pos=np.array([2]))
    pm = predicted_metrics(c)
    assert pm.value["completeness"][0] == pytest.approx(1.6 / 2.1)
    assert pm.value["reliability"][0] == pytest.approx(0.8)
    assert pm.value["f1"][0] == pytest.approx(3.2 / 4.1)
    assert pm.value["completeness"][0] == pytest.approx(0.7619, abs=1e-4)
    assert pm.value["f1"][0] == pytest.approx(0.7805, abs=1e-4)


def test_predicted_metrics_one_hot_and_absent():
    probs = np.eye(2)[[0, 1, 1]]
    pm = predicted_metrics(expected_counts(probs, [0, 1, 1]))
    for m in METRICS:
        np.testing.assert_array_equal(pm.value[m], [1, 1])
        np.testing.assert_array_equal(pm.variance[m], [0, 0])
    pm = predicted_metrics(expected_counts(np.array([[0.6, 0.4]]), [0]))
    assert np.isnan(pm.value["reliability"][1])
    assert np.isnan(pm.variance["reliability"][1])


def _delta_method_variances(c):
    """Independent oracle: numerical gradients of each metric as a function of
    (eTP, eFN) with NP held fixed, combined with the independent variances."""
    def metrics_of(etp, efn, np_):
        return {"completeness": etp / (etp + efn), "reliability": etp / np_,
                "f1": 2 * etp / (np_ + etp + efn)}

    out = {m: [] for m in METRICS}
    for i in range(c.etp.size):
        h = 1e-6
        base = (c.etp[i], c.efn[i], float(c.n_pos[i]))
        up_tp = metrics_of(base[0] + h, base[1], base[2])
        dn_tp = metrics_of(base[0] - h, base[1], base[2])
        up_fn = metrics_of(base[0], base[1] + h, base[2])
        dn_fn = metrics_of(base[0], base[1] - h, base[2])
        for m in METRICS:
            g_tp = (up_tp[m] - dn_tp[m]) / (2 * h)
            g_fn = (up_fn[m] - dn_fn[m]) / (2 * h)
            out[m].append(g_tp**2 * c.vtp[i] + g_fn**2 * c.vfn[i])
    return {m: np.array(v) for m, v in out.items()}


def test_variances_match_delta_method():
    rng = np.random.default_rng(8)
    probs = rng.dirichlet([2.0, 1.0, 0.5], size=400)
    c = expected_counts(probs, stochastic_classify(probs, 1))
    pm = predicted_metrics(c)
    oracle = _delta_method_variances(c)
    for m in METRICS:
        np.testing.assert_allclose(pm.variance[m], oracle[m], rtol=1e-5)


def test_printed_variance_form_differs():
    rng = np.random.default_rng(9)
    probs = rng.dirichlet([2.0, 1.0, 0.5], size=300)
    c = expected_counts(probs, stochastic_classify(probs, 2))
    derived = predicted_metrics(c).variance["completeness"]
    printed = predicted_metrics(c, variance_form="printed").variance["completeness"]
    ratio = ((c.etp + c.efn) / (c.etp + c.efp)) ** 4
    np.testing.assert_allclose(printed, derived * ratio, rtol=1e-12)


def test_observed_metrics_examples():
    obs = observed_metrics([0, 1, 1, 1], [0, 0, 1, 1])
    assert obs["completeness"][1] == 1.0
    assert obs["reliability"][1] == pytest.approx(2 / 3)
    assert obs["f1"][1] == pytest.approx(0.8)
    same = observed_metrics([0, 2, 1], [0, 2, 1])
    for m in METRICS:
        np.testing.assert_array_equal(same[m], 1.0)
    absent = observed_metrics([0, 0], [0, 0], class_count=2)
    assert all(np.isnan(absent[m][1]) for m in METRICS)


def test_overshoot_exact_agreement():
    probs = np.eye(3)[[0, 1, 2, 2]]
    rep = overshoot(probs, [0, 1, 2, 2], [0, 1, 2, 2])
    for m in METRICS:
        np.testing.assert_array_equal(rep.overshoot[m], 0.0)
        np.testing.assert_array_equal(rep.z[m], 0.0)


def test_overshoot_oracle_consistent_and_squared_inconsistent():
    cfg = default_spec(n_points=20_000, seed=21)
    ds = sample_dataset(cfg)
    probs = oracle_matrix(cfg, ds)
    rep = overshoot(probs, stochastic_classify(probs, 5), ds.labels)
    assert rep.max_abs_z() <= 3

    sq = probs**2
    sq /= sq.sum(axis=1, keepdims=True)
    bad = overshoot(sq, stochastic_classify(sq, 5), ds.labels)
    assert bad.max_abs_z() > 3
    assert any(bad.inconsistent()[m].any() for m in METRICS)


def test_monte_carlo_completeness_variance():
    cfg = default_spec(n_points=5000, seed=33)
    ds = sample_dataset(cfg)
    probs = oracle_matrix(cfg, ds)
    assigned = stochastic_classify(probs, 0)
    predicted = predicted_metrics(expected_counts(probs, assigned)).variance["completeness"]
    # hold the assignments fixed and redraw the truth from the probabilities
    draws = np.array([observed_metrics(assigned, stochastic_classify(probs, 1000 + s), 3)
                      ["completeness"] for s in range(200)])
    ratio = draws.var(axis=0, ddof=1) / predicted
    assert np.all((ratio > 1 / 1.5) & (ratio < 1.5)), ratio


def test_kl_examples():
    p = np.array([[1.0, 0.0]] * 3)
    q = np.array([[0.5, 0.5]] * 3)
    rep = mean_kl_by_class(p, q, [0, 0, 0])
    assert rep.per_class[0] == pytest.approx(np.log(2))
    assert np.isnan(rep.per_class[1])
    same = mean_kl_by_class(q, q, [0, 1, 1])
    np.testing.assert_array_equal(same.per_class, [0.0, 0.0])


def test_kl_nonnegative_fuzz():
    rng = np.random.default_rng(1)
    p = rng.dirichlet(np.full(4, 0.5), size=10_000)
    q = rng.dirichlet(np.full(4, 0.5), size=10_000)
    d, _ = kl_rows(p, q)
    assert np.all(d >= 0)


def test_kl_padding_class_and_clamp():
    rng = np.random.default_rng(2)
    p = rng.dirichlet(np.ones(3), size=50)
    q = rng.dirichlet(np.ones(3), size=50)
    labels = rng.integers(0, 3, 50)
    pad = np.zeros((50, 1))
    a = mean_kl_by_class(p, q, labels)
    b = mean_kl_by_class(np.hstack([p, pad]), np.hstack([q, pad]), labels)
    np.testing.assert_array_equal(a.per_class, b.per_class[:3])
    clamp = mean_kl_by_class([[0.5, 0.5]], [[1.0, 0.0]], [0])
    assert clamp.clamped == 1
    assert clamp.per_class[0] == pytest.approx(0.5 * np.log(0.5) + 0.5 * np.log(0.5 / 1e-12))
