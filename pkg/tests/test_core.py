import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from trainbias.core import (
    Dataset, DataError, Schema, balancing_weights, load_dataset, load_predictions,
    normalize_rows, prior_from_labels, save_dataset, save_predictions, validate_prob_matrix,
    load_manifest, save_manifest, parse_prior,
)
from trainbias.priors import weighted_prior


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_dataset_with_labels(tmp_path):
    f = write(tmp_path / "d.csv", "f0,f1,label\n0.1,0.2,0\n0.3,-0.1,1\n")
    ds = load_dataset(f)
    assert (ds.n, ds.dim, ds.class_count) == (2, 2, 2)
    np.testing.assert_array_equal(ds.features, [[0.1, 0.2], [0.3, -0.1]])
    np.testing.assert_array_equal(ds.labels, [0, 1])


def test_load_dataset_label_not_declared(tmp_path):
    f = write(tmp_path / "d.csv", "f0,f1,label\n0.1,0.2,0\n0.3,-0.1,1\n")
    ds = load_dataset(f, Schema(label=None))
    assert ds.labels is None
    assert ds.dim == 2


def test_load_dataset_non_numeric(tmp_path):
    f = write(tmp_path / "d.csv", "f0,f1,label\na,0.2,0\n")
    with pytest.raises(DataError, match="non-numeric"):
        load_dataset(f)


def test_load_dataset_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "missing.csv")
    f = write(tmp_path / "d.csv", "f0,label\n0.5,3\n")
    with pytest.raises(DataError, match="class_count"):
        load_dataset(f, Schema(class_count=3))
    assert load_dataset(f).class_count == 4


def test_load_dataset_weights_column(tmp_path):
    f = write(tmp_path / "d.csv", "f0,label,weight\n0.5,0,2.5\n1.5,1,1\n")
    ds = load_dataset(f, Schema(weight="weight"))
    np.testing.assert_array_equal(ds.weights, [2.5, 1.0])


@given(arrays(np.float64, st.tuples(st.integers(0, 12), st.integers(1, 4)),
              elements=st.floats(allow_nan=False, allow_infinity=False, width=64)))
def test_save_load_round_trip_is_bit_exact(tmp_path_factory, x):
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    labels = np.arange(x.shape[0]) % 3
    ds = Dataset(x, labels, None, 3)
    save_dataset(ds, path)
    back = load_dataset(path, Schema(class_count=3))
    assert back.features.shape == x.shape
    assert np.array_equal(back.features.view(np.int64), x.view(np.int64))
    np.testing.assert_array_equal(back.labels, labels)


def test_dataset_invariants():
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 2)), np.array([0, 2]), None, 2)
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 2)), None, np.array([1.0, 0.0]), 2)
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 2)), None, None, 1)


def test_prior_from_labels_examples():
    ds = Dataset(np.zeros((3, 1)), np.array([0, 0, 1]), None, 2)
    np.testing.assert_allclose(prior_from_labels(ds), [2 / 3, 1 / 3])
    ds = Dataset(np.zeros((3, 1)), np.array([0, 0, 0]), None, 3)
    np.testing.assert_array_equal(prior_from_labels(ds), [1, 0, 0])
    labels = np.repeat([0, 1, 2], [60, 38, 2])
    ds = Dataset(np.zeros((100, 1)), labels, None, 3)
    np.testing.assert_allclose(prior_from_labels(ds), [0.6, 0.38, 0.02])


def test_prior_from_labels_errors():
    with pytest.raises(DataError):
        prior_from_labels(Dataset(np.zeros((2, 1))))
    with pytest.raises(DataError):
        prior_from_labels(Dataset(np.zeros((0, 1)), np.zeros(0, dtype=int)))


@given(st.lists(st.integers(0, 3), min_size=1, max_size=50))
def test_prior_from_labels_on_simplex(labels):
    ds = Dataset(np.zeros((len(labels), 1)), np.array(labels), None, 4)
    p = prior_from_labels(ds)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1) <= 1e-12


def test_balancing_weights_examples():
    np.testing.assert_allclose(balancing_weights([0.6, 0.38, 0.02]), [1 / 0.6, 1 / 0.38, 50])
    np.testing.assert_array_equal(balancing_weights([0.5, 0.5]), [2, 2])
    eps = 1e-9
    assert balancing_weights([1 - eps, eps])[1] == pytest.approx(1 / eps)
    with pytest.raises(DataError):
        balancing_weights([1.0, 0.0])


@given(st.lists(st.integers(1, 40), min_size=2, max_size=5))
def test_balancing_then_weighted_prior_is_uniform(counts):
    labels = np.repeat(np.arange(len(counts)), counts)
    ds = Dataset(np.zeros((labels.size, 1)), labels, None, len(counts))
    w = balancing_weights(prior_from_labels(ds))[labels]
    np.testing.assert_allclose(weighted_prior(ds, w), np.full(len(counts), 1 / len(counts)),
                               atol=1e-12, rtol=0)


def test_validate_prob_matrix():
    d = validate_prob_matrix([[0.5, 0.5]])
    assert d.passed and d.max_row_deviation == 0
    d = validate_prob_matrix([[0.6, 0.6]])
    assert not d.passed and d.max_row_deviation == pytest.approx(0.2)
    assert validate_prob_matrix([[1.0, 0.0]]).passed


def test_normalize_rows_policy():
    m = np.array([[0.5, 0.5 + 5e-7]])
    out = normalize_rows(m)
    assert abs(out.sum() - 1) < 1e-15
    with pytest.raises(DataError):
        normalize_rows([[0.5, 0.51]])


def test_prediction_catalog_round_trip(tmp_path):
    p = np.array([[0.25, 0.75], [1.0, 0.0]])
    save_predictions(tmp_path / "p.csv", p, labels=[1, 0])
    back, labels = load_predictions(tmp_path / "p.csv")
    np.testing.assert_array_equal(back, p)
    np.testing.assert_array_equal(labels, [1, 0])


def test_manifest_round_trip(tmp_path):
    save_manifest(tmp_path / "m.json", 3, ["star", "galaxy", "qso"])
    assert load_manifest(tmp_path / "m.json") == {"class_count": 3,
                                                  "class_names": ["star", "galaxy", "qso"]}


def test_parse_prior():
    np.testing.assert_allclose(parse_prior("0.6,0.38,0.02"), [0.6, 0.38, 0.02])
    np.testing.assert_allclose(parse_prior("[0.5, 0.5]"), [0.5, 0.5])
    with pytest.raises(DataError):
        parse_prior("0.5,0.6")
