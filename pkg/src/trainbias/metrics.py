"""Metrics predicted from model probabilities, observed metrics, overshoot,
and mean Kullback-Leibler divergence by true class.

Undefined ratios (zero denominators) are NaN in arrays and ``None`` in the
JSON form; they are never reported as 0 or 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DataError

METRICS = ("completeness", "reliability", "f1")
KL_FLOOR = 1e-12
Z_FLAG = 3.0


@dataclass(frozen=True)
class ExpectedCounts:
    etp: np.ndarray
    efp: np.ndarray
    efn: np.ndarray
    vtp: np.ndarray
    vfp: np.ndarray
    vfn: np.ndarray
    n_pos: np.ndarray

    @property
    def class_count(self) -> int:
        return self.etp.size


def _check_assigned(probs, assigned):
    probs = np.asarray(probs, dtype=float)
    assigned = np.asarray(assigned, dtype=np.int64)
    if probs.ndim != 2:
        raise DataError("probabilities must be an N x K matrix")
    if assigned.shape != (probs.shape[0],):
        raise DataError(f"{assigned.size} assignments for {probs.shape[0]} probability rows")
    if assigned.size and (assigned.min() < 0 or assigned.max() >= probs.shape[1]):
        raise DataError("assigned labels out of range")
    return probs, assigned


def expected_counts(probs, assigned) -> ExpectedCounts:
    probs, assigned = _check_assigned(probs, assigned)
    n, k = probs.shape
    onehot = np.zeros((n, k))
    onehot[np.arange(n), assigned] = 1.0
    var = probs * (1.0 - probs)
    etp = (onehot * probs).sum(axis=0)
    n_pos = np.bincount(assigned, minlength=k)
    return ExpectedCounts(
        etp=etp,
        efp=n_pos - etp,
        efn=((1.0 - onehot) * probs).sum(axis=0),
        vtp=(onehot * var).sum(axis=0),
        vfp=(onehot * var).sum(axis=0),
        vfn=((1.0 - onehot) * var).sum(axis=0),
        n_pos=n_pos,
    )


def _div(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    out = np.full(np.broadcast(num, den).shape, np.nan)
    np.divide(num, den, out=out, where=den > 0)
    return out


@dataclass(frozen=True)
class PredictedMetrics:
    value: dict[str, np.ndarray]
    variance: dict[str, np.ndarray]


def predicted_metrics(counts: ExpectedCounts, variance_form: str = "derived") -> PredictedMetrics:
    """Model-predicted completeness/reliability/F1 and propagated variances.

    ``variance_form="printed"`` uses ``(eTP + eFP)^4`` as the completeness
    variance denominator instead of ``(eTP + eFN)^4``, for comparison only.
    """
    c = counts
    np_ = c.n_pos.astype(float)
    recall_den = c.etp + c.efn
    f1_den = np_ + c.etp + c.efn
    values = {
        "completeness": _div(c.etp, recall_den),
        "reliability": _div(c.etp, np_),
        "f1": _div(2.0 * c.etp, f1_den),
    }
    if variance_form == "derived":
        c_den = recall_den
    elif variance_form == "printed":
        c_den = c.etp + c.efp
    else:
        raise ValueError(f"unknown variance form {variance_form!r}")
    variances = {
        "completeness": _div(c.vtp * c.efn**2 + c.vfn * c.etp**2, c_den**4),
        "reliability": _div(c.vtp, np_**2),
        "f1": _div(4.0 * (c.vtp * (np_ + c.efn) ** 2 + c.vfn * c.etp**2), f1_den**4),
    }
    for name in METRICS:
        variances[name][np.isnan(values[name])] = np.nan
    return PredictedMetrics(values, variances)


def confusion_counts(assigned, truth, class_count: int | None = None):
    assigned = np.asarray(assigned, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if assigned.shape != truth.shape:
        raise DataError(f"{assigned.size} assignments vs {truth.size} true labels")
    k = class_count or int(max(assigned.max(initial=-1), truth.max(initial=-1)) + 1)
    tp = np.bincount(truth[assigned == truth], minlength=k).astype(float)
    n_pos = np.bincount(assigned, minlength=k).astype(float)
    n_true = np.bincount(truth, minlength=k).astype(float)
    return tp, n_pos - tp, n_true - tp


def observed_metrics(assigned, truth, class_count: int | None = None) -> dict[str, np.ndarray]:
    tp, fp, fn = confusion_counts(assigned, truth, class_count)
    return {
        "completeness": _div(tp, tp + fn),
        "reliability": _div(tp, tp + fp),
        "f1": _div(2.0 * tp, 2.0 * tp + fp + fn),
    }


@dataclass(frozen=True)
class MetricReport:
    counts: ExpectedCounts
    predicted: dict[str, np.ndarray]
    variance: dict[str, np.ndarray]
    observed: dict[str, np.ndarray]
    overshoot: dict[str, np.ndarray]
    z: dict[str, np.ndarray]

    @property
    def class_count(self) -> int:
        return self.counts.class_count

    def inconsistent(self, threshold: float = Z_FLAG) -> dict[str, np.ndarray]:
        """Per metric, True where |z| exceeds ``threshold``."""
        return {m: np.nan_to_num(np.abs(self.z[m]), nan=0.0) > threshold for m in METRICS}

    def max_abs_z(self) -> float:
        zs = np.concatenate([self.z[m] for m in METRICS])
        zs = zs[~np.isnan(zs)]
        return float(np.max(np.abs(zs))) if zs.size else 0.0

    def to_dict(self) -> dict:
        def clean(a):
            return [None if not np.isfinite(v) else float(v) for v in np.asarray(a, dtype=float)]

        c = self.counts
        return {
            "class_count": self.class_count,
            "counts": {name: clean(getattr(c, name))
                       for name in ("etp", "efp", "efn", "vtp", "vfp", "vfn", "n_pos")},
            "predicted": {m: clean(self.predicted[m]) for m in METRICS},
            "variance": {m: clean(self.variance[m]) for m in METRICS},
            "observed": {m: clean(self.observed[m]) for m in METRICS},
            "overshoot": {m: clean(self.overshoot[m]) for m in METRICS},
            "z": {m: clean(self.z[m]) for m in METRICS},
            "inconsistent": {m: self.inconsistent()[m].tolist() for m in METRICS},
        }


def overshoot(probs, assigned, truth, variance_form: str = "derived") -> MetricReport:
    """Observed minus predicted metrics, with z-scores from the predicted variances."""
    probs, assigned = _check_assigned(probs, assigned)
    truth = np.asarray(truth, dtype=np.int64)
    k = probs.shape[1]
    if truth.shape != assigned.shape:
        raise DataError("truth and assignments differ in length")
    if truth.size and truth.max() >= k:
        raise DataError(f"true label {truth.max()} outside the {k} probability columns")
    counts = expected_counts(probs, assigned)
    pred = predicted_metrics(counts, variance_form)
    obs = observed_metrics(assigned, truth, k)
    over, z = {}, {}
    for m in METRICS:
        over[m] = obs[m] - pred.value[m]
        sd = np.sqrt(pred.variance[m])
        zm = np.full(k, np.nan)
        np.divide(over[m], sd, out=zm, where=sd > 0)
        exact = (sd == 0) & (over[m] == 0)
        zm[exact] = 0.0
        off = (sd == 0) & np.isfinite(over[m]) & (over[m] != 0)
        zm[off] = np.sign(over[m][off]) * np.inf
        z[m] = zm
    return MetricReport(counts, pred.value, pred.variance, obs, over, z)


@dataclass(frozen=True)
class KlReport:
    per_class: np.ndarray
    overall: float
    clamped: int

    def to_dict(self) -> dict:
        return {
            "per_class": [None if np.isnan(v) else float(v) for v in self.per_class],
            "overall": self.overall,
            "clamped_entries": self.clamped,
        }


def kl_rows(true_probs, model_probs) -> tuple[np.ndarray, int]:
    """Per-row ``sum_i P_true ln(P_true / P_model)`` with model entries floored at 1e-12."""
    p = np.asarray(true_probs, dtype=float)
    q = np.asarray(model_probs, dtype=float)
    if p.shape != q.shape:
        raise DataError(f"shape mismatch {p.shape} vs {q.shape}")
    clamped = int(np.count_nonzero((q < KL_FLOOR) & (p > 0)))
    q = np.maximum(q, KL_FLOOR)
    terms = np.zeros_like(p)
    pos = p > 0
    terms[pos] = p[pos] * np.log(p[pos] / q[pos])
    return terms.sum(axis=1), clamped


def mean_kl_by_class(true_probs, model_probs, truth) -> KlReport:
    d, clamped = kl_rows(true_probs, model_probs)
    truth = np.asarray(truth, dtype=np.int64)
    if truth.shape != d.shape:
        raise DataError("truth length differs from the number of rows")
    k = np.asarray(true_probs).shape[1]
    sums = np.bincount(truth, weights=d, minlength=k)
    counts = np.bincount(truth, minlength=k)
    per_class = _div(sums, counts)
    overall = float(d.mean()) if d.size else float("nan")
    return KlReport(per_class, overall, clamped)
