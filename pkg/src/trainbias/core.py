"""Shared data types, CSV/JSON ingestion, and label-derived priors."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ROW_SUM_TOL = 1e-9
RENORM_LIMIT = 1e-6
PRIOR_SUM_TOL = 1e-12


class DataError(ValueError):
    """Raised for malformed datasets, priors or probability matrices."""


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray | None = None
    weights: np.ndarray | None = None
    class_count: int = 2

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if x.size else x.reshape(0, 1)
        if x.ndim != 2 or x.shape[1] < 1:
            raise DataError(f"features must be N x d with d >= 1, got shape {x.shape}")
        if self.class_count < 2:
            raise DataError(f"class_count must be >= 2, got {self.class_count}")
        n = x.shape[0]
        y = None
        if self.labels is not None:
            y = np.asarray(self.labels)
            if y.shape != (n,):
                raise DataError(f"labels must have length {n}, got shape {y.shape}")
            if n and (y.min() < 0 or y.max() >= self.class_count):
                raise DataError(f"labels must lie in [0, {self.class_count})")
            y = y.astype(np.int64)
        w = None
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (n,):
                raise DataError(f"weights must have length {n}, got shape {w.shape}")
            if n and not np.all(w > 0):
                raise DataError("weights must be strictly positive")
        for arr in (x, y, w):
            if arr is not None:
                arr.flags.writeable = False
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, index) -> "Dataset":
        return Dataset(
            self.features[index],
            None if self.labels is None else self.labels[index],
            None if self.weights is None else self.weights[index],
            self.class_count,
        )

    def with_weights(self, weights) -> "Dataset":
        return Dataset(self.features, self.labels, weights, self.class_count)


@dataclass(frozen=True)
class Schema:
    """Column roles for :func:`load_dataset`.

    ``features=None`` selects every column named ``f<k>``.
    """

    features: list[str] | None = None
    label: str | None = "label"
    weight: str | None = None
    class_count: int | None = None


@dataclass
class ProbDiagnostics:
    passed: bool
    max_row_deviation: float
    min_entry: float
    max_entry: float
    notes: list[str] = field(default_factory=list)


def _parse_float(cell: str, row: int, col: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"non-numeric cell {cell!r} at row {row}, column {col!r}") from None
    if not math.isfinite(value):
        raise DataError(f"non-finite cell {cell!r} at row {row}, column {col!r}")
    return value


def _parse_label(cell: str, row: int, col: str) -> int:
    try:
        value = int(cell)
    except ValueError:
        raise DataError(f"label {cell!r} at row {row} is not an integer") from None
    if value < 0:
        raise DataError(f"negative label {value} at row {row}")
    return value


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        rows = [r for r in reader if r]
    return header, rows


def _feature_columns(header: list[str], prefix: str) -> list[str]:
    cols = [h for h in header if h.startswith(prefix) and h[len(prefix):].isdigit()]
    return sorted(cols, key=lambda h: int(h[len(prefix):]))


def load_dataset(path, schema: Schema | None = None) -> Dataset:
    schema = schema or Schema()
    header, rows = _read_rows(path)
    fcols = schema.features or _feature_columns(header, "f")
    if not fcols:
        raise DataError(f"{path}: no feature columns")
    missing = [c for c in fcols if c not in header]
    if missing:
        raise DataError(f"{path}: missing feature columns {missing}")
    label_col = schema.label if schema.label in header else None
    if schema.label is not None and label_col is None and schema.features is not None:
        raise DataError(f"{path}: missing label column {schema.label!r}")
    weight_col = schema.weight if schema.weight in header else None
    if schema.weight is not None and weight_col is None:
        raise DataError(f"{path}: missing weight column {schema.weight!r}")

    fidx = [header.index(c) for c in fcols]
    x = np.empty((len(rows), len(fcols)))
    labels = [] if label_col else None
    weights = [] if weight_col else None
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
        for k, j in enumerate(fidx):
            x[r, k] = _parse_float(row[j], r, fcols[k])
        if labels is not None:
            labels.append(_parse_label(row[header.index(label_col)], r, label_col))
        if weights is not None:
            weights.append(_parse_float(row[header.index(weight_col)], r, weight_col))

    y = None if labels is None else np.array(labels, dtype=np.int64)
    if schema.class_count is not None:
        k = schema.class_count
        if y is not None and y.size and y.max() >= k:
            raise DataError(f"{path}: label {y.max()} >= declared class_count {k}")
    elif y is not None and y.size:
        k = max(2, int(y.max()) + 1)
    else:
        k = 2
    w = None if weights is None else np.array(weights)
    return Dataset(x, y, w, k)


def _fmt(value: float) -> str:
    return repr(float(value))


def save_dataset(ds: Dataset, path) -> None:
    """Write ``ds`` as CSV; floats use shortest round-trip repr (<= 17 digits)."""
    header = [f"f{k}" for k in range(ds.dim)]
    if ds.labels is not None:
        header.append("label")
    if ds.weights is not None:
        header.append("weight")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for n in range(ds.n):
            row = [_fmt(v) for v in ds.features[n]]
            if ds.labels is not None:
                row.append(str(int(ds.labels[n])))
            if ds.weights is not None:
                row.append(_fmt(ds.weights[n]))
            writer.writerow(row)


def load_manifest(path) -> dict:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    k = int(data["class_count"])
    names = data.get("class_names", [str(i) for i in range(k)])
    if len(names) != k:
        raise DataError(f"manifest lists {len(names)} names for {k} classes")
    return {"class_count": k, "class_names": list(names)}


def save_manifest(path, class_count: int, class_names=None) -> None:
    names = list(class_names) if class_names is not None else [str(i) for i in range(class_count)]
    Path(path).write_text(json.dumps({"class_count": class_count, "class_names": names}, indent=2))


def load_predictions(path, class_count: int | None = None) -> tuple[np.ndarray, np.ndarray | None]:
    """Read a prediction catalog (columns ``p0..p{K-1}``, optional ``label``).

    Rows off the simplex by less than 1e-6 are renormalized; worse rows raise.
    """
    header, rows = _read_rows(path)
    pcols = _feature_columns(header, "p")
    if not pcols:
        raise DataError(f"{path}: no probability columns p0..")
    if class_count is not None and len(pcols) != class_count:
        raise DataError(f"{path}: {len(pcols)} probability columns, expected {class_count}")
    pidx = [header.index(c) for c in pcols]
    lidx = header.index("label") if "label" in header else None
    probs = np.empty((len(rows), len(pcols)))
    labels = [] if lidx is not None else None
    for r, row in enumerate(rows):
        for k, j in enumerate(pidx):
            probs[r, k] = _parse_float(row[j], r, pcols[k])
        if labels is not None:
            labels.append(_parse_label(row[lidx], r, "label"))
    probs = normalize_rows(probs)
    y = None if labels is None else np.array(labels, dtype=np.int64)
    return probs, y


def save_predictions(path, probs, labels=None) -> None:
    probs = np.asarray(probs, dtype=float)
    k = probs.shape[1] if probs.ndim == 2 else 0
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"p{i}" for i in range(k)] + (["label"] if labels is not None else []))
        for n in range(probs.shape[0]):
            row = [_fmt(v) for v in probs[n]]
            if labels is not None:
                row.append(str(int(labels[n])))
            writer.writerow(row)


def load_labels(path) -> np.ndarray:
    header, rows = _read_rows(path)
    col = "label" if "label" in header else header[0]
    j = header.index(col)
    return np.array([_parse_label(r[j], n, col) for n, r in enumerate(rows)], dtype=np.int64)


def save_labels(path, labels) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write("label\n")
        for v in np.asarray(labels):
            fh.write(f"{int(v)}\n")


def validate_prob_matrix(m, tol: float = ROW_SUM_TOL) -> ProbDiagnostics:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        return ProbDiagnostics(False, math.inf, math.nan, math.nan, ["not a 2-d matrix"])
    if m.size == 0:
        return ProbDiagnostics(True, 0.0, math.nan, math.nan)
    dev = float(np.max(np.abs(m.sum(axis=1) - 1.0)))
    lo, hi = float(m.min()), float(m.max())
    notes = []
    if not np.all(np.isfinite(m)):
        notes.append("non-finite entries")
    if lo < 0.0:
        notes.append("negative entries")
    if hi > 1.0:
        notes.append("entries above 1")
    if dev > tol:
        notes.append(f"row sums deviate from 1 by up to {dev:.3g}")
    return ProbDiagnostics(not notes, dev, lo, hi, notes)


def normalize_rows(m) -> np.ndarray:
    """Renormalize rows that are within 1e-6 of summing to 1; raise otherwise."""
    m = np.asarray(m, dtype=float)
    diag = validate_prob_matrix(m, RENORM_LIMIT)
    if not diag.passed:
        raise DataError("probability matrix rejected: " + "; ".join(diag.notes))
    if diag.max_row_deviation > ROW_SUM_TOL:
        m = m / m.sum(axis=1, keepdims=True)
    return m


def check_prior(p, name: str = "prior") -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size < 1:
        raise DataError(f"{name} must be a non-empty vector")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise DataError(f"{name} has negative or non-finite entries: {p}")
    if abs(p.sum() - 1.0) > PRIOR_SUM_TOL:
        raise DataError(f"{name} sums to {p.sum()!r}, not 1")
    return p


def parse_prior(text: str) -> np.ndarray:
    """Parse ``"0.6,0.38,0.02"`` or a JSON list; renormalizes rounding residue."""
    text = text.strip()
    if text.startswith("["):
        values = json.loads(text)
    else:
        values = [float(v) for v in text.split(",") if v.strip()]
    p = np.asarray(values, dtype=float)
    if np.any(p < 0) or not abs(p.sum() - 1.0) < RENORM_LIMIT:
        raise DataError(f"not a prior: {text!r}")
    return p / p.sum()


def prior_from_labels(ds: Dataset) -> np.ndarray:
    if ds.labels is None:
        raise DataError("dataset has no labels")
    if ds.n == 0:
        raise DataError("empty dataset")
    counts = np.bincount(ds.labels, minlength=ds.class_count).astype(float)
    return counts / ds.n


def balancing_weights(prior) -> np.ndarray:
    """Per-class weights ``1/P(i)`` that equalize the effective class composition."""
    prior = np.asarray(prior, dtype=float)
    if np.any(prior <= 0):
        raise DataError(f"balancing weights undefined for empty classes: prior {prior}")
    return 1.0 / prior


def example_weights(ds: Dataset, class_weights) -> np.ndarray:
    """Expand per-class weights onto the examples of ``ds``."""
    if ds.labels is None:
        raise DataError("dataset has no labels")
    return np.asarray(class_weights, dtype=float)[ds.labels]
