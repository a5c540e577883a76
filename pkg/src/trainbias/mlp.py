"""Feed-forward classifier: range scaling, quadratic augmentation, ReLU MLP,
sequential log-odds head, full-batch Adam with weight decay and restarts.

Plain numpy with hand-written backpropagation; float64 unless a training
config asks for float32 hidden-layer products.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.special import expit, log_expit

from .core import Dataset, DataError

log = logging.getLogger(__name__)

CONVENTIONS = ("interpolation", "mathematician")


@dataclass(frozen=True)
class Scaler:
    lo: np.ndarray
    hi: np.ndarray

    def transform(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        width = self.hi - self.lo
        safe = np.where(width > 0, width, 1.0)
        out = 2.0 * (x - self.lo) / safe - 1.0
        return np.where(width > 0, out, 0.0)


def fit_scaler_and_scale(train_features) -> tuple[Scaler, np.ndarray]:
    x = np.atleast_2d(np.asarray(train_features, dtype=float))
    if x.shape[0] < 1:
        raise DataError("cannot fit a scaler to zero rows")
    scaler = Scaler(x.min(axis=0), x.max(axis=0))
    return scaler, scaler.transform(x)


@dataclass(frozen=True)
class AugmentSpec:
    convention: str
    base_dim: int

    def __post_init__(self):
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown augmentation convention {self.convention!r}")
        if self.base_dim < 1:
            raise ValueError("base_dim must be >= 1")

    @cached_property
    def exponents(self) -> np.ndarray:
        """Exponent tuples in ascending lexicographic order, constant term excluded."""
        tuples = [t for t in itertools.product(range(3), repeat=self.base_dim) if any(t)]
        if self.convention == "mathematician":
            tuples = [t for t in tuples if sum(t) <= 2]
        return np.array(tuples, dtype=np.int64).reshape(-1, self.base_dim)

    @property
    def output_dim(self) -> int:
        d = self.base_dim
        return 3**d - 1 if self.convention == "interpolation" else d * (d + 3) // 2


def augment(x, spec: AugmentSpec) -> np.ndarray:
    """Second-order monomials of ``x`` (a vector or an N x d matrix)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[1] != spec.base_dim:
        raise DataError(f"expected {spec.base_dim} features, got {x2.shape[1]}")
    powers = np.stack([np.ones_like(x2), x2, x2 * x2])  # (3, N, d)
    out = np.ones((x2.shape[0], len(spec.exponents)))
    for k in range(spec.base_dim):
        out *= powers[spec.exponents[:, k], :, k].T
    return out[0] if single else out


def head_offsets(class_count: int) -> np.ndarray:
    return np.log(class_count - 1 - np.arange(class_count - 1, dtype=float))


def parameter_count(base_dim: int, convention: str, hidden, class_count: int) -> int:
    widths = [AugmentSpec(convention, base_dim).output_dim, *hidden, class_count - 1]
    return sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))


@dataclass(frozen=True)
class TrainConfig:
    hidden_sizes: tuple[int, ...] = (32,)
    learning_rate: float = 2e-3
    weight_decay: float = 1e-4
    max_iters: int = 25_000
    loss_tol: float = 1e-8
    restarts: int = 5
    seed: int = 0
    convention: str = "interpolation"
    precision: str = "float64"

    def __post_init__(self):
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise ValueError(f"hidden sizes must be positive: {self.hidden_sizes}")
        if self.learning_rate <= 0 or self.weight_decay < 0 or self.loss_tol <= 0:
            raise ValueError("learning rate and tolerance must be positive, weight decay >= 0")
        if self.max_iters < 1 or self.restarts < 1:
            raise ValueError("max_iters and restarts must be >= 1")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown augmentation convention {self.convention!r}")
        if self.precision not in ("float64", "float32"):
            raise ValueError(f"precision must be float64 or float32, got {self.precision!r}")


@dataclass
class MlpModel:
    scaler: Scaler
    augment: AugmentSpec
    layers: list[tuple[np.ndarray, np.ndarray]]
    class_count: int
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        width = self.augment.output_dim
        for w, b in self.layers:
            if w.shape != (width, b.shape[0]):
                raise DataError(f"layer shape {w.shape} does not follow width {width}")
            width = b.shape[0]
        if width != self.class_count - 1:
            raise DataError(f"output width {width} != class_count - 1")

    @property
    def head_offsets(self) -> np.ndarray:
        return head_offsets(self.class_count)

    @property
    def widths(self) -> list[int]:
        return [self.augment.output_dim] + [b.shape[0] for _, b in self.layers]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in self.layers)

    def flat_params(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in self.layers])


def _layer_shapes(widths):
    return [(a, b) for a, b in zip(widths[:-1], widths[1:])]


def _unflatten(theta: np.ndarray, widths) -> list[tuple[np.ndarray, np.ndarray]]:
    layers, pos = [], 0
    for a, b in _layer_shapes(widths):
        w = theta[pos:pos + a * b].reshape(a, b)
        pos += a * b
        layers.append((w, theta[pos:pos + b]))
        pos += b
    return layers


def zero_model(base_dim: int, class_count: int, hidden=(32,), convention="interpolation",
               scaler: Scaler | None = None) -> MlpModel:
    spec = AugmentSpec(convention, base_dim)
    widths = [spec.output_dim, *hidden, class_count - 1]
    theta = np.zeros(sum(a * b + b for a, b in _layer_shapes(widths)))
    scaler = scaler or Scaler(-np.ones(base_dim), np.ones(base_dim))
    return MlpModel(scaler, spec, _unflatten(theta, widths), class_count)


def _network(layers, xa: np.ndarray) -> np.ndarray:
    a = xa
    for l, (w, b) in enumerate(layers):
        a = a @ w + b
        if l < len(layers) - 1:
            a = np.maximum(a, 0.0)
    return a


def forward(model: MlpModel, x) -> np.ndarray:
    """Raw network outputs (log-odds plus offsets) for a vector or matrix of raw features."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[1] != model.augment.base_dim:
        raise DataError(f"expected {model.augment.base_dim} features, got {x2.shape[1]}")
    y = _network(model.layers, augment(model.scaler.transform(x2), model.augment))
    return y[0] if single else y


def log_probs_from_logits(y, offsets) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    z = y - offsets
    stay = log_expit(-z)  # ln(1 - sigma(z))
    before = np.concatenate([np.zeros(z.shape[:-1] + (1,)), np.cumsum(stay, axis=-1)], axis=-1)
    head = np.concatenate([log_expit(z), np.zeros(z.shape[:-1] + (1,))], axis=-1)
    return head + before


def logits_to_probs(y, offsets=None) -> np.ndarray:
    """Sequential log-odds head; the last class takes the complement so rows sum to 1."""
    y = np.asarray(y, dtype=float)
    if offsets is None:
        offsets = head_offsets(y.shape[-1] + 1)
    p = np.exp(log_probs_from_logits(y, offsets))
    p[..., -1] = np.maximum(1.0 - p[..., :-1].sum(axis=-1), 0.0)
    return p


def logits_to_probs_softmax(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    e = np.exp(y - y.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _softplus(u: np.ndarray) -> np.ndarray:
    return np.maximum(u, 0.0) + np.log1p(np.exp(-np.abs(u)))


class _Objective:
    """Weighted mean cross-entropy plus ``weight_decay/(2 N_p) * |theta|^2``.

    Hidden-layer buffers are allocated once; ``dtype`` sets the precision of
    the hidden-layer matrix products (the head and the loss stay float64).
    """

    def __init__(self, widths, xa, labels, weights, weight_decay, class_count,
                 dtype=np.float64):
        self.widths = list(widths)
        self.dtype = np.dtype(dtype)
        self.xa = np.ascontiguousarray(xa, dtype=self.dtype)
        self.weight_decay = weight_decay
        self.offsets = head_offsets(class_count)
        n = self.xa.shape[0]
        self.wnorm = np.asarray(weights, dtype=float) / np.sum(weights)
        # per output k: +1 if k < label (class passed over), -1 if k == label, else 0
        k_idx = np.arange(class_count - 1)
        self.sign = (np.where(k_idx[None, :] < labels[:, None], 1.0, 0.0)
                     - np.where(k_idx[None, :] == labels[:, None], 1.0, 0.0))
        self.ones = np.ones(n, dtype=self.dtype)
        self.hidden = [np.empty((n, w), dtype=self.dtype) for w in self.widths[1:-1]]
        self.delta = [np.empty((n, w), dtype=self.dtype) for w in self.widths[1:-1]]

    def __call__(self, theta: np.ndarray, need_grad: bool = True):
        layers = _unflatten(theta, self.widths)
        acts = [self.xa]
        a = self.xa
        for l, (w, b) in enumerate(layers[:-1]):
            h = self.hidden[l]
            np.matmul(a, w.astype(self.dtype, copy=False), out=h)
            h += b.astype(self.dtype, copy=False)
            np.maximum(h, 0.0, out=h)
            acts.append(h)
            a = h
        w_out, b_out = layers[-1]
        y = np.asarray(a @ w_out.astype(self.dtype, copy=False), dtype=float) + b_out
        u = self.sign * (y - self.offsets)
        nll = (np.abs(self.sign) * _softplus(u)).sum(axis=1)
        value = float(self.wnorm @ nll
                      + 0.5 * self.weight_decay / theta.size * (theta @ theta))
        if not need_grad:
            return value, None

        d = self.sign * expit(u) * self.wnorm[:, None]
        grads = []
        for l in range(len(layers) - 1, -1, -1):
            w, _ = layers[l]
            grads.append((np.asarray(acts[l].T @ d.astype(self.dtype, copy=False), dtype=float),
                          np.asarray(self.ones @ d, dtype=float)))
            if l > 0:
                nxt = self.delta[l - 1]
                np.matmul(d.astype(self.dtype, copy=False), w.T.astype(self.dtype, copy=False),
                          out=nxt)
                np.multiply(nxt, acts[l] > 0, out=nxt)
                d = nxt
        grads.reverse()
        g = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])
        g += self.weight_decay / theta.size * theta
        return value, g


def _resolve_weights(ds: Dataset, weights) -> np.ndarray:
    if weights is None:
        weights = ds.weights
    if weights is None:
        return np.ones(ds.n)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (ds.n,) or not np.all(weights > 0):
        raise DataError("weights must be positive with one entry per example")
    return weights


def loss(model: MlpModel, ds: Dataset, weights=None, weight_decay: float = 0.0) -> float:
    if ds.labels is None:
        raise DataError("loss needs labeled data")
    xa = augment(model.scaler.transform(ds.features), model.augment)
    objective = _Objective(model.widths, xa, ds.labels, _resolve_weights(ds, weights),
                           weight_decay, model.class_count)
    return objective(model.flat_params(), need_grad=False)[0]


def loss_and_grad(model: MlpModel, ds: Dataset, weights=None, weight_decay: float = 0.0):
    """Loss and its gradient with respect to ``model.flat_params()``."""
    if ds.labels is None:
        raise DataError("loss needs labeled data")
    xa = augment(model.scaler.transform(ds.features), model.augment)
    objective = _Objective(model.widths, xa, ds.labels, _resolve_weights(ds, weights),
                           weight_decay, model.class_count)
    return objective(model.flat_params())


def with_params(model: MlpModel, theta) -> MlpModel:
    theta = np.array(theta, dtype=float)
    return MlpModel(model.scaler, model.augment, _unflatten(theta, model.widths),
                    model.class_count, dict(model.info))


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size))


def adam_step(theta: np.ndarray, grad: np.ndarray, state: AdamState, lr: float) -> np.ndarray:
    state.t += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1 - state.beta2) * grad * grad
    m_hat = state.m / (1 - state.beta1**state.t)
    v_hat = state.v / (1 - state.beta2**state.t)
    return theta - lr * m_hat / (np.sqrt(v_hat) + state.eps)


def _init_params(widths, rng: np.random.Generator) -> np.ndarray:
    parts = []
    for a, b in _layer_shapes(widths):
        bound = 1.0 / math.sqrt(a)
        parts.append(rng.uniform(-bound, bound, a * b))
        parts.append(rng.uniform(-bound, bound, b))
    return np.concatenate(parts)


def _fit_once(theta, objective: _Objective, cfg: TrainConfig):
    state = AdamState.zeros(theta.size)
    best_loss, best_theta = math.inf, theta
    prev = math.inf
    steps = 0
    while True:
        value, grad = objective(theta)
        if not math.isfinite(value):
            raise FloatingPointError(f"non-finite loss after {steps} steps")
        if value < best_loss:
            best_loss, best_theta = value, theta
        if prev - value < cfg.loss_tol or steps >= cfg.max_iters:
            break
        prev = value
        theta = adam_step(theta, grad, state, cfg.learning_rate)
        steps += 1
    return best_theta, best_loss, steps


def train(ds: Dataset, cfg: TrainConfig, weights=None) -> MlpModel:
    """Full-batch Adam from ``cfg.restarts`` seeded starts; keeps the lowest-loss fit."""
    if ds.labels is None:
        raise DataError("training needs labeled data")
    if ds.n < ds.class_count:
        raise DataError(f"need at least {ds.class_count} examples, got {ds.n}")
    weights = _resolve_weights(ds, weights)
    scaler, scaled = fit_scaler_and_scale(ds.features)
    spec = AugmentSpec(cfg.convention, ds.dim)
    xa = augment(scaled, spec)
    widths = [spec.output_dim, *cfg.hidden_sizes, ds.class_count - 1]
    objective = _Objective(widths, xa, ds.labels, weights, cfg.weight_decay, ds.class_count,
                           dtype=cfg.precision)

    runs, failures = [], []
    best = None
    for r in range(cfg.restarts):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, r])))
        theta0 = _init_params(widths, rng)
        try:
            theta, value, steps = _fit_once(theta0, objective, cfg)
        except FloatingPointError as exc:
            log.warning("restart %d aborted: %s", r, exc)
            failures.append({"restart": r, "error": str(exc)})
            continue
        log.debug("restart %d: loss %.10g after %d steps", r, value, steps)
        runs.append({"restart": r, "loss": value, "iterations": steps})
        if best is None or value < best[1]:
            best = (theta, value, r)
    if best is None:
        raise FloatingPointError(f"every restart produced a non-finite loss: {failures}")

    info = {
        "config": asdict(cfg),
        "best_restart": best[2],
        "final_loss": best[1],
        "runs": runs,
        "failures": failures,
    }
    return MlpModel(scaler, spec, _unflatten(best[0].copy(), widths), ds.class_count, info)


def predict(model: MlpModel, ds: Dataset) -> np.ndarray:
    if ds.dim != model.augment.base_dim:
        raise DataError(f"expected {model.augment.base_dim} features, got {ds.dim}")
    if ds.n == 0:
        return np.empty((0, model.class_count))
    return logits_to_probs(forward(model, ds.features), model.head_offsets)


def model_to_dict(model: MlpModel) -> dict:
    return {
        "class_count": model.class_count,
        "convention": model.augment.convention,
        "base_dim": model.augment.base_dim,
        "scaler": {"lo": model.scaler.lo.tolist(), "hi": model.scaler.hi.tolist()},
        "widths": model.widths,
        "params": model.flat_params().tolist(),
        "head_offsets": model.head_offsets.tolist(),
        "train": model.info,
    }


def model_from_dict(data: dict) -> MlpModel:
    spec = AugmentSpec(data["convention"], int(data["base_dim"]))
    scaler = Scaler(np.array(data["scaler"]["lo"], dtype=float),
                    np.array(data["scaler"]["hi"], dtype=float))
    widths = [int(w) for w in data["widths"]]
    if widths[0] != spec.output_dim:
        raise DataError("model file widths disagree with its augmentation")
    theta = np.array(data["params"], dtype=float)
    return MlpModel(scaler, spec, _unflatten(theta, widths), int(data["class_count"]),
                    data.get("train", {}))


def save_model(model: MlpModel, path) -> None:
    # json writes floats with repr, which round-trips float64 exactly
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1))


def load_model(path) -> MlpModel:
    return model_from_dict(json.loads(Path(path).read_text()))
