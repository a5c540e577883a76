"""Axis-aligned Gaussian class simulation and its exact posterior.

Random numbers come from numpy's counter-based Philox generator; normal
variates use numpy's ziggurat sampler (``Generator.standard_normal``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import Dataset, DataError, check_prior


@dataclass(frozen=True)
class GaussianClassSpec:
    mean: tuple[float, ...]
    sigma: tuple[float, ...]

    def __post_init__(self):
        if len(self.mean) != len(self.sigma):
            raise DataError("mean and sigma lengths differ")
        if any(s <= 0 for s in self.sigma):
            raise DataError(f"sigma entries must be positive: {self.sigma}")


@dataclass(frozen=True)
class SimConfig:
    classes: tuple[GaussianClassSpec, ...]
    fractions: tuple[float, ...]
    n_points: int = 0
    seed: int = 0

    def __post_init__(self):
        if len(self.fractions) != len(self.classes):
            raise DataError("one fraction per class required")
        check_prior(self.fractions, "fractions")
        if len({len(c.mean) for c in self.classes}) != 1:
            raise DataError("all classes must share the feature dimension")

    @property
    def dim(self) -> int:
        return len(self.classes[0].mean)

    @property
    def class_count(self) -> int:
        return len(self.classes)

    def means(self) -> np.ndarray:
        return np.array([c.mean for c in self.classes], dtype=float)

    def sigmas(self) -> np.ndarray:
        return np.array([c.sigma for c in self.classes], dtype=float)

    def replace(self, **changes) -> "SimConfig":
        fields = dict(classes=self.classes, fractions=self.fractions,
                      n_points=self.n_points, seed=self.seed)
        fields.update(changes)
        return SimConfig(**fields)


SIM_CLASSES = (
    GaussianClassSpec((0.0, 0.0, 0.0, 0.0), (1.0, 1.0, 1.0, 1.0)),
    GaussianClassSpec((1.0, 0.5, 0.0, 0.0), (1.0, 1.0, 1.0, 1.0)),
    GaussianClassSpec((-0.75, -0.5, 0.0, 0.0), (1.0, 1.0, 2.0, 1.0)),
)
REPRESENTATIVE_FRACTIONS = (0.6, 0.38, 0.02)
BIASED_FRACTIONS = (1 / 3, 1 / 3, 1 / 3)


def default_spec(kind: str = "representative", n_points: int = 0, seed: int = 0) -> SimConfig:
    if kind == "representative":
        fractions = REPRESENTATIVE_FRACTIONS
    elif kind == "biased":
        fractions = BIASED_FRACTIONS
    else:
        raise ValueError(f"unknown simulation kind {kind!r}")
    return SimConfig(SIM_CLASSES, fractions, n_points, seed)


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def sample_dataset(cfg: SimConfig) -> Dataset:
    rng = make_rng(cfg.seed)
    n = cfg.n_points
    cdf = np.cumsum(cfg.fractions)
    cdf[-1] = 1.0
    labels = np.searchsorted(cdf, rng.random(n), side="right").astype(np.int64)
    z = rng.standard_normal((n, cfg.dim))
    x = cfg.means()[labels] + cfg.sigmas()[labels] * z
    return Dataset(x, labels, None, cfg.class_count)


def log_joint(cfg: SimConfig, x) -> np.ndarray:
    """``ln f_i + ln N(x; mu_i, diag sigma_i^2)`` for each row of ``x`` and class ``i``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != cfg.dim:
        raise DataError(f"feature dimension {x.shape[1]} != simulation dimension {cfg.dim}")
    mu, sd = cfg.means(), cfg.sigmas()
    z = (x[:, None, :] - mu[None]) / sd[None]
    log_norm = -np.log(sd).sum(axis=1) - 0.5 * cfg.dim * np.log(2 * np.pi)
    with np.errstate(divide="ignore"):
        log_f = np.log(np.asarray(cfg.fractions, dtype=float))
    return log_f + log_norm - 0.5 * np.einsum("nkd,nkd->nk", z, z)


def true_posterior(cfg: SimConfig, x) -> np.ndarray:
    lj = log_joint(cfg, np.asarray(x, dtype=float).reshape(1, -1))
    return np.exp(lj - logsumexp(lj, axis=1, keepdims=True))[0]


def oracle_matrix(cfg: SimConfig, ds: Dataset) -> np.ndarray:
    if ds.dim != cfg.dim:
        raise DataError(f"dataset dimension {ds.dim} != simulation dimension {cfg.dim}")
    if ds.n == 0:
        return np.empty((0, cfg.class_count))
    lj = log_joint(cfg, ds.features)
    return np.exp(lj - logsumexp(lj, axis=1, keepdims=True))
