"""Weighted priors, prior replacement on prediction matrices, and the
prediction-consistent prior found by the half-EM recursion."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, DataError, check_prior

log = logging.getLogger(__name__)

TINY = 1e-300


def weighted_prior(ds: Dataset, weights=None) -> np.ndarray:
    """Weight-sum share of each class (the effective prior a weighted fit sees)."""
    if ds.labels is None:
        raise DataError("dataset has no labels")
    if weights is None:
        weights = ds.weights if ds.weights is not None else np.ones(ds.n)
    weights = np.asarray(weights, dtype=float)
    sums = np.bincount(ds.labels, weights=weights, minlength=ds.class_count)
    return sums / sums.sum()


def _ratio(old_prior, new_prior) -> np.ndarray:
    old = np.asarray(old_prior, dtype=float)
    new = np.asarray(new_prior, dtype=float)
    if old.shape != new.shape:
        raise DataError(f"prior lengths differ: {old.shape} vs {new.shape}")
    bad = (old <= 0) & (new > 0)
    if np.any(bad):
        raise DataError(f"old prior is zero for classes {np.flatnonzero(bad)} with nonzero new prior")
    ratio = np.zeros_like(new)
    np.divide(new, old, out=ratio, where=old > 0)
    return ratio


def deweight(probs, old_prior, new_prior) -> np.ndarray:
    """Swap the prior baked into ``probs``: divide by the old, multiply by the new, renormalize."""
    probs = np.asarray(probs, dtype=float)
    ratio = _ratio(old_prior, new_prior)
    if probs.shape[-1] != ratio.size:
        raise DataError(f"{probs.shape[-1]} probability columns vs {ratio.size} prior entries")
    scaled = probs * ratio
    total = scaled.sum(axis=-1, keepdims=True)
    if np.any(total < TINY):
        rows = np.flatnonzero(np.atleast_2d(total)[:, 0] < TINY)
        raise DataError(f"rows {rows[:10].tolist()} put no mass on classes with nonzero new prior")
    return scaled / total


def estimate_prior_from_predictions(probs) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise DataError("need a non-empty N x K probability matrix")
    return probs.mean(axis=0)


def _likelihood_ratios(probs, model_prior) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    model_prior = np.asarray(model_prior, dtype=float)
    if probs.ndim != 2 or probs.shape[1] != model_prior.size:
        raise DataError("probability matrix and model prior disagree on the class count")
    if np.any(model_prior <= 0):
        raise DataError("model prior must be strictly positive on the classes being solved")
    return probs / model_prior


def _mixture(r: np.ndarray, candidate) -> np.ndarray:
    s = r @ np.asarray(candidate, dtype=float)
    if np.any(s < TINY):
        raise DataError("candidate prior gives zero likelihood to some rows")
    return s


def relative_nll(probs, model_prior, candidate) -> float:
    """Unlabeled negative log-likelihood of ``candidate``, up to a candidate-free constant."""
    r = _likelihood_ratios(probs, model_prior)
    return float(-np.log(_mixture(r, candidate)).sum())


def pcp_hessian(probs, model_prior, candidate) -> np.ndarray:
    r = _likelihood_ratios(probs, model_prior)
    q = r / _mixture(r, candidate)[:, None]
    return q.T @ q


@dataclass
class PcpResult:
    prior: np.ndarray
    iterations: int
    converged: bool
    nll_trace: list[float] = field(default_factory=list)
    deviation: float = float("nan")
    newton_steps: int = 0


def _em_update(r: np.ndarray, p: np.ndarray) -> np.ndarray:
    s = _mixture(r, p)
    nxt = p * (r / s[:, None]).mean(axis=0)
    return nxt / nxt.sum()


def _newton_step(r: np.ndarray, p: np.ndarray, nll: float):
    """Damped Newton step on the simplex; returns None unless the NLL strictly drops."""
    s = _mixture(r, p)
    q = r / s[:, None]
    grad = -q.sum(axis=0)
    hess = q.T @ q
    k = p.size
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = hess
    kkt[:k, k] = kkt[k, :k] = 1.0
    try:
        sol = np.linalg.solve(kkt, np.concatenate([-grad, [0.0]]))
    except np.linalg.LinAlgError:
        return None
    step = sol[:k]
    shrinking = step < 0
    scale = 1.0
    if np.any(shrinking):
        scale = min(1.0, 0.99 * float(np.min(-p[shrinking] / step[shrinking])))
    for _ in range(30):
        cand = p + scale * step
        cand = np.clip(cand, 0.0, None)
        cand /= cand.sum()
        try:
            value = float(-np.log(_mixture(r, cand)).sum())
        except DataError:
            value = np.inf
        if value < nll:
            return cand, value
        scale *= 0.5
    return None


def pcp_solve(probs, model_prior, init=None, tol: float = 1e-8, max_iter: int = 10_000,
              newton: bool = False) -> PcpResult:
    """Fixed point of ``P(i) = mean_m deweight(probs_m, model_prior, P)_i``.

    Each recursion step is one half-EM update; convergence is declared when
    the mean absolute change between successive priors falls below ``tol``.
    With ``newton=True`` a damped Newton step is also tried each iteration
    and kept only when it lowers the NLL at least as much as the recursion
    step, so the trace stays monotone and boundary optima are still reached.
    """
    probs = np.asarray(probs, dtype=float)
    model_prior = check_prior(model_prior, "model prior")
    if probs.ndim != 2 or probs.shape[1] != model_prior.size:
        raise DataError("probability matrix and model prior disagree on the class count")
    if probs.shape[0] == 0:
        raise DataError("need at least one prediction row")
    if tol <= 0:
        raise ValueError("tol must be positive")
    k = model_prior.size
    init = np.full(k, 1.0 / k) if init is None else check_prior(init, "initial prior")

    active = model_prior > 0
    if not np.all(active):
        if np.any(probs[:, ~active] != 0):
            raise DataError("classes with zero model prior must have all-zero prediction columns")
        if init[active].sum() <= 0:
            raise DataError("initial prior has no mass on classes with nonzero model prior")
    r = probs[:, active] / model_prior[active]
    p = init[active] / init[active].sum()

    nll = float(-np.log(_mixture(r, p)).sum())
    trace = [nll]
    converged = False
    deviation = np.inf
    newton_steps = 0
    it = 0
    while it < max_iter:
        it += 1
        nxt = _em_update(r, p)
        nxt_nll = float(-np.log(_mixture(r, nxt)).sum())
        if newton:
            # A Newton step cut short by the simplex boundary can be tiny
            # without being near the optimum; only take it when it beats EM.
            res = _newton_step(r, p, nll)
            if res is not None and res[1] <= nxt_nll:
                nxt, nxt_nll = res
                newton_steps += 1
        deviation = float(np.mean(np.abs(nxt - p)))
        p, nll = nxt, nxt_nll
        trace.append(nll)
        if deviation < tol:
            converged = True
            break
    if not converged:
        log.warning("half-EM stopped after %d iterations, last change %.3g", it, deviation)

    prior = np.zeros(k)
    prior[active] = p
    return PcpResult(prior, it, converged, trace, deviation, newton_steps)
