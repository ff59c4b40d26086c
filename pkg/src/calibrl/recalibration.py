"""Recalibration of CDF forecasts with a monotone map R: [0, 1] -> [0, 1].

The workflow is: turn (forecast, outcome) pairs into a recalibration dataset
of PIT values and their empirical CDF, fit a nondecreasing map on it
(isotonic by default, or a logistic curve), then wrap forecasts as
``R o F``.
"""
from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from .forecast import DomainError, Forecast, smallest_reaching
from .kernels import pava

CLIP = 1e-12


def _check_level(p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"probability level {p!r} outside [0, 1]")
    return p


# -- dataset -----------------------------------------------------------------

@dataclass(frozen=True)
class RecalDataset:
    """Pairs ``(p_t, phat_t)`` with ``phat_t`` the empirical CDF of the p's at ``p_t``."""

    p: np.ndarray
    phat: np.ndarray

    def __len__(self) -> int:
        return len(self.p)


def recal_dataset_from_pit(pit: Sequence[float]) -> RecalDataset:
    p = np.asarray(pit, dtype=np.float64)
    if p.ndim != 1 or len(p) == 0:
        raise ValueError("recalibration dataset needs at least one PIT value")
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError("PIT values must lie in [0, 1]")
    n = len(p)
    counts = np.searchsorted(np.sort(p), p, side="right")
    return RecalDataset(p=p, phat=counts / n)


def build_recal_dataset(forecasts: Sequence[Forecast], outcomes: Sequence[float]) -> RecalDataset:
    if len(forecasts) != len(outcomes):
        raise ValueError(f"{len(forecasts)} forecasts but {len(outcomes)} outcomes")
    if len(forecasts) == 0:
        raise ValueError("recalibration dataset needs at least one pair")
    return recal_dataset_from_pit([f.cdf(float(y)) for f, y in zip(forecasts, outcomes)])


# -- recalibrators -----------------------------------------------------------

class Recalibrator:
    """Nondecreasing map on [0, 1]; subclasses define ``apply`` and ``inverse``."""

    variant = "abstract"

    def apply(self, p: float) -> float:
        raise NotImplementedError

    def apply_many(self, ps) -> np.ndarray:
        return np.array([self.apply(float(p)) for p in np.asarray(ps, dtype=np.float64)])

    def inverse(self, p: float) -> float | None:
        """Generalised inverse ``inf{q : p <= R(q)}``; None when p exceeds sup R."""
        raise NotImplementedError

    def inverse_many(self, ps) -> np.ndarray:
        out = [self.inverse(float(p)) for p in np.asarray(ps, dtype=np.float64)]
        return np.array([1.0 if q is None else q for q in out])

    def to_dict(self) -> dict:
        raise NotImplementedError

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class IdentityRecalibrator(Recalibrator):
    variant = "identity"

    def apply(self, p: float) -> float:
        return _check_level(p)

    def apply_many(self, ps) -> np.ndarray:
        return np.asarray(ps, dtype=np.float64).copy()

    def inverse(self, p: float) -> float:
        return _check_level(p)

    def inverse_many(self, ps) -> np.ndarray:
        return np.asarray(ps, dtype=np.float64).copy()

    def to_dict(self) -> dict:
        return {"variant": self.variant}


@dataclass(frozen=True)
class IsotonicRecalibrator(Recalibrator):
    """Right-continuous step map: 0 left of the first breakpoint, then the
    level of the nearest breakpoint at or to the left of ``p``."""

    breakpoints: tuple[float, ...]
    levels: tuple[float, ...]
    variant = "isotonic"

    def __post_init__(self):
        bp, lv = tuple(map(float, self.breakpoints)), tuple(map(float, self.levels))
        if len(bp) == 0 or len(bp) != len(lv):
            raise ValueError("isotonic map needs matching, nonempty breakpoints and levels")
        if any(b <= a for a, b in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if any(b < a for a, b in zip(lv, lv[1:])):
            raise ValueError("levels must be nondecreasing")
        if bp[0] < 0 or bp[-1] > 1 or lv[0] < 0 or lv[-1] > 1:
            raise ValueError("breakpoints and levels must lie in [0, 1]")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "levels", lv)

    def apply(self, p: float) -> float:
        i = bisect.bisect_right(self.breakpoints, _check_level(p)) - 1
        return 0.0 if i < 0 else self.levels[i]

    def apply_many(self, ps) -> np.ndarray:
        ps = np.asarray(ps, dtype=np.float64)
        if np.any((ps < 0) | (ps > 1)):
            raise DomainError("probability levels outside [0, 1]")
        i = np.searchsorted(np.asarray(self.breakpoints), ps, side="right") - 1
        lv = np.concatenate([[0.0], self.levels])
        return lv[i + 1]

    def inverse(self, p: float) -> float | None:
        p = _check_level(p)
        if p <= 0.0:
            return 0.0
        i = bisect.bisect_left(self.levels, p)
        return None if i == len(self.levels) else self.breakpoints[i]

    def inverse_many(self, ps) -> np.ndarray:
        ps = np.asarray(ps, dtype=np.float64)
        i = np.searchsorted(np.asarray(self.levels), ps, side="left")
        bp = np.concatenate([self.breakpoints, [1.0]])
        return np.where(ps <= 0.0, 0.0, bp[i])

    def to_dict(self) -> dict:
        return {"variant": self.variant, "breakpoints": list(self.breakpoints), "levels": list(self.levels)}


@dataclass(frozen=True)
class SigmoidRecalibrator(Recalibrator):
    """``R(p) = sigmoid(a * p + b)`` with ``a >= 0``."""

    a: float
    b: float
    info: dict = field(default_factory=dict, compare=False)
    variant = "sigmoid"

    def __post_init__(self):
        if not (self.a >= 0.0 and math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError("sigmoid recalibrator needs finite a >= 0 and finite b")

    def apply(self, p: float) -> float:
        return float(special.expit(self.a * _check_level(p) + self.b))

    def apply_many(self, ps) -> np.ndarray:
        return special.expit(self.a * np.asarray(ps, dtype=np.float64) + self.b)

    def inverse(self, p: float) -> float | None:
        p = _check_level(p)
        if p <= self.apply(0.0):
            return 0.0
        if p > self.apply(1.0):
            return None
        guess = (math.log(p) - math.log1p(-p) - self.b) / self.a if p < 1.0 else 1.0
        return smallest_reaching(self.apply, p, min(max(guess, 0.0), 1.0), 0.0, 1.0)

    def inverse_many(self, ps) -> np.ndarray:
        ps = np.asarray(ps, dtype=np.float64)
        lo, hi = self.apply(0.0), self.apply(1.0)
        if self.a == 0.0:
            return np.where(ps <= lo, 0.0, 1.0)
        q = (special.logit(np.clip(ps, CLIP, 1 - CLIP)) - self.b) / self.a
        return np.where(ps <= lo, 0.0, np.where(ps > hi, 1.0, np.clip(q, 0.0, 1.0)))

    def to_dict(self) -> dict:
        return {"variant": self.variant, "a": self.a, "b": self.b}


def recalibrator_from_dict(d: dict) -> Recalibrator:
    variant = d.get("variant")
    if variant == "isotonic":
        return IsotonicRecalibrator(tuple(d["breakpoints"]), tuple(d["levels"]))
    if variant == "sigmoid":
        return SigmoidRecalibrator(float(d["a"]), float(d["b"]))
    if variant == "identity":
        return IdentityRecalibrator()
    raise ValueError(f"unknown recalibrator variant {variant!r}")


def recalibrator_from_json(text: str) -> Recalibrator:
    return recalibrator_from_dict(json.loads(text))


def apply_recalibrator(r: Recalibrator, p: float) -> float:
    return r.apply(p)


# -- fitting -----------------------------------------------------------------

def fit_isotonic(d: RecalDataset) -> IsotonicRecalibrator:
    """Least-squares nondecreasing step map through ``(p_t, phat_t)``.

    Tied p values are pooled first (a function cannot take two values at one
    point), then weighted pool-adjacent-violators runs on the unique p's.
    """
    if len(d) == 0:
        raise ValueError("cannot fit on an empty dataset")
    xs, inv, counts = np.unique(d.p, return_inverse=True, return_counts=True)
    ys = np.bincount(inv, weights=d.phat) / counts
    fitted = pava(ys, counts.astype(np.float64))
    return IsotonicRecalibrator(tuple(xs.tolist()), tuple(np.clip(fitted, 0.0, 1.0).tolist()))


def _fit_logistic(x: np.ndarray, t: np.ndarray, *, tol: float = 1e-8, max_iter: int = 100):
    """Cross-entropy fit of sigmoid(a*x + b) to soft targets by damped Newton.

    Returns (a, b, iterations, converged). The gradient is that of the mean
    loss, so ``tol`` does not depend on the sample size.
    """
    n = len(x)
    X = np.column_stack([x, np.ones(n)])

    def loss(theta):
        z = X @ theta
        return float(np.mean(np.logaddexp(0.0, z) - t * z))

    theta = np.zeros(2)
    f = loss(theta)
    damping = 0.0
    for it in range(1, max_iter + 1):
        s = special.expit(X @ theta)
        g = X.T @ (s - t) / n
        if np.linalg.norm(g) < tol:
            return float(theta[0]), float(theta[1]), it - 1, True
        H = (X * (s * (1 - s))[:, None]).T @ X / n
        while True:
            try:
                step = np.linalg.solve(H + damping * np.eye(2), g)
            except np.linalg.LinAlgError:
                damping = max(2 * damping, 1e-10)
                continue
            cand = theta - step
            fc = loss(cand)
            if fc <= f + 1e-15:
                theta, f = cand, fc
                damping = damping / 10 if damping > 1e-12 else 0.0
                break
            damping = max(10 * damping, 1e-8)
            if damping > 1e12:
                return float(theta[0]), float(theta[1]), it, False
    s = special.expit(X @ theta)
    g = X.T @ (s - t) / n
    return float(theta[0]), float(theta[1]), max_iter, bool(np.linalg.norm(g) < tol)


def _fit_intercept(t: np.ndarray) -> float:
    m = float(np.clip(np.mean(t), CLIP, 1 - CLIP))
    return math.log(m) - math.log1p(-m)


def fit_sigmoid(d: RecalDataset) -> SigmoidRecalibrator:
    """Logistic recalibrator fit by cross-entropy against the phat targets.

    Degenerate targets (all equal) give ``a = 0``; a fitted negative slope is
    replaced by the best constant map to keep R nondecreasing. Both cases are
    flagged in ``info``.
    """
    if len(d) < 2:
        raise ValueError("sigmoid recalibration needs at least two points")
    x, t = np.asarray(d.p, dtype=np.float64), np.asarray(d.phat, dtype=np.float64)
    if np.ptp(t) == 0.0 or np.ptp(x) == 0.0:
        return SigmoidRecalibrator(0.0, _fit_intercept(t), {"degenerate": True, "iterations": 0, "converged": True})
    a, b, iters, converged = _fit_logistic(x, t)
    if a < 0.0:
        return SigmoidRecalibrator(0.0, _fit_intercept(t), {"degenerate": True, "iterations": iters, "converged": converged})
    return SigmoidRecalibrator(a, b, {"degenerate": False, "iterations": iters, "converged": converged})


def fit_recalibrator(d: RecalDataset, method: str = "isotonic") -> Recalibrator:
    if method == "isotonic":
        return fit_isotonic(d)
    if method == "sigmoid":
        return fit_sigmoid(d)
    raise ValueError(f"unknown recalibration method {method!r}")


# -- composition -------------------------------------------------------------

@dataclass(frozen=True)
class RecalibratedForecast:
    """The forecast ``R o F``: CDF ``R(F(y))``, quantile ``F^-1(R^dagger(p))``."""

    base: Forecast
    r: Recalibrator

    def cdf(self, y: float) -> float:
        return self.r.apply(self.base.cdf(y))

    def quantile(self, p: float) -> float:
        q = self.r.inverse(p)
        return self.base.quantile(1.0 if q is None else q)

    def cdf_many(self, ys) -> np.ndarray:
        return self.r.apply_many(np.clip(self.base.cdf_many(ys), 0.0, 1.0))

    def ppf_many(self, ps) -> np.ndarray:
        # base levels are clipped away from 0 and 1 so unbounded bases stay finite
        q = np.clip(self.r.inverse_many(ps), CLIP, 1 - CLIP)
        return self.base.ppf_many(q)

    def _grid(self, n: int = 4000) -> np.ndarray:
        return self.ppf_many((np.arange(n) + 0.5) / n)

    def mean(self) -> float:
        return float(np.mean(self._grid()))

    def variance(self) -> float:
        return float(np.var(self._grid()))


def recalibrated_quantile(rf: RecalibratedForecast, p: float) -> float:
    return rf.quantile(p)


# -- discrete Platt scaling --------------------------------------------------

@dataclass(frozen=True)
class DiscretePlatt:
    """Shared-slope Platt scaling of class probabilities on the log-odds scale,
    renormalised across classes."""

    a: float
    b: float
    degenerate: bool = False

    def apply(self, probs) -> np.ndarray:
        probs = np.clip(np.asarray(probs, dtype=np.float64), CLIP, 1 - CLIP)
        q = special.expit(self.a * special.logit(probs) + self.b)
        return q / q.sum(axis=-1, keepdims=True)


def fit_platt_discrete(probs, labels) -> DiscretePlatt:
    probs = np.clip(np.asarray(probs, dtype=np.float64), CLIP, 1 - CLIP)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or len(probs) != len(labels):
        raise ValueError("probs must be (N, K) with one label per row")
    if len(labels) < 2:
        raise ValueError("Platt scaling needs at least two examples")
    n, k = probs.shape
    if np.any((labels < 0) | (labels >= k)):
        raise ValueError("labels out of range")
    z = special.logit(probs).ravel()
    t = np.zeros((n, k))
    t[np.arange(n), labels] = 1.0
    t = t.ravel()
    if len(np.unique(labels)) < 2 or np.ptp(z) == 0.0:
        return DiscretePlatt(1.0, 0.0, degenerate=True)
    a, b, _, _ = _fit_logistic(z, t)
    return DiscretePlatt(a, b)
