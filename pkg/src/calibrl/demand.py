"""Demand features, the per-horizon ridge forecaster, and synthetic demand.

Row ``t`` of the feature matrix uses only sales up to and including day
``t``; the horizon-``h`` model maps it to a Gaussian over sales on day
``t + h``.
"""
from __future__ import annotations

import datetime as dt
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .forecast import Gaussian
from .recalibration import (
    IdentityRecalibrator,
    Recalibrator,
    RecalibratedForecast,
    fit_recalibrator,
    recal_dataset_from_pit,
)

LAGS = 4
WINDOWS = (7, 14, 28)
N_FEATURES = LAGS + len(WINDOWS) + 7 + 2
WARMUP = max(WINDOWS) - 1
MIN_HISTORY = 35
SIGMA_FLOOR = 1e-6
MIN_CAL = 30


def calendar(dates) -> tuple[np.ndarray, np.ndarray]:
    """Day-of-week (Monday 0) and day-of-year (1-based) for each date."""
    dates = [d if isinstance(d, dt.date) else dt.date.fromisoformat(str(d)) for d in dates]
    return np.array([d.weekday() for d in dates]), np.array([d.timetuple().tm_yday for d in dates])


def date_range(start: dt.date, n: int) -> list[dt.date]:
    return [start + dt.timedelta(days=i) for i in range(n)]


def feature_matrix(sales, dates) -> np.ndarray:
    """(n, 16) features; rows before day ``WARMUP`` are NaN (incomplete windows)."""
    y = np.asarray(sales, dtype=np.float64)
    n = len(y)
    dow, doy = calendar(dates)
    if len(dow) != n:
        raise ValueError("need one date per sales value")
    X = np.full((n, N_FEATURES), np.nan)
    for k in range(LAGS):
        X[k:, k] = y[: n - k]
    c = np.concatenate([[0.0], np.cumsum(y)])
    for j, w in enumerate(WINDOWS):
        X[w - 1:, LAGS + j] = (c[w:] - c[:-w]) / w
    base = LAGS + len(WINDOWS)
    X[:, base:base + 7] = np.eye(7)[dow]
    angle = 2 * np.pi * doy / 365.0
    X[:, base + 7] = np.sin(angle)
    X[:, base + 8] = np.cos(angle)
    X[:WARMUP] = np.nan
    return X


@dataclass(frozen=True)
class DemandForecaster:
    """Per-horizon linear-Gaussian demand model; ``coef[h-1]`` holds
    (intercept, 16 weights) and ``sigma[h-1]`` the residual stddev."""

    coef: np.ndarray  # (H, 17)
    sigma: np.ndarray  # (H,)
    c: float = 1.0

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("miscalibration factor must be positive")
        if np.any(self.sigma <= 0):
            raise ValueError("residual stddev must be positive")

    @property
    def horizons(self) -> int:
        return len(self.sigma)

    def scaled(self, c: float) -> "DemandForecaster":
        return DemandForecaster(self.coef, self.sigma, c)

    def stddev(self, h: int) -> float:
        return self.c * float(self.sigma[h - 1])

    def means(self, rows: np.ndarray, h: int) -> np.ndarray:
        rows = np.atleast_2d(rows)
        return self.coef[h - 1, 0] + rows @ self.coef[h - 1, 1:]

    def forecast(self, row: np.ndarray, h: int) -> Gaussian:
        return Gaussian(float(self.means(row, h)[0]), self.stddev(h))

    def forecasts(self, row: np.ndarray) -> list:
        return [self.forecast(row, h) for h in range(1, self.horizons + 1)]


def _ridge(X: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    # intercept left unpenalised by centring
    xm, ym = X.mean(axis=0), y.mean()
    Xc = X - xm
    w = np.linalg.solve(Xc.T @ Xc + lam * np.eye(X.shape[1]), Xc.T @ (y - ym))
    return np.concatenate([[ym - xm @ w], w])


def fit_demand_model(sales, dates, *, horizons: int = 5, ridge: float = 1.0, c: float = 1.0,
                     features: np.ndarray | None = None) -> DemandForecaster:
    """Ridge fit per horizon on all rows whose target lies inside ``sales``."""
    y = np.asarray(sales, dtype=np.float64)
    if len(y) < MIN_HISTORY:
        raise ValueError(f"need at least {MIN_HISTORY} days of history, got {len(y)}")
    X = feature_matrix(y, dates) if features is None else features[: len(y)]
    coef = np.empty((horizons, N_FEATURES + 1))
    sigma = np.empty(horizons)
    for h in range(1, horizons + 1):
        rows = np.arange(WARMUP, len(y) - h)
        beta = _ridge(X[rows], y[rows + h], ridge)
        resid = y[rows + h] - (beta[0] + X[rows] @ beta[1:])
        coef[h - 1] = beta
        sigma[h - 1] = max(float(np.std(resid)), SIGMA_FLOOR)
    return DemandForecaster(coef, sigma, c)


@dataclass(frozen=True)
class RecalibratedDemand:
    """A forecaster with one recalibrator per horizon."""

    base: DemandForecaster
    recalibrators: tuple[Recalibrator, ...]
    n_cal: int = 0
    small_calibration: bool = False

    @property
    def horizons(self) -> int:
        return self.base.horizons

    def means(self, rows, h: int) -> np.ndarray:
        return np.array([self.forecast(r, h).mean() for r in np.atleast_2d(rows)])

    def forecast(self, row: np.ndarray, h: int) -> RecalibratedForecast:
        return RecalibratedForecast(self.base.forecast(row, h), self.recalibrators[h - 1])

    def forecasts(self, row: np.ndarray) -> list:
        return [self.forecast(row, h) for h in range(1, self.horizons + 1)]


def horizon_pits(model: DemandForecaster, sales, features: np.ndarray, start: int, stop: int, h: int) -> np.ndarray:
    """PIT values of horizon-``h`` forecasts issued on days in [start, stop)
    whose target day also falls before ``stop``."""
    y = np.asarray(sales, dtype=np.float64)
    rows = np.arange(max(start, WARMUP), stop - h)
    if len(rows) == 0:
        return np.empty(0)
    mu = model.means(features[rows], h)
    return special.ndtr((y[rows + h] - mu) / model.stddev(h))


def recalibrate_forecaster(model: DemandForecaster, sales, dates, cal_start: int, cal_stop: int, *,
                           method: str = "isotonic", features: np.ndarray | None = None) -> RecalibratedDemand:
    """Fit a recalibrator per horizon on forecasts made and resolved inside
    the calibration window ``[cal_start, cal_stop)``."""
    X = feature_matrix(sales, dates) if features is None else features
    recs, sizes = [], []
    for h in range(1, model.horizons + 1):
        pit = horizon_pits(model, sales, X, cal_start, cal_stop, h)
        sizes.append(len(pit))
        recs.append(fit_recalibrator(recal_dataset_from_pit(pit), method) if len(pit) else IdentityRecalibrator())
    small = min(sizes) < MIN_CAL
    if small:
        warnings.warn(f"calibration split has only {min(sizes)} points for some horizon", stacklevel=2)
    return RecalibratedDemand(model, tuple(recs), min(sizes), small)


# -- synthetic demand -----------------------------------------------------------

@dataclass(frozen=True)
class SyntheticItem:
    """Negative-binomial demand around a level with weekly and yearly
    seasonality and a persistent log-scale AR(1) shock."""

    level: float
    weekly: tuple[float, ...]
    yearly: float
    phase: float
    ar: float = 0.6
    shock: float = 0.25
    dispersion: float = 4.0

    @classmethod
    def random(cls, rng: np.random.Generator) -> "SyntheticItem":
        weekly = rng.normal(0.0, 0.25, 7)
        return cls(
            level=float(rng.uniform(5.0, 25.0)),
            weekly=tuple((weekly - weekly.mean()).tolist()),
            yearly=float(rng.uniform(0.0, 0.3)),
            phase=float(rng.uniform(0.0, 2 * np.pi)),
            dispersion=float(rng.uniform(2.0, 8.0)),
        )

    def simulate(self, rng: np.random.Generator, dates) -> np.ndarray:
        dow, doy = calendar(dates)
        n = len(dow)
        eps = rng.normal(0.0, self.shock * np.sqrt(1 - self.ar ** 2), n)
        z = np.empty(n)
        prev = rng.normal(0.0, self.shock)
        for t in range(n):
            prev = self.ar * prev + eps[t]
            z[t] = prev
        log_mean = (np.log(self.level) + np.asarray(self.weekly)[dow]
                    + self.yearly * np.sin(2 * np.pi * doy / 365.0 + self.phase) + z)
        mean = np.exp(log_mean)
        k = self.dispersion
        return rng.negative_binomial(k, k / (k + mean)).astype(np.int64)


@dataclass(frozen=True)
class DemandPanel:
    """Daily demand for several items over a shared calendar."""

    dates: list
    demand: np.ndarray  # (items, days)
    item_ids: list = field(default_factory=list)

    @property
    def n_items(self) -> int:
        return self.demand.shape[0]

    @property
    def n_days(self) -> int:
        return self.demand.shape[1]


def synthetic_panel(seed: int, n_items: int = 100, n_days: int = 840,
                    start: dt.date = dt.date(2014, 1, 1)) -> DemandPanel:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(7,))))
    dates = date_range(start, n_days)
    items = [SyntheticItem.random(rng) for _ in range(n_items)]
    demand = np.stack([it.simulate(rng, dates) for it in items])
    return DemandPanel(dates, demand, [f"item{i:03d}" for i in range(n_items)])
