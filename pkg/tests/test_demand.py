import datetime as dt
import warnings

import numpy as np
import pytest
from scipy import special

from calibrl.demand import (
    N_FEATURES,
    WARMUP,
    DemandForecaster,
    calendar,
    date_range,
    feature_matrix,
    fit_demand_model,
    horizon_pits,
    recalibrate_forecaster,
    synthetic_panel,
)

DATES = date_range(dt.date(2015, 3, 2), 2000)  # a Monday


def gaussian_series(rng, n, sd=2.0):
    dow, _ = calendar(DATES[:n])
    return 20 + 4 * np.sin(2 * np.pi * dow / 7) + rng.normal(0, sd, n)


def test_calendar():
    dow, doy = calendar(["2016-12-31", "2017-01-02"])
    assert dow.tolist() == [5, 0] and doy.tolist() == [366, 2]


def test_features():
    y = np.arange(40.0)
    X = feature_matrix(y, DATES[:40])
    assert X.shape == (40, N_FEATURES)
    assert np.isnan(X[WARMUP - 1]).all() and not np.isnan(X[WARMUP:]).any()
    t = 30
    assert X[t, :4].tolist() == [30, 29, 28, 27]
    assert X[t, 4] == pytest.approx(np.mean(y[t - 6:t + 1]))
    assert X[t, 6] == pytest.approx(np.mean(y[t - 27:t + 1]))
    assert X[t, 7:14].sum() == 1 and X[t, 7 + DATES[t].weekday()] == 1


def test_constant_series():
    m = fit_demand_model(np.full(100, 10.0), DATES[:100])
    X = feature_matrix(np.full(100, 10.0), DATES[:100])
    for h in range(1, 6):
        assert m.means(X[60], h)[0] == pytest.approx(10, abs=1e-6)
        assert m.stddev(h) < 1e-5


def test_weekly_features_help(rng):
    y = gaussian_series(rng, 400, sd=1.0)
    m = fit_demand_model(y, DATES[:400])
    assert m.sigma[0] < 0.6 * np.std(y[WARMUP:])


def test_scaling(rng):
    y = gaussian_series(rng, 200)
    m1 = fit_demand_model(y, DATES[:200])
    m3 = fit_demand_model(y, DATES[:200], c=0.3)
    for h in range(1, 6):
        assert m3.stddev(h) == 0.3 * m1.stddev(h)
    assert m1.scaled(0.3).stddev(2) == m3.stddev(2)


def test_short_history():
    with pytest.raises(ValueError, match="at least"):
        fit_demand_model(np.ones(20), DATES[:20])
    with pytest.raises(ValueError):
        DemandForecaster(np.zeros((1, 17)), np.array([1.0]), c=0)


def _split(rng, c):
    n = 2000
    y = gaussian_series(rng, n)
    X = feature_matrix(y, DATES[:n])
    raw = fit_demand_model(y[:600], DATES[:600], c=c, features=X)
    rec = recalibrate_forecaster(raw, y[:1200], DATES[:1200], 600, 1200, features=X)
    return y, X, raw, rec


def _interval(model, X, days, lo=0.05, hi=0.95):
    fs = [model.forecast(X[t], 1) for t in days]
    return np.array([f.quantile(lo) for f in fs]), np.array([f.quantile(hi) for f in fs])


def test_identity_recovery():
    _, _, _, rec = _split(np.random.default_rng(11), 1.0)
    grid = np.linspace(0, 1, 1001)
    assert np.max(np.abs(rec.recalibrators[0].apply_many(grid) - grid)) <= 0.05


def test_overconfident_coverage(rng):
    y, X, raw, rec = _split(rng, 0.3)
    days = np.arange(1200, 1999)
    lo, hi = _interval(rec, X, days)
    cover = np.mean((y[days + 1] >= lo) & (y[days + 1] <= hi))
    assert abs(cover - 0.9) <= 0.03
    rlo, rhi = _interval(raw, X, days)
    assert np.mean((y[days + 1] >= rlo) & (y[days + 1] <= rhi)) < 0.5


def test_underconfident_narrows(rng):
    y, X, raw, rec = _split(rng, 3.0)
    days = np.arange(1200, 1999)
    lo, hi = _interval(rec, X, days)
    rlo, rhi = _interval(raw, X, days)
    assert np.all(hi - lo < rhi - rlo)


def test_small_calibration_warns(rng):
    y = gaussian_series(rng, 200)
    raw = fit_demand_model(y[:150], DATES[:150])
    with pytest.warns(UserWarning, match="only"):
        rec = recalibrate_forecaster(raw, y, DATES[:200], 150, 180)
    assert rec.small_calibration and rec.n_cal < 30


def test_horizon_pits_window(rng):
    y = gaussian_series(rng, 300)
    X = feature_matrix(y, DATES[:300])
    m = fit_demand_model(y[:200], DATES[:200], features=X)
    pit = horizon_pits(m, y, X, 200, 300, 3)
    assert len(pit) == 97
    assert pit[0] == special.ndtr((y[203] - m.means(X[200], 3)[0]) / m.stddev(3))


def test_synthetic_panel_reproducible():
    a, b = synthetic_panel(4, 3, 100), synthetic_panel(4, 3, 100)
    np.testing.assert_array_equal(a.demand, b.demand)
    assert a.demand.shape == (3, 100) and a.demand.min() >= 0
    assert not np.array_equal(a.demand, synthetic_panel(5, 3, 100).demand)
