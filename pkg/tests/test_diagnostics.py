import numpy as np
import pytest
from scipy import special

from calibrl.diagnostics import (
    ReliabilityCurve,
    calibration_loss,
    pit_histogram,
    pit_histogram_from_pit,
    pit_values,
    reliability_curve,
    reliability_from_pit,
    sharpness,
)
from calibrl.forecast import Empirical, Gaussian, PiecewiseLinear
from calibrl.recalibration import IdentityRecalibrator, RecalibratedForecast


def test_two_thresholds():
    c = reliability_from_pit([0.25, 0.75], m=2)
    assert c.thresholds.tolist() == [0.5, 1.0] and c.frequencies.tolist() == [0.5, 1.0]


def test_all_mass_at_one():
    c = reliability_from_pit(np.ones(20), m=10)
    assert c.frequencies.tolist() == [0.0] * 9 + [1.0]


def test_self_consistent_curve(rng):
    mu = rng.normal(size=10_000)
    y = mu + rng.normal(size=10_000)
    c = reliability_from_pit(special.ndtr(y - mu))
    assert np.max(np.abs(c.frequencies - c.thresholds)) <= 0.03
    assert calibration_loss(c) < 0.005


def test_loss_arithmetic():
    assert calibration_loss(ReliabilityCurve(np.array([0.5, 1.0]), np.array([0.7, 1.0]))) == pytest.approx(0.04)
    assert calibration_loss(ReliabilityCurve(np.array([0.5, 1.0]), np.array([0.5, 1.0]))) == 0.0


def test_overconfident_loss(rng):
    mu = rng.normal(size=10_000)
    y = mu + rng.normal(size=10_000)
    assert calibration_loss(reliability_from_pit(special.ndtr((y - mu) / 0.5))) > 0.05


def test_curve_from_forecasts_and_permutation(rng):
    fs = [Gaussian(m, 1) for m in rng.normal(size=200)]
    ys = rng.normal(size=200)
    c = reliability_curve(fs, ys)
    perm = rng.permutation(200)
    c2 = reliability_curve([fs[i] for i in perm], ys[perm])
    assert c.frequencies.tolist() == c2.frequencies.tolist()
    ident = reliability_curve([RecalibratedForecast(f, IdentityRecalibrator()) for f in fs], ys)
    assert ident.frequencies.tolist() == c.frequencies.tolist()


def test_csv_and_dict():
    c = reliability_from_pit(np.linspace(0, 1, 50), m=10)
    lines = c.to_csv().strip().split("\n")
    assert lines[0] == "threshold,empirical_frequency" and len(lines) == 11
    assert set(c.to_dict()) == {"thresholds", "empirical_frequency", "calibration_loss"}


def test_histogram_examples():
    assert pit_histogram_from_pit([0.1, 0.9], 2).counts.tolist() == [1, 1]
    assert pit_histogram_from_pit([1.0], 4).counts.tolist() == [0, 0, 0, 1]
    h = pit_histogram([Gaussian(0, 1)], [0.0], bins=2)
    assert h.counts.tolist() == [0, 1] and h.edges.tolist() == [0.0, 0.5, 1.0]


def test_histogram_uniform(rng):
    mu = rng.normal(size=10_000)
    h = pit_histogram_from_pit(special.ndtr(mu + rng.normal(size=10_000) - mu))
    assert h.counts.sum() == 10_000 and np.all((h.counts >= 800) & (h.counts <= 1200))


def test_sharpness():
    assert sharpness([Gaussian(0, 2), Gaussian(5, 2)]) == pytest.approx(4)
    assert sharpness([Empirical([1, 1, 1])]) == 0
    assert sharpness([Gaussian(0, 1), Gaussian(0, 3)]) == pytest.approx(5)
    assert sharpness([PiecewiseLinear([0, 1], [0, 1])]) == pytest.approx(1 / 12)


def test_errors():
    with pytest.raises(ValueError):
        pit_values([], [])
    with pytest.raises(ValueError):
        pit_values([Gaussian(0, 1)], [1, 2])
    with pytest.raises(ValueError):
        reliability_from_pit([0.5], m=0)
    with pytest.raises(ValueError):
        pit_histogram_from_pit([], 3)
    with pytest.raises(ValueError):
        sharpness([])
