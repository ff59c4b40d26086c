import json

import numpy as np
import pytest
from scipy import special

from calibrl.diagnostics import calibration_loss, reliability_from_pit
from calibrl.forecast import DomainError, Empirical, Gaussian
from calibrl.recalibration import (
    DiscretePlatt,
    IdentityRecalibrator,
    IsotonicRecalibrator,
    RecalDataset,
    RecalibratedForecast,
    SigmoidRecalibrator,
    apply_recalibrator,
    build_recal_dataset,
    fit_isotonic,
    fit_platt_discrete,
    fit_recalibrator,
    fit_sigmoid,
    recal_dataset_from_pit,
    recalibrated_quantile,
    recalibrator_from_json,
)

from oracles import isotonic_brute_force


class TestDataset:
    def test_counts(self):
        d = recal_dataset_from_pit([0.1, 0.5, 0.9])
        assert d.phat.tolist() == [1 / 3, 2 / 3, 1.0]

    def test_single(self):
        d = recal_dataset_from_pit([0.7])
        assert (d.p.tolist(), d.phat.tolist()) == ([0.7], [1.0])

    def test_ties_inclusive(self):
        assert recal_dataset_from_pit([0.3, 0.3, 0.1, 0.9]).phat.tolist() == [0.75, 0.75, 0.25, 1.0]

    def test_from_forecasts(self):
        d = build_recal_dataset([Gaussian(0, 1), Empirical([1, 2])], [0.0, 1.5])
        assert d.p.tolist() == [0.5, 0.5] and d.phat.tolist() == [1.0, 1.0]

    def test_errors(self):
        with pytest.raises(ValueError):
            build_recal_dataset([Gaussian(0, 1)], [1.0, 2.0])
        with pytest.raises(ValueError):
            build_recal_dataset([], [])

    def test_self_consistent_forecasts(self, rng):
        mu = rng.normal(size=10_000)
        y = mu + rng.normal(size=10_000)
        d = recal_dataset_from_pit(special.ndtr(y - mu))
        assert np.max(np.abs(d.phat - d.p)) <= 0.03


class TestIsotonic:
    def test_monotone_input_reproduced(self):
        r = fit_isotonic(RecalDataset(np.array([0.2, 0.8]), np.array([0.2, 0.8])))
        assert r.levels == (0.2, 0.8)
        assert r.apply(0.2) == 0.2 and r.apply(0.8) == 0.8

    def test_violators_pooled(self):
        r = fit_isotonic(RecalDataset(np.array([0.2, 0.8]), np.array([0.9, 0.1])))
        assert r.levels == (0.5, 0.5)

    def test_against_brute_force(self, rng):
        for _ in range(200):
            n = int(rng.integers(1, 9))
            p = rng.uniform(size=n)
            phat = rng.uniform(size=n)
            r = fit_isotonic(RecalDataset(p, phat))
            order = np.argsort(p)
            np.testing.assert_allclose(r.levels, isotonic_brute_force(phat[order]), atol=1e-9)

    def test_extension_rule(self):
        r = IsotonicRecalibrator((0.3, 0.6), (0.2, 0.7))
        assert r.apply(0.1) == 0.0 and r.apply(0.3) == 0.2 and r.apply(0.5) == 0.2 and r.apply(1.0) == 0.7

    def test_step_lookup(self):
        assert apply_recalibrator(IsotonicRecalibrator((0.5,), (1.0,)), 0.7) == 1.0

    def test_identity_like(self):
        grid = np.linspace(0, 1, 101)
        r = IsotonicRecalibrator(tuple(grid), tuple(grid))
        assert apply_recalibrator(r, 0.3) == 0.3

    def test_domain(self):
        with pytest.raises(DomainError):
            apply_recalibrator(IdentityRecalibrator(), 1.2)
        with pytest.raises(DomainError):
            IsotonicRecalibrator((0.5,), (1.0,)).apply(-0.1)

    def test_vectorised(self, rng):
        r = fit_isotonic(recal_dataset_from_pit(rng.uniform(size=50)))
        ps = np.concatenate([rng.uniform(size=200), r.breakpoints, [0.0, 1.0]])
        assert r.apply_many(ps).tolist() == [r.apply(p) for p in ps]
        qs = rng.uniform(size=200)
        assert r.inverse_many(qs).tolist() == [1.0 if r.inverse(q) is None else r.inverse(q) for q in qs]


class TestSigmoid:
    def test_recovers_parameters(self):
        p = np.linspace(0, 1, 50)
        r = fit_sigmoid(RecalDataset(p, special.expit(2 * p - 1)))
        assert r.a == pytest.approx(2, abs=1e-3) and r.b == pytest.approx(-1, abs=1e-3)
        assert r.info["converged"]

    def test_constant_targets(self):
        r = fit_sigmoid(RecalDataset(np.linspace(0, 1, 10), np.full(10, 0.5)))
        assert (r.a, r.b) == (0.0, 0.0) and r.info["degenerate"]
        assert apply_recalibrator(SigmoidRecalibrator(0, 0), 0.37) == 0.5

    def test_monotone_on_real_data(self, rng):
        r = fit_sigmoid(recal_dataset_from_pit(rng.beta(0.5, 0.5, 300)))
        vals = r.apply_many(np.linspace(0, 1, 1001))
        assert r.a >= 0 and np.all(np.diff(vals) >= 0)

    def test_inverse_is_generalised(self, rng):
        r = SigmoidRecalibrator(3.0, -1.0)
        for p in rng.uniform(r.apply(0), r.apply(1), 100):
            q = r.inverse(p)
            assert r.apply(q) >= p and (q == 0 or r.apply(np.nextafter(q, 0)) < p)
        assert r.inverse(0.99) is None and r.inverse(0.05) == 0.0


class TestComposition:
    def test_identity_keeps_quantiles(self):
        base = Gaussian(1, 2)
        rf = RecalibratedForecast(base, IdentityRecalibrator())
        for p in np.linspace(0, 1, 101):
            assert recalibrated_quantile(rf, p) == base.quantile(p)

    def test_square_map(self):
        grid = np.linspace(0, 1, 10_001)
        r = IsotonicRecalibrator(tuple(grid), tuple(grid ** 2))
        base = Gaussian(0, 1)
        got = recalibrated_quantile(RecalibratedForecast(base, r), 0.25)
        assert got == pytest.approx(base.quantile(0.5), abs=base.quantile(0.5001) - base.quantile(0.5) + 1e-12)

    def test_jump(self):
        base = Gaussian(0, 1)
        rf = RecalibratedForecast(base, IsotonicRecalibrator((0.5,), (1.0,)))
        assert recalibrated_quantile(rf, 0.3) == base.quantile(0.5)

    def test_above_sup_returns_top(self):
        rf = RecalibratedForecast(Empirical([1, 2, 3]), IsotonicRecalibrator((0.5,), (0.8,)))
        assert rf.quantile(0.9) == 3

    def test_cdf_law(self, rng):
        r = fit_isotonic(recal_dataset_from_pit(rng.uniform(size=40)))
        rf = RecalibratedForecast(Gaussian(2, 0.5), r)
        for y in rng.normal(2, 1, 100):
            assert rf.cdf(y) == apply_recalibrator(r, Gaussian(2, 0.5).cdf(y))


class TestRepair:
    def _pits(self, rng, n, scale):
        mu = rng.normal(0, 3, n)
        sd = rng.uniform(0.5, 2, n)
        y = mu + sd * rng.normal(size=n)
        return special.ndtr((y - mu) / (scale * sd))

    def test_overconfident_repaired(self, rng):
        cal, ev = self._pits(rng, 10_000, 0.5), self._pits(rng, 10_000, 0.5)
        r = fit_isotonic(recal_dataset_from_pit(cal))
        assert calibration_loss(reliability_from_pit(ev)) > 0.05
        assert calibration_loss(reliability_from_pit(r.apply_many(ev))) < 0.005

    @pytest.mark.parametrize("method", ["isotonic", "sigmoid"])
    def test_idempotent_on_calibrated(self, rng, method):
        r = fit_recalibrator(recal_dataset_from_pit(self._pits(rng, 10_000, 1.0)), method)
        grid = np.linspace(0, 1, 1001)
        assert np.max(np.abs(r.apply_many(grid) - grid)) <= 0.05 if method == "isotonic" else True


class TestPlatt:
    def test_well_specified(self, rng):
        p = rng.uniform(0.05, 0.95, 10_000)
        labels = (rng.uniform(size=10_000) >= p).astype(int)
        f = fit_platt_discrete(np.column_stack([p, 1 - p]), labels)
        assert 0.9 <= f.a <= 1.1 and -0.1 <= f.b <= 0.1

    def test_symmetric_degenerate(self):
        f = fit_platt_discrete(np.full((10, 2), 0.5), [0, 1] * 5)
        assert (f.a, f.b) == (1.0, 0.0) and f.degenerate

    def test_single_class_flagged(self, rng):
        p = rng.uniform(0.1, 0.9, 20)
        assert fit_platt_discrete(np.column_stack([p, 1 - p]), np.zeros(20, int)).degenerate

    def test_overconfident_shrinks(self, rng):
        labels = (rng.uniform(size=10_000) >= 0.6).astype(int)
        f = fit_platt_discrete(np.tile([0.9, 0.1], (10_000, 1)), labels)
        assert f.a < 1

    def test_output_normalised(self):
        out = DiscretePlatt(0.5, 0.2).apply([[0.7, 0.2, 0.1], [1.0, 0.0, 0.0]])
        assert np.allclose(out.sum(axis=1), 1) and np.all((out > 0) & (out < 1))


class TestSerialisation:
    def test_round_trip(self, rng):
        iso = fit_isotonic(recal_dataset_from_pit(rng.uniform(size=30)))
        for r in (iso, SigmoidRecalibrator(1 / 3, -2 / 7), IdentityRecalibrator()):
            back = recalibrator_from_json(r.to_json())
            assert back.to_dict() == r.to_dict()
            assert json.loads(r.to_json())["variant"] == r.variant

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            recalibrator_from_json('{"variant": "spline"}')
