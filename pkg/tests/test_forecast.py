import math

import numpy as np
import pytest
from scipy import integrate

from calibrl.forecast import (
    DomainError,
    Empirical,
    Gaussian,
    PiecewiseLinear,
    RngStream,
    cdf_eval,
    mean,
    quantile,
    sample,
)


def normal_cdf_by_quadrature(y, mu, sigma):
    dens = lambda t: math.exp(-0.5 * ((t - mu) / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
    val, _ = integrate.quad(dens, mu, y)
    return 0.5 + val


def bisect_quantile(cdf, p, lo=-50.0, hi=50.0):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if cdf(mid) >= p else (mid, hi)
    return hi


class TestCdf:
    def test_gaussian_symmetry(self):
        assert cdf_eval(Gaussian(0, 1), 0.0) == 0.5

    def test_empirical_count(self):
        assert cdf_eval(Empirical([1, 2, 3]), 2) == pytest.approx(2 / 3)

    def test_gaussian_against_quadrature(self):
        y = 1 + 2 * 1.6449
        assert cdf_eval(Gaussian(1, 2), y) == pytest.approx(0.95, abs=1e-4)
        for y in np.linspace(-6, 8, 29):
            assert Gaussian(1, 2).cdf(y) == pytest.approx(normal_cdf_by_quadrature(y, 1, 2), abs=1e-10)

    def test_limits(self):
        g = Gaussian(2, 3)
        assert g.cdf(-1e300) == 0.0 and g.cdf(1e300) == 1.0
        e = Empirical([4, 1, 9])
        assert e.cdf(0.999) == 0.0 and e.cdf(9) == 1.0

    def test_piecewise_interpolates(self):
        f = PiecewiseLinear([0, 1, 3], [0, 0.5, 1])
        assert f.cdf(0.5) == 0.25
        assert f.cdf(2) == 0.75
        assert f.cdf(-1) == 0.0 and f.cdf(5) == 1.0

    def test_vectorised_match_scalar(self):
        ys = np.linspace(-3, 7, 41)
        for f in (Gaussian(1, 2), Empirical([0, 1, 1, 4]), PiecewiseLinear([0, 2, 5], [0, 0.3, 1])):
            np.testing.assert_allclose(f.cdf_many(ys), [f.cdf(y) for y in ys], atol=1e-15)


class TestQuantile:
    def test_median(self):
        # the smallest double whose computed CDF reaches 0.5 sits a hair below 0
        assert quantile(Gaussian(0, 1), 0.5) == pytest.approx(0.0, abs=1e-15)

    def test_empirical_order_statistic(self):
        assert quantile(Empirical([1, 2, 3]), 0.5) == 2
        assert quantile(Empirical([3, 1, 2]), 0.0) == 1

    def test_gaussian_against_bisection(self):
        g = Gaussian(3, 1)
        assert quantile(g, 0.975) == pytest.approx(3 + 1.96, abs=1e-3)
        for p in (0.01, 0.2, 0.5, 0.9, 0.999):
            assert g.quantile(p) == pytest.approx(bisect_quantile(g.cdf, p), abs=1e-9)

    def test_endpoints(self):
        assert Gaussian(0, 1).quantile(0.0) == -math.inf
        top = Gaussian(0, 1).quantile(1.0)
        assert math.isfinite(top) and Gaussian(0, 1).cdf(top) == 1.0 > Gaussian(0, 1).cdf(math.nextafter(top, 0))
        assert PiecewiseLinear([2, 3], [0, 1]).quantile(0.0) == 2

    def test_flat_segment_takes_left_end(self):
        f = PiecewiseLinear([0, 1, 2, 3], [0, 0.5, 0.5, 1])
        assert f.quantile(0.5) == 1.0

    @pytest.mark.parametrize("p", [-0.1, 1.5, math.nan])
    def test_domain(self, p):
        with pytest.raises(DomainError):
            Gaussian(0, 1).quantile(p)

    def test_ties_and_exact_levels(self):
        e = Empirical([5, 1, 5, 2])
        assert [e.cdf(v) for v in e.values] == [0.25, 0.5, 1.0, 1.0]
        assert e.quantile(0.5) == 2 and e.quantile(0.51) == 5


class TestSampleAndMean:
    def test_reproducible(self):
        a = [sample(Gaussian(0, 1), s) for s in [RngStream(9)] * 1]
        b = sample(Gaussian(0, 1), RngStream(9))
        assert a[0] == b

    def test_streams_differ(self):
        assert RngStream(9, 0).uniform() != RngStream(9, 1).uniform()
        assert RngStream(9).child(0).uniform() != RngStream(9).child(1).uniform()

    def test_single_atom(self):
        r = RngStream(1)
        assert {sample(Empirical([5]), r) for _ in range(20)} == {5}

    def test_gaussian_sample_mean(self):
        u = RngStream(2024).uniforms(100_000)
        assert abs(np.mean(Gaussian(0, 1).ppf_many(u))) <= 0.02

    def test_means(self):
        assert mean(Gaussian(7, 3)) == 7
        assert mean(Empirical([1, 2, 3])) == 2
        assert mean(PiecewiseLinear([0, 1], [0, 1])) == 0.5

    def test_piecewise_moments_against_quadrature(self):
        f = PiecewiseLinear([0, 1, 4], [0, 0.2, 1])
        dens = lambda x: 0.2 if x < 1 else 0.8 / 3
        m = integrate.quad(lambda x: x * dens(x), 0, 4, points=[1])[0]
        v = integrate.quad(lambda x: (x - m) ** 2 * dens(x), 0, 4, points=[1])[0]
        assert f.mean() == pytest.approx(m, abs=1e-12)
        assert f.variance() == pytest.approx(v, abs=1e-12)


class TestValidation:
    def test_bad_forms(self):
        with pytest.raises(ValueError):
            Gaussian(0, 0)
        with pytest.raises(ValueError):
            Empirical([])
        with pytest.raises(ValueError):
            PiecewiseLinear([0, 0], [0, 1])
        with pytest.raises(ValueError):
            PiecewiseLinear([0, 1], [0.1, 1])
        with pytest.raises(ValueError):
            PiecewiseLinear([0, 1, 2], [0, 0.6, 0.5])
