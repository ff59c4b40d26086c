"""CDF-valued forecasts over a scalar outcome.

Three forms are supported: :class:`Gaussian`, :class:`Empirical` (a sorted
sample) and :class:`PiecewiseLinear` (linear CDF between knots). Every form
exposes scalar ``cdf``/``quantile`` plus vectorised ``cdf_many``/``ppf_many``
for bulk work.

``quantile`` is the generalised inverse ``inf{y : p <= F(y)}`` evaluated
exactly in floating point: the returned ``y`` is the smallest double whose
computed CDF reaches ``p``. That makes ``cdf(quantile(p)) >= p`` and
``quantile(cdf(y)) <= y`` hold without tolerance.
"""
from __future__ import annotations

import bisect
import math
import struct
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Protocol, Sequence, runtime_checkable

import numpy as np
from scipy import special

SQRT2 = math.sqrt(2.0)


class DomainError(ValueError):
    """Argument outside the domain of a probability map."""


def _check_level(p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"probability level {p!r} outside [0, 1]")
    return p


# -- float bisection ---------------------------------------------------------

def _key(x: float) -> int:
    (i,) = struct.unpack("<q", struct.pack("<d", x))
    return i if i >= 0 else -(i & 0x7FFFFFFFFFFFFFFF)


def _unkey(k: int) -> float:
    bits = k if k >= 0 else (-k) | (1 << 63)
    (x,) = struct.unpack("<d", struct.pack("<Q", bits))
    return x


def smallest_reaching(cdf, p: float, guess: float, lo: float, hi: float) -> float:
    """Smallest double ``y`` in ``(lo, hi]`` with ``cdf(y) >= p``.

    Requires ``cdf(lo) < p <= cdf(hi)``; ``guess`` seeds an exponential
    search so the usual cost is a handful of evaluations.
    """
    klo, khi = _key(lo), _key(hi)
    kg = min(max(_key(guess), klo + 1), khi)
    step = 1
    if cdf(_unkey(kg)) >= p:
        khi = kg
        while True:
            cand = khi - step
            if cand <= klo:
                break
            if cdf(_unkey(cand)) >= p:
                khi = cand
                step *= 2
            else:
                klo = cand
                break
    else:
        klo = kg
        while True:
            cand = klo + step
            if cand >= khi:
                break
            if cdf(_unkey(cand)) >= p:
                khi = cand
                break
            klo = cand
            step *= 2
    while khi - klo > 1:
        mid = (khi + klo) // 2
        if cdf(_unkey(mid)) >= p:
            khi = mid
        else:
            klo = mid
    return _unkey(khi)


# -- forecast forms ----------------------------------------------------------

@runtime_checkable
class Forecast(Protocol):
    def cdf(self, y: float) -> float: ...

    def quantile(self, p: float) -> float: ...

    def cdf_many(self, ys) -> np.ndarray: ...

    def ppf_many(self, ps) -> np.ndarray: ...

    def mean(self) -> float: ...

    def variance(self) -> float: ...


@dataclass(frozen=True)
class Gaussian:
    mu: float
    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0.0 and math.isfinite(self.sigma)):
            raise ValueError(f"Gaussian stddev must be positive and finite, got {self.sigma!r}")
        if not math.isfinite(self.mu):
            raise ValueError(f"Gaussian mean must be finite, got {self.mu!r}")

    def cdf(self, y: float) -> float:
        return 0.5 * math.erfc(-(y - self.mu) / (self.sigma * SQRT2))

    def quantile(self, p: float) -> float:
        p = _check_level(p)
        if p == 0.0:
            return -math.inf
        if p == 1.0:
            # the float CDF saturates about 8.3 stddevs out; return that point, not inf
            return smallest_reaching(self.cdf, 1.0, self.mu + 8.3 * self.sigma, -math.inf, math.inf)
        guess = NormalDist(self.mu, self.sigma).inv_cdf(p)
        return smallest_reaching(self.cdf, p, guess, -math.inf, math.inf)

    def cdf_many(self, ys) -> np.ndarray:
        ys = np.asarray(ys, dtype=np.float64)
        return 0.5 * special.erfc(-(ys - self.mu) / (self.sigma * SQRT2))

    def ppf_many(self, ps) -> np.ndarray:
        return self.mu + self.sigma * special.ndtri(np.asarray(ps, dtype=np.float64))

    def mean(self) -> float:
        return self.mu

    def variance(self) -> float:
        return self.sigma * self.sigma


@dataclass(frozen=True)
class Empirical:
    """Empirical distribution of a sample; ties are allowed."""

    values: tuple[float, ...]

    def __init__(self, values: Sequence[float]):
        vals = tuple(sorted(float(v) for v in values))
        if not vals:
            raise ValueError("Empirical forecast needs at least one sample")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("Empirical samples must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return len(self.values)

    def cdf(self, y: float) -> float:
        return bisect.bisect_right(self.values, y) / self.n

    def _rank(self, p: float) -> int:
        # smallest k >= 1 with k/n >= p, compared in the same arithmetic as cdf
        n = self.n
        k = max(1, math.ceil(p * n))
        while k > 1 and (k - 1) / n >= p:
            k -= 1
        while k < n and k / n < p:
            k += 1
        return k

    def quantile(self, p: float) -> float:
        return self.values[self._rank(_check_level(p)) - 1]

    def cdf_many(self, ys) -> np.ndarray:
        arr = np.asarray(self.values)
        return np.searchsorted(arr, np.asarray(ys, dtype=np.float64), side="right") / self.n

    def ppf_many(self, ps) -> np.ndarray:
        ps = np.asarray(ps, dtype=np.float64)
        k = np.clip(np.ceil(ps * self.n).astype(np.int64), 1, self.n)
        return np.asarray(self.values)[k - 1]

    def mean(self) -> float:
        return math.fsum(self.values) / self.n

    def variance(self) -> float:
        m = self.mean()
        return math.fsum((v - m) ** 2 for v in self.values) / self.n


@dataclass(frozen=True)
class PiecewiseLinear:
    """CDF interpolated linearly between knots (a piecewise-uniform density)."""

    knots: tuple[float, ...]
    levels: tuple[float, ...]

    def __init__(self, knots: Sequence[float], levels: Sequence[float]):
        xs = tuple(float(v) for v in knots)
        cs = tuple(float(v) for v in levels)
        if len(xs) < 2 or len(xs) != len(cs):
            raise ValueError("need at least two knots with matching CDF levels")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("knots must be strictly increasing")
        if any(b < a for a, b in zip(cs, cs[1:])):
            raise ValueError("CDF levels must be nondecreasing")
        if cs[0] != 0.0 or cs[-1] != 1.0:
            raise ValueError("CDF levels must start at 0 and end at 1")
        object.__setattr__(self, "knots", xs)
        object.__setattr__(self, "levels", cs)

    def cdf(self, y: float) -> float:
        xs, cs = self.knots, self.levels
        if y <= xs[0]:
            return 0.0
        if y >= xs[-1]:
            return 1.0
        i = bisect.bisect_right(xs, y) - 1
        v = cs[i] + (cs[i + 1] - cs[i]) * ((y - xs[i]) / (xs[i + 1] - xs[i]))
        return min(max(v, cs[i]), cs[i + 1])

    def quantile(self, p: float) -> float:
        p = _check_level(p)
        xs, cs = self.knots, self.levels
        if p == 0.0:
            return xs[0]
        j = bisect.bisect_left(cs, p)
        # flat stretches resolve to their left end: cs[j-1] < p <= cs[j]
        guess = xs[j - 1] + (p - cs[j - 1]) / (cs[j] - cs[j - 1]) * (xs[j] - xs[j - 1])
        return smallest_reaching(self.cdf, p, guess, xs[j - 1], xs[j])

    def cdf_many(self, ys) -> np.ndarray:
        return np.interp(np.asarray(ys, dtype=np.float64), self.knots, self.levels)

    def ppf_many(self, ps) -> np.ndarray:
        ps = np.asarray(ps, dtype=np.float64)
        xs, cs = np.asarray(self.knots), np.asarray(self.levels)
        j = np.clip(np.searchsorted(cs, ps, side="left"), 1, len(cs) - 1)
        span = cs[j] - cs[j - 1]
        frac = np.divide(ps - cs[j - 1], span, out=np.zeros_like(ps), where=span > 0)
        return xs[j - 1] + np.clip(frac, 0.0, 1.0) * (xs[j] - xs[j - 1])

    def mean(self) -> float:
        xs, cs = self.knots, self.levels
        return math.fsum((cs[i + 1] - cs[i]) * (xs[i] + xs[i + 1]) / 2.0 for i in range(len(xs) - 1))

    def variance(self) -> float:
        xs, cs = self.knots, self.levels
        second = math.fsum(
            (cs[i + 1] - cs[i]) * (xs[i] ** 2 + xs[i] * xs[i + 1] + xs[i + 1] ** 2) / 3.0
            for i in range(len(xs) - 1)
        )
        return max(second - self.mean() ** 2, 0.0)


# -- random streams ----------------------------------------------------------

@dataclass
class RngStream:
    """Seeded random stream; equal ``(seed, stream, path)`` replay equal draws.

    Single-owner: hand each task its own stream via :meth:`child`.
    """

    seed: int
    stream: int = 0
    path: tuple[int, ...] = ()
    _gen: np.random.Generator | None = field(default=None, init=False, repr=False, compare=False)

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream, *self.path))
            self._gen = np.random.Generator(np.random.PCG64(ss))
        return self._gen

    def child(self, i: int) -> "RngStream":
        return RngStream(self.seed, self.stream, (*self.path, int(i)))

    def uniform(self) -> float:
        """A draw from the open interval (0, 1)."""
        g = self.generator
        u = g.random()
        while u == 0.0:
            u = g.random()
        return float(u)

    def uniforms(self, size) -> np.ndarray:
        u = self.generator.random(size)
        while np.any(u == 0.0):
            u[u == 0.0] = self.generator.random(int(np.sum(u == 0.0)))
        return u

    def seed64(self) -> int:
        return int(self.generator.integers(0, 2**63, dtype=np.int64))


# -- functional surface ------------------------------------------------------

def cdf_eval(f: Forecast, y: float) -> float:
    return f.cdf(y)


def quantile(f: Forecast, p: float) -> float:
    return f.quantile(p)


def sample(f: Forecast, rng: RngStream) -> float:
    """Inverse-transform sample: ``quantile(f, u)`` with ``u`` uniform on (0, 1)."""
    return f.quantile(rng.uniform())


def mean(f: Forecast) -> float:
    return f.mean()
