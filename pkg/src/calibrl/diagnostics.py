"""Reliability curves, calibration loss, PIT histograms and sharpness."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .forecast import Forecast


@dataclass(frozen=True)
class ReliabilityCurve:
    thresholds: np.ndarray
    frequencies: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "empirical_frequency"])
        for p, f in zip(self.thresholds, self.frequencies):
            w.writerow([repr(float(p)), repr(float(f))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "thresholds": self.thresholds.tolist(),
            "empirical_frequency": self.frequencies.tolist(),
            "calibration_loss": calibration_loss(self),
        }


@dataclass(frozen=True)
class PitHistogram:
    edges: np.ndarray
    counts: np.ndarray

    def to_dict(self) -> dict:
        return {"edges": self.edges.tolist(), "counts": self.counts.tolist()}


def pit_values(forecasts: Sequence[Forecast], outcomes: Sequence[float]) -> np.ndarray:
    if len(forecasts) != len(outcomes):
        raise ValueError(f"{len(forecasts)} forecasts but {len(outcomes)} outcomes")
    if len(forecasts) == 0:
        raise ValueError("no forecasts given")
    return np.array([f.cdf(float(y)) for f, y in zip(forecasts, outcomes)])


def reliability_from_pit(pit, m: int = 10) -> ReliabilityCurve:
    pit = np.asarray(pit, dtype=np.float64)
    if pit.size == 0:
        raise ValueError("no PIT values given")
    if m < 1:
        raise ValueError("need at least one threshold")
    thresholds = np.arange(1, m + 1) / m
    counts = np.searchsorted(np.sort(pit), thresholds, side="right")
    return ReliabilityCurve(thresholds, counts / pit.size)


def reliability_curve(forecasts, outcomes, m: int = 10) -> ReliabilityCurve:
    return reliability_from_pit(pit_values(forecasts, outcomes), m)


def calibration_loss(c: ReliabilityCurve) -> float:
    """Sum of squared gaps between empirical frequency and threshold."""
    return float(np.sum((c.frequencies - c.thresholds) ** 2))


def pit_histogram_from_pit(pit, bins: int = 10) -> PitHistogram:
    pit = np.asarray(pit, dtype=np.float64)
    if pit.size == 0:
        raise ValueError("no PIT values given")
    if bins < 1:
        raise ValueError("need at least one bin")
    idx = np.minimum((pit * bins).astype(np.int64), bins - 1)
    return PitHistogram(np.linspace(0.0, 1.0, bins + 1), np.bincount(idx, minlength=bins))


def pit_histogram(forecasts, outcomes, bins: int = 10) -> PitHistogram:
    return pit_histogram_from_pit(pit_values(forecasts, outcomes), bins)


def sharpness(forecasts: Sequence[Forecast]) -> float:
    """Mean forecast variance."""
    if len(forecasts) == 0:
        raise ValueError("no forecasts given")
    return float(np.mean([f.variance() for f in forecasts]))
