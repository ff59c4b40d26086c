"""Calibrated forecasts for model-based decision making."""
from .forecast import DomainError, Empirical, Forecast, Gaussian, PiecewiseLinear, RngStream
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DomainError",
    "Empirical",
    "Forecast",
    "Gaussian",
    "PiecewiseLinear",
    "RngStream",
]
