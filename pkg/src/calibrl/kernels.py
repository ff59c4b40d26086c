"""Kernel backend selection.

The compiled extension ``calibrl._ckernels`` is used when importable;
otherwise (or with ``CALIBRL_PURE_PYTHON=1`` in the environment) the
pure-Python twins in ``calibrl._pykernels`` take over. Both produce
identical results, the compiled one just much faster.
"""
from __future__ import annotations

import os

import numpy as np

from . import _pykernels

EXPECTED, SAMPLED, FIFO = _pykernels.EXPECTED, _pykernels.SAMPLED, _pykernels.FIFO
SELLING_MODES = {"expected": EXPECTED, "sampled": SAMPLED, "fifo": FIFO}

_impl = _pykernels
BACKEND = "python"
if os.environ.get("CALIBRL_PURE_PYTHON", "") != "1":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        pass


def pava(y, w=None, *, impl=None) -> np.ndarray:
    """Weighted least-squares nondecreasing fit to ``y`` (in the given order)."""
    y = np.ascontiguousarray(y, dtype=np.float64)
    w = np.ones_like(y) if w is None else np.ascontiguousarray(w, dtype=np.float64)
    if y.shape != w.shape or y.ndim != 1:
        raise ValueError("y and w must be 1-d arrays of equal length")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    return np.asarray((impl or _impl).pava(y, w))


def prefix_plan(actions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lexicographic visiting order and shared-prefix lengths for rollouts."""
    actions = np.asarray(actions)
    n, h = actions.shape
    order = np.lexsort(actions.T[::-1]) if h else np.arange(n)
    a = actions[order]
    same = np.zeros((n, h + 1), dtype=bool)
    if n > 1:
        same[1:, :h] = a[1:] == a[:-1]
    shared = np.argmin(same, axis=1)
    return order.astype(np.int64), shared.astype(np.int64)


def rollout_values(stock, actions, demands, seed: int, mode: int = EXPECTED, *, impl=None) -> np.ndarray:
    """Mean cumulative reward of each action sequence over the demand paths.

    ``stock`` is the shelf vector (index 0 expires first), ``actions`` has
    shape (n_traj, horizon) and ``demands`` shape (n_mc, horizon); every
    sequence is evaluated on the same demand paths.
    """
    stock = np.ascontiguousarray(stock, dtype=np.float64)
    actions = np.ascontiguousarray(actions, dtype=np.int64)
    demands = np.ascontiguousarray(demands, dtype=np.int64)
    if actions.ndim != 2 or demands.ndim != 2 or actions.shape[1] != demands.shape[1]:
        raise ValueError("actions and demands must be 2-d with the same horizon")
    if np.any(actions < 0) or np.any(demands < 0):
        raise ValueError("orders and demands must be nonnegative")
    order, shared = prefix_plan(actions)
    return np.asarray(
        (impl or _impl).rollout_values(stock, actions, demands, order, shared, int(seed) & ((1 << 64) - 1), mode)
    )


def sell_units(stock, demand: int, seed: int, mode: int = SAMPLED, *, impl=None) -> tuple[np.ndarray, int]:
    """Sell ``demand`` units from an integer stock vector; returns (stock, stockout)."""
    x = np.array(stock, dtype=np.int64)
    stockout = (impl or _impl).sell_units(x, int(demand), int(seed) & ((1 << 64) - 1), mode)
    return x, int(stockout)
