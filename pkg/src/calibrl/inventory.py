"""Perishable-inventory dynamics, the random-shooting MPC planner, the
safety-stock heuristic and episode accounting.

A stock vector ``q`` has one entry per remaining shelf-life: ``q[0]`` units
expire at the end of today, ``q[-1]`` units are fresh. A day runs as
receive (the order placed last night arrives fresh), sell, spoil/age.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .forecast import RngStream

SELLING = ("random", "fifo")


def _generator(rng) -> np.random.Generator:
    return rng.generator if isinstance(rng, RngStream) else rng


def _stock(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.int64)
    if q.ndim != 1 or len(q) == 0:
        raise ValueError("stock must be a nonempty vector")
    if np.any(q < 0):
        raise ValueError("stock cannot be negative")
    return q


@dataclass(frozen=True)
class InventoryState:
    day: int
    stock: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "stock", tuple(int(v) for v in _stock(self.stock)))

    @property
    def total(self) -> int:
        return sum(self.stock)

    @property
    def shelf_life(self) -> int:
        return len(self.stock)


@dataclass(frozen=True)
class TransitionOutcome:
    state: InventoryState
    sales: int
    waste: int
    stockout: int


def sell(q, demand: int, rng, mode: str = "random") -> tuple[np.ndarray, int, int]:
    """Serve ``demand``; returns (remaining stock, sales, stockout)."""
    q = _stock(q).copy()
    if demand < 0:
        raise ValueError("demand cannot be negative")
    if mode not in SELLING:
        raise ValueError(f"unknown selling mode {mode!r}")
    sales = min(int(q.sum()), int(demand))
    if sales:
        if mode == "fifo":
            taken = np.minimum(q, np.maximum(sales - np.concatenate([[0], np.cumsum(q)[:-1]]), 0))
        else:
            taken = _generator(rng).multivariate_hypergeometric(q, sales)
        q -= taken
    return q, sales, int(demand) - sales


def age(q) -> tuple[np.ndarray, int]:
    """Spoil the units expiring today and shift the rest; returns (stock, waste)."""
    q = _stock(q)
    return np.concatenate([q[1:], [0]]), int(q[0])


def receive(q, order: int) -> np.ndarray:
    if order < 0:
        raise ValueError("orders cannot be negative")
    q = _stock(q).copy()
    q[-1] += int(order)
    return q


def transition(state: InventoryState, order: int, demand: int, rng, mode: str = "random") -> TransitionOutcome:
    """Sell from the current stock, spoil and age, then add ``order`` as fresh units."""
    if order < 0 or demand < 0:
        raise ValueError("orders and demand must be nonnegative")
    q, sales, stockout = sell(state.stock, demand, rng, mode)
    q, waste = age(q)
    q = receive(q, order)
    return TransitionOutcome(InventoryState(state.day + 1, tuple(q)), sales, waste, stockout)


def reward(outcome: TransitionOutcome) -> float:
    return -float(outcome.waste + outcome.stockout)


# -- policies -------------------------------------------------------------------

@dataclass(frozen=True)
class MpcConfig:
    n_traj: int = 500
    horizon: int = 5
    n_mc: int = 50
    max_order: int = 50
    selling: str = "expected"

    def __post_init__(self):
        if min(self.n_traj, self.horizon, self.n_mc) < 1:
            raise ValueError("n_traj, horizon and n_mc must be at least 1")
        if self.max_order < 0:
            raise ValueError("max_order must be nonnegative")
        if self.selling not in kernels.SELLING_MODES:
            raise ValueError(f"unknown planner selling mode {self.selling!r}")

    @property
    def actions(self) -> np.ndarray:
        return np.arange(self.max_order + 1)


FULL_BUDGET = MpcConfig(n_traj=5000, horizon=5, n_mc=300)


def sample_demands(forecasts: Sequence, n_mc: int, rng: np.random.Generator) -> np.ndarray:
    """(n_mc, H) integer demand paths, one column per forecast, by inverse transform."""
    u = rng.random((n_mc, len(forecasts)))
    u[u == 0.0] = 0.5 / n_mc
    cols = [np.asarray(f.ppf_many(u[:, k])) for k, f in enumerate(forecasts)]
    d = np.rint(np.column_stack(cols))
    return np.clip(np.nan_to_num(d, nan=0.0, posinf=1e9), 0, 1e9).astype(np.int64)


def mpc_plan(stock, forecasts: Sequence, cfg: MpcConfig, rng, actions: Sequence[int] | None = None) -> int:
    """First order of the best of ``n_traj`` random order sequences.

    ``forecasts[k]`` is the demand forecast ``k + 1`` days ahead of the last
    observed day; each sequence is scored by its mean reward over ``n_mc``
    shared demand paths. Ties go to the smaller first order.
    """
    acts = cfg.actions if actions is None else np.asarray(actions, dtype=np.int64)
    if len(acts) == 0:
        raise ValueError("action set is empty")
    if len(forecasts) < cfg.horizon:
        raise ValueError(f"planner horizon {cfg.horizon} exceeds the {len(forecasts)} forecasts given")
    g = _generator(rng)
    seqs = acts[g.integers(len(acts), size=(cfg.n_traj, cfg.horizon))]
    demands = sample_demands(forecasts[: cfg.horizon], cfg.n_mc, g)
    seed = int(g.integers(0, 2**63))
    values = kernels.rollout_values(stock, seqs, demands, seed, kernels.SELLING_MODES[cfg.selling])
    return int(seqs[values == values.max(), 0].min())


def heuristic_order(total_stock: int, expected_demand: float) -> int:
    """Top the stock up to 1.5 times the expected demand of the next day."""
    return max(0, math.floor(1.5 * expected_demand + 0.5) - int(total_stock))


def heuristic_policy(state: InventoryState, forecast) -> int:
    return heuristic_order(state.total, forecast.mean())


# -- episodes -------------------------------------------------------------------

@dataclass
class EpisodeMetrics:
    shipped: int = 0
    wasted: int = 0
    stockouts: int = 0
    sold: int = 0
    terminal: int = 0

    @property
    def reward(self) -> float:
        return -float(self.wasted + self.stockouts)

    @property
    def pct_waste(self) -> float:
        return self.wasted / self.shipped if self.shipped else 0.0

    @property
    def pct_stockouts(self) -> float:
        return self.stockouts / self.shipped if self.shipped else 0.0

    def __add__(self, other: "EpisodeMetrics") -> "EpisodeMetrics":
        return EpisodeMetrics(*(getattr(self, k) + getattr(other, k)
                                for k in ("shipped", "wasted", "stockouts", "sold", "terminal")))

    def to_dict(self) -> dict:
        return {
            "shipped": self.shipped,
            "wasted": self.wasted,
            "stockouts": self.stockouts,
            "sold": self.sold,
            "terminal": self.terminal,
            "pct_waste": self.pct_waste,
            "pct_stockouts": self.pct_stockouts,
            "reward": self.reward,
        }


@dataclass
class EpisodeLog:
    rows: list = field(default_factory=list)  # (day, order, demand, sales, waste, stockout)

    HEADER = ("day", "order", "demand", "sales", "waste", "stockout")


Policy = Callable[[int, np.ndarray], int]


def run_episode(demand: Sequence[int], policy: Policy, shelf_life: int, rng, *, mode: str = "random",
                initial=None, first_day: int = 0) -> tuple[EpisodeMetrics, EpisodeLog]:
    """Simulate one item; ``policy(i, stock)`` sees the end-of-day stock before day ``i``.

    ``rng`` is an :class:`RngStream`; selling on day ``i`` draws from its
    child ``i`` so episodes under different policies share random numbers.
    """
    demand = np.asarray(demand, dtype=np.int64)
    if len(demand) < 1:
        raise ValueError("episode needs at least one day")
    if shelf_life < 1:
        raise ValueError("shelf life must be at least 1")
    q = np.zeros(shelf_life, dtype=np.int64) if initial is None else _stock(initial).copy()
    m = EpisodeMetrics()
    log = EpisodeLog()
    for i, d in enumerate(demand):
        order = int(policy(i, q.copy()))
        q = receive(q, order)
        day_rng = rng.child(i) if isinstance(rng, RngStream) else rng
        q, sales, stockout = sell(q, int(d), day_rng, mode)
        q, waste = age(q)
        m.shipped += order
        m.sold += sales
        m.wasted += waste
        m.stockouts += stockout
        log.rows.append((first_day + i, order, int(d), sales, waste, stockout))
    m.terminal = int(q.sum())
    return m, log
