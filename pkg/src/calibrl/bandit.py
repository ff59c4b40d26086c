"""LinUCB and its recalibrated variant on contextual bandit environments.

Environments are realised up front for a whole trial (contexts plus the
reward every arm would have paid), so different agents run on the same
random draws and comparisons are paired.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, special

from .forecast import Gaussian, RngStream
from .recalibration import CLIP, Recalibrator, fit_recalibrator, recal_dataset_from_pit


# -- agents -------------------------------------------------------------------

@dataclass
class LinUcbArmState:
    """Bayesian ridge state: ``A = lam I + sum x x^T``, ``b = sum r x``."""

    d: int
    lam: float = 1.0
    A: np.ndarray = field(init=False)
    b: np.ndarray = field(init=False)
    pulls: int = field(default=0, init=False)

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("ridge prior must be positive")
        self.A = self.lam * np.eye(self.d)
        self.b = np.zeros(self.d)
        self._refresh()

    def _refresh(self) -> None:
        c = linalg.cho_factor(self.A, lower=True)
        self.A_inv = linalg.cho_solve(c, np.eye(self.d))
        self.theta = linalg.cho_solve(c, self.b)

    def predict(self, x: np.ndarray) -> tuple[float, float]:
        return float(x @ self.theta), math.sqrt(max(float(x @ self.A_inv @ x), 0.0))

    def observe(self, x: np.ndarray, r: float) -> None:
        self.A += np.outer(x, x)
        self.b += r * x
        self.pulls += 1
        self._refresh()


class BanditAgent:
    """LinUCB, optionally with per-arm quantile recalibration of its
    Gaussian reward predictions.

    With ``calibrated`` set, an arm's score becomes the recalibrated
    ``Phi(alpha)``-quantile once it has ``warmup`` pulls; recalibrators are
    refit on the arm's PIT history every ``refresh`` pulls after that.
    """

    def __init__(self, n_arms: int, d: int, alpha: float = 1.0, lam: float = 1.0, *,
                 calibrated: bool = False, refresh: int = 25, warmup: int = 30, method: str = "isotonic"):
        if n_arms < 1 or d < 1:
            raise ValueError("need at least one arm and one feature")
        if alpha <= 0:
            raise ValueError("exploration level must be positive")
        if refresh < 1 or warmup < 1:
            raise ValueError("refresh period and warm-up must be positive")
        self.arms = [LinUcbArmState(d, lam) for _ in range(n_arms)]
        self.alpha = alpha
        self.q_alpha = float(special.ndtr(alpha))
        self.calibrated = calibrated
        self.refresh = refresh
        self.warmup = warmup
        self.method = method
        self.history: list[list[float]] = [[] for _ in range(n_arms)]
        self.recalibrators: list[Recalibrator | None] = [None] * n_arms
        self._z = [alpha] * n_arms

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    def predict_reward(self, arm: int, x) -> Gaussian | None:
        """Posterior predictive of the mean reward; None while its width is 0."""
        mu, sd = self.arms[arm].predict(np.asarray(x, dtype=np.float64))
        return Gaussian(mu, sd) if sd > 0 else None

    def ucb_scores(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.array([mu + self.alpha * sd for mu, sd in (a.predict(x) for a in self.arms)])

    def calibrated_scores(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.array([mu + z * sd for z, (mu, sd) in zip(self._z, (a.predict(x) for a in self.arms))])

    def select_arm_ucb(self, x) -> int:
        return int(np.argmax(self.ucb_scores(x)))

    def select_arm_calibrated(self, x) -> int:
        return int(np.argmax(self.calibrated_scores(x)))

    def select(self, x) -> int:
        return self.select_arm_calibrated(x) if self.calibrated else self.select_arm_ucb(x)

    def set_recalibrator(self, arm: int, r: Recalibrator | None) -> None:
        """Install ``r`` for ``arm``; its score uses the Gaussian quantile at R^dagger(Phi(alpha))."""
        self.recalibrators[arm] = r
        if r is None:
            self._z[arm] = self.alpha
            return
        q = r.inverse(self.q_alpha)
        q = 1.0 if q is None else q
        # an exact fixed point keeps the raw score bit-for-bit
        self._z[arm] = self.alpha if q == self.q_alpha else float(special.ndtri(min(max(q, CLIP), 1 - CLIP)))

    def update(self, arm: int, x, r: float) -> None:
        x = np.asarray(x, dtype=np.float64)
        state = self.arms[arm]
        mu, sd = state.predict(x)
        pit = Gaussian(mu, sd).cdf(r) if sd > 0 else float(r >= mu)
        self.history[arm].append(pit)
        state.observe(x, r)
        n = state.pulls
        if self.calibrated and n >= self.warmup and (n - self.warmup) % self.refresh == 0:
            self.set_recalibrator(arm, fit_recalibrator(recal_dataset_from_pit(self.history[arm]), self.method))


# -- environments ---------------------------------------------------------------

@dataclass(frozen=True)
class Realization:
    contexts: np.ndarray  # (T, d)
    rewards: np.ndarray  # (T, k) reward each arm would pay
    expected: np.ndarray  # (T, k) expected reward of each arm
    context_ids: np.ndarray  # (T,)


@dataclass(frozen=True)
class SyntheticLinear:
    """Rewards ``theta_a . x + noise`` with contexts ``(1, u)``, ``u`` uniform on [-1, 1]^(d-1)."""

    theta: np.ndarray  # (k, d)
    noise: float = 0.1

    @classmethod
    def random(cls, rng: np.random.Generator, n_arms: int = 5, d: int = 5, noise: float = 0.1, bias: float = 0.5):
        theta = rng.normal(0.0, 0.5, size=(n_arms, d))
        theta[:, 0] = bias
        return cls(theta, noise)

    @property
    def n_arms(self) -> int:
        return self.theta.shape[0]

    @property
    def d(self) -> int:
        return self.theta.shape[1]

    def realize(self, rng: np.random.Generator, horizon: int) -> Realization:
        u = rng.uniform(-1.0, 1.0, size=(horizon, self.d - 1))
        x = np.column_stack([np.ones(horizon), u])
        mean = x @ self.theta.T
        return Realization(x, mean + self.noise * rng.normal(size=mean.shape), mean, np.arange(horizon))


@dataclass(frozen=True)
class SyntheticNonlinear:
    """Rewards ``b_a + Q_a . u^2 + s_a sin(pi W_a . u) + noise``; misspecified for a
    linear model, with per-arm residual spread that differs between arms."""

    b: np.ndarray  # (k,)
    Q: np.ndarray  # (k, d-1)
    S: np.ndarray  # (k,)
    W: np.ndarray  # (k, d-1)
    noise: float = 0.1

    @classmethod
    def random(cls, rng: np.random.Generator, n_arms: int = 5, d: int = 4, amp: float = 1.0, noise: float = 0.1):
        return cls(
            rng.normal(0.0, 0.3, n_arms),
            amp * rng.normal(0.0, 1.0, (n_arms, d - 1)),
            amp * np.abs(rng.normal(0.0, 1.0, n_arms)),
            rng.normal(0.0, 1.0, (n_arms, d - 1)),
            noise,
        )

    @property
    def n_arms(self) -> int:
        return len(self.b)

    @property
    def d(self) -> int:
        return self.Q.shape[1] + 1

    def realize(self, rng: np.random.Generator, horizon: int) -> Realization:
        u = rng.uniform(-1.0, 1.0, size=(horizon, self.d - 1))
        x = np.column_stack([np.ones(horizon), u])
        mean = self.b + (u ** 2) @ self.Q.T + np.sin(np.pi * u @ self.W.T) * self.S
        return Realization(x, mean + self.noise * rng.normal(size=mean.shape), mean, np.arange(horizon))


@dataclass(frozen=True)
class SyntheticBeta:
    """Beta rewards with mean ``sigmoid(theta_a . x)`` and concentration ``kappa``."""

    theta: np.ndarray
    kappa: float = 10.0

    @classmethod
    def random(cls, rng: np.random.Generator, n_arms: int = 5, d: int = 5, kappa: float = 10.0):
        return cls(rng.normal(0.0, 1.0, size=(n_arms, d)), kappa)

    @property
    def n_arms(self) -> int:
        return self.theta.shape[0]

    @property
    def d(self) -> int:
        return self.theta.shape[1]

    def realize(self, rng: np.random.Generator, horizon: int) -> Realization:
        u = rng.uniform(-1.0, 1.0, size=(horizon, self.d - 1))
        x = np.column_stack([np.ones(horizon), u])
        mean = special.expit(x @ self.theta.T)
        rewards = rng.beta(self.kappa * mean, self.kappa * (1.0 - mean))
        return Realization(x, rewards, mean, np.arange(horizon))


@dataclass(frozen=True)
class DatasetBandit:
    """Multiclass data as a bandit: reward 1 when the chosen arm is the label.

    Features are standardised with the dataset statistics; each trial sees
    the rows in a fresh random order.
    """

    features: np.ndarray
    labels: np.ndarray
    n_arms: int
    intercept: bool = True

    @classmethod
    def from_arrays(cls, X, y, n_arms: int | None = None, intercept: bool = True) -> "DatasetBandit":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
            raise ValueError("features must be (n, d) with one label per row")
        k = int(y.max()) + 1 if n_arms is None else n_arms
        if y.min() < 0 or y.max() >= k:
            raise ValueError("labels must be arm indices")
        sd = X.std(axis=0)
        Z = (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
        if intercept:
            Z = np.column_stack([np.ones(len(Z)), Z])
        return cls(Z, y, k, intercept)

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def realize(self, rng: np.random.Generator, horizon: int) -> Realization:
        n = len(self.labels)
        if horizon > n:
            raise ValueError(f"dataset has {n} rows, fewer than the horizon {horizon}")
        ids = rng.permutation(n)[:horizon]
        onehot = np.zeros((horizon, self.n_arms))
        onehot[np.arange(horizon), self.labels[ids]] = 1.0
        return Realization(self.features[ids], onehot, onehot, ids)


def nonlinear_classification(rng: np.random.Generator, n: int = 4000, d: int = 4, n_arms: int = 4,
                             noise: float = 0.3) -> tuple[np.ndarray, np.ndarray]:
    """Labels from the argmax of random quadratic-plus-sinusoid class scores,
    so no linear reward model per arm is correct."""
    X = rng.normal(size=(n, d))
    W = rng.normal(size=(n_arms, d))
    C = rng.normal(size=(n_arms, d, d)) / d
    scores = np.sin(1.5 * X @ W.T) + np.einsum("ni,kij,nj->nk", X, C, X)
    scores += noise * rng.gumbel(size=scores.shape)
    return X, np.argmax(scores, axis=1)


# -- runs -----------------------------------------------------------------------

@dataclass
class BanditRunLog:
    seed: int
    trial: int
    context_ids: np.ndarray
    arms: np.ndarray
    rewards: np.ndarray
    optimal: np.ndarray

    @property
    def cumulative_reward(self) -> float:
        return float(np.sum(self.rewards))

    @property
    def optimal_reward(self) -> float:
        return float(np.sum(self.optimal))

    def to_rows(self) -> list[tuple]:
        return [(t, int(c), int(a), float(r), float(o))
                for t, (c, a, r, o) in enumerate(zip(self.context_ids, self.arms, self.rewards, self.optimal))]


AGENT_KINDS = ("linucb", "callinucb", "oracle", "random")


def make_agent(spec: dict, n_arms: int, d: int) -> BanditAgent | None:
    kind = spec.get("kind", "linucb")
    if kind not in AGENT_KINDS:
        raise ValueError(f"unknown agent kind {kind!r}")
    if kind in ("oracle", "random"):
        return None
    return BanditAgent(
        n_arms, d, alpha=spec.get("alpha", 1.0), lam=spec.get("lam", 1.0),
        calibrated=kind == "callinucb", refresh=spec.get("refresh", 25),
        warmup=spec.get("warmup", 30), method=spec.get("method", "isotonic"),
    )


def run_trial(env, spec: dict, horizon: int, seed: int, trial: int) -> BanditRunLog:
    """One trial; the environment draw depends only on (seed, trial)."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    base = RngStream(seed, stream=trial)
    real = env.realize(base.child(0).generator, horizon)
    agent_rng = base.child(1).generator
    kind = spec.get("kind", "linucb")
    agent = make_agent(spec, env.n_arms, env.d)
    arms = np.empty(horizon, dtype=np.int64)
    rewards = np.empty(horizon)
    for t in range(horizon):
        x = real.contexts[t]
        if kind == "oracle":
            a = int(np.argmax(real.expected[t]))
        elif kind == "random":
            a = int(agent_rng.integers(env.n_arms))
        else:
            a = agent.select(x)
        r = float(real.rewards[t, a])
        if agent is not None:
            agent.update(a, x, r)
        arms[t], rewards[t] = a, r
    return BanditRunLog(seed, trial, real.context_ids, arms, rewards, real.expected.max(axis=1))


def _trial_job(args):
    return run_trial(*args)


def summarize(logs: Sequence[BanditRunLog]) -> dict:
    cum = np.array([log.cumulative_reward for log in logs])
    stderr = float(cum.std(ddof=1) / math.sqrt(len(cum))) if len(cum) > 1 else 0.0
    return {
        "mean_cum_reward": float(cum.mean()),
        "stderr": stderr,
        "optimal": float(np.mean([log.optimal_reward for log in logs])),
        "per_trial": cum.tolist(),
    }


def run_bandit(env, spec: dict, horizon: int, trials: int, seed: int, *, workers: int = 1):
    """Run ``trials`` independent trials; returns (logs, summary) in trial order."""
    if trials < 1:
        raise ValueError("need at least one trial")
    from .parallel import map_ordered

    logs = map_ordered(_trial_job, [(env, spec, horizon, seed, i) for i in range(trials)], workers)
    return logs, summarize(logs)
