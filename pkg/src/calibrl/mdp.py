"""Enumerable MDPs for checking calibrated-expectation identities exactly.

Everything here is brute force over small tables: stationary distributions,
policy evaluation, the (s, a, s') joint induced by a policy, calibrated
coarsenings of the dynamics and the expectation identities they satisfy.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

ROW_TOL = 1e-12
LEVEL_TOL = 1e-9
CAL_TOL = 1e-9


class ChainError(RuntimeError):
    """The policy-induced chain has no unique limiting distribution."""


class CalibrationError(ValueError):
    """A model expected to be calibrated is not."""

    def __init__(self, violation: float):
        super().__init__(f"model is not calibrated (max violation {violation:.3g})")
        self.violation = violation


def _check_stochastic(x: np.ndarray, what: str, tol: float = ROW_TOL) -> None:
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise ValueError(f"{what} has negative or non-finite entries")
    bad = np.max(np.abs(x.sum(axis=-1) - 1.0)) if x.size else 0.0
    if bad > tol:
        raise ValueError(f"{what} rows do not sum to 1 (off by {bad:.3g})")


@dataclass(frozen=True)
class DiscreteMdp:
    T: np.ndarray  # (S, A, S)
    r: np.ndarray  # (S,)
    gamma: float

    def __post_init__(self):
        T = np.asarray(self.T, dtype=np.float64)
        r = np.asarray(self.r, dtype=np.float64)
        if T.ndim != 3 or T.shape[0] != T.shape[2] or T.shape[0] == 0 or T.shape[1] == 0:
            raise ValueError("transition tensor must have shape (S, A, S)")
        if r.shape != (T.shape[0],):
            raise ValueError("reward vector must have one entry per state")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        _check_stochastic(T, "transition tensor")
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "r", r)

    @property
    def n_states(self) -> int:
        return self.T.shape[0]

    @property
    def n_actions(self) -> int:
        return self.T.shape[1]

    def with_dynamics(self, T) -> "DiscreteMdp":
        return DiscreteMdp(T, self.r, self.gamma)

    def to_dict(self) -> dict:
        return {
            "states": self.n_states,
            "actions": self.n_actions,
            "T": self.T.tolist(),
            "r": self.r.tolist(),
            "gamma": self.gamma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteMdp":
        mdp = cls(np.array(d["T"], dtype=np.float64), np.array(d["r"], dtype=np.float64), float(d["gamma"]))
        if (d.get("states", mdp.n_states), d.get("actions", mdp.n_actions)) != (mdp.n_states, mdp.n_actions):
            raise ValueError("declared state/action counts do not match the transition tensor")
        return mdp

    @classmethod
    def from_json(cls, text: str) -> "DiscreteMdp":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Policy:
    pi: np.ndarray  # (S, A)

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=np.float64)
        if pi.ndim != 2:
            raise ValueError("policy must be an (S, A) matrix")
        _check_stochastic(pi, "policy")
        object.__setattr__(self, "pi", pi)


@dataclass(frozen=True)
class JointSAS:
    """P[s, a, s'] = sigma(s) * pi(a|s) * T(s'|s, a)."""

    P: np.ndarray

    @property
    def pair_mass(self) -> np.ndarray:
        return self.P.sum(axis=2)

    @property
    def state_marginal(self) -> np.ndarray:
        return self.P.sum(axis=(1, 2))

    @property
    def next_marginal(self) -> np.ndarray:
        return self.P.sum(axis=(0, 1))


def _check_policy(mdp: DiscreteMdp, policy: Policy) -> None:
    if policy.pi.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError("policy shape does not match the MDP")


def induced_chain(mdp: DiscreteMdp, policy: Policy) -> np.ndarray:
    _check_policy(mdp, policy)
    return np.einsum("sa,sat->st", policy.pi, mdp.T)


def _reach(M: np.ndarray) -> np.ndarray:
    R = (M > 0) | np.eye(len(M), dtype=bool)
    while True:
        nxt = (R.astype(np.int64) @ R.astype(np.int64)) > 0
        if np.array_equal(nxt, R):
            return R
        R = nxt


def _period(M: np.ndarray) -> int:
    # BFS levels from state 0; the period is the gcd of level(u) + 1 - level(v) over edges u -> v
    n = len(M)
    level = [-1] * n
    level[0] = 0
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.nonzero(M[u] > 0)[0]:
                if level[v] < 0:
                    level[v] = level[u] + 1
                    nxt.append(int(v))
        frontier = nxt
    g = 0
    for u, v in zip(*np.nonzero(M > 0)):
        g = math.gcd(g, abs(level[u] + 1 - level[v]))
    return g


def stationary_distribution(mdp: DiscreteMdp, policy: Policy, *, smooth: bool = False,
                            tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    """Stationary distribution of the policy-induced chain by power iteration.

    Raises :class:`ChainError` for reducible or periodic chains unless
    ``smooth`` mixes in a uniform jump with probability 1e-6.
    """
    M = induced_chain(mdp, policy)
    n = len(M)
    if smooth:
        M = (1.0 - 1e-6) * M + 1e-6 / n
    if not _reach(M).all():
        raise ChainError("induced chain is reducible; pass smooth=True to add uniform smoothing")
    if _period(M) != 1:
        raise ChainError("induced chain is periodic; pass smooth=True to add uniform smoothing")
    sigma = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = sigma @ M
        nxt /= nxt.sum()
        if np.abs(nxt - sigma).sum() < tol:
            return nxt
        sigma = nxt
    raise ChainError(f"power iteration did not reach residual {tol} in {max_iter} steps")


def policy_evaluation(mdp: DiscreteMdp, policy: Policy, *, tol: float = 1e-12,
                      max_iter: int = 10_000_000) -> np.ndarray:
    """Iterate V <- r + gamma * M V to a sup-norm change below ``tol``."""
    M = induced_chain(mdp, policy)
    V = mdp.r.copy()
    for _ in range(max_iter):
        nxt = mdp.r + mdp.gamma * (M @ V)
        if np.max(np.abs(nxt - V)) < tol:
            return nxt
        V = nxt
    raise RuntimeError("policy evaluation did not converge")


def policy_value(mdp: DiscreteMdp, policy: Policy, **kw) -> float:
    return float(stationary_distribution(mdp, policy, **kw) @ policy_evaluation(mdp, policy))


def build_joint(mdp: DiscreteMdp, policy: Policy, sigma: np.ndarray | None = None, **kw) -> JointSAS:
    if sigma is None:
        sigma = stationary_distribution(mdp, policy, **kw)
    _check_policy(mdp, policy)
    return JointSAS(sigma[:, None, None] * policy.pi[:, :, None] * mdp.T)


def pool_rows(cond: np.ndarray, weight: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Replace each row of ``cond`` by the ``weight``-average of rows sharing its label."""
    cond = np.asarray(cond, dtype=np.float64)
    out = np.empty_like(cond)
    for g in np.unique(labels):
        idx = labels == g
        w = weight[idx]
        if w.sum() <= 0.0:
            raise ValueError(f"group {g} has zero joint mass")
        out[idx] = (w / w.sum()) @ cond[idx]
    return out


def make_calibrated_model(mdp: DiscreteMdp, policy: Policy, grouping, joint: JointSAS | None = None) -> np.ndarray:
    """Pool transition rows within groups of (s, a) pairs, weighted by joint mass.

    ``grouping`` is an (S, A) integer label array.
    """
    labels = np.asarray(grouping)
    if labels.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError("grouping must label every (state, action) pair")
    joint = joint or build_joint(mdp, policy)
    S, A = labels.shape
    pooled = pool_rows(mdp.T.reshape(S * A, S), joint.pair_mass.ravel(), labels.ravel())
    return pooled.reshape(S, A, S)


def check_calibration(T_hat, joint: JointSAS, level_tol: float = LEVEL_TOL) -> float:
    """Largest gap between a predicted probability and the joint-weighted
    frequency of the event among pairs that predict it."""
    T_hat = np.asarray(T_hat, dtype=np.float64)
    P = joint.P
    n_next = P.shape[-1]
    Q = T_hat.reshape(-1, n_next)
    F = P.reshape(-1, n_next)
    w = F.sum(axis=1)
    live = w > 0
    Q, F, w = Q[live], F[live], w[live]
    worst = 0.0
    for j in range(n_next):
        order = np.argsort(Q[:, j], kind="stable")
        q = Q[order, j]
        cuts = np.nonzero(np.diff(q) > level_tol)[0] + 1
        for block in np.split(order, cuts):
            freq = F[block, j].sum() / w[block].sum()
            worst = max(worst, float(np.max(np.abs(freq - Q[block, j]))))
    return worst


def expectation_equality_check(g, P_xy, Q, *, check: bool = True, tol: float = CAL_TOL) -> tuple[float, float]:
    """Compare E_P[g(Y)] with E_{P(X)} E_Q[g(Y) | X] by exact summation.

    With ``check`` the calibration of Q against P is verified first; turn it
    off to evaluate miscalibrated counterexamples.
    """
    g = np.asarray(g, dtype=np.float64)
    P_xy = np.asarray(P_xy, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    if P_xy.shape != Q.shape or P_xy.ndim != 2 or g.shape != (P_xy.shape[1],):
        raise ValueError("P and Q must be (X, Y) tables and g must have one entry per outcome")
    if check:
        v = check_calibration(Q[:, None, :], JointSAS(P_xy[:, None, :]))
        if v > tol:
            raise CalibrationError(v)
    lhs = math.fsum(g * P_xy.sum(axis=0))
    rhs = math.fsum(P_xy.sum(axis=1) * (Q @ g))
    return lhs, rhs


def value_identity_check(mdp: DiscreteMdp, policy: Policy, T_hat, *, check: bool = True,
                   tol: float = CAL_TOL) -> tuple[float, float]:
    """Policy value under the true dynamics versus its one-step expansion
    through ``T_hat``, with the true stationary distribution and value function."""
    T_hat = np.asarray(T_hat, dtype=np.float64)
    if T_hat.shape != mdp.T.shape:
        raise ValueError("model dynamics must match the MDP's shape")
    _check_stochastic(T_hat, "model dynamics", tol=1e-10)
    sigma = stationary_distribution(mdp, policy)
    joint = build_joint(mdp, policy, sigma)
    if check:
        v = check_calibration(T_hat, joint)
        if v > tol:
            raise CalibrationError(v)
    V = policy_evaluation(mdp, policy)
    v_true = float(sigma @ V)
    pair = joint.pair_mass
    v_model = float(sigma @ mdp.r + mdp.gamma * np.einsum("sa,sat,t->", pair, T_hat, V))
    return v_true, v_model


# -- random instances ---------------------------------------------------------

def random_stochastic(rng: np.random.Generator, shape) -> np.ndarray:
    x = rng.exponential(size=shape)
    return x / x.sum(axis=-1, keepdims=True)


def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int, gamma: float) -> DiscreteMdp:
    return DiscreteMdp(random_stochastic(rng, (n_states, n_actions, n_states)), rng.normal(size=n_states), gamma)


def random_policy(rng: np.random.Generator, n_states: int, n_actions: int) -> Policy:
    return Policy(random_stochastic(rng, (n_states, n_actions)))


def random_grouping(rng: np.random.Generator, n_rows: int, n_cols: int | None = None) -> np.ndarray:
    shape = (n_rows,) if n_cols is None else (n_rows, n_cols)
    k = int(rng.integers(1, n_rows * (n_cols or 1) + 1))
    return rng.integers(0, k, size=shape)


def perturb_row(T: np.ndarray, s: int, a: int, eps: float = 0.1) -> np.ndarray:
    """Move ``eps`` of mass between two next-states of row (s, a)."""
    T = np.array(T, dtype=np.float64)
    row = T[s, a]
    src = int(np.argmax(row))
    if row[src] < eps:
        raise ValueError("row has no entry large enough to perturb")
    dst = (src + 1) % len(row)
    row[src] -= eps
    row[dst] += eps
    return T


def adversarial_gap(mdp: DiscreteMdp, policy: Policy, T_hat) -> tuple[float, np.ndarray]:
    """Largest |V_true - V_model| over unit and sign-pattern reward vectors."""
    n = mdp.n_states
    cands = [np.eye(n)[i] for i in range(n)] + [np.eye(n)[i] - np.eye(n)[j] for i in range(n) for j in range(n) if i != j]
    best, best_r = -1.0, None
    for r in cands:
        vt, vm = value_identity_check(mdp.__class__(mdp.T, r, mdp.gamma), policy, T_hat, check=False)
        if abs(vt - vm) > best:
            best, best_r = abs(vt - vm), r
    return best, best_r
