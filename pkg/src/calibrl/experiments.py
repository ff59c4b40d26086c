"""Experiment runners behind the command line.

Each runner takes a validated config block plus a seed and returns a plain
dict of metrics. Nothing in the returned dict depends on timing or on the
number of workers, so reports are reproducible byte for byte.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import bandit as bd
from . import demand as dm
from . import diagnostics as dg
from . import mdp
from .forecast import Gaussian, RngStream
from .inventory import EpisodeMetrics, MpcConfig, heuristic_order, mpc_plan, run_episode
from .parallel import map_ordered
from .recalibration import (
    RecalibratedForecast,
    fit_recalibrator,
    recal_dataset_from_pit,
)

POLICIES = ("calibrated", "uncalibrated", "heuristic")


# -- inventory ------------------------------------------------------------------

@dataclass(frozen=True)
class InventorySetup:
    n_items: int = 100
    train_days: int = 600
    cal_days: int = 150
    test_days: int = 90
    shelf_life: int = 5
    c: float = 0.3
    ridge: float = 1.0
    method: str = "isotonic"
    selling: str = "random"
    mpc: MpcConfig = MpcConfig()
    policies: tuple[str, ...] = POLICIES

    @property
    def n_days(self) -> int:
        return self.train_days + self.cal_days + self.test_days


def _item_job(args) -> dict:
    setup, seed, item, demand, dates = args
    X = dm.feature_matrix(demand, dates)
    tr, cal = setup.train_days, setup.train_days + setup.cal_days
    raw = dm.fit_demand_model(demand[:tr], dates[:tr], ridge=setup.ridge, c=setup.c, features=X)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rec = dm.recalibrate_forecaster(raw, demand[:cal], dates[:cal], tr, cal, method=setup.method, features=X)
    test = demand[cal:]
    out = {}
    for name in setup.policies:
        model = rec if name == "calibrated" else raw
        plan_rng = RngStream(seed, stream=1, path=(item,))

        def policy(i, stock, model=model, name=name):
            row = X[cal + i - 1]
            if name == "heuristic":
                return heuristic_order(int(stock.sum()), float(raw.means(row, 1)[0]))
            return mpc_plan(stock, model.forecasts(row), setup.mpc, plan_rng.child(i))

        metrics, log = run_episode(test, policy, setup.shelf_life, RngStream(seed, stream=2, path=(item,)),
                                   mode=setup.selling, first_day=cal)
        out[name] = (metrics, log.rows)
    return out


def run_inventory(setup: InventorySetup, seed: int, *, workers: int = 1, panel: dm.DemandPanel | None = None,
                  logs: list | None = None) -> dict:
    """Test-period metrics per policy summed over items, for one seed.

    Per-day rows ``(policy, item, day, order, demand, sales, waste, stockout)``
    are appended to ``logs`` when given.
    """
    if panel is None:
        panel = dm.synthetic_panel(seed, setup.n_items, setup.n_days)
    if panel.n_days < setup.n_days:
        raise ValueError(f"panel has {panel.n_days} days, setup needs {setup.n_days}")
    jobs = [(setup, seed, i, panel.demand[i, : setup.n_days], panel.dates[: setup.n_days]) for i in range(panel.n_items)]
    per_item = map_ordered(_item_job, jobs, workers)
    totals = {name: sum((r[name][0] for r in per_item), EpisodeMetrics()) for name in setup.policies}
    if logs is not None:
        for name in setup.policies:
            for item, r in enumerate(per_item):
                logs.extend((name, panel.item_ids[item] if panel.item_ids else item, *row) for row in r[name][1])
    return {name: m.to_dict() for name, m in totals.items()}


# -- recalibration / diagnostics ----------------------------------------------

def gaussian_repair(seed: int, n_cal: int = 10_000, n_eval: int = 10_000, scale: float = 0.5,
                    m: int = 10, method: str = "isotonic", trial: int = 0) -> dict:
    """Overconfident Gaussian forecasts (stddev times ``scale``) before and
    after recalibration, scored on held-out data."""
    g = RngStream(seed, stream=trial).generator
    n = n_cal + n_eval
    mu = g.normal(0.0, 3.0, n)
    sd = g.uniform(0.5, 2.0, n)
    y = mu + sd * g.normal(size=n)
    pit = Gaussian(0.0, 1.0).cdf_many((y - mu) / (scale * sd))
    r = fit_recalibrator(recal_dataset_from_pit(pit[:n_cal]), method)
    before = dg.reliability_from_pit(pit[n_cal:], m)
    after = dg.reliability_from_pit(r.apply_many(pit[n_cal:]), m)
    return {
        "loss_before": dg.calibration_loss(before),
        "loss_after": dg.calibration_loss(after),
        "curve_before": before.to_dict(),
        "curve_after": after.to_dict(),
        "recalibrator": r.to_dict(),
    }


def fit_from_table(forecasts, outcomes, method: str = "isotonic"):
    return fit_recalibrator(recal_dataset_from_pit(dg.pit_values(forecasts, outcomes)), method)


def diagnose(forecasts, outcomes, m: int = 10, bins: int = 10, recalibrator=None) -> dict:
    if recalibrator is not None:
        forecasts = [RecalibratedForecast(f, recalibrator) for f in forecasts]
    pit = dg.pit_values(forecasts, outcomes)
    curve = dg.reliability_from_pit(pit, m)
    return {
        "n": len(pit),
        "calibration_loss": dg.calibration_loss(curve),
        "reliability": curve.to_dict(),
        "pit_histogram": dg.pit_histogram_from_pit(pit, bins).to_dict(),
        "sharpness": dg.sharpness(forecasts),
    }


# -- the outer loop ------------------------------------------------------------

def three_way_split(n: int, eval_frac: float = 0.15, cal_frac: float = 0.3) -> tuple[int, int]:
    """Chronological cut points: train ``[0, a)``, calibration ``[a, b)``, evaluation ``[b, n)``."""
    b = n - int(round(eval_frac * n))
    a = int(round((1 - cal_frac) * b))
    return a, b


def refit_loop_inventory(seed: int, iterations: int = 3, n_items: int = 20, initial_days: int = 200,
                         block_days: int = 100, c: float = 1.0, m: int = 10, min_cal: int = 30,
                         method: str = "isotonic", workers: int = 1) -> dict:
    """Collect demand, split it, refit the forecaster and its recalibrator, repeat.

    Demand does not depend on orders, so the collected data are the
    recorded daily demands; each iteration appends ``block_days`` more.
    Diagnostics use horizon-1 forecasts on the evaluation block.
    """
    total = initial_days + iterations * block_days
    panel = dm.synthetic_panel(seed, n_items, total)
    feats = [dm.feature_matrix(panel.demand[i], panel.dates) for i in range(n_items)]
    report = []
    for it in range(iterations + 1):
        n = initial_days + it * block_days
        a, b = three_way_split(n)
        if b - a - 1 < min_cal:
            raise ValueError(f"calibration split of {b - a} days is below the minimum {min_cal}")
        pit_before, pit_after = [], []
        for i in range(n_items):
            y = panel.demand[i, :n]
            X = feats[i]
            raw = dm.fit_demand_model(y[:a], panel.dates[:a], c=c, features=X)
            cal_pit = dm.horizon_pits(raw, y, X, a, b, 1)
            r = fit_recalibrator(recal_dataset_from_pit(cal_pit), method)
            ev = dm.horizon_pits(raw, y, X, b, n, 1)
            pit_before.append(ev)
            pit_after.append(r.apply_many(ev))
        before = dg.reliability_from_pit(np.concatenate(pit_before), m)
        after = dg.reliability_from_pit(np.concatenate(pit_after), m)
        report.append({
            "iteration": it,
            "days": n,
            "split": [a, b, n],
            "loss_before": dg.calibration_loss(before),
            "loss_after": dg.calibration_loss(after),
            "curve_before": before.to_dict(),
            "curve_after": after.to_dict(),
        })
    return {"iterations": report}


def refit_loop_bandit(seed: int, iterations: int = 3, block: int = 1000, m: int = 10, min_cal: int = 30,
                      env_seed: int = 100, alpha: float = 1.0, method: str = "isotonic") -> dict:
    """Outer loop for the bandit: act with the current calibrated model,
    accumulate (context, arm, reward), refit per-arm ridge on the training
    part and per-arm recalibrators on the calibration part."""
    env = bd.SyntheticNonlinear.random(np.random.default_rng(env_seed))
    k, d = env.n_arms, env.d
    data_x, data_a, data_r = [], [], []
    agent = bd.BanditAgent(k, d, alpha)
    report = []
    for it in range(iterations + 1):
        if it > 0:
            real = env.realize(RngStream(seed, stream=it).generator, block)
            for t in range(block):
                a = agent.select(real.contexts[t])
                data_x.append(real.contexts[t])
                data_a.append(a)
                data_r.append(float(real.rewards[t, a]))
        n = len(data_r)
        entry = {"iteration": it, "samples": n}
        if n:
            sa, sb = three_way_split(n)
            X, A, Rw = np.array(data_x), np.array(data_a), np.array(data_r)
            fresh = bd.BanditAgent(k, d, alpha, calibrated=True)
            for t in range(sa):
                fresh.arms[A[t]].observe(X[t], Rw[t])

            def pits(lo, hi):
                out = {a: [] for a in range(k)}
                for t in range(lo, hi):
                    mu, sd = fresh.arms[A[t]].predict(X[t])
                    out[int(A[t])].append(Gaussian(mu, sd).cdf(Rw[t]))
                return out

            cal, ev = pits(sa, sb), pits(sb, n)
            before, after = [], []
            for a in range(k):
                if len(cal[a]) >= min_cal:
                    r = fit_recalibrator(recal_dataset_from_pit(cal[a]), method)
                    fresh.set_recalibrator(a, r)
                    after.extend(r.apply_many(ev[a]).tolist())
                else:
                    after.extend(ev[a])
                before.extend(ev[a])
            if before:
                cb, ca = dg.reliability_from_pit(before, m), dg.reliability_from_pit(after, m)
                entry.update(loss_before=dg.calibration_loss(cb), loss_after=dg.calibration_loss(ca),
                             curve_before=cb.to_dict(), curve_after=ca.to_dict())
            agent = fresh
        report.append(entry)
    return {"iterations": report}


# -- discrete MDP verification --------------------------------------------------

def mdp_sweep(seed: int, n_mdps: int = 50, max_states: int = 8, max_actions: int = 4,
              gammas=(0.5, 0.9, 0.99)) -> dict:
    g = RngStream(seed).generator
    worst_violation = worst_delta = 0.0
    for i in range(n_mdps):
        S, A = int(g.integers(2, max_states + 1)), int(g.integers(1, max_actions + 1))
        M = mdp.random_mdp(g, S, A, gammas[i % len(gammas)])
        pi = mdp.random_policy(g, S, A)
        T_hat = mdp.make_calibrated_model(M, pi, mdp.random_grouping(g, S, A))
        worst_violation = max(worst_violation, mdp.check_calibration(T_hat, mdp.build_joint(M, pi)))
        vt, vm = mdp.value_identity_check(M, pi, T_hat)
        worst_delta = max(worst_delta, abs(vt - vm))
    return {"mdps": n_mdps, "max_violation": worst_violation, "max_delta": worst_delta}


def mdp_verify(M: mdp.DiscreteMdp, pi: mdp.Policy, T_hat=None, grouping=None) -> dict:
    if T_hat is None:
        T_hat = mdp.make_calibrated_model(M, pi, np.zeros((M.n_states, M.n_actions), dtype=np.int64)
                                          if grouping is None else np.asarray(grouping))
    violation = mdp.check_calibration(T_hat, mdp.build_joint(M, pi))
    vt, vm = mdp.value_identity_check(M, pi, T_hat, check=False)
    return {"violation": violation, "v_true": vt, "v_model": vm, "delta": abs(vt - vm)}
