"""Command line entry point: ``calibrl <kind> CONFIG [--seed N] [--out DIR]``.

Exit codes: 0 on success, 2 when the config or inputs fail validation,
1 on any other error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import bandit as bd
from . import config as cf
from . import experiments as ex
from . import io
from . import mdp
from .forecast import Gaussian
from .inventory import FULL_BUDGET, EpisodeLog, MpcConfig
from .recalibration import recalibrator_from_json

log = logging.getLogger("calibrl")

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


def _curve_rows(curve: dict) -> list:
    return list(zip(curve["thresholds"], curve["empirical_frequency"]))


CURVE_HEADER = ("threshold", "empirical_frequency")


def _gaussian_table(path: Path):
    rows = io.ingest_csv(path, io.FORECAST_SCHEMA)
    for i, r in enumerate(rows, start=2):
        if not r["stddev"] > 0:
            raise io.CsvError(f"{path}: line {i}: stddev must be positive")
    return [Gaussian(r["mean"], r["stddev"]) for r in rows], [r["outcome"] for r in rows]


# -- runners: each returns (metrics, tables) ---------------------------------

def run_recalibrate(cfg, base: Path, workers: int):
    p = cfg.recalibrate
    if p.input:
        forecasts, outcomes = _gaussian_table(cf.resolve(p.input, base))
        n_eval = max(1, int(round(p.eval_frac * len(outcomes))))
        if len(outcomes) - n_eval < 1:
            raise io.CsvError("too few rows to hold out an evaluation split")
        cut = len(outcomes) - n_eval
        r = ex.fit_from_table(forecasts[:cut], outcomes[:cut], p.method)
        before = ex.diagnose(forecasts[cut:], outcomes[cut:], p.m)
        after = ex.diagnose(forecasts[cut:], outcomes[cut:], p.m, recalibrator=r)
        trials = [{"loss_before": before["calibration_loss"], "loss_after": after["calibration_loss"],
                   "curve_before": before["reliability"], "curve_after": after["reliability"],
                   "recalibrator": r.to_dict(), "n_cal": cut, "n_eval": n_eval}]
    else:
        s = p.synthetic
        trials = [ex.gaussian_repair(cfg.seed, s.n_cal, s.n_eval, s.scale, p.m, p.method, trial=t)
                  for t in range(cfg.trials)]
    tables = {"reliability_before": (CURVE_HEADER, _curve_rows(trials[0]["curve_before"])),
              "reliability_after": (CURVE_HEADER, _curve_rows(trials[0]["curve_after"]))}
    return {"trials": trials}, tables


def run_diagnose(cfg, base: Path, workers: int):
    p = cfg.diagnose
    forecasts, outcomes = _gaussian_table(cf.resolve(p.input, base))
    r = recalibrator_from_json(cf.resolve(p.recalibrator, base).read_text()) if p.recalibrator else None
    res = ex.diagnose(forecasts, outcomes, p.m, p.bins, recalibrator=r)
    h = res["pit_histogram"]
    tables = {
        "reliability": (CURVE_HEADER, _curve_rows(res["reliability"])),
        "pit_histogram": (("bin_lo", "bin_hi", "count"), list(zip(h["edges"][:-1], h["edges"][1:], h["counts"]))),
    }
    return res, tables


def _bandit_env(p, base: Path):
    e = p.env
    rng = np.random.default_rng(e.env_seed)
    if e.kind == "linear":
        return bd.SyntheticLinear.random(rng, e.n_arms, e.d, e.noise)
    if e.kind == "beta":
        return bd.SyntheticBeta.random(rng, e.n_arms, e.d)
    if e.kind == "nonlinear":
        return bd.SyntheticNonlinear.random(rng, e.n_arms, e.d, noise=e.noise)
    X, y = io.load_dataset(cf.resolve(e.path, base), e.label_column)
    return bd.DatasetBandit.from_arrays(X, y)


def run_bandit(cfg, base: Path, workers: int):
    p = cfg.bandit
    env = _bandit_env(p, base)
    if p.env.kind == "dataset" and p.horizon > len(env.labels):
        raise cf.ConfigError(f"dataset has {len(env.labels)} rows, fewer than the horizon {p.horizon}")
    summaries, rows = {}, []
    for spec in p.agents:
        logs, summary = bd.run_bandit(env, spec.model_dump(), p.horizon, cfg.trials, cfg.seed, workers=workers)
        summaries[spec.kind] = summary
        for lg in logs:
            rows.extend((spec.kind, lg.trial, *r) for r in lg.to_rows())
    metrics = {"agents": summaries}
    tables = {"steps": (("agent", "trial", "t", "context_id", "arm", "reward", "optimal"), rows)}
    if p.refit_loop is not None:
        a = p.refit_loop
        metrics["refit_loop"] = ex.refit_loop_bandit(cfg.seed, a.iterations, a.block, a.m, a.min_cal,
                                                     env_seed=p.env.env_seed)
    return metrics, tables


def run_inventory(cfg, base: Path, workers: int):
    p = cfg.inventory
    mpc = FULL_BUDGET if p.full_budget else MpcConfig(**p.mpc.model_dump())
    fields = {f.name for f in dataclasses.fields(ex.InventorySetup)} - {"mpc", "policies"}
    setup = ex.InventorySetup(mpc=mpc, **{k: v for k, v in p.model_dump().items() if k in fields})
    panel = io.load_sales(cf.resolve(p.input, base)) if p.input else None
    if panel is not None and panel.n_days < setup.n_days:
        raise cf.ConfigError(f"sales history covers {panel.n_days} days, the split needs {setup.n_days}")
    trials, rows = [], []
    for t in range(cfg.trials):
        seed = cfg.seed + t
        logs = [] if t == 0 else None
        trials.append({"seed": seed, "policies": ex.run_inventory(setup, seed, workers=workers, panel=panel, logs=logs)})
        if logs is not None:
            rows = logs
    mean = {name: {k: float(np.mean([tr["policies"][name][k] for tr in trials])) for k in trials[0]["policies"][name]}
            for name in setup.policies}
    metrics = {"trials": trials, "mean": mean}
    if p.refit_loop is not None:
        a = p.refit_loop
        metrics["refit_loop"] = ex.refit_loop_inventory(cfg.seed, a.iterations, a.n_items, a.initial, a.block,
                                                        a.c, a.m, a.min_cal, p.method)
    return metrics, {"episode": (("policy", "item") + EpisodeLog.HEADER, rows)}


def run_mdp_verify(cfg, base: Path, workers: int):
    p = cfg.mdp
    if p.input:
        doc = json.loads(cf.resolve(p.input, base).read_text())
        try:
            M = mdp.DiscreteMdp.from_dict(doc)
            pi = mdp.Policy(np.array(doc["policy"]) if "policy" in doc
                            else np.full((M.n_states, M.n_actions), 1.0 / M.n_actions))
        except (KeyError, ValueError) as e:
            raise cf.ConfigError(f"invalid MDP document: {e}") from None
        return ex.mdp_verify(M, pi, grouping=p.grouping), {}
    return ex.mdp_sweep(cfg.seed, p.n_mdps, p.max_states, p.max_actions, tuple(p.gammas)), {}


RUNNERS = {
    "recalibrate": run_recalibrate,
    "diagnose": run_diagnose,
    "bandit": run_bandit,
    "inventory": run_inventory,
    "mdp-verify": run_mdp_verify,
}


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="calibrl", description="Calibrated forecasting and planning experiments.")
    sub = ap.add_subparsers(dest="kind", required=True)
    for kind in cf.KINDS:
        sp = sub.add_parser(kind)
        sp.add_argument("config", help="JSON config file")
        sp.add_argument("--seed", type=int, help="overrides the config seed")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--force", action="store_true", help="overwrite existing outputs")
        sp.add_argument("--workers", type=int, default=1, help="worker processes; does not change results")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def run(kind: str, config_path: str, *, seed=None, out=None, force=False, workers=1) -> Path:
    if workers < 1:
        raise cf.ConfigError("--workers must be at least 1")
    cfg = cf.load_config(config_path, kind=kind, seed=seed)
    base = Path(config_path).parent
    out_dir = Path(out or cfg.output or f"runs/{kind}-seed{cfg.seed}")
    if (out_dir / "report.json").exists() and not force:
        raise FileExistsError(f"refusing to overwrite {out_dir / 'report.json'} (use --force)")
    echo = cfg.model_dump(mode="json", exclude={"output"})
    inputs = [cf.resolve(x, base) for x in cf._input_paths(cfg)]
    t0 = time.perf_counter()
    metrics, tables = RUNNERS[kind](cfg, base, workers)
    elapsed = time.perf_counter() - t0
    report = {"kind": kind, "config": echo, "input_hash": io.content_hash(echo, inputs), "metrics": metrics}
    io.emit_report(report, out_dir, tables=tables, timings={"wall_seconds": elapsed, "workers": workers}, force=force)
    log.info("wrote %s in %.1fs", out_dir, elapsed)
    return out_dir


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        out = run(args.kind, args.config, seed=args.seed, out=args.out, force=args.force, workers=args.workers)
    except (cf.ConfigError, io.CsvError, FileExistsError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:  # noqa: BLE001 - reported, not swallowed
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    print(out / "report.json")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
