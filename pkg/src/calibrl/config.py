"""Experiment configuration: one JSON document per run, validated up front."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator


class ConfigError(ValueError):
    """Raised for any invalid configuration, before computation starts."""


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SyntheticGaussian(_Block):
    n_cal: int = Field(10_000, ge=1)
    n_eval: int = Field(10_000, ge=1)
    scale: float = Field(0.5, gt=0)


class RecalibrateParams(_Block):
    input: Optional[str] = None
    method: Literal["isotonic", "sigmoid"] = "isotonic"
    m: int = Field(10, ge=1)
    eval_frac: float = Field(0.15, gt=0, lt=1)
    synthetic: SyntheticGaussian = SyntheticGaussian()


class DiagnoseParams(_Block):
    input: str
    recalibrator: Optional[str] = None
    m: int = Field(10, ge=1)
    bins: int = Field(10, ge=1)


class BanditEnvParams(_Block):
    kind: Literal["linear", "beta", "nonlinear", "dataset"] = "linear"
    n_arms: int = Field(5, ge=1)
    d: int = Field(5, ge=2)
    noise: float = Field(0.1, ge=0)
    env_seed: int = 7
    path: Optional[str] = None
    label_column: str = "label"

    @model_validator(mode="after")
    def _dataset_needs_path(self):
        if self.kind == "dataset" and not self.path:
            raise ValueError("dataset environments need a path")
        return self


class AgentParams(_Block):
    kind: Literal["linucb", "callinucb", "oracle", "random"]
    alpha: float = Field(1.0, gt=0)
    lam: float = Field(1.0, gt=0)
    refresh: int = Field(25, ge=1)
    warmup: int = Field(30, ge=1)
    method: Literal["isotonic", "sigmoid"] = "isotonic"


class RefitLoopParams(_Block):
    iterations: int = Field(3, ge=0)
    block: int = Field(100, ge=1)
    initial: int = Field(200, ge=1)
    n_items: int = Field(20, ge=1)
    c: float = Field(1.0, gt=0)
    m: int = Field(10, ge=1)
    min_cal: int = Field(30, ge=1)


class BanditParams(_Block):
    env: BanditEnvParams = BanditEnvParams()
    agents: list[AgentParams] = [AgentParams(kind="linucb"), AgentParams(kind="callinucb")]
    horizon: int = Field(2000, ge=1)
    refit_loop: Optional[RefitLoopParams] = None


class MpcParams(_Block):
    n_traj: int = Field(500, ge=1)
    horizon: int = Field(5, ge=1, le=5)
    n_mc: int = Field(50, ge=1)
    max_order: int = Field(50, ge=0)
    selling: Literal["expected", "sampled", "fifo"] = "expected"


class InventoryParams(_Block):
    input: Optional[str] = None
    n_items: int = Field(100, ge=1)
    train_days: int = Field(600, ge=35)
    cal_days: int = Field(150, ge=6)
    test_days: int = Field(90, ge=1)
    shelf_life: int = Field(5, ge=1, le=64)
    c: float = Field(0.3, gt=0)
    ridge: float = Field(1.0, ge=0)
    method: Literal["isotonic", "sigmoid"] = "isotonic"
    selling: Literal["random", "fifo"] = "random"
    mpc: MpcParams = MpcParams()
    full_budget: bool = False
    refit_loop: Optional[RefitLoopParams] = None


class MdpParams(_Block):
    input: Optional[str] = None
    grouping: Optional[list[list[int]]] = None
    n_mdps: int = Field(50, ge=1)
    max_states: int = Field(8, ge=2)
    max_actions: int = Field(4, ge=1)
    gammas: list[float] = [0.5, 0.9, 0.99]

    @field_validator("gammas")
    @classmethod
    def _gammas(cls, v):
        if not v or any(not 0 <= g < 1 for g in v):
            raise ValueError("discounts must lie in [0, 1)")
        return v


class _Experiment(_Block):
    seed: Optional[int] = None
    trials: int = Field(1, ge=1)
    output: Optional[str] = None


class RecalibrateConfig(_Experiment):
    kind: Literal["recalibrate"]
    recalibrate: RecalibrateParams = RecalibrateParams()


class DiagnoseConfig(_Experiment):
    kind: Literal["diagnose"]
    diagnose: DiagnoseParams


class BanditConfig(_Experiment):
    kind: Literal["bandit"]
    bandit: BanditParams = BanditParams()


class InventoryConfig(_Experiment):
    kind: Literal["inventory"]
    inventory: InventoryParams = InventoryParams()


class MdpVerifyConfig(_Experiment):
    kind: Literal["mdp-verify"]
    mdp: MdpParams = MdpParams()


ExperimentConfig = Annotated[
    Union[RecalibrateConfig, DiagnoseConfig, BanditConfig, InventoryConfig, MdpVerifyConfig],
    Field(discriminator="kind"),
]

KINDS = ("recalibrate", "diagnose", "bandit", "inventory", "mdp-verify")


class _Root(BaseModel):
    config: ExperimentConfig


def _input_paths(cfg) -> list[str]:
    block = {
        "recalibrate": lambda c: [c.recalibrate.input],
        "diagnose": lambda c: [c.diagnose.input, c.diagnose.recalibrator],
        "bandit": lambda c: [c.bandit.env.path],
        "inventory": lambda c: [c.inventory.input],
        "mdp-verify": lambda c: [c.mdp.input],
    }[cfg.kind]
    return [p for p in block(cfg) if p]


def resolve(path: str, base: Path) -> Path:
    p = Path(path)
    return p if p.is_absolute() else base / p


def parse_config(data: dict, *, base: Path = Path("."), kind: str | None = None, seed: int | None = None):
    """Validate a config document; ``kind`` and ``seed`` come from the command line."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    data = dict(data)
    if kind is not None:
        if data.setdefault("kind", kind) != kind:
            raise ConfigError(f"config is for {data['kind']!r}, not {kind!r}")
    if seed is not None:
        data["seed"] = seed
    try:
        cfg = _Root(config=data).config
    except ValidationError as e:
        raise ConfigError(str(e)) from None
    if cfg.seed is None:
        raise ConfigError("no seed given; set 'seed' in the config or pass --seed")
    for p in _input_paths(cfg):
        if not resolve(p, base).is_file():
            raise ConfigError(f"input file not found: {p}")
    return cfg


def load_config(path: str | Path, **kw):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None
    return parse_config(data, base=path.parent, **kw)
