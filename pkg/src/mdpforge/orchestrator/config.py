"""Run configuration: strict JSON in, canonical JSON out."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

from ..envs import ENVIRONMENTS, EnvError, make_env
from ..mutate.llm import LlmClientConfig
from ..trainer import TrainConfig, TrainConfigError

MODES = ("joint", "obs_only", "reward_only", "sparse", "independent")
MUTATORS = ("rules", "llm")

# (short, full) cascade budgets in environment steps
DEFAULT_BUDGETS = {"grid_pickup": (30_000, 150_000), "point_track": (50_000, 250_000)}


class ConfigError(ValueError):
    pass


def _strict(cls, data: Any, what: str) -> Dict[str, Any]:
    if not isinstance(data, dict):
        raise ConfigError(f"{what} must be a JSON object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown {what} fields: {', '.join(unknown)}")
    return data


@dataclass(frozen=True)
class RunConfig:
    env: str = "grid_pickup"
    env_config: Dict[str, Any] = field(default_factory=dict)
    mode: str = "joint"
    mutator: str = "rules"
    iterations: int = 30
    fitness_seeds: int = 3
    short_budget: Optional[int] = None
    full_budget: Optional[int] = None
    cascade_threshold: float = 0.02
    global_ratio: float = 0.7
    islands: int = 4
    migration_interval: int = 10
    seed: int = 0
    output_dir: str = "runs/default"
    retrain_seeds: int = 10
    train: Dict[str, Any] = field(default_factory=dict)
    llm: Optional[Dict[str, Any]] = None
    workers: int = 1
    top_k: int = 3
    failure_window: int = 5
    diverse_samples: int = 3

    def __post_init__(self):
        short, full = DEFAULT_BUDGETS.get(self.env, (None, None))
        if self.short_budget is None:
            object.__setattr__(self, "short_budget", short)
        if self.full_budget is None:
            object.__setattr__(self, "full_budget", full)
        self.validate()

    def validate(self) -> None:
        if self.env not in ENVIRONMENTS:
            raise ConfigError(f"unknown environment {self.env!r}")
        try:
            make_env(self.env, self.env_config)
        except EnvError as exc:
            raise ConfigError(f"env_config: {exc}") from exc
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.mutator not in MUTATORS:
            raise ConfigError(f"mutator must be one of {MUTATORS}")
        for name in ("iterations", "fitness_seeds", "islands", "migration_interval", "retrain_seeds", "workers"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        for name in ("top_k", "failure_window", "diverse_samples"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if not 0.0 <= self.cascade_threshold <= 1.0:
            raise ConfigError("cascade_threshold must lie in [0, 1]")
        if not 0.0 <= self.global_ratio <= 1.0:
            raise ConfigError("global_ratio must lie in [0, 1]")
        if self.full_budget is None or self.full_budget < 1:
            raise ConfigError("full_budget must be positive")
        if self.short_budget is None or self.short_budget < 0:
            raise ConfigError("short_budget must be non-negative (0 disables the cascade)")
        if self.short_budget > self.full_budget:
            raise ConfigError("short_budget must not exceed full_budget")
        _strict(TrainConfig, self.train, "train")
        if "total_steps" in self.train:
            raise ConfigError("set budgets through short_budget/full_budget, not train.total_steps")
        try:
            self.train_config(self.full_budget)
            if self.short_budget:
                self.train_config(self.short_budget)
        except (TrainConfigError, TypeError) as exc:
            raise ConfigError(f"train: {exc}") from exc
        if self.mutator == "llm":
            self.llm_config()

    @property
    def cascade_enabled(self) -> bool:
        return self.short_budget > 0 and self.mode != "sparse"

    def train_config(self, budget: int) -> TrainConfig:
        return TrainConfig(**{**self.train, "total_steps": int(budget)})

    def llm_config(self) -> LlmClientConfig:
        data = _strict(LlmClientConfig, self.llm or {}, "llm")
        try:
            return LlmClientConfig(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"llm: {exc}") from exc

    def make_env(self):
        return make_env(self.env, self.env_config)

    # -- serialization -----------------------------------------------------------------
    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: Any) -> "RunConfig":
        data = dict(_strict(cls, data, "run config"))
        for key in ("env_config", "train"):
            if key in data and not isinstance(data[key], dict):
                raise ConfigError(f"{key} must be a JSON object")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(data)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)
