"""Flat run configuration with file and CLI overrides.

Precedence: built-in defaults < config file (flat JSON object) < CLI
flags.  Unknown keys in the file are a hard error so threshold typos
fail loudly instead of silently training with defaults.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .corruptor import OperatorPrior
from .reward import RewardConfig
from .trainer import TrainerConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 42
    out_dir: str = "out"
    tables: str = ""
    corpus: str = ""
    dataset: str = ""
    encoder_dim: int = 256
    feature_buckets: int = 4096
    # corruption
    prior: list[float] = field(default_factory=lambda: [0.2, 0.2, 0.2, 0.2, 0.2])
    copies: int = 4
    filters: bool = True
    accept_max_edit: int = 8
    accept_min_cosine: float = 0.65
    # reward
    alpha: float = 0.5
    tau: float = 0.70
    beta: float = 0.75
    dbscan_radius: float = 0.10
    min_pts: int = 2
    # trainer
    eta0: float = 0.5
    clip_epsilon: float = 0.05
    batch_size: int = 96
    candidates: int = 4
    ppo_epochs: int = 2
    total_updates: int = 1000
    top_p: float = 0.95
    temperature: float = 1.0
    advantage_standardize: bool = True
    value_kind: str = "linear"

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in dataclasses.fields(cls)}

    @classmethod
    def load(cls, path: str | None = None, overrides: dict | None = None) -> "RunConfig":
        cfg = cls()
        if path:
            try:
                with open(path, encoding="utf-8") as fh:
                    data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
            if not isinstance(data, dict):
                raise ConfigError(f"{path}: config must be a flat JSON object")
            cfg.apply(data, source=path)
        if overrides:
            cfg.apply(overrides, source="command line")
        return cfg

    def apply(self, values: dict, source: str = "overrides") -> None:
        known = self.field_names()
        for key, value in values.items():
            if key not in known:
                raise ConfigError(f"{source}: unknown config key {key!r}")
            current = getattr(self, key)
            if isinstance(current, bool) and not isinstance(value, bool):
                raise ConfigError(f"{source}: key {key!r} expects a boolean")
            setattr(self, key, value)

    def resolved(self) -> dict:
        return dataclasses.asdict(self)

    def write_echo(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.resolved(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def trainer_config(self) -> TrainerConfig:
        try:
            return TrainerConfig(
                eta0=self.eta0,
                clip_epsilon=self.clip_epsilon,
                batch_size=self.batch_size,
                candidates=self.candidates,
                ppo_epochs=self.ppo_epochs,
                total_updates=self.total_updates,
                top_p=self.top_p,
                temperature=self.temperature,
                advantage_standardize=self.advantage_standardize,
                value_kind=self.value_kind,
                feature_buckets=self.feature_buckets,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def reward_config(self) -> RewardConfig:
        try:
            return RewardConfig(
                alpha=self.alpha,
                tau=self.tau,
                beta=self.beta,
                dbscan_radius=self.dbscan_radius,
                min_pts=self.min_pts,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def operator_prior(self) -> OperatorPrior:
        try:
            return OperatorPrior(weights=tuple(self.prior))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
