"""Run configuration: model tag, architecture, training settings, paths and seed."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .model.strnn import ModelConfig, ModelTag
from .training import TrainConfig

SEED_ENV = "STRNN_SEED"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    tag: ModelTag = field(default_factory=ModelTag)
    model: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    dataset: str = ""
    output_dir: str = "run"
    seed: int = 0
    base_dir: str = field(default=".", compare=False)

    def resolve(self, path: str) -> str:
        """Paths in a config file are relative to the file's directory."""
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    @property
    def dataset_dir(self) -> str:
        return self.resolve(self.dataset)

    @property
    def out_dir(self) -> str:
        return self.resolve(self.output_dir)

    def model_config(self) -> ModelConfig:
        return ModelConfig(tag=self.tag, seed=self.seed, **self.model)

    def train_config(self) -> TrainConfig:
        d = self.train.to_dict()
        d["seed"] = self.seed
        return TrainConfig.from_dict(d)

    def to_dict(self) -> dict:
        return {
            "tag": str(self.tag),
            "model": dict(self.model),
            "train": {k: v for k, v in self.train.to_dict().items() if k != "seed"},
            "dataset": self.dataset,
            "output_dir": self.output_dir,
            "seed": self.seed,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict, env=None) -> "RunConfig":
        env = os.environ if env is None else env
        known = {"tag", "model", "train", "dataset", "output_dir", "seed"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown configuration keys: {sorted(extra)}")
        try:
            tag = ModelTag.parse(d.get("tag", "Composite_20_20_HY"))
            model = dict(d.get("model", {}))
            bad = set(model) - (set(ModelConfig.__dataclass_fields__) - {"tag", "seed"})
            if bad:
                raise ConfigError(f"unknown model keys: {sorted(bad)}")
            train_d = dict(d.get("train", {}))
            bad = set(train_d) - set(TrainConfig.__dataclass_fields__)
            if bad:
                raise ConfigError(f"unknown train keys: {sorted(bad)}")
            train = TrainConfig.from_dict(train_d)
            _ = train.weights  # raises on invalid w_r / w_s
            seed = int(d.get("seed", 0))
            if env.get(SEED_ENV):
                seed = int(env[SEED_ENV])
            cfg = cls(tag, model, train, str(d.get("dataset", "")), str(d.get("output_dir", "run")), seed)
            cfg.model_config()
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return cfg

    @classmethod
    def load(cls, path, env=None) -> "RunConfig":
        with open(path) as fh:
            try:
                d = json.load(fh)
            except ValueError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        cfg = cls.from_dict(d, env)
        cfg.base_dir = os.path.dirname(os.path.abspath(path))
        return cfg
