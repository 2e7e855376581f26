"""Flat ``key = value`` experiment configuration.

One assignment per line, ``#`` starts a comment, unknown keys are rejected.
List values are comma separated; an empty value means an empty list.
"""
from dataclasses import dataclass
from pathlib import Path

from .data import SamplerConfig, SyntheticSpec
from .encoder import MlpConfig, TrainConfig
from .errors import ConfigError, EpmineError
from .evaluation import RetrievalConfig
from .losses import LossConfig


def _int_list(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def _str_list(text):
    return tuple(x.strip().upper() for x in text.split(",") if x.strip())


def _bool(text):
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, default)
SCHEMA = {
    "seed": (int, 0),
    "out_dir": (str, "out"),
    # data
    "dataset": (str, ""),
    "data_format": (str, "csv"),
    "num_classes": (int, 32),
    "modes_per_class": (int, 2),
    "samples_per_class": (int, 32),
    "input_dim": (int, 16),
    "mode_separation": (float, 4.0),
    "class_separation": (float, 2.0),
    "noise_std": (float, 0.5),
    "train_fraction": (float, 0.5),
    # sampler
    "batch_size": (int, 128),
    "group_size": (int, 8),
    # encoder
    "hidden_dims": (_int_list, (64,)),
    "embed_dim": (int, 16),
    "init_scale": (float, 2.0 ** 0.5),
    "checkpoint": (str, ""),
    # training
    "epochs": (int, 40),
    "base_lr": (float, 0.0005),
    "lr_decay_epochs": (_int_list, (20, 30)),
    "lr_decay_factor": (float, 0.1),
    "momentum": (float, 0.0),
    # loss
    "strategy": (str, "EPSHN"),
    "temperature": (float, 0.1),
    "margin": (float, 0.1),
    "shn_fallback": (str, "hardest"),
    "triplet_positive": (str, "random"),
    # evaluation
    "k_values": (_int_list, (1, 2, 4, 8)),
    "retrieval_mode": (str, "self_query"),
    "eval_split": (str, "test"),
    # sweep
    "sweep_group_sizes": (_int_list, (2, 4, 8)),
    "sweep_strategies": (_str_list, ("EP", "HP", "BATCH_ALL", "EPHN", "HPHN", "EPSHN")),
}


def parse_config_text(text, source="<config>"):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = SCHEMA[key][0](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    return values


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict

    @classmethod
    def from_file(cls, path, overrides=None):
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_values(parse_config_text(text, str(path)), overrides)

    @classmethod
    def from_values(cls, values=None, overrides=None):
        merged = {k: default for k, (_, default) in SCHEMA.items()}
        for src in (values or {}), (overrides or {}):
            for k, v in src.items():
                if k not in SCHEMA:
                    raise ConfigError(f"unknown key {k!r}")
                merged[k] = v
        cfg = cls(merged)
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.values[key]

    def with_values(self, **changes):
        return ExperimentConfig.from_values(self.values, changes)

    def validate(self):
        # each constructor re-checks its own invariants
        try:
            self.synthetic_spec()
            self.sampler()
            self.mlp(self["input_dim"])
            self.training()
            self.loss()
            self.retrieval()
        except ConfigError:
            raise
        except EpmineError as exc:
            raise ConfigError(str(exc)) from None
        if not 0.0 < self["train_fraction"] <= 1.0:
            raise ConfigError("train_fraction must lie in (0, 1]")
        if self["data_format"] not in ("csv", "emb1"):
            raise ConfigError("data_format must be csv or emb1")
        if self["eval_split"] not in ("train", "test", "all"):
            raise ConfigError("eval_split must be train, test or all")

    def synthetic_spec(self):
        return SyntheticSpec(
            num_classes=self["num_classes"],
            modes_per_class=self["modes_per_class"],
            samples_per_class=self["samples_per_class"],
            input_dim=self["input_dim"],
            mode_separation=self["mode_separation"],
            class_separation=self["class_separation"],
            noise_std=self["noise_std"],
            seed=self["seed"],
        )

    def sampler(self, group_size=None):
        return SamplerConfig(
            batch_size=self["batch_size"],
            group_size=self["group_size"] if group_size is None else group_size,
            seed=self["seed"],
        )

    def mlp(self, input_dim):
        return MlpConfig(
            input_dim=input_dim,
            hidden_dims=self["hidden_dims"],
            embed_dim=self["embed_dim"],
            init_scale=self["init_scale"],
            seed=self["seed"],
        )

    def training(self):
        return TrainConfig(
            epochs=self["epochs"],
            base_lr=self["base_lr"],
            lr_decay_epochs=self["lr_decay_epochs"],
            lr_decay_factor=self["lr_decay_factor"],
            momentum=self["momentum"],
        )

    def loss(self, strategy=None):
        return LossConfig(
            strategy=self["strategy"] if strategy is None else strategy,
            temperature=self["temperature"],
            margin=self["margin"],
            shn_fallback=self["shn_fallback"],
            triplet_positive=self["triplet_positive"],
            seed=self["seed"],
        )

    def retrieval(self):
        return RetrievalConfig(k_values=self["k_values"], mode=self["retrieval_mode"])
