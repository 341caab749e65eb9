"""TOML configuration files.

A training config is a flat table of TrainConfig fields plus an optional
``[model]`` table of ModelConfig fields::

    learning_rate = 0.001
    batch_size = 4
    variable = "MAX"

    [model]
    hidden = 64
    mesh_level = 3
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .model import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


def load_toml(path) -> dict:
    with Path(path).open("rb") as fh:
        return tomllib.load(fh)


def _check_keys(cls, data: dict, where: str) -> None:
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {unknown}")


def model_config_from_dict(data: dict) -> ModelConfig:
    _check_keys(ModelConfig, data, "model")
    return ModelConfig(**data)


def train_config_from_dict(data: dict) -> TrainConfig:
    data = dict(data)
    model = model_config_from_dict(data.pop("model", {}))
    _check_keys(TrainConfig, data, "training")
    for key in ("train_years", "val_years", "test_years"):
        if key in data:
            data[key] = tuple(data[key])
    return TrainConfig(model=model, **data)


def load_train_config(path) -> TrainConfig:
    return train_config_from_dict(load_toml(path))


def train_config_to_toml(cfg: TrainConfig) -> str:
    """Render a TrainConfig as TOML (scalars and int pairs only)."""

    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return f'"{v}"'
        if isinstance(v, tuple):
            return "[" + ", ".join(fmt(x) for x in v) + "]"
        return repr(v)

    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if f.name != "model" and v is not None:
            lines.append(f"{f.name} = {fmt(v)}")
    lines.append("")
    lines.append("[model]")
    for f in dataclasses.fields(cfg.model):
        lines.append(f"{f.name} = {fmt(getattr(cfg.model, f.name))}")
    return "\n".join(lines) + "\n"
