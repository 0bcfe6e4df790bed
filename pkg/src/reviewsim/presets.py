"""Bundled parameter sets learned from ICLR review data."""

from __future__ import annotations

import os
from importlib import resources
from pathlib import Path

import yaml

from .config import ConfigError, ExperimentConfig, config_from_dict

PRESET_NAMES = ("ICLR2020-L4", "ICLR2020-L5", "ICLR2021-L4", "ICLR2021-L5")
ENV_DIR = "REVIEWSIM_PRESET_DIR"


def preset_dir() -> Path:
    override = os.environ.get(ENV_DIR)
    if override:
        return Path(override)
    return Path(str(resources.files("reviewsim") / "data" / "presets"))


def available() -> list[str]:
    return sorted(p.stem for p in preset_dir().glob("*.yaml"))


def preset_dict(name: str) -> dict:
    """Raw preset as stored on disk (values exactly as published, rounded to 4 d.p.)."""
    path = preset_dir() / f"{name}.yaml"
    if not path.is_file():
        raise ConfigError("preset", f"unknown preset {name!r}; valid names: {', '.join(available())}")
    with open(path) as fh:
        return yaml.safe_load(fh)


def preset(name: str, m: int = 3, lambda_r: float = 1.0, lambda_a: float = 1.0, **overrides) -> ExperimentConfig:
    """Model for a bundled preset with authors' signal matrix equal to the reviewers'.

    The published rows and prior are rounded and sum to 1 only within ~2e-4,
    so they are renormalised on load.
    """
    d = dict(preset_dict(name))
    d.update(m=m, lambda_r=lambda_r, lambda_a=lambda_a)
    d.update(overrides)
    return config_from_dict(d, normalize=True)


def noiseless(cfg: ExperimentConfig) -> ExperimentConfig:
    return cfg.rebuild(author_kind="noiseless")
