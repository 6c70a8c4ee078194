"""Flat key=value run configuration with documented defaults and strict keys."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

CALIBRATION_MODES = ("quantile", "running_mean")


@dataclass
class RunConfig:
    """Resolved configuration for training, generation, and sweeps.

    Keys and defaults (config file uses the flat names, e.g. ``dataset.count``):

    ==================  =======  =============================================
    key                 default  meaning
    ==================  =======  =============================================
    seed                0        master seed (env NARA_SEED overrides)
    o                   200      observation window length
    M                   20       chunk size / prior horizon
    B                   20       max training chunk length (<= M)
    H                   100      generation horizon
    hidden              51       LSTM hidden width
    layers              2        LSTM layer count
    lr                  0.001    Adam learning rate
    epochs              30       joint training epochs
    batch               2        training batch size
    kappa               2.5      running-mean calibration multiplier
    calibration         quantile threshold rule: quantile | running_mean
    dataset.count       32       number of generated sequences
    dataset.length      400      samples per sequence
    dataset.amp_min     0.5      amplitude range low
    dataset.amp_max     1.5      amplitude range high
    dataset.freq_min    0.01     frequency range low (cycles/step)
    dataset.freq_max    0.05     frequency range high
    dataset.noise       0.02     additive noise std
    dataset.train_frac  0.75     training split fraction
    ==================  =======  =============================================
    """

    seed: int = 0
    o: int = 200
    M: int = 20
    B: int = 20
    H: int = 100
    hidden: int = 51
    layers: int = 2
    lr: float = 0.001
    epochs: int = 30
    batch: int = 2
    kappa: float = 2.5
    calibration: str = "quantile"
    dataset_count: int = 32
    dataset_length: int = 400
    dataset_amp_min: float = 0.5
    dataset_amp_max: float = 1.5
    dataset_freq_min: float = 0.01
    dataset_freq_max: float = 0.05
    dataset_noise: float = 0.02
    dataset_train_frac: float = 0.75

    def validate(self) -> "RunConfig":
        if self.o < 1 or self.M < 1 or self.H < 1 or self.hidden < 1 or self.layers < 1:
            raise ConfigError("o, M, H, hidden, and layers must be positive")
        if not 1 <= self.B <= self.M:
            raise ConfigError("B must lie in [1, M]")
        if self.lr <= 0 or self.kappa <= 0:
            raise ConfigError("lr and kappa must be positive")
        if self.epochs < 0 or self.batch < 1:
            raise ConfigError("epochs must be >= 0 and batch >= 1")
        if self.calibration not in CALIBRATION_MODES:
            raise ConfigError(f"calibration must be one of {CALIBRATION_MODES}")
        if self.dataset_count < 2 or self.dataset_length < 2:
            raise ConfigError("dataset.count >= 2 and dataset.length >= 2 required")
        if not 0 < self.dataset_train_frac < 1:
            raise ConfigError("dataset.train_frac must lie strictly between 0 and 1")
        if self.dataset_amp_max < self.dataset_amp_min or self.dataset_freq_max < self.dataset_freq_min:
            raise ConfigError("dataset ranges out of order")
        if self.dataset_noise < 0:
            raise ConfigError("dataset.noise must be non-negative")
        return self


class ConfigError(ValueError):
    pass


def _field_key(field_name: str) -> str:
    return field_name.replace("dataset_", "dataset.") if field_name.startswith("dataset_") else field_name


KEY_TO_FIELD = {_field_key(f.name): f.name for f in fields(RunConfig)}


def parse_config_text(text: str) -> RunConfig:
    """Parse ``key = value`` lines; '#' starts a comment; unknown keys are rejected."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in KEY_TO_FIELD:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = val
    return config_from_strings(values)


def config_from_strings(values: dict[str, str]) -> RunConfig:
    cfg = RunConfig()
    types = {f.name: f.type for f in fields(RunConfig)}
    for key, val in values.items():
        field_name = KEY_TO_FIELD.get(key)
        if field_name is None:
            raise ConfigError(f"unknown key {key!r}")
        kind = types[field_name]
        try:
            if kind == "int":
                parsed = int(val)
            elif kind == "float":
                parsed = float(val)
            else:
                parsed = val
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: cannot parse {val!r}") from exc
        setattr(cfg, field_name, parsed)
    return cfg.validate()


def load_config(path: str) -> RunConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def apply_seed_env(cfg: RunConfig) -> RunConfig:
    """NARA_SEED, when set, overrides the configured seed."""
    env = os.environ.get("NARA_SEED")
    if env is not None and env != "":
        try:
            cfg.seed = int(env)
        except ValueError as exc:
            raise ConfigError(f"NARA_SEED is not an integer: {env!r}") from exc
    return cfg


def config_items(cfg: RunConfig) -> list[tuple[str, str]]:
    """Canonical (key, rendered value) pairs, in declaration order."""
    out = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, float):
            rendered = f"{v:.17g}"
        else:
            rendered = str(v)
        out.append((_field_key(f.name), rendered))
    return out
