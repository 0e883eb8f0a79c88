"""Experiment configuration: INI files in, resolved JSON snapshots out.

Sections and keys (all optional)::

    [experiment]  seed, F, per_scenario, sampling_rate, rates, snrs, M, repeats, profiles
    [train]       steps, batch_size, lr, optimizer, log_every, T, beta_start, beta_end
    [model]       any ModelConfig field except input_dim / num_scenarios / T

``rates`` and ``snrs`` are comma-separated; ``inf`` is accepted for SNR.
``profiles`` names a JSON file holding a list of profile dicts.  A JSON
snapshot written by :func:`write_snapshot` can be passed back as a config.

Seeds for the individual stages are derived from the master seed with
:func:`derive_seed`, so one integer reproduces a whole run.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channelgen import ScenarioProfile, default_profiles
from .errors import ConfigError
from .model import ModelConfig
from .pipeline import TrainConfig

# stream identifiers for derive_seed
DATA, SPLIT, TRAIN, CLASSIFY, NOISE, SWEEP = range(6)

DEFAULT_SNRS = (0.0, 5.0, 10.0, 15.0, 20.0, 30.0)


def derive_seed(master: int, *path: int) -> int:
    """32-bit seed for a stage, ``SeedSequence([master, *path])``'s first word."""
    return int(np.random.SeedSequence([int(master), *map(int, path)]).generate_state(1)[0])


@dataclass
class ExperimentConfig:
    seed: int = 0
    F: int = 400
    per_scenario: int = 300
    sampling_rate: float = 0.5
    rates: tuple = (0.1, 0.3, 0.5)
    snrs: tuple = DEFAULT_SNRS
    M: int = 32
    repeats: int = 1
    profiles: list = field(default_factory=default_profiles)
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> "ExperimentConfig":
        if self.F < 1 or self.per_scenario < 2 or self.M < 1 or self.repeats < 1:
            raise ConfigError("F, per_scenario (>= 2), M and repeats must be positive")
        if not self.rates or not self.snrs:
            raise ConfigError("rate and SNR grids must be nonempty")
        for r in (*self.rates, self.sampling_rate):
            if not 0.0 < r < 1.0:
                raise ConfigError(f"sampling rate {r} outside (0, 1)")
        for s in self.snrs:
            if math.isnan(s):
                raise ConfigError("SNR grid contains NaN")
        if not self.profiles:
            raise ConfigError("no scenario profiles")
        if sorted(p.label for p in self.profiles) != list(range(len(self.profiles))):
            raise ConfigError("profile labels must be 0..C-1")
        for p in self.profiles:
            try:
                p.validate(self.F)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        try:
            self.train.model_config(2 * self.F + 4, len(self.profiles))
        except TypeError as exc:
            raise ConfigError(f"bad [model] key: {exc}") from exc
        return self

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        d["rates"], d["snrs"] = list(self.rates), list(self.snrs)
        d["profiles"] = [p.to_dict() for p in self.profiles]
        d["train"] = self.train.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown experiment keys: {sorted(unknown)}")
        if "profiles" in d:
            d["profiles"] = [ScenarioProfile.from_dict(p) for p in d["profiles"]]
        if "train" in d:
            d["train"] = _train_from_dict(d["train"])
        for k in ("rates", "snrs"):
            if k in d:
                d[k] = tuple(float(v) for v in d[k])
        return cls(**d).validate()


def _train_from_dict(d: dict) -> TrainConfig:
    names = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown [train] keys: {sorted(unknown)}")
    try:
        return TrainConfig(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _coerce(raw: str, kind, key: str):
    try:
        if kind is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot read {raw!r} as {kind.__name__}") from exc


def _grid(raw: str, key: str) -> tuple:
    try:
        return tuple(float(v) for v in raw.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: bad number list {raw!r}") from exc


_EXP_TYPES = {"seed": int, "F": int, "per_scenario": int, "sampling_rate": float, "M": int, "repeats": int}
_TRAIN_TYPES = {"steps": int, "batch_size": int, "lr": float, "optimizer": str, "log_every": int,
                "T": int, "beta_start": float, "beta_end": float}
_MODEL_TYPES = {f.name: f.type for f in dataclasses.fields(ModelConfig)
                if f.name not in ("input_dim", "num_scenarios", "T")}
_MODEL_TYPES = {k: {"int": int, "bool": bool, "float": float}.get(v, v) for k, v in _MODEL_TYPES.items()}


def parse_ini(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep key case (F, T)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    extra = set(cp.sections()) - {"experiment", "train", "model"}
    if extra:
        raise ConfigError(f"unknown config sections: {sorted(extra)}")
    exp: dict = {}
    if cp.has_section("experiment"):
        for key, raw in cp.items("experiment"):
            if key in ("rates", "snrs"):
                exp[key] = _grid(raw, key)
            elif key == "profiles":
                path = Path(raw) if base_dir is None else base_dir / raw
                try:
                    exp["profiles"] = [ScenarioProfile.from_dict(p) for p in json.loads(path.read_text())]
                except (OSError, ValueError, TypeError, KeyError) as exc:
                    raise ConfigError(f"cannot load profiles from {path}: {exc}") from exc
            elif key in _EXP_TYPES:
                exp[key] = _coerce(raw, _EXP_TYPES[key], key)
            else:
                raise ConfigError(f"unknown [experiment] key: {key}")
    train: dict = {}
    if cp.has_section("train"):
        for key, raw in cp.items("train"):
            if key not in _TRAIN_TYPES:
                raise ConfigError(f"unknown [train] key: {key}")
            train[key] = _coerce(raw, _TRAIN_TYPES[key], key)
    if cp.has_section("model"):
        model = {}
        for key, raw in cp.items("model"):
            if key not in _MODEL_TYPES:
                raise ConfigError(f"unknown [model] key: {key}")
            model[key] = _coerce(raw, _MODEL_TYPES[key], key)
        train["model"] = model
    cfg = ExperimentConfig(**exp)
    if train:
        cfg.train = _train_from_dict(train)
    return cfg.validate()


def load_config(path=None) -> ExperimentConfig:
    """Read an INI file or a JSON snapshot; ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig().validate()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if path.suffix == ".json":
        try:
            return ExperimentConfig.from_dict(json.loads(text))
        except ValueError as exc:
            raise ConfigError(f"bad JSON config {path}: {exc}") from exc
    return parse_ini(text, path.parent)


def snapshot_text(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


def write_snapshot(cfg: ExperimentConfig, out_dir) -> Path:
    path = Path(out_dir) / "config.json"
    path.write_text(snapshot_text(cfg))
    return path
