"""Experiment configuration: JSON in, validated dataclasses out.

Unknown keys, wrong types and out-of-range values raise ``ConfigError``
before any computation starts. Every field has a default, so ``{}`` is a
valid config that reproduces the reference experiment.
"""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

from .autoencoder import ModelShape, Scenario, TrainConfig
from .channel import Geometry


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CodebookConfig:
    size: int = 32
    min_deg: float = 100.0
    max_deg: float = 160.0

    def __post_init__(self):
        if self.size < 2:
            raise ValueError("codebook size must be >= 2")
        if not self.min_deg < self.max_deg:
            raise ValueError("codebook needs min_deg < max_deg")


@dataclass(frozen=True)
class TrainSettings:
    """Training hyperparameters; the seed comes from the experiment."""

    batch_size: int = 512
    iterations: int = 20_000
    learning_rate: float = 1e-3
    lr_final: Optional[float] = None
    train_snr_range_db: tuple[float, float] = (0.0, 20.0)
    beam_loss_weight: float = 1.0
    selector_mode: str = "soft"

    def __post_init__(self):
        self.to_train_config(0)  # reuse TrainConfig validation

    def to_train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(seed=seed, **dataclasses.asdict(self))


@dataclass(frozen=True)
class SweepConfig:
    snr_lo_db: float = -4.0
    snr_hi_db: float = 14.0
    snr_step_db: float = 1.0
    n_symbols: int = 1_000_000
    chunk_size: int = 65_536

    def __post_init__(self):
        if self.snr_lo_db > self.snr_hi_db:
            raise ValueError("snr_lo_db must be <= snr_hi_db")
        if not self.snr_step_db > 0:
            raise ValueError("snr_step_db must be positive")
        if self.n_symbols < 1 or self.chunk_size < 1:
            raise ValueError("n_symbols and chunk_size must be >= 1")

    def grid(self, extend_db: float = 0.0) -> list[float]:
        """SNR points from lo to hi + extend_db inclusive."""
        n = int(round((self.snr_hi_db + extend_db - self.snr_lo_db) / self.snr_step_db + 1e-9))
        return [round(self.snr_lo_db + i * self.snr_step_db, 10) for i in range(n + 1)]


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: Geometry = Geometry()
    codebook: CodebookConfig = CodebookConfig()
    kappa_db: float = 3.0
    k_bits: int = 2
    model: ModelShape = ModelShape()
    train: TrainSettings = TrainSettings()
    sweep: SweepConfig = SweepConfig()
    obstruction_losses_db: tuple[float, ...] = (6.0, 7.0, 10.0)
    top_k: tuple[int, ...] = (1, 3, 5, 10, 16, 32)
    gain_targets: tuple[float, ...] = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)
    seed: int = 0

    def __post_init__(self):
        if self.kappa_db < 0:
            raise ValueError("kappa_db is a loss and must be >= 0")
        if self.k_bits < 1:
            raise ValueError("k_bits must be >= 1")
        if any(lo < 0 for lo in self.obstruction_losses_db):
            raise ValueError("obstruction losses must be >= 0")
        if any(not 1 <= k <= self.codebook.size for k in self.top_k):
            raise ValueError("every top-K value must be in [1, codebook size]")
        if any(not 0 < t < 1 for t in self.gain_targets):
            raise ValueError("gain targets must be SER values in (0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def scenario(self) -> Scenario:
        return Scenario.standard(self.geometry, self.codebook.size,
                                 (self.codebook.min_deg, self.codebook.max_deg), self.kappa_db, self.k_bits)

    def train_config(self) -> TrainConfig:
        return self.train.to_train_config(self.seed)

    def to_dict(self) -> dict:
        return _to_jsonable(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _to_jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_to_jsonable(v) for v in obj]
    return obj


def _coerce(value: Any, typ: Any, where: str):
    origin = typing.get_origin(typ)
    args = typing.get_args(typ)
    if origin is Union:
        if value is None and type(None) in args:
            return None
        (inner,) = [a for a in args if a is not type(None)]
        return _coerce(value, inner, where)
    if dataclasses.is_dataclass(typ):
        return _build(typ, value, where)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list, got {type(value).__name__}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(v, args[0], f"{where}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(f"{where}: expected {len(args)} items, got {len(value)}")
        return tuple(_coerce(v, a, f"{where}[{i}]") for i, (v, a) in enumerate(zip(value, args)))
    if typ is bool or isinstance(value, bool):
        if typ is not bool or not isinstance(value, bool):
            raise ConfigError(f"{where}: expected {getattr(typ, '__name__', typ)}, got a boolean")
        return value
    if typ is int:
        if not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if typ is float:
        if not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if typ is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{where}: unsupported type {typ}")


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = {k: _coerce(v, hints[k], f"{where}.{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data, "config")


def load_config(path: Optional[Union[str, Path]] = None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)
