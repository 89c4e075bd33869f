"""Run configuration: one YAML file drives every stage.

Every field has a default, so an empty file is a valid configuration.
Unknown keys and mistyped values are collected and reported together.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml


class ConfigValidationError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))
        self.problems = problems


@dataclass
class BankAConfig:
    n_customers: int = 2000
    strength: float = 0.6
    plant_incomplete: int = 20
    plant_low_activity: int = 20


@dataclass
class BankBConfig:
    n_customers: int = 500
    epsilon: float = 0.05
    plant_incomplete: int = 5
    plant_low_activity: int = 5


@dataclass
class PreprocessConfig:
    min_tx: int = 10
    min_distinct: int = 2


@dataclass
class WindowConfig:
    train_len: int = 9
    test_lengths: list[int] = field(default_factory=lambda: [9, 4, 7, 14])


@dataclass
class BaselineConfig:
    period: str = "event"


@dataclass
class LstmConfig:
    hidden: int = 128
    epochs: int = 15
    lr: float = 0.005
    batch_size: int = 64


@dataclass
class CnnConfig:
    filters: list[int] = field(default_factory=lambda: [8, 16])
    kernels: list[list[int]] = field(default_factory=lambda: [[3, 3], [3, 2]])
    pool: str = "end"
    epochs: int = 30
    lr: float = 0.01
    batch_size: int = 64


@dataclass
class LmSection:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    max_len: int = 256
    vocab_size: int = 1000
    min_freq: int = 3
    pretrain_lengths: list[int] = field(default_factory=lambda: [9])
    filler: bool = True
    epochs: int = 3
    lr: float = 0.003
    batch_size: int = 8


@dataclass
class LoraSection:
    r: int = 4
    alpha: float = 8.0
    targets: list[str] = field(default_factory=lambda: ["attn.o"])
    epochs: int = 3
    lr: float = 0.01
    batch_size: int = 16
    normalize_scores: bool = True


@dataclass
class RunConfig:
    seed: int = 42
    out: str = "runs/default"
    bank_a: BankAConfig = field(default_factory=BankAConfig)
    bank_b: BankBConfig = field(default_factory=BankBConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    windows: WindowConfig = field(default_factory=WindowConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    lstm: LstmConfig = field(default_factory=LstmConfig)
    cnn: CnnConfig = field(default_factory=CnnConfig)
    lm: LmSection = field(default_factory=LmSection)
    lora: LoraSection = field(default_factory=LoraSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def digest(self) -> str:
        """sha256 of the canonical JSON form, without the output directory."""
        d = self.to_dict()
        d.pop("out")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def _check_value(value, hint, path: str, problems: list[str]):
    origin = typing.get_origin(hint)
    if dataclasses.is_dataclass(hint):
        if not isinstance(value, dict):
            problems.append(f"{path}: expected a mapping")
            return None
        return _build(hint, value, path + ".", problems)
    if origin is list:
        (inner,) = typing.get_args(hint)
        if not isinstance(value, list):
            problems.append(f"{path}: expected a list")
            return None
        return [_check_value(v, inner, f"{path}[{i}]", problems) for i, v in enumerate(value)]
    if hint is bool:
        if not isinstance(value, bool):
            problems.append(f"{path}: expected true/false")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            problems.append(f"{path}: expected an integer")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{path}: expected a number")
            return value
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            problems.append(f"{path}: expected a string")
        return value
    return value


def _build(cls, data: dict, prefix: str, problems: list[str]):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            problems.append(f"{prefix}{key}: unknown key")
    kwargs = {}
    for name in names & data.keys():
        kwargs[name] = _check_value(data[name], hints[name], f"{prefix}{name}", problems)
        if dataclasses.is_dataclass(hints[name]) and kwargs[name] is None:
            del kwargs[name]
    return cls(**kwargs)


def _semantic_checks(cfg: RunConfig, problems: list[str]) -> None:
    positive = [("bank_a.n_customers", cfg.bank_a.n_customers), ("bank_b.n_customers", cfg.bank_b.n_customers),
                ("preprocess.min_tx", cfg.preprocess.min_tx), ("preprocess.min_distinct", cfg.preprocess.min_distinct),
                ("windows.train_len", cfg.windows.train_len), ("lstm.hidden", cfg.lstm.hidden),
                ("lora.r", cfg.lora.r), ("lm.d_model", cfg.lm.d_model), ("lm.max_len", cfg.lm.max_len)]
    for name, v in positive:
        if isinstance(v, int) and v < 1:
            problems.append(f"{name}: must be >= 1")
    for k in cfg.windows.test_lengths if isinstance(cfg.windows.test_lengths, list) else ():
        if isinstance(k, int) and not 1 <= k <= 14:
            problems.append(f"windows.test_lengths: {k} outside 1..14")
    if cfg.baseline.period not in ("event", "week"):
        problems.append("baseline.period: must be 'event' or 'week'")
    if cfg.cnn.pool not in ("end", "between"):
        problems.append("cnn.pool: must be 'end' or 'between'")
    if isinstance(cfg.lm.d_model, int) and isinstance(cfg.lm.n_heads, int) and cfg.lm.n_heads > 0 \
            and cfg.lm.d_model % cfg.lm.n_heads:
        problems.append("lm.n_heads: must divide lm.d_model")


def from_dict(data: dict | None) -> RunConfig:
    problems: list[str] = []
    cfg = _build(RunConfig, data or {}, "", problems)
    _semantic_checks(cfg, problems)
    if problems:
        raise ConfigValidationError(problems)
    return cfg


def load(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    data = yaml.safe_load(path.read_text(encoding="utf-8"))
    if data is not None and not isinstance(data, dict):
        raise ConfigValidationError([f"{path}: top level must be a mapping"])
    return from_dict(data)
