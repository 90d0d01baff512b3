"""Experiment configuration and run reports.

One JSON file drives a whole run: architecture, dataset paths, training
hyperparameters, analog device model, cost table, and output location.
Missing fields fall back to per-architecture defaults; unknown keys are
rejected so typos fail loudly instead of silently running defaults.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .crossbar import MV_PER_UNIT, DeviceModel
from .dense import NetworkSpec, TrainConfig
from .htm import DEFAULT_BINS, SpatialPoolerConfig
from .hwcost import CostTable
from .lstm import WINDOWED_LEARNING_RATE, LstmConfig

ARCHITECTURES = ("perceptron", "ann", "dnn", "lstm_sequential",
                 "lstm_windowed", "htm")

# hidden layer widths for the two multi-layer dense rows
ANN_HIDDEN = (300,)
DNN_HIDDEN = (300, 50, 100)


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class HtmSettings:
    bins: int = DEFAULT_BINS
    num_columns: int = 256
    active_columns: int = 16
    potential_fraction: float = 0.5
    permanence_threshold: float = 0.5
    permanence_increment: float = 0.05
    permanence_decrement: float = 0.008
    learning_passes: int = 1

    def pooler_config(self, seed: int) -> SpatialPoolerConfig:
        return SpatialPoolerConfig(
            num_columns=self.num_columns,
            active_columns=self.active_columns,
            potential_fraction=self.potential_fraction,
            permanence_threshold=self.permanence_threshold,
            permanence_increment=self.permanence_increment,
            permanence_decrement=self.permanence_decrement,
            seed=seed)


def _from_section(cls, section: dict, where: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    architecture: str
    train_path: str
    test_path: str
    out_dir: str = "runs/out"
    seed: int = 0
    epochs: int = 40
    learning_rate: float | None = None   # None -> per-architecture default
    scale_max: float | None = None       # None -> per-architecture default
    series_length: int | None = None     # None -> keep file length
    shuffle: bool = True
    gradient_clip_norm: float | None | str = "auto"
    noise_seed: int = 0
    mv_per_unit: float = MV_PER_UNIT
    device: DeviceModel = field(default_factory=DeviceModel)
    cost: CostTable = field(default_factory=CostTable)
    htm: HtmSettings = field(default_factory=HtmSettings)

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.architecture!r}; "
                              f"expected one of {ARCHITECTURES}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.scale_max is not None and self.scale_max <= 0:
            raise ConfigError("scale_max must be positive")

    # ---- per-architecture resolution ----

    def resolved_scale_max(self) -> float | None:
        """Input scaling target; the bucket pipeline takes raw values."""
        if self.scale_max is not None:
            return self.scale_max
        if self.architecture == "lstm_windowed":
            return 0.1
        if self.architecture == "htm":
            return None
        return 0.5

    def resolved_learning_rate(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        if self.architecture == "lstm_windowed":
            return WINDOWED_LEARNING_RATE
        return 0.001

    def train_config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.resolved_learning_rate(),
                           epochs=self.epochs, seed=self.seed,
                           shuffle=self.shuffle,
                           gradient_clip_norm=self.gradient_clip_norm)

    def network_spec(self, series_length: int) -> NetworkSpec:
        if self.architecture == "perceptron":
            sizes = (series_length, 1)
        elif self.architecture == "ann":
            sizes = (series_length, *ANN_HIDDEN, 1)
        elif self.architecture == "dnn":
            sizes = (series_length, *DNN_HIDDEN, 1)
        else:
            raise ConfigError(f"{self.architecture} is not a dense architecture")
        return NetworkSpec(sizes, ("tanh",) * (len(sizes) - 1))

    def lstm_config(self, series_length: int) -> LstmConfig:
        if self.architecture == "lstm_sequential":
            return LstmConfig.sequential(series_length, hidden_dim=4)
        if self.architecture == "lstm_windowed":
            return LstmConfig.windowed(series_length)
        raise ConfigError(f"{self.architecture} is not a recurrent architecture")

    # ---- serialization ----

    def to_dict(self) -> dict:
        d = asdict(self)
        d["device"] = asdict(self.device)
        d["cost"] = asdict(self.cost)
        d["htm"] = asdict(self.htm)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        data = dict(data)
        device = _from_section(DeviceModel, data.pop("device", {}), "device")
        cost = _from_section(CostTable, data.pop("cost", {}), "cost")
        htm = _from_section(HtmSettings, data.pop("htm", {}), "htm")
        allowed = {f.name for f in fields(cls)} - {"device", "cost", "htm"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        missing = {"architecture", "train_path", "test_path"} - set(data)
        if missing:
            raise ConfigError(f"missing required config key(s): {sorted(missing)}")
        try:
            return cls(device=device, cost=cost, htm=htm, **data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json_file(cls, path: str | Path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)


def canonical_json(obj) -> str:
    """Stable rendering: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


@dataclass(frozen=True)
class RunReport:
    architecture: str
    seed: int
    config: dict
    trace: list
    metrics: dict
    analog: dict | None = None
    cost: dict | None = None
    wall_clock_s: float = 0.0

    def deterministic_payload(self) -> dict:
        """Everything reruns must reproduce byte-identically (no timing)."""
        return {"architecture": self.architecture, "seed": self.seed,
                "config": self.config, "trace": self.trace,
                "metrics": self.metrics, "analog": self.analog,
                "cost": self.cost}

    def metrics_json(self) -> str:
        return canonical_json(self.deterministic_payload())

    def report_json(self) -> str:
        payload = self.deterministic_payload()
        payload["wall_clock_s"] = self.wall_clock_s
        return canonical_json(payload)
