"""Experiment configuration and its flat ``key = value`` file format."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Any

from .errors import ConfigError

FUSIONS = ("early", "late")
TOPIC_SETTINGS = ("word", "word+doc")
ARCHITECTURES = ("tapa", "siamese")
SHIPPED = ("quora", "paws", "semeval", "synthetic")


@dataclass
class ExperimentConfig:
    # model
    architecture: str = "tapa"
    fusion: str = "early"
    use_topics: bool = True
    topic_setting: str = "word"
    num_topics: int = 70
    alpha_total: float = 50.0
    lda_beta: float = 0.01
    lda_iterations: int = 200
    topic_update: bool = True
    embedding: str = "glove"
    embedding_path: str = ""
    embedding_dim: int = 300
    contextual: bool = False
    contextual_dim: int = 1024
    lstm_hidden: int = 100
    filters: tuple[int, int] = (4, 12)
    kernel_sizes: tuple[int, int] = (2, 2)
    pool_size: int = 2
    num_hidden_layers: int = 2
    hidden_widths: tuple[int, ...] = (100, 50)
    # data
    data_format: str = "quora_tsv"
    max_len: int = 60
    min_count: int = 1
    # optimization
    batch_size: int = 64
    learning_rate: float = 0.05
    optimizer: str = "adadelta"
    rho: float = 0.95
    eps: float = 1e-6
    epochs: int = 50
    patience: int = 5
    # seeds
    init_seed: int = 0
    shuffle_seed: int = 0
    lda_seed: int = 0

    def __post_init__(self):
        self.filters = tuple(int(v) for v in self.filters)
        self.kernel_sizes = tuple(int(v) for v in self.kernel_sizes)
        self.hidden_widths = tuple(int(v) for v in self.hidden_widths)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def validate(self) -> "ExperimentConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.architecture in ARCHITECTURES, f"architecture must be one of {ARCHITECTURES}")
        need(self.fusion in FUSIONS, f"fusion must be one of {FUSIONS}")
        need(self.topic_setting in TOPIC_SETTINGS, f"topic_setting must be one of {TOPIC_SETTINGS}")
        need(self.optimizer == "adadelta", "only the adadelta optimizer is supported")
        need(self.num_topics >= 1, "num_topics must be >= 1")
        need(self.alpha_total > 0 and self.lda_beta > 0, "LDA priors must be positive")
        need(self.embedding_dim >= 0 and self.contextual_dim >= 0, "dims must be nonnegative")
        need(self.lstm_hidden >= 1, "lstm_hidden must be >= 1")
        need(len(self.filters) == 2 and len(self.kernel_sizes) == 2,
             "filters and kernel_sizes need one entry per conv layer (2)")
        bypass = self.filters == (0, 0)
        need(bypass or min(self.filters) >= 1, "filters must be (0, 0) or both positive")
        need(bypass or min(self.kernel_sizes) >= 1, "kernel sizes must be positive")
        need(self.pool_size >= 1, "pool_size must be >= 1")
        need(len(self.hidden_widths) == self.num_hidden_layers,
             f"hidden_widths has {len(self.hidden_widths)} entries, "
             f"num_hidden_layers is {self.num_hidden_layers}")
        widths = list(self.hidden_widths) + [2]
        need(all(a > b for a, b in zip(widths, widths[1:])),
             "hidden widths must strictly decrease and stay above 2")
        need(self.batch_size >= 1 and self.max_len >= 1, "batch_size and max_len must be >= 1")
        need(self.learning_rate > 0 and 0 < self.rho < 1 and self.eps > 0,
             "invalid optimizer constants")
        need(self.epochs >= 1 and self.patience >= 1, "epochs and patience must be >= 1")
        return self

    @property
    def topic_channel(self) -> bool:
        return self.use_topics and self.fusion == "late"

    def fingerprint(self) -> str:
        return hashlib.sha256(dumps(self).encode()).hexdigest()[:12]


def _encode(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _decode(raw: str, kind: Any, key: str):
    raw = raw.strip()
    try:
        if kind is bool or kind == "bool":
            low = raw.lower()
            if low not in ("true", "false"):
                raise ValueError(f"expected true/false, got {raw!r}")
            return low == "true"
        if kind is int or kind == "int":
            return int(raw)
        if kind is float or kind == "float":
            return float(raw)
        if str(kind).startswith("tuple"):
            raw = raw.strip("()")
            return tuple(int(v) for v in raw.split(",") if v.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None


def dumps(config: ExperimentConfig) -> str:
    return "".join(f"{f.name} = {_encode(getattr(config, f.name))}\n" for f in fields(config))


def loads(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    kinds = {f.name: f.type for f in fields(ExperimentConfig)}
    values = dataclasses.asdict(base or ExperimentConfig())
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in kinds:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        values[key] = _decode(raw, kinds[key], key)
    return ExperimentConfig(**values).validate()


def save_config(config: ExperimentConfig, path) -> None:
    Path(path).write_text(dumps(config), encoding="utf-8")


def load_config(path) -> ExperimentConfig:
    """Load a config file; bare names like ``quora`` or ``quora.cfg`` resolve to shipped defaults."""
    path = Path(path)
    if path.is_file():
        return loads(path.read_text(encoding="utf-8"))
    name = path.name[:-4] if path.name.endswith(".cfg") else path.name
    if name in SHIPPED and len(path.parts) == 1:
        return loads(shipped_text(name))
    raise FileNotFoundError(f"config file not found: {path}")


def shipped_text(name: str) -> str:
    return resources.files("tapa.configs").joinpath(f"{name}.cfg").read_text(encoding="utf-8")
