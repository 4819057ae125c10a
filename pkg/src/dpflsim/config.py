"""Run configuration: one JSON document, strictly validated.

Unknown keys are errors, every default is echoed back into the resolved
form, and the resolved form has a stable digest so manifests can prove what
a run actually used.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .engine import TrainerConfig
from .errors import ConfigError

SCHEMES = ("fedavg", "dp_fedavg", "idp_fedavg", "adaptive_clip", "time_adaptive")


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "logistic"
    hidden: int = 16

    def __post_init__(self):
        if self.kind not in ("linear", "logistic", "mlp"):
            raise ConfigError(f"model.kind must be linear, logistic, or mlp, got {self.kind!r}")
        if self.hidden < 1:
            raise ConfigError(f"model.hidden must be positive, got {self.hidden}")


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"
    # synthetic fields
    dimension: int = 8
    classes: int = 3
    separation: float = 6.0
    noise_scale: float = 1.0
    samples_per_client: int = 40
    # csv fields
    path: str | None = None
    label: str | None = None
    categoricals: tuple = ()
    missing: str = "drop"
    label_kind: str = "class"
    test_fraction: float = 0.2
    # shared
    partition: str = "iid"
    dirichlet_beta: float = 0.1

    def __post_init__(self):
        if self.source not in ("synthetic", "csv"):
            raise ConfigError(f"data.source must be synthetic or csv, got {self.source!r}")
        if self.partition not in ("iid", "dirichlet"):
            raise ConfigError(f"data.partition must be iid or dirichlet, got {self.partition!r}")
        if self.source == "csv" and (self.path is None or self.label is None):
            raise ConfigError("data.source=csv requires data.path and data.label")
        if self.dirichlet_beta <= 0:
            raise ConfigError(f"data.dirichlet_beta must be positive, got {self.dirichlet_beta}")


@dataclass(frozen=True)
class AdaptiveClipConfig:
    gamma: float = 0.5
    eta: float = 0.2
    sigma_b: float | None = None  # default resolved at run time: 0.1 * q * N

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"adaptive_clip.gamma must lie in (0, 1), got {self.gamma}")
        if self.eta <= 0:
            raise ConfigError(f"adaptive_clip.eta must be positive, got {self.eta}")
        if self.sigma_b is not None and self.sigma_b <= 0:
            raise ConfigError(f"adaptive_clip.sigma_b must be positive, got {self.sigma_b}")


@dataclass(frozen=True)
class RunConfig:
    scheme: str = "time_adaptive"
    seed: int = 0
    rounds: int = 25
    clients: int = 30
    alpha: float = 8.0
    delta: float = 1e-5
    spending_rate: float = 0.9
    clip_mean: float = 1.0
    group_budgets: tuple = (2.0, 5.0, 10.0)
    group_fractions: tuple = (0.34, 0.43, 0.23)
    saving_rates: tuple = (0.3, 0.5, 0.7)
    transition_rounds: tuple = (13, 13, 13)
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DataConfig = field(default_factory=DataConfig)
    trainer: TrainerConfig = field(default_factory=lambda: TrainerConfig(3, 32, 0.2))
    adaptive_clip: AdaptiveClipConfig = field(default_factory=AdaptiveClipConfig)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must fit in an unsigned 64-bit integer, got {self.seed}")
        k = len(self.group_budgets)
        for name, val in (("group_fractions", self.group_fractions),
                          ("saving_rates", self.saving_rates),
                          ("transition_rounds", self.transition_rounds)):
            if len(val) != k:
                raise ConfigError(
                    f"{name} has {len(val)} entries but group_budgets has {k}"
                )
        if any(b <= 0 for b in self.group_budgets):
            raise ConfigError("group budgets must be positive")


_SECTION_TYPES = {
    "model": ModelConfig,
    "data": DataConfig,
    "adaptive_clip": AdaptiveClipConfig,
    "trainer": TrainerConfig,
}

_TUPLE_FIELDS = ("group_budgets", "group_fractions", "saving_rates",
                 "transition_rounds", "categoricals")


def _build_section(cls, raw: dict, section: str):
    fields = {f.name for f in cls.__dataclass_fields__.values()}
    unknown = set(raw) - fields
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r} in section {section!r}")
    kwargs = dict(raw)
    for key in _TUPLE_FIELDS:
        if key in kwargs and isinstance(kwargs[key], list):
            kwargs[key] = tuple(kwargs[key])
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"bad section {section!r}: {e}") from None


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be an object, got {type(raw).__name__}")
    top_fields = {f.name for f in RunConfig.__dataclass_fields__.values()}
    unknown = set(raw) - top_fields
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r} at config top level")
    kwargs = {}
    for key, val in raw.items():
        if key in _SECTION_TYPES:
            if not isinstance(val, dict):
                raise ConfigError(f"section {key!r} must be an object")
            kwargs[key] = _build_section(_SECTION_TYPES[key], val, key)
        elif key in _TUPLE_FIELDS and isinstance(val, list):
            kwargs[key] = tuple(val)
        else:
            kwargs[key] = val
    try:
        return RunConfig(**kwargs)
    except TypeError as e:
        raise ConfigError(f"bad config: {e}") from None


def parse_config(path) -> RunConfig:
    """Read and validate a JSON run configuration."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from None
    return config_from_dict(raw)


def resolved_dict(cfg: RunConfig) -> dict:
    """Full config with every default filled in, JSON-ready."""
    def crack(obj):
        if hasattr(obj, "__dataclass_fields__"):
            return {k: crack(getattr(obj, k)) for k in obj.__dataclass_fields__}
        if isinstance(obj, tuple):
            return [crack(v) for v in obj]
        return obj
    return crack(cfg)


def config_digest(cfg: RunConfig) -> str:
    """Stable hash of the resolved configuration (seed included)."""
    canon = json.dumps(resolved_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()
