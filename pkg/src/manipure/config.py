"""JSON run configuration: defaults, strict validation, provenance copy.

Every command resolves one RunConfig. Unknown keys are rejected and every
validation error names the offending field path, so a typo cannot
silently fall back to a default.
"""
import json
from dataclasses import dataclass, field

from .attacks import AttackConfig
from .diffusion import ReverseConfig, linear_schedule
from .errors import ConfigError
from .freqpure import FreqPureConfig
from .mani import ManiConfig


@dataclass(frozen=True)
class DatasetConfig:
    k: int = 4
    n_per_class: int = 200
    h: int = 32
    w: int = 32

    def __post_init__(self):
        if self.k < 2:
            raise ConfigError("k must be >= 2", path="dataset.k")
        if self.n_per_class < 1:
            raise ConfigError("n_per_class must be >= 1", path="dataset.n_per_class")
        for name, side in (("h", self.h), ("w", self.w)):
            if side < 8 or side & (side - 1):
                raise ConfigError("sides must be powers of two >= 8",
                                  path=f"dataset.{name}")


@dataclass(frozen=True)
class ClassifierConfig:
    epochs: int = 300
    lr: float = 0.1

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0", path="classifier.epochs")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0", path="classifier.lr")


@dataclass(frozen=True)
class ScheduleConfig:
    t: int = 1000
    beta1: float = 1e-4
    beta_t: float = 0.02

    def build(self):
        return linear_schedule(self.t, self.beta1, self.beta_t)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    output_dir: str = "out"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    mani: ManiConfig = field(default_factory=ManiConfig)
    freqpure: FreqPureConfig = field(default_factory=FreqPureConfig)
    reverse: ReverseConfig = field(default_factory=ReverseConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    denoiser: str = "oracle:var=0.05"

    def __post_init__(self):
        if not (0 <= self.seed < 2 ** 64):
            raise ConfigError("seed must be a u64", path="seed")


_SECTIONS = {
    "dataset": DatasetConfig,
    "classifier": ClassifierConfig,
    "schedule": ScheduleConfig,
    "mani": ManiConfig,
    "freqpure": FreqPureConfig,
    "reverse": ReverseConfig,
    "attack": AttackConfig,
}

_FIELD_TYPES = {
    ("seed",): int,
    ("output_dir",): str,
    ("dataset", "k"): int,
    ("dataset", "n_per_class"): int,
    ("dataset", "h"): int,
    ("dataset", "w"): int,
    ("classifier", "epochs"): int,
    ("classifier", "lr"): float,
    ("schedule", "t"): int,
    ("schedule", "beta1"): float,
    ("schedule", "beta_t"): float,
    ("mani", "gamma"): float,
    ("mani", "n_bands"): int,
    ("mani", "eps0"): float,
    ("mani", "map_mode"): str,
    ("freqpure", "enabled"): bool,
    ("freqpure", "cutoff"): float,
    ("freqpure", "delta"): float,
    ("freqpure", "resymmetrize"): bool,
    ("reverse", "t_start"): int,
    ("reverse", "n_steps"): int,
    ("reverse", "apply_to"): str,
    ("reverse", "literal_predict_x0"): bool,
    ("attack", "norm"): str,
    ("attack", "epsilon"): float,
    ("attack", "step_size"): float,
    ("attack", "iterations"): int,
    ("attack", "eot_samples"): int,
    ("attack", "random_start"): bool,
    ("denoiser",): str,
}


def _coerce(value, want, path):
    if want is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"expected a boolean, got {value!r}", path=path)
    if want is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", path=path)
        return value
    if want is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", path=path)
        return float(value)
    if want is str:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", path=path)
        return value
    raise AssertionError(want)


def from_dict(raw):
    """Build a RunConfig from parsed JSON, rejecting unknown keys."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object", path="")
    top_known = set(_SECTIONS) | {"seed", "output_dir", "denoiser"}
    for key in raw:
        if key not in top_known:
            raise ConfigError(f"unknown key {key!r}", path=key)

    kwargs = {}
    for key in ("seed", "output_dir", "denoiser"):
        if key in raw:
            kwargs[key] = _coerce(raw[key], _FIELD_TYPES[(key,)], key)
    for section, cls in _SECTIONS.items():
        if section not in raw:
            continue
        body = raw[section]
        if not isinstance(body, dict):
            raise ConfigError("expected a JSON object", path=section)
        known = {key[1] for key in _FIELD_TYPES
                 if len(key) == 2 and key[0] == section}
        sec_kwargs = {}
        for key, value in body.items():
            if key not in known:
                raise ConfigError(f"unknown key {key!r}", path=f"{section}.{key}")
            sec_kwargs[key] = _coerce(value, _FIELD_TYPES[(section, key)],
                                      f"{section}.{key}")
        kwargs[section] = cls(**sec_kwargs)
    return RunConfig(**kwargs)


def load_config(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", path="")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}", path="")
    return from_dict(raw)


def to_dict(cfg):
    return {
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
        "dataset": {"k": cfg.dataset.k, "n_per_class": cfg.dataset.n_per_class,
                    "h": cfg.dataset.h, "w": cfg.dataset.w},
        "classifier": {"epochs": cfg.classifier.epochs, "lr": cfg.classifier.lr},
        "schedule": {"t": cfg.schedule.t, "beta1": cfg.schedule.beta1,
                     "beta_t": cfg.schedule.beta_t},
        "mani": {"gamma": cfg.mani.gamma, "n_bands": cfg.mani.n_bands,
                 "eps0": cfg.mani.eps0, "map_mode": cfg.mani.map_mode},
        "freqpure": {"enabled": cfg.freqpure.enabled, "cutoff": cfg.freqpure.cutoff,
                     "delta": cfg.freqpure.delta,
                     "resymmetrize": cfg.freqpure.resymmetrize},
        "reverse": {"t_start": cfg.reverse.t_start, "n_steps": cfg.reverse.n_steps,
                    "apply_to": cfg.reverse.apply_to,
                    "literal_predict_x0": cfg.reverse.literal_predict_x0},
        "attack": {"norm": cfg.attack.norm, "epsilon": cfg.attack.epsilon,
                   "step_size": cfg.attack.step_size,
                   "iterations": cfg.attack.iterations,
                   "eot_samples": cfg.attack.eot_samples,
                   "random_start": cfg.attack.random_start},
        "denoiser": cfg.denoiser,
    }


def dump_config(cfg, path):
    with open(path, "w") as fh:
        json.dump(to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def defaults_json():
    return json.dumps(to_dict(RunConfig()), indent=2, sort_keys=True)
