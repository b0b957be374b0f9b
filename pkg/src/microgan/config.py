"""JSON run configuration for ``microgan train``."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .data.augment import AugmentSpec
from .errors import ConfigError
from .gan.trainer import TrainConfig
from .layers import InitSpec, ModelSpec


def _build(cls, d, section):
    if not isinstance(d, dict):
        raise ConfigError(f"'{section}' must be an object", [section])
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"unknown keys in '{section}': {', '.join(unknown)}",
                          [f"{section}.{k}" for k in unknown])
    try:
        return cls(**d)
    except ConfigError as exc:
        raise ConfigError(str(exc), [f"{section}.{k}" for k in exc.keys]) from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad '{section}' section: {exc}", [section]) from exc


@dataclass
class RunConfig:
    data_dir: str = "data"
    out_dir: str = "run"
    checkpoint: str | None = None  # defaults to <out_dir>/checkpoint.mgan
    checkpoint_every: int = 100
    sample_every: int = 100
    probe_count: int = 16
    expand_to: int | None = None  # augment the loaded images up to this many first
    precision: str = "float32"
    model: ModelSpec = field(default_factory=ModelSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    init: InitSpec = field(default_factory=InitSpec)
    augment: AugmentSpec = field(default_factory=AugmentSpec)

    _sections = {"model": ModelSpec, "train": TrainConfig, "init": InitSpec, "augment": AugmentSpec}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}", unknown)
        kw = {k: v for k, v in d.items() if k not in cls._sections}
        for name, sub in cls._sections.items():
            if name in d:
                kw[name] = _build(sub, d[name], name)
        cfg = cls(**kw)
        cfg.validate(explicit_latent="latent_dim" in d.get("train", {}))
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(raw)

    def validate(self, explicit_latent=True):
        bad = [k for k in ("checkpoint_every", "sample_every", "probe_count") if getattr(self, k) < 1]
        if self.precision not in ("float32", "float64"):
            bad.append("precision")
        if self.expand_to is not None and self.expand_to < 1:
            bad.append("expand_to")
        if explicit_latent and self.train.latent_dim != self.model.latent_dim:
            bad.append("train.latent_dim")
        if bad:
            raise ConfigError(f"invalid config values: {', '.join(bad)}", bad)
        self.train.latent_dim = self.model.latent_dim

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        for name in self._sections:
            d[name] = asdict(d[name])
        return d

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
