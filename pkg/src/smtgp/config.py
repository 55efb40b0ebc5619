"""Flat run configuration with per-dataset presets."""

import json
from dataclasses import asdict, dataclass, fields, replace

from .divergence import SMParams
from .kernels import KernelConfig
from .optimizer import OptimizerOptions

__all__ = ["RunConfig", "PRESETS", "ConfigError"]


class ConfigError(ValueError):
    """Invalid configuration document; the message names the field."""


@dataclass(frozen=True)
class RunConfig:
    bandwidth2_x: float = 5.0
    bandwidth2_y: float = 0.05
    lambda_x: float = 1e-4
    lambda_y: float = 1e-4
    alpha: float = 0.9
    beta: float = 1.5
    max_iterations: int = 50
    k_tr: int | None = None
    seed: int = 0

    def __post_init__(self):
        for name in ("bandwidth2_x", "bandwidth2_y"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("lambda_x", "lambda_y"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if abs(self.beta - 1.0) <= 1e-12:
            raise ConfigError("beta must differ from 1")
        if self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be at least 1, got {self.max_iterations}")
        if self.k_tr is not None and self.k_tr < 1:
            raise ConfigError(f"k_tr must be at least 1, got {self.k_tr}")

    @property
    def cfg_x(self) -> KernelConfig:
        return KernelConfig(self.bandwidth2_x, self.lambda_x)

    @property
    def cfg_y(self) -> KernelConfig:
        return KernelConfig(self.bandwidth2_y, self.lambda_y)

    @property
    def params(self) -> SMParams:
        return SMParams(self.alpha, self.beta)

    @property
    def optimizer(self) -> OptimizerOptions:
        return OptimizerOptions(max_iterations=self.max_iterations)

    @classmethod
    def preset(cls, name, **overrides):
        try:
            base = PRESETS[name]
        except KeyError:
            raise ConfigError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}") from None
        return replace(base, **overrides) if overrides else base

    @classmethod
    def from_mapping(cls, doc, base=None):
        """Build from a key-value mapping; unknown keys and bad types are errors."""
        if not isinstance(doc, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name: f for f in fields(cls)}
        values = asdict(base) if base is not None else {}
        for key, value in doc.items():
            if key not in known:
                raise ConfigError(f"unknown configuration key {key!r}")
            if key in ("max_iterations", "seed") or (key == "k_tr" and value is not None):
                if isinstance(value, bool) or not isinstance(value, int):
                    raise ConfigError(f"{key} must be an integer, got {value!r}")
            elif key != "k_tr":
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(f"{key} must be a number, got {value!r}")
                value = float(value)
            values[key] = value
        return cls(**values)

    @classmethod
    def load(cls, path, base=None):
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        return cls.from_mapping(doc, base)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


PRESETS = {
    "toy1": RunConfig(5.0, 0.05, 1e-4, 1e-4, 0.9, 1.5),
    "toy2": RunConfig(5.0, 0.05, 1e-4, 1e-4, 0.6, 0.99),
    "usps": RunConfig(2.0, 2.0, 5e-4, 5e-4, 0.9, 0.99),
    "poser": RunConfig(5.0, 5000.0, 1e-4, 1e-4, 0.7, 0.5),
    "heva": RunConfig(5.0, 500000.0, 1e-3, 1e-3, 0.99, 0.99),
}
