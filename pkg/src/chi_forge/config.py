"""JSON run configuration. Frequencies are in units of g; SI constants are separate."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .analysis import G_SI_DEFAULT, LADDER_ENGINES, TAU_DEFAULT
from .model import SystemParams, reference_params
from .protocol import Engine, ErrorModel, params_from_dict, params_to_dict


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SweepRange:
    lo: float = -0.05
    hi: float = 0.05
    count: int = 41

    def __post_init__(self):
        if self.count < 1:
            raise ConfigError("sweep count must be at least 1")
        if self.count > 1 and not self.hi > self.lo:
            raise ConfigError(f"sweep range needs lo < hi, got [{self.lo}, {self.hi}]")
        if max(abs(self.lo), abs(self.hi)) >= 1:
            raise ConfigError("timing error rates must lie in (-1, 1)")

    def values(self) -> np.ndarray:
        if self.count == 1:
            return np.array([self.lo])
        return np.linspace(self.lo, self.hi, self.count)


@dataclass(frozen=True)
class RunConfig:
    params: SystemParams
    omega_s_target: float = 10.0
    engine: Engine = Engine.ANALYTIC
    error_model: ErrorModel = ErrorModel.BETA_ONLY
    timing_error: tuple[float, float] = (0.0, 0.0)
    n1_range: SweepRange = field(default_factory=SweepRange)
    n2_range: SweepRange = field(default_factory=SweepRange)
    g_si: float = G_SI_DEFAULT
    tau_r: float = TAU_DEFAULT
    tau_d: float = TAU_DEFAULT
    output_dir: str = "out"
    seed: int = 0
    regime_threshold: float = 5.0
    steps_per_period: int = 100
    ladder_time: float | None = None
    ladder_engines: tuple[Engine, ...] = LADDER_ENGINES
    jobs: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.omega_s_target) and self.omega_s_target > 0):
            raise ConfigError("omega_s_target must be positive")
        for name in ("g_si", "tau_r", "tau_d", "regime_threshold"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive, got {v}")
        if self.steps_per_period < 20:
            raise ConfigError("steps_per_period must be at least 20")
        if self.ladder_time is not None and not self.ladder_time > 0:
            raise ConfigError("ladder_time must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if any(not abs(n) < 1 for n in self.timing_error):
            raise ConfigError("timing errors must lie in (-1, 1)")

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        if "engine" in kw:
            kw["engine"] = _enum(Engine, kw["engine"], "engine")
        if "error_model" in kw:
            kw["error_model"] = _enum(ErrorModel, kw["error_model"], "error_model")
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "params": params_to_dict(self.params),
            "omega_s_target": self.omega_s_target,
            "engine": self.engine.value,
            "error_model": self.error_model.value,
            "timing_error": list(self.timing_error),
            "n1_range": [self.n1_range.lo, self.n1_range.hi, self.n1_range.count],
            "n2_range": [self.n2_range.lo, self.n2_range.hi, self.n2_range.count],
            "g_si": self.g_si,
            "tau_r": self.tau_r,
            "tau_d": self.tau_d,
            "output_dir": self.output_dir,
            "seed": self.seed,
            "regime_threshold": self.regime_threshold,
            "steps_per_period": self.steps_per_period,
            "ladder_time": self.ladder_time,
            "ladder_engines": [e.value for e in self.ladder_engines],
            "jobs": self.jobs,
        }


_KEYS = set(RunConfig.__dataclass_fields__)


def _enum(cls, value, name):
    try:
        return cls(value)
    except ValueError:
        choices = ", ".join(m.value for m in cls)
        raise ConfigError(f"unknown {name} {value!r}; choose from {choices}") from None


def _range(v, name) -> SweepRange:
    if isinstance(v, dict):
        return SweepRange(float(v["lo"]), float(v["hi"]), int(v["count"]))
    if isinstance(v, (list, tuple)) and len(v) == 3:
        return SweepRange(float(v[0]), float(v[1]), int(v[2]))
    raise ConfigError(f"{name} must be [lo, hi, count] or an object with those keys")


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - _KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "params" not in data:
        raise ConfigError("config needs a 'params' object")
    try:
        target = float(data.get("omega_s_target", 10.0))
        pd = dict(data["params"])
        pd.setdefault("omega_s", target)
        params = params_from_dict(pd)
        kw = dict(
            params=params,
            omega_s_target=target,
            engine=_enum(Engine, data.get("engine", "analytic"), "engine"),
            error_model=_enum(ErrorModel, data.get("error_model", "beta_only"), "error_model"),
            timing_error=tuple(float(x) for x in data.get("timing_error", (0.0, 0.0))),
            n1_range=_range(data.get("n1_range", [-0.05, 0.05, 41]), "n1_range"),
            n2_range=_range(data.get("n2_range", [-0.05, 0.05, 41]), "n2_range"),
            ladder_engines=tuple(_enum(Engine, e, "engine") for e in data.get("ladder_engines", [e.value for e in LADDER_ENGINES])),
        )
        for k in ("g_si", "tau_r", "tau_d", "regime_threshold"):
            if k in data:
                kw[k] = float(data[k])
        for k in ("seed", "steps_per_period", "jobs"):
            if k in data:
                kw[k] = int(data[k])
        if "output_dir" in data:
            kw["output_dir"] = str(data["output_dir"])
        if data.get("ladder_time") is not None:
            kw["ladder_time"] = float(data["ladder_time"])
        if len(kw["timing_error"]) != 2:
            raise ConfigError("timing_error must have two entries")
        cfg = RunConfig(**kw)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    if cfg.params.omega_s != target:
        cfg = replace(cfg, params=replace(cfg.params, omega_s=target))
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def reference_config() -> RunConfig:
    """The parameter set of the worked example (four atoms, Omega_S near 10 g)."""
    return RunConfig(params=reference_params())
