"""Experiment configuration: flat ``key = value`` files plus overrides."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .models import (
    DiffusionModel,
    InitialLaw,
    MeasurementModel,
    ObservationSchedule,
    make_benes,
    make_first_coordinate_measurement,
    make_linear,
    make_linear_measurement,
    make_lorenz63,
    make_ou,
)

__all__ = ["ExperimentConfig", "load_config", "parse_config_text"]

TABLE1_FILTERS = ("ekf-rk4", "ghf-em", "ghf-tme-2", "ghf-tme-3")
TABLE1_SMOOTHERS = ("eks-rk4", "ghs-em", "ghs-tme-2", "ghs-tme-3")

# drift matrix of the built-in two-dimensional linear fixture
LINEAR_FIXTURE_F = ((-0.5, 1.0), (-1.0, -0.5))


@dataclass(frozen=True)
class ExperimentConfig:
    seed: Optional[int] = None
    model: str = "lorenz63"
    kappa: float = 10.0
    lam: float = 28.0
    mu: float = 2.0
    sigma: float = 5.0
    theta: float = 1.0
    meas_noise: float = 2.0
    T: int = 100
    dt: float = 0.02
    t0: float = 0.0
    n_sub: int = 1000
    init_mean: Optional[tuple] = None
    init_var: float = 1.0
    # law of the simulated X(t0); None means the filter prior above
    truth_mean: Optional[tuple] = None
    truth_var: Optional[float] = None
    filters: tuple = TABLE1_FILTERS
    smoothers: tuple = TABLE1_SMOOTHERS
    filter: Optional[str] = None
    smoother: Optional[str] = None
    rule: str = "gh:3"
    order: int = 2
    runs: int = 100
    sigmas: tuple = (0.2, 15.0)
    ekf_substeps: int = 10
    workers: int = 1
    out: str = "results"
    box_low: float = -20.0
    box_high: float = 20.0
    box_samples: int = 1000

    def __post_init__(self):
        if self.T < 0:
            raise ValueError("T must be non-negative")
        if self.n_sub < 1 or self.runs < 1 or self.workers < 1:
            raise ValueError("n_sub, runs and workers must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    # builders -----------------------------------------------------------
    @property
    def dim(self) -> int:
        return {"lorenz63": 3, "ou": 1, "benes": 1, "linear": 2}[self._model_name]

    @property
    def _model_name(self) -> str:
        name = self.model.lower()
        if name not in ("lorenz63", "ou", "benes", "linear"):
            raise ValueError(f"unknown model {self.model!r}")
        return name

    def build_model(self) -> DiffusionModel:
        name = self._model_name
        if name == "lorenz63":
            return make_lorenz63(self.kappa, self.lam, self.mu, self.sigma)
        if name == "ou":
            return make_ou(self.theta, self.sigma)
        if name == "benes":
            return make_benes()
        return make_linear(np.array(LINEAR_FIXTURE_F), self.sigma * np.eye(2))

    def build_measurement(self) -> MeasurementModel:
        if self._model_name == "linear":
            return make_linear_measurement([[1.0, 0.0]], [[self.meas_noise]])
        return make_first_coordinate_measurement(self.dim, self.meas_noise)

    def build_init(self) -> InitialLaw:
        mean = np.zeros(self.dim) if self.init_mean is None else np.asarray(self.init_mean, dtype=float)
        return InitialLaw(mean, self.init_var * np.eye(self.dim))

    def build_truth_init(self) -> InitialLaw:
        prior = self.build_init()
        mean = prior.mean if self.truth_mean is None else np.asarray(self.truth_mean, dtype=float)
        cov = prior.cov if self.truth_var is None else self.truth_var * np.eye(self.dim)
        return InitialLaw(mean, cov)

    def build_schedule(self) -> ObservationSchedule:
        return ObservationSchedule.uniform(self.T, self.dt, self.t0)

    def require_seed(self) -> int:
        if self.seed is None:
            raise ValueError("a root seed is required (--seed or 'seed = ...' in the config)")
        return int(self.seed)

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        return dataclasses.replace(self, **kwargs)

    def as_items(self) -> list[tuple[str, str]]:
        return [(f.name, _format_value(getattr(self, f.name))) for f in fields(self)]


def _format_value(v) -> str:
    if isinstance(v, tuple):
        return ",".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


_TUPLE_FLOAT = {"init_mean", "truth_mean", "sigmas"}
_TUPLE_STR = {"filters", "smoothers"}


def _coerce(name: str, raw: str):
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    if name not in types:
        raise ValueError(f"unknown config key {name!r}")
    raw = raw.strip()
    if name in _TUPLE_FLOAT:
        return tuple(float(x) for x in raw.split(",") if x.strip()) if raw else None
    if name in _TUPLE_STR:
        return tuple(x.strip().lower() for x in raw.split(",") if x.strip())
    if raw == "" or raw.lower() == "none":
        return None
    kind = types[name]
    if "int" in kind:
        return int(raw)
    if "float" in kind:
        return float(raw)
    return raw


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, _, raw = line.partition("=")
        key = key.strip().replace("-", "_")
        values[key] = _coerce(key, raw)
    return values


def load_config(path: str | Path | None = None, **overrides) -> ExperimentConfig:
    values = parse_config_text(Path(path).read_text()) if path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def coerce_override(name: str, raw: str):
    return _coerce(name, raw)
