"""Filter and smoother lookup by name, and run-parallel mapping.

Names follow the benchmark table labels: ``ekf-rk4`` / ``eks-rk4`` for the
extended baseline, ``ghf-<scheme>`` / ``ghs-<scheme>`` for sigma-point
methods with ``<scheme>`` one of ``em``, ``tme-M`` or ``linear``. The
sigma-point rule comes from the experiment configuration.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable

from .estimation import (
    FilterResult,
    SmootherResult,
    ekf_rk4_filter,
    eks_rk4_smoother,
    gaussian_smoother,
    make_scheme,
    run_filter,
    smooth,
)
from .quadrature import parse_rule

__all__ = ["Pipeline", "build_pipeline", "check_method_names", "map_runs"]

# records simulated together; only affects speed, never results
CHUNK = 50


def _split_name(name: str) -> tuple[str, str]:
    name = name.strip().lower()
    if name in ("ekf-rk4", "eks-rk4"):
        return name[:3], "rk4"
    head, sep, scheme = name.partition("-")
    if not sep or head not in ("ghf", "ghs"):
        raise ValueError(f"unknown method {name!r}")
    return head, scheme


def check_method_names(filters, smoothers) -> None:
    for f in filters:
        if _split_name(f)[0] not in ("ekf", "ghf"):
            raise ValueError(f"{f!r} is not a filter")
    for s in smoothers:
        if _split_name(s)[0] not in ("eks", "ghs"):
            raise ValueError(f"{s!r} is not a smoother")


@dataclass
class Pipeline:
    """Model, measurement, prior and method factories for one configuration."""

    config: object

    def __post_init__(self):
        cfg = self.config
        self.model = cfg.build_model()
        self.meas = cfg.build_measurement()
        self.init = cfg.build_init()
        self.schedule = cfg.build_schedule()
        self.rule = parse_rule(cfg.rule, self.model.dim)
        self._schemes = {}

    def _scheme(self, kind: str):
        if kind not in self._schemes:
            self._schemes[kind] = make_scheme(kind, self.model)
        return self._schemes[kind]

    def filter(self, name: str, data) -> FilterResult:
        head, kind = _split_name(name)
        if head == "ekf":
            fr = ekf_rk4_filter(self.model, self.meas, self.schedule, data, self.init, self.config.ekf_substeps)
        elif head == "ghf":
            fr = run_filter(self.model, self.meas, self.schedule, data, self.init, self._scheme(kind), self.rule)
        else:
            raise ValueError(f"{name!r} is not a filter")
        return _renamed(fr, name)

    def smoother(self, name: str) -> Callable[[FilterResult], SmootherResult]:
        head, kind = _split_name(name)
        if head not in ("eks", "ghs"):
            raise ValueError(f"{name!r} is not a smoother")
        partner = ("ekf-" if head == "eks" else "ghf-") + kind

        def run(fr: FilterResult) -> SmootherResult:
            # the filter already stored exactly these predictions
            if fr.method == partner:
                sr = smooth(fr)
            elif head == "eks":
                sr = eks_rk4_smoother(fr, self.model, self.config.ekf_substeps)
            else:
                sr = gaussian_smoother(fr, self._scheme(kind), self.rule)
            return SmootherResult(sr.times, sr.means, sr.covs, sr.gains, name)

        return run


def _renamed(fr: FilterResult, name: str) -> FilterResult:
    return FilterResult(
        fr.times, fr.filter_means, fr.filter_covs, fr.pred_means, fr.pred_covs, fr.cross_covs, name
    )


def build_pipeline(config) -> Pipeline:
    return Pipeline(config)


def map_runs(fn: Callable, config, n_runs: int, workers: int = 1) -> list:
    """Apply ``fn(config, indices)`` to fixed chunks of run indices.

    Results come back in run-index order whatever the worker count, so any
    reduction over them is schedule-independent. Chunk sizes depend on the
    worker count, which is harmless because a record's simulation does not
    depend on the records batched with it.
    """
    size = max(1, min(CHUNK, -(-n_runs // max(1, workers))))
    chunks = [list(range(i, min(i + size, n_runs))) for i in range(0, n_runs, size)]
    if workers <= 1 or len(chunks) <= 1:
        parts = [fn(config, c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, [config] * len(chunks), chunks))
    return [item for part in parts for item in part]
