"""Benchmark experiments: RMSE grids, error curves, single runs, constants.

Every experiment writes CSV with ``#`` comment lines describing the
configuration, a header row and 17-significant-digit floats. Files are named
``<subcommand>-<tag>.csv`` inside the output directory.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import EstimationError
from .methods import build_pipeline, check_method_names, map_runs
from .quadrature import parse_rule
from .simulate import simulate_experiment, simulate_records
from .stability import ErrorCurve, empirical_constants, gain_constant, mc_error_estimate

__all__ = [
    "rmse",
    "RmseSummary",
    "run_table1",
    "run_fig1",
    "run_single",
    "run_constants",
    "write_csv",
]

RMSE_NOTE = "rmse pools squared errors over k = 1..T and all state dimensions per run"

# settings that change speed only; kept out of headers so bytes do not depend on them
_UNREPORTED = {"workers", "out"}


def rmse(truth, estimate) -> float:
    """``sqrt(mean((truth - estimate)**2))`` pooled over steps and dimensions."""
    truth = np.asarray(truth, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if truth.shape != estimate.shape:
        raise ValueError(f"shape mismatch: truth {truth.shape} vs estimate {estimate.shape}")
    if truth.size == 0:
        raise ValueError("empty trajectory")
    return float(np.sqrt(np.mean((truth - estimate) ** 2)))


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def write_csv(path, comments, header, rows) -> Path:
    """Write ``#`` comment lines, a header row and data rows (LF line ends)."""
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())
    return path


def _config_comments(config) -> list[str]:
    return [f"{k} = {v}" for k, v in config.as_items() if k not in _UNREPORTED]


# ---------------------------------------------------------------------------
# RMSE grid


@dataclass(frozen=True)
class RmseSummary:
    """Mean and standard deviation of the RMSE per (filter, smoother) cell.

    Every cell is computed from the same set of successful runs.
    """

    filters: tuple
    smoothers: tuple
    mean: np.ndarray
    std: np.ndarray
    count: int
    per_run: np.ndarray
    run_indices: tuple
    failures: tuple

    def cell(self, filt: str, smoother: str) -> tuple[float, float]:
        i, j = self.filters.index(filt), self.smoothers.index(smoother)
        return float(self.mean[i, j]), float(self.std[i, j])

    def best_smoother(self, filt: str) -> str:
        return self.smoothers[int(np.argmin(self.mean[self.filters.index(filt)]))]


def _table1_chunk(config, indices):
    pipe = build_pipeline(config)
    smoothers = [(name, pipe.smoother(name)) for name in config.smoothers]
    out = []
    for rec in simulate_records(config, indices):
        if rec.diverged_at >= 0:
            out.append((rec.index, None, f"truth diverged at fine step {rec.diverged_at}"))
            continue
        truth = rec.truth.states[1:]
        grid = np.empty((len(config.filters), len(smoothers)))
        try:
            for i, fname in enumerate(config.filters):
                fr = pipe.filter(fname, rec.data)
                for j, (_, run) in enumerate(smoothers):
                    grid[i, j] = rmse(truth, run(fr).means[1:])
        except (EstimationError, np.linalg.LinAlgError, FloatingPointError) as err:
            out.append((rec.index, None, f"{type(err).__name__}: {err}"))
            continue
        if not np.all(np.isfinite(grid)):
            out.append((rec.index, None, "non-finite RMSE"))
            continue
        out.append((rec.index, grid, ""))
    return out


def run_table1(config, workers: int | None = None) -> RmseSummary:
    """RMSE grid over Monte Carlo runs with common random numbers.

    A run that fails for any cell is excluded from every cell and listed in
    ``failures`` with its index and message.
    """
    config.require_seed()
    check_method_names(config.filters, config.smoothers)
    parse_rule(config.rule, config.dim)
    workers = config.workers if workers is None else workers
    results = map_runs(_table1_chunk, config, config.runs, workers)
    ok = [(i, g) for i, g, _ in results if g is not None]
    failures = tuple((i, msg) for i, g, msg in results if g is None)
    nf, ns = len(config.filters), len(config.smoothers)
    if ok:
        per_run = np.stack([g for _, g in ok])
        mean = per_run.mean(axis=0)
        std = per_run.std(axis=0, ddof=1) if len(ok) > 1 else np.zeros((nf, ns))
    else:
        per_run = np.empty((0, nf, ns))
        mean = np.full((nf, ns), np.nan)
        std = np.full((nf, ns), np.nan)
    return RmseSummary(
        tuple(config.filters), tuple(config.smoothers), mean, std, len(ok),
        per_run, tuple(i for i, _ in ok), failures,
    )


def write_table1(summary: RmseSummary, config, out_dir) -> list[Path]:
    tag = config.model
    base = _config_comments(config) + [
        RMSE_NOTE,
        "std is the sample standard deviation over successful runs",
        f"successful runs = {summary.count}, failed runs = {len(summary.failures)}",
    ]
    comments = base + [f"failed run {i} (seed {config.seed}): {msg}" for i, msg in summary.failures]
    header = ["filter"]
    for s in summary.smoothers:
        header += [f"{s}:mean", f"{s}:std"]
    header += ["n", "failures"]
    rows = []
    for i, f in enumerate(summary.filters):
        row = [f]
        for j in range(len(summary.smoothers)):
            row += [summary.mean[i, j], summary.std[i, j]]
        rows.append(row + [summary.count, len(summary.failures)])
    out = Path(out_dir)
    paths = [write_csv(out / f"table1-{tag}.csv", comments, header, rows)]
    run_rows = [
        [idx, f, s, summary.per_run[r, i, j]]
        for r, idx in enumerate(summary.run_indices)
        for i, f in enumerate(summary.filters)
        for j, s in enumerate(summary.smoothers)
    ]
    paths.append(write_csv(out / f"table1-{tag}-runs.csv", base,
                           ["run", "filter", "smoother", "rmse"], run_rows))
    return paths


# ---------------------------------------------------------------------------
# smoothing-error curves


def _sigma_tag(sigma: float) -> str:
    return f"sigma{float(sigma):g}"


def run_fig1(config, workers: int | None = None) -> dict[float, ErrorCurve]:
    """Smoothing-error curves for every dispersion level in ``config.sigmas``."""
    config.require_seed()
    curves = {}
    for sigma in config.sigmas:
        curves[float(sigma)] = mc_error_estimate(config.with_overrides(sigma=float(sigma)), config.runs, workers)
    return curves


def write_fig1(curves: dict, config, out_dir) -> list[Path]:
    paths = []
    for sigma, curve in curves.items():
        cfg = config.with_overrides(sigma=sigma)
        comments = _config_comments(cfg) + [
            "squared smoothing error ||X_k - m^s_k||^2 with 0.95 normal-approximation interval",
            f"runs = {curve.n_runs}",
        ]
        rows = zip(curve.k, curve.mean, curve.ci_low, curve.ci_high)
        paths.append(write_csv(Path(out_dir) / f"fig1-{_sigma_tag(sigma)}.csv", comments,
                               ["k", "mean", "ci_low", "ci_high"], rows))
    return paths


# ---------------------------------------------------------------------------
# single run and constants


def run_single(config):
    """One seeded record with its filter and smoother outputs.

    Returns ``(record, filter_result, smoother_result)``.
    """
    config.require_seed()
    pipe = build_pipeline(config)
    filt = config.filter or f"ghf-tme-{config.order}"
    smoo = config.smoother or f"ghs-tme-{config.order}"
    check_method_names([filt], [smoo])
    rec = simulate_experiment(config, 0)
    fr = pipe.filter(filt, rec.data)
    sr = pipe.smoother(smoo)(fr)
    return rec, fr, sr


def write_single(result, config, out_dir) -> Path:
    rec, fr, sr = result
    d = rec.truth.states.shape[1]
    dy = rec.data.shape[1] if rec.data.ndim == 2 else 0
    header = ["k", "t"]
    header += [f"x{i}" for i in range(d)] + [f"y{j}" for j in range(dy)]
    header += [f"mf{i}" for i in range(d)] + [f"Pf{i}{i}" for i in range(d)]
    header += [f"ms{i}" for i in range(d)] + [f"Ps{i}{i}" for i in range(d)]
    T = fr.n_steps
    # rows are the measurement steps; with no measurements only the prior remains
    steps = range(1, T + 1) if T > 0 else [0]
    rows = []
    for k in steps:
        y = list(rec.data[k - 1]) if k > 0 else [None] * dy
        rows.append(
            [k, fr.times[k], *rec.truth.states[k], *y,
             *fr.filter_means[k], *np.diag(fr.filter_covs[k]),
             *sr.means[k], *np.diag(sr.covs[k])]
        )
    comments = _config_comments(config) + [f"resolved filter = {fr.method}", f"resolved smoother = {sr.method}"]
    return write_csv(Path(out_dir) / f"single-{config.model}.csv", comments, header, rows)


def run_constants(config):
    """Sampled stability constants for the configured model, rule and order."""
    seed = config.require_seed()
    model = config.build_model()
    rule = parse_rule(config.rule, model.dim)
    return empirical_constants(
        model, rule, config.order, config.dt, (config.box_low, config.box_high), config.box_samples, seed
    )


def write_constants(consts, config, out_dir) -> Path:
    c_G, ok = gain_constant(consts)
    rows = []
    for name in ("c_P", "c_g", "c_S", "c_Q", "c_bar", "c_chi"):
        kind = "estimate" if name in consts.estimated else "supplied"
        rows.append([name, getattr(consts, name), kind])
    rows.append(["c_G", c_G, "derived"])
    rows.append(["2c_G<1", int(ok), "derived"])
    comments = _config_comments(config) + [
        "estimates are sample extrema over the box, not certified bounds",
    ]
    return write_csv(Path(out_dir) / f"constants-{config.model}.csv", comments, ["name", "value", "kind"], rows)
