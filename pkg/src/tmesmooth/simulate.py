"""Ground-truth simulation by fine-grid Euler-Maruyama.

Every Monte Carlo record draws from its own counter-based stream (Philox
keyed by the root seed and the record index), so records are reproducible
no matter how runs are batched or distributed over workers. Batched paths
use only elementwise arithmetic across records, so a record simulated alone
is bit-identical to the same record simulated in a batch.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DivergenceError, ScheduleMismatchError
from .models import DiffusionModel, MeasurementModel, ObservationSchedule
from .quadrature import cholesky_sqrt

__all__ = [
    "Trajectory",
    "SeededStream",
    "Record",
    "euler_maruyama_path",
    "sample_measurements",
    "simulate_experiment",
    "simulate_records",
]

_SUB_INIT, _SUB_PATH, _SUB_MEAS = 0, 1, 2


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        if self.times.shape[0] != self.states.shape[0]:
            raise ValueError("times and states must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")


@dataclass(frozen=True)
class SeededStream:
    """Independent random stream identified by ``(seed, index)``."""

    seed: int
    index: int = 0

    def generator(self, sub: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.index), int(sub)))
        return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Record:
    """One simulated data set: truth at ``t0, t_1..t_T`` and measurements."""

    index: int
    truth: Trajectory
    data: np.ndarray
    diverged_at: int = -1


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, SeededStream):
        return rng.generator(_SUB_PATH)
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("rng must be a SeededStream or numpy Generator")


def _em_batch(model: DiffusionModel, x0: np.ndarray, h: float, n_chunks: int, chunk: int, gens, record_every: int):
    """Advance ``x0`` of shape ``(n, d)`` by ``n_chunks * chunk`` EM steps.

    Returns recorded states ``(n_records + 1, n, d)`` (every ``record_every``
    steps, starting with ``x0``) and the first non-finite step per path
    (``-1`` when the path stayed finite).
    """
    n, d = x0.shape
    s = model.noise_dim
    sqrt_h = np.sqrt(h)
    x = x0.copy()
    total = n_chunks * chunk
    records = [x.copy()]
    diverged = np.full(n, -1, dtype=np.int64)
    B = model.dispersion_at(x) if model.constant_dispersion else None
    step = 0
    for _ in range(n_chunks):
        Z = np.stack([g.standard_normal((chunk, s)) for g in gens], axis=1)
        dW = sqrt_h * Z
        for j in range(chunk):
            a = model.drift_at(x)
            b = B if B is not None else model.dispersion_at(x)
            dw = dW[j]
            inc = b[..., 0] * dw[:, None, 0]
            for k in range(1, s):
                inc = inc + b[..., k] * dw[:, None, k]
            x = x + a * h + inc
            step += 1
            if not np.isfinite(x).all():
                bad = ~np.isfinite(x).all(axis=1) & (diverged < 0)
                diverged[bad] = step
            if step % record_every == 0:
                records.append(x.copy())
    assert step == total
    return np.stack(records), diverged


def euler_maruyama_path(model: DiffusionModel, x0, t0: float, t_end: float, n_steps: int, rng) -> Trajectory:
    """One Euler-Maruyama path on the uniform grid ``t0 + j h``, all points kept."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not t_end > t0:
        raise ValueError("t_end must exceed t0")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float)).reshape(1, -1)
    if x0.shape[1] != model.dim:
        raise ValueError(f"x0 must have length {model.dim}")
    h = (t_end - t0) / n_steps
    states, diverged = _em_batch(model, x0, h, 1, n_steps, [_as_generator(rng)], 1)
    if diverged[0] >= 0:
        raise DivergenceError(f"path became non-finite at step {diverged[0]}", int(diverged[0]))
    times = t0 + h * np.arange(n_steps + 1)
    times[-1] = t_end
    return Trajectory(times, states[:, 0, :])


def _grid_indices(grid: np.ndarray, times: np.ndarray) -> np.ndarray:
    t0 = grid[0]
    h = (grid[-1] - t0) / (grid.shape[0] - 1) if grid.shape[0] > 1 else 1.0
    idx = np.rint((times - t0) / h).astype(np.int64)
    ok = (idx >= 0) & (idx < grid.shape[0])
    ok[ok] &= np.abs(grid[idx[ok]] - times[ok]) <= 1e-9 * np.maximum(1.0, np.abs(times[ok]))
    if not np.all(ok):
        bad = times[~ok][0]
        raise ScheduleMismatchError(f"observation time {bad} is not on the trajectory grid")
    return idx


def _noise(meas: MeasurementModel, gen: np.random.Generator, n: int) -> np.ndarray:
    L = cholesky_sqrt(meas.noise_cov)
    z = gen.standard_normal((n, meas.dim_y))
    return z @ L.T


def sample_measurements(traj: Trajectory, schedule: ObservationSchedule, meas: MeasurementModel, rng) -> np.ndarray:
    """``y_k = h(X(t_k)) + chol(Xi) zeta_k`` for every scheduled time."""
    idx = _grid_indices(traj.times, schedule.times)
    gen = rng.generator(_SUB_MEAS) if isinstance(rng, SeededStream) else rng
    clean = meas.h_at(traj.states[idx]) if idx.size else np.zeros((0, meas.dim_y))
    return clean + _noise(meas, gen, idx.size)


def simulate_records(config, indices) -> list[Record]:
    """Simulate several records of an experiment at once (vectorized over records).

    Initial states are drawn from the configured initial law; the path uses
    ``n_sub`` Euler-Maruyama steps per measurement interval.
    """
    indices = [int(i) for i in indices]
    if not indices:
        return []
    seed = config.require_seed()
    model = config.build_model()
    meas = config.build_measurement()
    init = config.build_truth_init()
    schedule = config.build_schedule()
    streams = [SeededStream(seed, i) for i in indices]
    L0 = cholesky_sqrt(init.cov)
    x0 = np.stack([init.mean + L0 @ s.generator(_SUB_INIT).standard_normal(model.dim) for s in streams])
    T = len(schedule)
    times = np.r_[schedule.t0, schedule.times]
    if T == 0:
        states = x0[None]
        diverged = np.full(len(indices), -1)
    else:
        h = config.dt / config.n_sub
        states, diverged = _em_batch(
            model, x0, h, T, config.n_sub, [s.generator(_SUB_PATH) for s in streams], config.n_sub
        )
    records = []
    for r, (i, s) in enumerate(zip(indices, streams)):
        truth = Trajectory(times, states[:, r, :])
        gen = s.generator(_SUB_MEAS)
        clean = meas.h_at(truth.states[1:]) if T else np.zeros((0, meas.dim_y))
        data = clean + _noise(meas, gen, T)
        records.append(Record(i, truth, data, int(diverged[r])))
    return records


def simulate_experiment(config, index: int = 0) -> Record:
    """One full record: truth at ``t0, t_1..t_T`` and the measurements."""
    return simulate_records(config, [index])[0]
