"""Multi-start studies: batches, success grids, warm starts, leakage,
Bloch trajectories and optimal-field statistics.

Everything here emits plain data (lists, arrays, CSV files); plotting is left
to external tools.  Timings are per-run process times, so grids are only
comparable when produced on the same machine.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.linalg

from .controls import ControlField, fluence, max_amplitude, sample_initial_field
from .model import PAULI, Actuator, QubitNetworkSpec
from .optimize import NumericalAbort, OptimizerOptions, RunRecord, bfgs_minimize, load_record, save_record

__all__ = [
    "BatchSpec",
    "SuccessGrid",
    "WarmStartRow",
    "WarmStartComparison",
    "FieldStats",
    "record_path",
    "run_single",
    "run_batch",
    "success_rate",
    "expected_time_to_success",
    "success_speed",
    "success_grid",
    "write_grid_csv",
    "warm_start_compare",
    "write_comparison_csv",
    "bloch_trajectories",
    "write_trajectory_csv",
    "leakage_scenario",
    "field_statistics",
    "write_statistics_csv",
    "acceleration_ratios",
]


@dataclass
class BatchSpec:
    """A grid of (T, K) cells times initial-field scales, ``runs`` seeds each.

    ``problem_factory(T, K)`` builds the problem for a cell; it must be
    picklable when batches run in several processes.
    """

    problem_factory: Callable
    times: list
    deltas: list
    runs: int = 1
    base_seed: int = 0
    threshold: float = 1e-4
    options: OptimizerOptions | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs per cell must be at least 1")
        self.times = [(float(T), int(K)) for T, K in self.times]
        if any(T <= 0 or K < 1 for T, K in self.times):
            raise ValueError("every cell needs T > 0 and K >= 1")
        if any(d <= 0 for d in self.deltas):
            raise ValueError("initial-field scales must be positive")

    def resolved_options(self) -> OptimizerOptions:
        base = self.options or OptimizerOptions()
        kwargs = base.to_dict()
        kwargs["error_threshold"] = self.threshold
        return OptimizerOptions(**kwargs)

    def jobs(self):
        for T, K in self.times:
            for delta in self.deltas:
                for i in range(self.runs):
                    yield T, K, float(delta), i


def record_path(out_dir, T, delta, replicate) -> Path:
    return Path(out_dir) / f"run-T{T!r}-d{delta!r}-r{replicate}.json"


def run_single(problem, T, K, delta, seed, opts, meta=None) -> RunRecord:
    """One optimisation from a seeded Gaussian field; failures become aborted records."""
    meta = dict(meta or {}, T=T, K=K, delta=delta)
    field0 = sample_initial_field(problem.n_controls, K, T, delta, seed)
    try:
        return bfgs_minimize(problem, field0, opts, seed=seed, meta=meta)
    except NumericalAbort as exc:
        return exc.record
    except Exception as exc:  # keep the batch going, record the failure
        return RunRecord(seed=seed, options=opts.to_dict(), initial_field=field0, final_field=field0,
                         history=[], iterations=0, final_error=math.nan, final_fidelity=math.nan,
                         wall_time=0.0, termination="aborted", message=f"{type(exc).__name__}: {exc}",
                         meta=meta)


def _batch_worker(args):
    factory, T, K, delta, seed, opts, meta = args
    return run_single(factory(T, K), T, K, delta, seed, opts, meta)


def run_batch(spec: BatchSpec, out_dir=None, resume: bool = False, jobs: int = 1) -> list:
    """Run every (cell, replicate); replicate ``i`` uses seed ``base_seed + i``.

    With ``out_dir`` each record is written as soon as it completes, and
    ``resume`` reloads records already on disk instead of recomputing them.
    """
    opts = spec.resolved_options()
    work, records = [], {}
    for key in spec.jobs():
        T, K, delta, i = key
        path = record_path(out_dir, T, delta, i) if out_dir is not None else None
        if resume and path is not None and path.exists():
            records[key] = load_record(path)
            continue
        meta = dict(spec.meta, replicate=i)
        work.append((key, (spec.problem_factory, T, K, delta, spec.base_seed + i, opts, meta)))

    def store(key, rec):
        records[key] = rec
        if out_dir is not None:
            save_record(rec, record_path(out_dir, key[0], key[2], key[3]))

    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for (key, _), rec in zip(work, pool.map(_batch_worker, [w for _, w in work])):
                store(key, rec)
    else:
        cache = {}
        for key, args in work:
            T, K = args[1], args[2]
            if (T, K) not in cache:
                cache = {(T, K): spec.problem_factory(T, K)}
            store(key, run_single(cache[T, K], *args[1:]))
    return [records[key] for key in spec.jobs()]


def success_rate(records, threshold: float = 1e-4) -> float:
    """Fraction of runs whose final error is at or below ``threshold``."""
    records = list(records)
    if not records:
        raise ValueError("no records")
    return sum(r.succeeded(threshold) for r in records) / len(records)


def expected_time_to_success(records, threshold: float = 1e-4) -> float:
    """Mean failed time x (failures / successes) + mean successful time."""
    ok = [r.wall_time for r in records if r.succeeded(threshold)]
    bad = [r.wall_time for r in records if not r.succeeded(threshold)]
    if not ok:
        return math.inf
    mean_bad = sum(bad) / len(bad) if bad else 0.0
    return mean_bad * len(bad) / len(ok) + sum(ok) / len(ok)


def success_speed(records, threshold: float = 1e-4) -> float:
    """Inverse expected time to success; 0 when nothing succeeded."""
    records = list(records)
    if not records:
        raise ValueError("no records")
    t = expected_time_to_success(records, threshold)
    if math.isinf(t):
        return 0.0
    return math.inf if t <= 0 else 1.0 / t


@dataclass
class SuccessGrid:
    times: list
    deltas: list
    rate: np.ndarray
    speed: np.ndarray
    runs: np.ndarray
    successes: np.ndarray

    def rows(self):
        for i, T in enumerate(self.times):
            for j, d in enumerate(self.deltas):
                yield T, d, self.rate[i, j], self.speed[i, j], int(self.runs[i, j]), int(self.successes[i, j])


def success_grid(records, threshold: float = 1e-4, times=None, deltas=None) -> SuccessGrid:
    """Aggregate records into a (T, delta) grid using their ``meta``."""
    records = list(records)
    times = sorted({r.meta["T"] for r in records}) if times is None else list(times)
    deltas = sorted({r.meta["delta"] for r in records}) if deltas is None else list(deltas)
    shape = (len(times), len(deltas))
    rate, speed = np.zeros(shape), np.zeros(shape)
    runs, succ = np.zeros(shape, dtype=int), np.zeros(shape, dtype=int)
    for i, T in enumerate(times):
        for j, d in enumerate(deltas):
            cell = [r for r in records if r.meta["T"] == T and r.meta["delta"] == d]
            if not cell:
                continue
            runs[i, j] = len(cell)
            succ[i, j] = sum(r.succeeded(threshold) for r in cell)
            rate[i, j] = succ[i, j] / runs[i, j]
            speed[i, j] = success_speed(cell, threshold)
    return SuccessGrid(times, deltas, rate, speed, runs, succ)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def write_grid_csv(grid: SuccessGrid, path) -> None:
    _write_csv(path, ["T", "delta", "rate", "speed", "runs", "successes"], grid.rows())


@dataclass
class WarmStartRow:
    seed: int
    closed_error: float
    direct_error: float   # pre-optimised field applied to the open problem
    refined_error: float  # after re-optimising on the open problem
    pre_field: ControlField
    refined: RunRecord


@dataclass
class WarmStartComparison:
    rows: list
    skipped: list  # (seed, closed record) pairs whose pre-optimisation failed

    def relative_improvement(self) -> np.ndarray:
        return np.array([(r.direct_error - r.refined_error) / r.direct_error for r in self.rows])

    def reduction_factor(self) -> np.ndarray:
        return np.array([r.direct_error / r.refined_error for r in self.rows])


def warm_start_compare(problem_open, problem_closed, n_runs: int, opts: OptimizerOptions | None = None, *,
                       T: float, n_slices: int, delta: float, base_seed: int = 0,
                       closed_opts: OptimizerOptions | None = None,
                       closed_threshold: float = 1e-4) -> WarmStartComparison:
    """Pre-optimise without the environment, then refine with it.

    The closed problem is optimised from a seeded random field with
    ``closed_opts`` (by default converged to 1e-8); seeds whose closed error
    stays above ``closed_threshold`` are skipped.  The resulting field is
    evaluated on the open problem directly and then used as the starting
    point of a second optimisation with ``opts``.
    """
    if problem_open.n_controls != problem_closed.n_controls:
        raise ValueError("open and closed problems need the same control layout")
    opts = opts or OptimizerOptions()
    closed_opts = closed_opts or OptimizerOptions(error_threshold=1e-8)
    rows, skipped = [], []
    for i in range(n_runs):
        seed = base_seed + i
        closed = run_single(problem_closed, T, n_slices, delta, seed, closed_opts, {"stage": "closed"})
        if not closed.succeeded(closed_threshold):
            skipped.append((seed, closed))
            continue
        pre = closed.final_field
        try:
            refined = bfgs_minimize(problem_open, pre, opts, seed=seed,
                                    meta={"stage": "open", "T": T, "K": n_slices, "delta": delta})
        except NumericalAbort as exc:
            refined = exc.record
        rows.append(WarmStartRow(seed, closed.final_error, refined.history[0], refined.final_error, pre, refined))
    return WarmStartComparison(rows, skipped)


def write_comparison_csv(comparison: WarmStartComparison, path) -> None:
    _write_csv(path, ["seed", "closed_error", "blue", "red"],
               ((r.seed, r.closed_error, r.direct_error, r.refined_error) for r in comparison.rows))


_PAULI_XYZ = np.array([PAULI["x"], PAULI["y"], PAULI["z"]])


def _bloch_vectors(psi: np.ndarray, n_qubits: int) -> np.ndarray:
    psi = psi.reshape((2,) * n_qubits)
    out = np.empty((n_qubits, 3))
    for q in range(n_qubits):
        a = np.moveaxis(psi, q, 0).reshape(2, -1)
        rho = a @ a.conj().T
        out[q] = np.einsum("ij,aji->a", rho, _PAULI_XYZ).real
    return out


def bloch_trajectories(problem, field: ControlField, n_samples: int | None = 101, times=None,
                       initial_state=None):
    """Per-qubit Bloch vectors ``b_a = Tr(rho_q sigma_a)`` along the evolution.

    Parameters
    ----------
    problem : GateProblem
        Must have Hamiltonian dynamics.
    field : ControlField
    n_samples : int
        Number of uniformly spaced times in ``[0, T]`` (ignored if ``times`` given).
    times : array_like, optional
    initial_state : array_like, optional
        Full-register state vector; defaults to every qubit in ``(1, 0)``.

    Returns
    -------
    times : ndarray, shape (S,)
    bloch : ndarray, shape (S, n_qubits, 3)
    """
    gen = problem.generator
    if gen.kind != "hamiltonian":
        raise ValueError("Bloch trajectories need Hamiltonian dynamics")
    times = np.linspace(0.0, field.T, n_samples) if times is None else np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(times > field.T * (1 + 1e-12)):
        raise ValueError("sampling times must lie in [0, T]")
    N = gen.dim
    n_qubits = int(round(math.log2(N)))
    psi0 = np.zeros(N, dtype=complex)
    if initial_state is None:
        psi0[0] = 1.0
    else:
        psi0[:] = initial_state
    cache = problem.propagate(field)
    Hs = gen.slice_operators(field.values)
    dt, K = field.dt, field.n_slices
    out = np.empty((len(times), n_qubits, 3))
    for s, t in enumerate(times):
        p = min(int(t // dt), K - 1)
        U = scipy.linalg.expm(-1j * Hs[p] * (t - p * dt)) @ cache.forward[p]
        out[s] = _bloch_vectors(U @ psi0, n_qubits)
    return times, out


def write_trajectory_csv(times, bloch, path) -> None:
    rows = ((t, q, *bloch[s, q]) for s, t in enumerate(times) for q in range(bloch.shape[1]))
    _write_csv(path, ["time", "qubit", "bx", "by", "bz"], rows)


def leakage_scenario(spec: QubitNetworkSpec, detuning: float = 0.0) -> QubitNetworkSpec:
    """Let every control also drive the noise qubits; optionally detune them."""
    if spec.n_noise == 0:
        raise ValueError("leakage needs noise qubits")
    actuators = tuple(Actuator(a.qubit, a.axis, True) for a in spec.actuators)
    omega = spec.omega[: spec.n_system] + tuple(w + detuning for w in spec.omega[spec.n_system:])
    return spec.with_changes(actuators=actuators, omega=omega)


@dataclass
class FieldStats:
    seed: int
    delta: float
    T: float
    init_fluence: float
    final_fluence: float
    max_amp: float
    final_error: float
    init_fluence_per_control: list
    final_fluence_per_control: list


def field_statistics(records, threshold: float | None = None) -> list:
    """Fluences and peak amplitude of every (optionally only successful) run."""
    out = []
    for r in records:
        if threshold is not None and not r.succeeded(threshold):
            continue
        fi, ff = fluence(r.initial_field), fluence(r.final_field)
        out.append(FieldStats(r.seed, r.meta.get("delta", math.nan), r.final_field.T,
                              float(fi.sum()), float(ff.sum()), max_amplitude(r.final_field),
                              r.final_error, fi.tolist(), ff.tolist()))
    return out


def write_statistics_csv(stats, path) -> None:
    _write_csv(path, ["seed", "delta", "T", "init_fluence", "final_fluence", "max_amp", "final_error"],
               ((s.seed, s.delta, s.T, s.init_fluence, s.final_fluence, s.max_amp, s.final_error)
                for s in stats))


def acceleration_ratios(history, window: int = 10):
    """Error ratios over the final ``window`` iterations and over a mid-run window.

    The window shrinks to half the run length for short runs.  A late ratio
    below the mid ratio means convergence sped up toward the end.
    """
    h = np.asarray(history, dtype=float)
    n = len(h) - 1
    w = min(window, n // 2)
    if w < 1:
        raise ValueError("history too short")
    late = h[-1] / h[-1 - w]
    start = (n - w) // 2
    mid = h[start + w] / h[start]
    return late, mid
