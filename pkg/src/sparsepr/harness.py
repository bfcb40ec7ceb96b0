"""Monte-Carlo experiment runner: success-rate sweeps, convergence traces,
noise-stability sweeps, and CSV emission.

Every (grid point, trial, variant, purpose) tuple owns a private RNG stream,
derived by hashing the point's content (not its position), so results are
reproducible cell by cell and independent of worker scheduling or of other
grid points.
"""

from __future__ import annotations

import csv
import multiprocessing
import sys
import time
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .model import (
    NoiseSpec,
    ScalarField,
    SeededRng,
    STREAM_MATRIX,
    STREAM_NOISE,
    STREAM_POWER,
    STREAM_SIGNAL,
    SUCCESS_THRESHOLD,
    measure,
    relative_mse,
    sample_flat_signal,
    sample_gaussian_signal,
    sample_measurement_matrix,
)
from .solver import SolverConfig, SolverTrace, Variant, solve

__all__ = [
    "ExperimentKind",
    "ExperimentGrid",
    "GridPoint",
    "TrialResult",
    "SweepRow",
    "SweepResult",
    "TraceRow",
    "run_trial",
    "run_grid",
    "sweep_m",
    "sweep_k",
    "sweep_snr",
    "convergence_noisy",
    "complex_demo",
    "write_csv",
    "write_trace_csv",
    "SWEEP_COLUMNS",
    "TRACE_COLUMNS",
]

SWEEP_COLUMNS = (
    "variant,n,k_true,k_used,m,snr_db,trials,successes,success_rate,"
    "mean_rel_mse,median_rel_mse,mean_iters,mean_wall_ms"
).split(",")
TRACE_COLUMNS = "variant,seed,iter,rel_mse,loss,trunc_count,rel_update".split(",")

_MASK64 = (1 << 64) - 1


def _mix64(*parts: int) -> int:
    """SplitMix64-style hash of integer parts into one 64-bit stream id."""
    h = 0x9E3779B97F4A7C15
    for p in parts:
        h = ((h ^ (p & _MASK64)) * 0xBF58476D1CE4E5B9) & _MASK64
        h ^= h >> 27
        h = (h * 0x94D049BB133111EB) & _MASK64
        h ^= h >> 31
    return h


class ExperimentKind(Enum):
    SWEEP_M = "sweep_m"
    SWEEP_K = "sweep_k"
    CONVERGENCE_NOISY = "convergence_noisy"
    SWEEP_SNR = "sweep_snr"
    COMPLEX_DEMO = "complex_demo"


@dataclass(frozen=True)
class GridPoint:
    """One cell of an experiment grid."""

    index: int
    m: int
    k_true: int
    snr_db: Optional[float] = None


@dataclass(frozen=True)
class ExperimentGrid:
    """A full experiment: axes, trial count, variants, noise, and solver knobs."""

    kind: ExperimentKind
    n: int
    k_true: int
    m_values: tuple[int, ...]
    trials: int = 100
    variants: tuple[Variant, ...] = (Variant.SPARTA,)
    noise: NoiseSpec = NoiseSpec.none()
    base_seed: int = 0
    field: ScalarField = ScalarField.REAL
    signal: str = "gaussian"
    k_used: Optional[int] = None
    k_values: Optional[tuple[int, ...]] = None
    snr_values: Optional[tuple[float, ...]] = None
    mu: float = 1.0
    gamma: float = 1.0
    trunc_fraction: float = 1.0 / 6.0
    power_iters: int = 100
    max_iters: int = 1000
    early_stop_tol: Optional[float] = 1e-12

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.m_values:
            raise ValueError("grid needs at least one m value")
        if not self.variants:
            raise ValueError("grid needs at least one variant")
        if self.signal not in ("gaussian", "flat"):
            raise ValueError(f"unknown signal generator {self.signal!r}")
        if self.kind is ExperimentKind.SWEEP_K and not self.k_values:
            raise ValueError("sweep_k needs k_values")
        if self.kind is ExperimentKind.SWEEP_SNR and not self.snr_values:
            raise ValueError("sweep_snr needs snr_values")

    def points(self) -> list[GridPoint]:
        pts: list[GridPoint] = []
        if self.kind is ExperimentKind.SWEEP_K:
            m = self.m_values[0]
            for k in self.k_values:
                pts.append(GridPoint(index=len(pts), m=m, k_true=k))
        elif self.kind is ExperimentKind.SWEEP_SNR:
            for m in self.m_values:
                for snr in self.snr_values:
                    pts.append(GridPoint(index=len(pts), m=m, k_true=self.k_true, snr_db=snr))
        else:
            for m in self.m_values:
                pts.append(GridPoint(index=len(pts), m=m, k_true=self.k_true))
        return pts

    def config_for(self, variant: Variant, point: GridPoint) -> SolverConfig:
        return SolverConfig(
            variant=variant,
            k_used=self.k_used if self.k_used is not None else point.k_true,
            mu=self.mu,
            gamma=self.gamma,
            trunc_fraction=self.trunc_fraction,
            power_iters=self.power_iters,
            max_iters=self.max_iters,
            early_stop_tol=self.early_stop_tol,
            seed=self.base_seed,
        )


@dataclass(frozen=True)
class TrialResult:
    point: GridPoint
    variant: Variant
    trial: int
    rel_mse: float
    success: bool
    iters: int
    k_used: int
    wall_ms: float
    trace: Optional[SolverTrace] = None
    error: Optional[str] = None


def _trial_rng(grid: ExperimentGrid, point: GridPoint, variant: Variant, trial: int,
               purpose: int, seed: Optional[int] = None) -> SeededRng:
    snr_bits = _MASK64 if point.snr_db is None else int(np.float64(point.snr_db).view(np.uint64))
    variant_idx = list(Variant).index(variant)
    stream = _mix64(grid.n, point.m, point.k_true, snr_bits, variant_idx, trial, purpose)
    return SeededRng(grid.base_seed if seed is None else seed, stream)


def run_trial(
    grid: ExperimentGrid,
    point: GridPoint,
    variant: Variant,
    trial: int,
    keep_trace: bool = False,
    seed: Optional[int] = None,
) -> TrialResult:
    """Generate one instance from the trial's streams, solve, and score it.

    Solver failures are recorded as failed trials with a reason and never
    abort a sweep.
    """
    config = grid.config_for(variant, point)
    k_used = config.effective_k(grid.n)
    t0 = time.perf_counter()
    try:
        sampler = sample_flat_signal if grid.signal == "flat" else sample_gaussian_signal
        x = sampler(grid.n, point.k_true, grid.field,
                    _trial_rng(grid, point, variant, trial, STREAM_SIGNAL, seed))
        rows = sample_measurement_matrix(point.m, grid.n, grid.field,
                                         _trial_rng(grid, point, variant, trial, STREAM_MATRIX, seed))
        noise = grid.noise
        if point.snr_db is not None:
            noise = NoiseSpec.target_snr_db(point.snr_db)
        meas = measure(x, rows, noise, _trial_rng(grid, point, variant, trial, STREAM_NOISE, seed))
        out = solve(meas, config, ground_truth=x.values,
                    rng=_trial_rng(grid, point, variant, trial, STREAM_POWER, seed))
        rel = relative_mse(out.estimate, x.values, grid.field)
        wall_ms = (time.perf_counter() - t0) * 1e3
        return TrialResult(
            point=point,
            variant=variant,
            trial=trial,
            rel_mse=rel,
            success=rel < SUCCESS_THRESHOLD,
            iters=out.trace.iterations,
            k_used=k_used,
            wall_ms=wall_ms,
            trace=out.trace if keep_trace else None,
        )
    except Exception as exc:  # noqa: BLE001 - sweeps must survive bad cells
        wall_ms = (time.perf_counter() - t0) * 1e3
        return TrialResult(
            point=point,
            variant=variant,
            trial=trial,
            rel_mse=float("nan"),
            success=False,
            iters=0,
            k_used=k_used,
            wall_ms=wall_ms,
            error=f"{type(exc).__name__}: {exc}",
        )


_WORKER_STATE: dict = {}


def _init_worker(grid: ExperimentGrid, keep_traces: bool) -> None:
    _WORKER_STATE["grid"] = grid
    _WORKER_STATE["points"] = grid.points()
    _WORKER_STATE["keep_traces"] = keep_traces


def _run_cell(task: tuple[int, int, int]) -> TrialResult:
    point_idx, variant_idx, trial = task
    grid: ExperimentGrid = _WORKER_STATE["grid"]
    return run_trial(
        grid,
        _WORKER_STATE["points"][point_idx],
        grid.variants[variant_idx],
        trial,
        keep_trace=_WORKER_STATE["keep_traces"],
    )


def run_grid(grid: ExperimentGrid, threads: int = 1, keep_traces: bool = False) -> list[TrialResult]:
    """Run every (point, variant, trial) cell, optionally on a worker pool.

    Results come back sorted by (variant, point, trial); identical grids give
    identical results regardless of ``threads``, since each cell's randomness
    is a pure function of grid content.
    """
    points = grid.points()
    tasks = [
        (p.index, vi, t)
        for vi in range(len(grid.variants))
        for p in points
        for t in range(grid.trials)
    ]
    if threads <= 1:
        _init_worker(grid, keep_traces)
        results = [_run_cell(task) for task in tasks]
    else:
        methods = multiprocessing.get_all_start_methods()
        ctx = multiprocessing.get_context("fork" if "fork" in methods else "spawn")
        with ctx.Pool(threads, initializer=_init_worker, initargs=(grid, keep_traces)) as pool:
            results = pool.map(_run_cell, tasks)
    variant_order = {v: i for i, v in enumerate(grid.variants)}
    results.sort(key=lambda r: (variant_order[r.variant], r.point.index, r.trial))
    return results


@dataclass(frozen=True)
class SweepRow:
    variant: Variant
    n: int
    k_true: int
    k_used: int
    m: int
    snr_db: Optional[float]
    trials: int
    successes: int
    success_rate: float
    mean_rel_mse: float
    median_rel_mse: float
    mean_iters: float
    mean_wall_ms: Optional[float]


@dataclass(frozen=True)
class SweepResult:
    rows: list[SweepRow]

    def row_for(self, variant: Variant, m: int, snr_db: Optional[float] = None,
                k_true: Optional[int] = None) -> SweepRow:
        for row in self.rows:
            if row.variant is variant and row.m == m and row.snr_db == snr_db:
                if k_true is None or row.k_true == k_true:
                    return row
        raise KeyError(f"no row for ({variant}, m={m}, snr_db={snr_db}, k={k_true})")


def _aggregate(grid: ExperimentGrid, results: list[TrialResult], timing: bool) -> SweepResult:
    rows: list[SweepRow] = []
    for variant in grid.variants:
        for point in grid.points():
            cell = [r for r in results if r.variant is variant and r.point.index == point.index]
            if not cell:
                continue
            rels = np.array([r.rel_mse for r in cell])
            successes = sum(r.success for r in cell)
            rows.append(
                SweepRow(
                    variant=variant,
                    n=grid.n,
                    k_true=point.k_true,
                    k_used=cell[0].k_used,
                    m=point.m,
                    snr_db=point.snr_db,
                    trials=len(cell),
                    successes=successes,
                    success_rate=successes / len(cell),
                    mean_rel_mse=float(np.mean(rels)),
                    median_rel_mse=float(np.median(rels)),
                    mean_iters=float(np.mean([r.iters for r in cell])),
                    mean_wall_ms=float(np.mean([r.wall_ms for r in cell])) if timing else None,
                )
            )
    return SweepResult(rows=rows)


def sweep_m(grid: ExperimentGrid, threads: int = 1, timing: bool = False) -> SweepResult:
    """Success-rate sweep over the number of measurements."""
    if grid.kind is not ExperimentKind.SWEEP_M:
        raise ValueError("grid kind must be SWEEP_M")
    return _aggregate(grid, run_grid(grid, threads=threads), timing)


def sweep_k(grid: ExperimentGrid, threads: int = 1, timing: bool = False) -> SweepResult:
    """Success-rate sweep over the true sparsity level, m fixed."""
    if grid.kind is not ExperimentKind.SWEEP_K:
        raise ValueError("grid kind must be SWEEP_K")
    return _aggregate(grid, run_grid(grid, threads=threads), timing)


def sweep_snr(grid: ExperimentGrid, threads: int = 1, timing: bool = False) -> SweepResult:
    """Mean relative error per (m, SNR) cell under additive Gaussian noise."""
    if grid.kind is not ExperimentKind.SWEEP_SNR:
        raise ValueError("grid kind must be SWEEP_SNR")
    return _aggregate(grid, run_grid(grid, threads=threads), timing)


@dataclass(frozen=True)
class TraceRow:
    variant: Variant
    seed: int
    iteration: int
    rel_mse: Optional[float]
    loss: float
    trunc_count: Optional[int]
    rel_update: Optional[float]


def _trace_rows(grid: ExperimentGrid) -> list[TraceRow]:
    """Per-iteration traces for each variant: trial i runs seed base_seed + i."""
    point = grid.points()[0]
    rows: list[TraceRow] = []
    for variant in grid.variants:
        for trial in range(grid.trials):
            seed = grid.base_seed + trial
            result = run_trial(grid, point, variant, 0, keep_trace=True, seed=seed)
            if result.trace is None:
                raise RuntimeError(f"trace run failed: {result.error}")
            for rec in result.trace.records:
                rows.append(
                    TraceRow(
                        variant=variant,
                        seed=seed,
                        iteration=rec.iteration,
                        rel_mse=rec.rel_mse,
                        loss=rec.loss,
                        trunc_count=rec.trunc_count,
                        rel_update=rec.rel_update,
                    )
                )
    return rows


def convergence_noisy(grid: ExperimentGrid) -> list[TraceRow]:
    """Per-iteration error traces under additive noise (one or a few seeds)."""
    if grid.kind is not ExperimentKind.CONVERGENCE_NOISY:
        raise ValueError("grid kind must be CONVERGENCE_NOISY")
    return _trace_rows(grid)


def complex_demo(grid: ExperimentGrid) -> list[TraceRow]:
    """Complex-field recovery trace at the desk-scaled demo size."""
    if grid.kind is not ExperimentKind.COMPLEX_DEMO:
        raise ValueError("grid kind must be COMPLEX_DEMO")
    if grid.field is not ScalarField.COMPLEX:
        raise ValueError("complex_demo requires the complex field")
    return _trace_rows(grid)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _open_out(path):
    if path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def write_csv(result: SweepResult, path: str) -> None:
    """Write sweep rows as UTF-8 CSV with the fixed schema and column order.

    Floats use shortest round-trip decimals; absent values (snr_db,
    mean_wall_ms without --timing) are empty cells.
    """
    stream, owned = _open_out(path)
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for row in result.rows:
            writer.writerow(
                [
                    row.variant.value,
                    row.n,
                    row.k_true,
                    row.k_used,
                    row.m,
                    _fmt(row.snr_db),
                    row.trials,
                    row.successes,
                    _fmt(row.success_rate),
                    _fmt(row.mean_rel_mse),
                    _fmt(row.median_rel_mse),
                    _fmt(row.mean_iters),
                    _fmt(row.mean_wall_ms),
                ]
            )
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path!r}: {exc}") from exc
    finally:
        if owned:
            stream.close()


def write_trace_csv(rows: Sequence[TraceRow], path: str) -> None:
    """Write per-iteration trace rows as UTF-8 CSV."""
    stream, owned = _open_out(path)
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row.variant.value,
                    row.seed,
                    row.iteration,
                    _fmt(row.rel_mse),
                    _fmt(row.loss),
                    _fmt(row.trunc_count),
                    _fmt(row.rel_update),
                ]
            )
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path!r}: {exc}") from exc
    finally:
        if owned:
            stream.close()
