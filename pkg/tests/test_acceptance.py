"""Acceptance suite: desk-scale reproduction of the reference experiments.

Each test prints one `[PASS]`/`[FAIL]` line (visible with ``pytest -s``)
before asserting, so a full run yields a criterion-by-criterion report.
Run with::

    pytest tests/test_acceptance.py -v -s

The suite is compute-heavy (tens of minutes on one core); `--threads` only
helps on multi-core machines.
"""

import itertools
import subprocess
import sys

import numpy as np
import pytest

from sparsepr import (
    MeasurementSet,
    ScalarField,
    SeededRng,
    SolverConfig,
    SparseSignal,
    Variant,
    estimate_support,
    hard_threshold,
    measure,
    sample_flat_signal,
    sample_gaussian_signal,
    sample_measurement_matrix,
    sparta_iterate,
    truncated_gradient,
    truncation_set,
)
from sparsepr.harness import ExperimentGrid, ExperimentKind, run_grid, sweep_snr

REAL = ScalarField.REAL


def report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


def success_rate(grid: ExperimentGrid, variant: Variant, m: int) -> float:
    rows = [r for r in run_grid(grid) if r.variant is variant and r.point.m == m]
    return sum(r.success for r in rows) / len(rows)


def test_criterion_1_exact_recovery_versus_m():
    """n=1000, k=10, noiseless, 100 trials: sparse solver succeeds at m/n of
    1 and 3; the dense baseline stays at zero for m/n <= 0.5."""
    n, k, trials, seed = 1000, 10, 100, 20260810
    sparta_grid = ExperimentGrid(
        kind=ExperimentKind.SWEEP_M, n=n, k_true=k, m_values=(1000, 3000),
        trials=trials, variants=(Variant.SPARTA,), base_seed=seed,
    )
    taf_grid = ExperimentGrid(
        kind=ExperimentKind.SWEEP_M, n=n, k_true=k, m_values=(250, 500),
        trials=trials, variants=(Variant.DENSE_TAF,), base_seed=seed,
    )
    rate_1 = success_rate(sparta_grid, Variant.SPARTA, 1000)
    rate_3 = success_rate(sparta_grid, Variant.SPARTA, 3000)
    taf_quarter = success_rate(taf_grid, Variant.DENSE_TAF, 250)
    taf_half = success_rate(taf_grid, Variant.DENSE_TAF, 500)
    ok = rate_1 >= 0.95 and rate_3 >= 0.99 and taf_quarter == 0.0 and taf_half == 0.0
    report(
        "criterion 1 (recovery vs m)",
        ok,
        f"sparta m/n=1: {rate_1:.2f} (need >=0.95), m/n=3: {rate_3:.2f} (need >=0.99), "
        f"taf m/n=0.25: {taf_quarter:.2f}, m/n=0.5: {taf_half:.2f} (need =0)",
    )
    assert rate_1 >= 0.95
    assert rate_3 >= 0.99
    assert taf_quarter == 0.0
    assert taf_half == 0.0


_K_SWEEP_VALUES = (1, 10, 20, 40, 100)
_k_sweep_cache: list = []


def _k_sweep_rates() -> dict[int, float]:
    """Shared m = n = 1000 sparsity sweep (criterion 2 plus edge examples)."""
    if not _k_sweep_cache:
        grid = ExperimentGrid(
            kind=ExperimentKind.SWEEP_K, n=1000, k_true=10, m_values=(1000,),
            k_values=_K_SWEEP_VALUES, trials=100, variants=(Variant.SPARTA,),
            base_seed=20260811,
        )
        results = run_grid(grid)
        rates = {}
        for k in _K_SWEEP_VALUES:
            cell = [r for r in results if r.point.k_true == k]
            rates[k] = sum(r.success for r in cell) / len(cell)
        _k_sweep_cache.append(rates)
    return _k_sweep_cache[0]


def test_criterion_2_sparsity_frontier():
    """m = n = 1000, noiseless: success rate >= 0.9 up to k=20 and <= 0.1
    from k=40 on."""
    rates = _k_sweep_rates()
    ok = rates[10] >= 0.9 and rates[20] >= 0.9 and rates[40] <= 0.1
    report(
        "criterion 2 (sparsity frontier)",
        ok,
        f"success k=10: {rates[10]:.2f}, k=20: {rates[20]:.2f} (need >=0.9); "
        f"k=40: {rates[40]:.2f} (need <=0.1)",
    )
    assert rates[10] >= 0.9
    assert rates[20] >= 0.9
    assert rates[40] <= 0.1


def test_sparsity_sweep_edge_examples():
    """The easiest instance (k=1) is near-certain; far beyond the frontier
    (k=100) recovery has all but vanished."""
    rates = _k_sweep_rates()
    ok = rates[1] >= 0.95 and rates[100] <= 0.05
    report(
        "sparsity edge examples",
        ok,
        f"success k=1: {rates[1]:.2f} (need >=0.95); k=100: {rates[100]:.2f} (need <=0.05)",
    )
    assert rates[1] >= 0.95
    assert rates[100] <= 0.05


def test_criterion_3_exact_support_recovery():
    """Flat signals with x_min^2 = ||x||^2/k, n=1000, k=10, m=600: the
    support statistic must recover the exact support in at least 90/100
    trials."""
    n, k, m, trials = 1000, 10, 600, 100
    hits = 0
    for trial in range(trials):
        base = SeededRng(20260812)
        x = sample_flat_signal(n, k, REAL, base.with_stream(2 * trial))
        rows = sample_measurement_matrix(m, n, REAL, base.with_stream(2 * trial + 1))
        est = estimate_support(measure(x, rows), k)
        hits += int(np.array_equal(est.indices, x.support))
    ok = hits >= 90
    report("criterion 3 (exact support recovery)", ok, f"exact support in {hits}/100 trials (need >=90)")
    assert hits >= 90


def test_criterion_4_initialization_quality():
    """n=1000, k=10, m=3000, 100 trials: the median relative error of the
    initialization must be at most 0.3."""
    n, k, m, trials, seed = 1000, 10, 3000, 100, 20260813
    grid = ExperimentGrid(
        kind=ExperimentKind.SWEEP_M, n=n, k_true=k, m_values=(m,),
        trials=trials, variants=(Variant.SPARTA,), base_seed=seed,
        max_iters=0,  # the returned estimate is exactly the initialization
    )
    rels = [r.rel_mse for r in run_grid(grid)]
    median = float(np.median(rels))
    ok = median <= 0.3
    report("criterion 4 (init quality)", ok, f"median init rel error {median:.3f} (need <=0.3)")
    assert median <= 0.3


def test_criterion_5_linear_convergence():
    """On successful noiseless runs the error ratio stays below 1 from
    iteration 10 until the 1e-5 floor, with geometric-mean ratio <= 0.9."""
    n, k, m, trials, seed = 1000, 10, 3000, 20, 20260814
    grid = ExperimentGrid(
        kind=ExperimentKind.SWEEP_M, n=n, k_true=k, m_values=(m,),
        trials=trials, variants=(Variant.SPARTA,), base_seed=seed,
    )
    results = run_grid(grid, keep_traces=True)
    successes = [r for r in results if r.success]
    assert successes, "no successful trials to measure"
    worst_geo = 0.0
    late_ratio_ok = True
    for r in successes:
        rels = r.trace.rel_mse_series()
        pre_floor = list(itertools.takewhile(lambda v: v > 1e-5, rels))
        nxt = pre_floor[1:] + [rels[len(pre_floor)]]
        ratios = [max(b / a, 1e-300) for a, b in zip(pre_floor, nxt)]
        late_ratio_ok &= all(t < 1 for t in ratios[10:])
        geo = float(np.exp(np.mean(np.log(ratios))))
        worst_geo = max(worst_geo, geo)
    ok = late_ratio_ok and worst_geo <= 0.9
    report(
        "criterion 5 (linear convergence)",
        ok,
        f"{len(successes)} successful trials; ratios<1 after t=10: {late_ratio_ok}; "
        f"worst geometric-mean ratio {worst_geo:.3f} (need <=0.9)",
    )
    assert late_ratio_ok
    assert worst_geo <= 0.9


_SNR_POINTS = (5.0, 15.0, 25.0, 35.0, 45.0, 55.0)
_snr_sweep_cache: list = []


def _snr_sweep_means() -> list[float]:
    """Shared m/n = 3 SNR sweep (criterion 6 and the slope check)."""
    if not _snr_sweep_cache:
        grid = ExperimentGrid(
            kind=ExperimentKind.SWEEP_SNR, n=1000, k_true=10, m_values=(3000,),
            snr_values=_SNR_POINTS, trials=50, variants=(Variant.SPARTA,),
            base_seed=20260815,
        )
        _snr_sweep_cache.append([row.mean_rel_mse for row in sweep_snr(grid).rows])
    return _snr_sweep_cache[0]


def test_criterion_6_noise_stability():
    """m/n = 3, SNR swept 5..55 dB, 50 trials per point: mean relative error
    strictly decreases and drops by at least 100x across the sweep."""
    means = _snr_sweep_means()
    decreasing = all(b < a for a, b in zip(means, means[1:]))
    drop = means[0] / means[-1]
    ok = decreasing and drop >= 100.0
    report(
        "criterion 6 (noise stability)",
        ok,
        f"mean rel err 5dB={means[0]:.3e} -> 55dB={means[-1]:.3e}, "
        f"drop {drop:.0f}x (need >=100), strictly decreasing: {decreasing}",
    )
    assert decreasing
    assert drop >= 100.0


def test_snr_slope_tracks_amplitude_noise():
    """The log-error-versus-SNR slope sits near -1/20 per dB (inverse
    proportionality in the amplitude domain), within 30 percent."""
    means = _snr_sweep_means()
    slope = float(np.polyfit(_SNR_POINTS, np.log10(means), 1)[0])
    ok = -0.05 * 1.3 <= slope <= -0.05 * 0.7
    report("snr slope example", ok, f"log10 slope {slope:.4f} per dB (allowed -0.065..-0.035)")
    assert ok


def test_criterion_7_property_suites():
    """Small-scale exhaustive properties: thresholding optimality, truncation
    monotonicity, gradient finite differences, bit-exact permutation
    equivariance, and the noiseless fixed point."""
    gen = SeededRng(20260816).generator()

    # Hard-threshold idempotence and best-k-term optimality, 200 samples.
    ht_ok = True
    for _ in range(200):
        size = int(gen.integers(1, 9))
        u = gen.standard_normal(size)
        for k in range(size + 1):
            t = hard_threshold(u, k)
            ht_ok &= bool(np.array_equal(hard_threshold(t, k), t))
            best = min(
                float(np.linalg.norm(u - np.where(np.isin(np.arange(size), c), u, 0.0)))
                for c in itertools.combinations(range(size), k)
            )
            ht_ok &= float(np.linalg.norm(u - t)) <= best + 1e-12

    # Truncation-set monotonicity in gamma, 100 random instances.
    mono_ok = True
    for i in range(100):
        x = sample_gaussian_signal(12, 3, REAL, SeededRng(30000 + i))
        rows = sample_measurement_matrix(30, 12, REAL, SeededRng(31000 + i))
        meas = measure(x, rows)
        z = gen.standard_normal(12)
        g1, g2 = sorted(gen.random(2) * 4 + 1e-3)
        mono_ok &= set(truncation_set(z, meas, g1)) <= set(truncation_set(z, meas, g2))

    # Finite-difference agreement on 50 smooth points.
    fd_ok = True
    checked = 0
    attempt = 0
    while checked < 50:
        attempt += 1
        x = sample_gaussian_signal(8, 3, REAL, SeededRng(32000 + attempt))
        rows = sample_measurement_matrix(24, 8, REAL, SeededRng(33000 + attempt))
        meas = measure(x, rows)
        z = gen.standard_normal(8)
        w = meas.rows @ z
        if np.min(np.abs(np.abs(w) - meas.psi / 2.0)) < 1e-3 or np.min(np.abs(w)) < 1e-3:
            continue
        checked += 1
        idx = truncation_set(z, meas, 1.0)
        grad = truncated_gradient(z, meas, 1.0)

        def frozen_loss(v):
            resid = meas.psi[idx] - np.abs(meas.rows[idx] @ v)
            return float(resid @ resid) / (2.0 * meas.m)

        for j in range(8):
            e = np.zeros(8)
            e[j] = 1e-6
            fd = (frozen_loss(z + e) - frozen_loss(z - e)) / 2e-6
            denom = max(abs(grad[j]), 1e-10)
            fd_ok &= abs(fd - grad[j]) / denom <= 1e-5

    # Permutation equivariance, bit-exact, 20 instances.
    perm_ok = True
    for i in range(20):
        x = sample_gaussian_signal(25, 5, REAL, SeededRng(34000 + i))
        rows = sample_measurement_matrix(40, 25, REAL, SeededRng(35000 + i))
        meas = measure(x, rows)
        perm = SeededRng(36000 + i).generator().permutation(25)
        x_perm = SparseSignal(values=x.values[perm], support=np.sort(np.flatnonzero(x.values[perm])),
                              n=25, k=5, field=REAL)
        perm_ok &= bool(np.array_equal(measure(x_perm, rows[:, perm]).psi, meas.psi))
        permuted = MeasurementSet(rows=meas.rows[:, perm], psi=meas.psi, m=40, n=25, field=REAL)
        a, b = estimate_support(meas, 5), estimate_support(permuted, 5)
        perm_ok &= bool(np.array_equal(b.scores, a.scores[perm]))
        u = gen.standard_normal(25)
        perm_ok &= bool(np.array_equal(hard_threshold(u[perm], 6), hard_threshold(u, 6)[perm]))

    # Noiseless fixed point to 1e-12 * ||x||.
    fp_ok = True
    for i in range(10):
        x = sample_gaussian_signal(60, 5, REAL, SeededRng(37000 + i))
        rows = sample_measurement_matrix(180, 60, REAL, SeededRng(38000 + i))
        meas = measure(x, rows)
        z_next = sparta_iterate(x.values, meas, SolverConfig(variant=Variant.SPARTA, k_used=5))
        fp_ok &= float(np.linalg.norm(z_next - x.values)) <= 1e-12 * x.norm

    ok = ht_ok and mono_ok and fd_ok and perm_ok and fp_ok
    report(
        "criterion 7 (property suites)",
        ok,
        f"thresholding: {ht_ok}, monotonicity: {mono_ok}, finite differences: {fd_ok}, "
        f"permutation: {perm_ok}, fixed point: {fp_ok}",
    )
    assert ht_ok and mono_ok and fd_ok and perm_ok and fp_ok


def test_criterion_8_thread_count_determinism(tmp_path):
    """`sweep-m` with identical flags must emit byte-identical CSV whether it
    runs on one worker or eight."""
    args = [
        sys.executable, "-m", "sparsepr.cli", "sweep-m",
        "--n", "300", "--k", "5", "--m-over-n", "0.5:1.5:0.5",
        "--trials", "5", "--seed", "7", "--variant", "sparta", "--variant", "taf",
        "--max-iters", "150",
    ]
    out1 = tmp_path / "t1.csv"
    out8 = tmp_path / "t8.csv"
    r1 = subprocess.run(args + ["--threads", "1", "--out", str(out1)], capture_output=True)
    r8 = subprocess.run(args + ["--threads", "8", "--out", str(out8)], capture_output=True)
    assert r1.returncode == 0, r1.stderr.decode()
    assert r8.returncode == 0, r8.stderr.decode()
    same = out1.read_bytes() == out8.read_bytes()
    report("criterion 8 (determinism)", same, "threads=1 and threads=8 CSVs byte-identical")
    assert same
