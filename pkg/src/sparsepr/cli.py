"""Command-line interface: single solves, Monte-Carlo sweeps, traces, selftest.

Exit codes: 0 on success, 1 for invalid arguments, 2 for runtime failures.
"""

from __future__ import annotations

import argparse
import math
import sys
from typing import Optional

import numpy as np

from .model import (
    NoiseSpec,
    ScalarField,
    SeededRng,
    measure,
    relative_mse,
    sample_gaussian_signal,
    sample_measurement_matrix,
)
from .solver import SolverConfig, Variant, hard_threshold, sparta_iterate, solve
from .harness import (
    ExperimentGrid,
    ExperimentKind,
    GridPoint,
    TraceRow,
    complex_demo,
    convergence_noisy,
    run_trial,
    sweep_k,
    sweep_m,
    sweep_snr,
    write_csv,
    write_trace_csv,
)

_VARIANTS = {"sparta": Variant.SPARTA, "sparta0": Variant.SPARTA0, "taf": Variant.DENSE_TAF}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 instead of argparse's 2
        raise UsageError(message)


def _parse_range(text: str, name: str) -> list[float]:
    """Parse 'a:b:step' into an inclusive list of grid values."""
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"{name} must look like a:b:step, got {text!r}")
    try:
        a, b, step = (float(p) for p in parts)
    except ValueError:
        raise UsageError(f"{name} must hold numbers, got {text!r}") from None
    if step <= 0 or b < a:
        raise UsageError(f"{name} needs a <= b and step > 0")
    count = int(math.floor((b - a) / step + 1e-9)) + 1
    return [a + i * step for i in range(count)]


def _parse_gamma(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise UsageError(f"--gamma must be a number or 'inf', got {text!r}") from None
    if not value > 0:
        raise UsageError("--gamma must be positive")
    return value


def _parse_tol(text: str) -> Optional[float]:
    if text.lower() == "off":
        return None
    try:
        value = float(text)
    except ValueError:
        raise UsageError(f"--early-stop-tol must be a number or 'off', got {text!r}") from None
    if not value > 0:
        raise UsageError("--early-stop-tol must be positive or 'off'")
    return value


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--n", type=int, default=1000, help="signal dimension")
    parser.add_argument("--k", type=int, default=10, help="true sparsity level")
    parser.add_argument("--m", type=int, default=None, help="number of measurements")
    parser.add_argument("--trials", type=int, default=None, help="Monte-Carlo trials per grid point")
    parser.add_argument("--seed", type=int, default=0, help="base seed for all RNG streams")
    parser.add_argument("--variant", action="append", choices=sorted(_VARIANTS),
                        help="solver variant (repeatable)")
    parser.add_argument("--gamma", type=_parse_gamma, default=1.0,
                        help="truncation threshold (a positive number or 'inf')")
    parser.add_argument("--mu", type=float, default=1.0, help="gradient step size")
    parser.add_argument("--power-iters", type=int, default=100, help="power iterations for the init")
    parser.add_argument("--max-iters", type=int, default=1000, help="refinement iterations T")
    parser.add_argument("--early-stop-tol", type=_parse_tol, default=1e-12, metavar="TOL|off",
                        help="stop once the relative update drops below TOL ('off' disables)")
    parser.add_argument("--field", choices=["real", "complex"], default="real")
    parser.add_argument("--noise-sigma", type=float, default=None,
                        help="additive Gaussian amplitude-noise level")
    parser.add_argument("--snr-db", type=float, default=None,
                        help="target SNR in dB (resolved to a sigma per trial)")
    parser.add_argument("--signal", choices=["gaussian", "flat"], default="gaussian",
                        help="nonzero-entry generator for the ground truth")
    parser.add_argument("--out", default="-", help="output CSV path ('-' for stdout)")
    parser.add_argument("--threads", type=int, default=1, help="worker processes for trials")
    parser.add_argument("--timing", action="store_true",
                        help="fill mean_wall_ms (makes CSV output timing-dependent)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparsepr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one synthetic instance")
    _add_common(p)
    p.add_argument("--k-used", type=int, default=None, help="sparsity handed to the solver")

    p = sub.add_parser("sweep-m", help="success rate versus number of measurements")
    _add_common(p)
    p.add_argument("--m-over-n", default="0.25:3:0.25", metavar="A:B:STEP",
                   help="grid of m/n ratios")
    p.add_argument("--paper-grid", action="store_true", help="use the fine 0.1:3:0.1 ratio grid")

    p = sub.add_parser("sweep-k", help="success rate versus sparsity level (m fixed)")
    _add_common(p)
    p.add_argument("--k-grid", default="5:50:5", metavar="A:B:STEP", help="grid of k values")

    p = sub.add_parser("converge", help="per-iteration error trace under noise")
    _add_common(p)

    p = sub.add_parser("sweep-snr", help="mean relative error versus SNR")
    _add_common(p)
    p.add_argument("--snr-grid", default="5:55:5", metavar="A:B:STEP", help="grid of SNR values (dB)")
    p.add_argument("--m-over-n", default="1:3:1", metavar="A:B:STEP", help="grid of m/n ratios")

    p = sub.add_parser("complex-demo", help="complex-field recovery trace")
    _add_common(p)
    p.add_argument("--full-size", action="store_true", help="run the full n=20000 problem")
    p.set_defaults(n=5000, m=1000, field="complex")

    p = sub.add_parser("selftest", help="quick built-in sanity checks")
    p.add_argument("--seed", type=int, default=0)

    return parser


def _variants(args, default: tuple[Variant, ...]) -> tuple[Variant, ...]:
    if not args.variant:
        return default
    return tuple(_VARIANTS[v] for v in args.variant)


def _noise(args) -> NoiseSpec:
    if args.noise_sigma is not None and args.snr_db is not None:
        raise UsageError("--noise-sigma and --snr-db are mutually exclusive")
    if args.noise_sigma is not None:
        if args.noise_sigma < 0:
            raise UsageError("--noise-sigma must be nonnegative")
        if args.noise_sigma == 0:
            return NoiseSpec.none()
        return NoiseSpec.additive_gaussian(args.noise_sigma)
    if args.snr_db is not None:
        return NoiseSpec.target_snr_db(args.snr_db)
    return NoiseSpec.none()


def _grid_kwargs(args) -> dict:
    return dict(
        n=args.n,
        k_true=args.k,
        base_seed=args.seed,
        field=ScalarField.COMPLEX if args.field == "complex" else ScalarField.REAL,
        signal=args.signal,
        mu=args.mu,
        gamma=args.gamma,
        power_iters=args.power_iters,
        max_iters=args.max_iters,
        early_stop_tol=args.early_stop_tol,
    )


def _ratios_to_m(ratios: list[float], n: int) -> tuple[int, ...]:
    values = tuple(max(1, int(round(r * n))) for r in ratios)
    if len(set(values)) != len(values):
        raise UsageError("m/n grid produces duplicate m values at this n")
    return values


def _cmd_solve(args) -> int:
    n = args.n
    m = args.m if args.m is not None else 3 * n
    grid = ExperimentGrid(
        kind=ExperimentKind.SWEEP_M,
        m_values=(m,),
        trials=1,
        variants=_variants(args, (Variant.SPARTA,)),
        noise=_noise(args),
        k_used=args.k_used,
        **_grid_kwargs(args),
    )
    point = GridPoint(index=0, m=m, k_true=args.k)
    want_trace = args.out != "-"
    rows: list[TraceRow] = []
    for variant in grid.variants:
        result = run_trial(grid, point, variant, 0, keep_trace=True)
        if result.error is not None:
            raise RuntimeError(result.error)
        print(
            f"{variant.value}: n={grid.n} m={m} k={args.k} k_used={result.k_used} "
            f"rel_mse={result.rel_mse:.6e} success={result.success} iters={result.iters}",
            file=sys.stderr,
        )
        if want_trace:
            for rec in result.trace.records:
                rows.append(TraceRow(variant=variant, seed=args.seed, iteration=rec.iteration,
                                     rel_mse=rec.rel_mse, loss=rec.loss,
                                     trunc_count=rec.trunc_count, rel_update=rec.rel_update))
    if want_trace:
        write_trace_csv(rows, args.out)
    return 0


def _cmd_sweep_m(args) -> int:
    ratios = _parse_range("0.1:3:0.1" if args.paper_grid else args.m_over_n, "--m-over-n")
    grid = ExperimentGrid(
        kind=ExperimentKind.SWEEP_M,
        m_values=_ratios_to_m(ratios, args.n),
        trials=args.trials if args.trials is not None else 100,
        variants=_variants(args, (Variant.SPARTA, Variant.SPARTA0, Variant.DENSE_TAF)),
        noise=_noise(args),
        **_grid_kwargs(args),
    )
    write_csv(sweep_m(grid, threads=args.threads, timing=args.timing), args.out)
    return 0


def _cmd_sweep_k(args) -> int:
    m = args.m if args.m is not None else args.n
    k_values = tuple(int(round(k)) for k in _parse_range(args.k_grid, "--k-grid"))
    grid = ExperimentGrid(
        kind=ExperimentKind.SWEEP_K,
        m_values=(m,),
        k_values=k_values,
        trials=args.trials if args.trials is not None else 100,
        variants=_variants(args, (Variant.SPARTA, Variant.SPARTA0, Variant.DENSE_TAF)),
        noise=_noise(args),
        **_grid_kwargs(args),
    )
    write_csv(sweep_k(grid, threads=args.threads, timing=args.timing), args.out)
    return 0


def _cmd_converge(args) -> int:
    m = args.m if args.m is not None else 3 * args.n
    noise = _noise(args)
    if args.noise_sigma is None and args.snr_db is None:
        noise = NoiseSpec.additive_gaussian(0.1)
    grid = ExperimentGrid(
        kind=ExperimentKind.CONVERGENCE_NOISY,
        m_values=(m,),
        trials=args.trials if args.trials is not None else 1,
        variants=_variants(args, (Variant.SPARTA, Variant.SPARTA0, Variant.DENSE_TAF)),
        noise=noise,
        **_grid_kwargs(args),
    )
    write_trace_csv(convergence_noisy(grid), args.out)
    return 0


def _cmd_sweep_snr(args) -> int:
    snr_values = tuple(_parse_range(args.snr_grid, "--snr-grid"))
    ratios = _parse_range(args.m_over_n, "--m-over-n")
    grid = ExperimentGrid(
        kind=ExperimentKind.SWEEP_SNR,
        m_values=_ratios_to_m(ratios, args.n),
        snr_values=snr_values,
        trials=args.trials if args.trials is not None else 100,
        variants=_variants(args, (Variant.SPARTA,)),
        noise=NoiseSpec.none(),
        **_grid_kwargs(args),
    )
    write_csv(sweep_snr(grid, threads=args.threads, timing=args.timing), args.out)
    return 0


def _cmd_complex_demo(args) -> int:
    n = 20000 if args.full_size else args.n
    m = args.m
    kwargs = _grid_kwargs(args)
    kwargs["n"] = n
    kwargs["field"] = ScalarField.COMPLEX
    grid = ExperimentGrid(
        kind=ExperimentKind.COMPLEX_DEMO,
        m_values=(m,),
        trials=args.trials if args.trials is not None else 1,
        variants=_variants(args, (Variant.SPARTA,)),
        noise=_noise(args),
        **kwargs,
    )
    rows = complex_demo(grid)
    finals = {}
    for row in rows:
        finals[(row.variant, row.seed)] = row
    for (variant, seed), row in sorted(finals.items(), key=lambda kv: (kv[0][0].value, kv[0][1])):
        print(
            f"complex-demo: variant={variant.value} n={n} m={m} k={grid.k_true} seed={seed} "
            f"final_rel_mse={row.rel_mse:.6e} iters={row.iteration}",
            file=sys.stderr,
        )
    write_trace_csv(rows, args.out)
    return 0


def _cmd_selftest(args) -> int:
    failures = 0

    def check(name: str, ok: bool) -> None:
        nonlocal failures
        print(f"[{'PASS' if ok else 'FAIL'}] {name}")
        failures += 0 if ok else 1

    rng = SeededRng(args.seed)
    gen = rng.generator()

    u = gen.standard_normal(12)
    ht = hard_threshold(u, 4)
    check("hard_threshold keeps exactly k entries", np.count_nonzero(ht) == 4)
    check("hard_threshold idempotent", np.array_equal(hard_threshold(ht, 4), ht))

    x = sample_gaussian_signal(64, 3, ScalarField.REAL, rng.with_stream(1))
    rows = sample_measurement_matrix(100, 64, ScalarField.REAL, rng.with_stream(2))
    meas = measure(x, rows)
    config = SolverConfig(variant=Variant.SPARTA, k_used=3)
    z_fp = sparta_iterate(x.values, meas, config)
    check("noiseless ground truth is a fixed point",
          float(np.linalg.norm(z_fp - x.values)) <= 1e-12 * x.norm)

    out = solve(meas, config, ground_truth=x.values, rng=rng.with_stream(3))
    rel = relative_mse(out.estimate, x.values, ScalarField.REAL)
    check("small instance recovered to 1e-5", rel < 1e-5)

    out2 = solve(meas, config, ground_truth=x.values, rng=rng.with_stream(3))
    check("repeat solve is bit-identical", np.array_equal(out.estimate, out2.estimate))

    print("selftest:", "ok" if failures == 0 else f"{failures} failure(s)")
    return 0 if failures == 0 else 2


_COMMANDS = {
    "solve": _cmd_solve,
    "sweep-m": _cmd_sweep_m,
    "sweep-k": _cmd_sweep_k,
    "converge": _cmd_converge,
    "sweep-snr": _cmd_sweep_snr,
    "complex-demo": _cmd_complex_demo,
    "selftest": _cmd_selftest,
}


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"sparsepr: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"sparsepr: invalid arguments: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"sparsepr: runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
