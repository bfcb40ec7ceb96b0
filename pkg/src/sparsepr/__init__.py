"""Sparse phase retrieval from magnitude-only Gaussian measurements.

The solver recovers a k-sparse signal from amplitudes |<a_i, x>| in two
stages: support estimation plus a restricted orthogonality-promoting
initialization, followed by hard-thresholded truncated amplitude-flow
refinement.  A Monte-Carlo harness reproduces the synthetic success-rate,
convergence, and noise-stability experiments and emits CSV.
"""

from .model import (
    MeasurementSet,
    NoiseKind,
    NoiseSpec,
    ScalarField,
    SeededRng,
    SparseSignal,
    SUCCESS_THRESHOLD,
    amplitude_loss,
    dist,
    measure,
    relative_mse,
    sample_flat_signal,
    sample_gaussian_signal,
    sample_measurement_matrix,
    snr_to_sigma,
)
from .solver import (
    NumericalDegeneracyError,
    SolverConfig,
    SolverOutput,
    SolverTrace,
    SupportEstimate,
    Variant,
    estimate_support,
    hard_threshold,
    power_init,
    scale_and_embed,
    select_complement_set,
    solve,
    sparta_iterate,
    truncated_gradient,
    truncation_set,
)
from .harness import (
    ExperimentGrid,
    ExperimentKind,
    SweepResult,
    complex_demo,
    convergence_noisy,
    run_trial,
    sweep_k,
    sweep_m,
    sweep_snr,
    write_csv,
    write_trace_csv,
)

__version__ = "0.1.0"

__all__ = [
    "MeasurementSet",
    "NoiseKind",
    "NoiseSpec",
    "ScalarField",
    "SeededRng",
    "SparseSignal",
    "SUCCESS_THRESHOLD",
    "amplitude_loss",
    "dist",
    "measure",
    "relative_mse",
    "sample_flat_signal",
    "sample_gaussian_signal",
    "sample_measurement_matrix",
    "snr_to_sigma",
    "NumericalDegeneracyError",
    "SolverConfig",
    "SolverOutput",
    "SolverTrace",
    "SupportEstimate",
    "Variant",
    "estimate_support",
    "hard_threshold",
    "power_init",
    "scale_and_embed",
    "select_complement_set",
    "solve",
    "sparta_iterate",
    "truncated_gradient",
    "truncation_set",
    "ExperimentGrid",
    "ExperimentKind",
    "SweepResult",
    "complex_demo",
    "convergence_noisy",
    "run_trial",
    "sweep_k",
    "sweep_m",
    "sweep_snr",
    "write_csv",
    "write_trace_csv",
    "__version__",
]
