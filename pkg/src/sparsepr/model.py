"""Data model for sparse phase retrieval: signals, Gaussian sensing, noise,
distances, and deterministic randomness.

Measurements follow the amplitude model ``psi_i = |<a_i, x>|`` with i.i.d.
Gaussian sensing rows, optionally corrupted by additive Gaussian noise.  All
randomness flows through :class:`SeededRng`, a counter-based generator whose
bit stream is reproducible across runs and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from math import fsum
from typing import Optional

import numpy as np
from scipy.special import ndtri

__all__ = [
    "ScalarField",
    "SeededRng",
    "SparseSignal",
    "MeasurementSet",
    "NoiseKind",
    "NoiseSpec",
    "STREAM_SIGNAL",
    "STREAM_MATRIX",
    "STREAM_NOISE",
    "STREAM_POWER",
    "SUCCESS_THRESHOLD",
    "sample_gaussian_signal",
    "sample_flat_signal",
    "sample_measurement_matrix",
    "measure",
    "snr_to_sigma",
    "amplitude_loss",
    "dist",
    "relative_mse",
]

# Relative-MSE threshold below which a trial counts as an exact recovery.
SUCCESS_THRESHOLD = 1e-5

# Purpose tags for per-trial RNG sub-streams (see harness.pack_stream).
STREAM_SIGNAL = 0
STREAM_MATRIX = 1
STREAM_NOISE = 2
STREAM_POWER = 3

_U64_MAX = 2**64 - 1
# Smallest uniform fed to the inverse CDF; keeps ndtri away from -inf.
_MIN_UNIFORM = 2.0**-53


class ScalarField(Enum):
    """Scalar field of a problem instance: real or complex vectors."""

    REAL = "real"
    COMPLEX = "complex"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.complex128 if self is ScalarField.COMPLEX else np.float64)

    def check(self, arr: np.ndarray, name: str) -> None:
        """Reject arrays from the other scalar field (no silent up/downcasts)."""
        is_complex = np.issubdtype(np.asarray(arr).dtype, np.complexfloating)
        if is_complex != (self is ScalarField.COMPLEX):
            raise ValueError(
                f"{name} is {'complex' if is_complex else 'real'}, expected the "
                f"{self.value} field"
            )


@dataclass(frozen=True)
class SeededRng:
    """Deterministic random stream keyed by ``(seed, stream_id)``.

    Backed by the Philox-4x64 counter-based generator with the 128-bit key
    ``[seed, stream_id]``, so distinct stream ids give statistically
    independent streams and the same key reproduces the exact bit sequence
    on any platform.  Gaussian variates are produced by applying the inverse
    normal CDF to Philox uniforms (see :func:`_normal`), which keeps golden
    values stable regardless of library-internal sampler changes.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= v <= _U64_MAX:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {v}")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=[self.seed, self.stream_id]))

    def with_stream(self, stream_id: int) -> "SeededRng":
        return SeededRng(self.seed, stream_id)


def _normal(gen: np.random.Generator, shape) -> np.ndarray:
    """Standard normal draws via inverse CDF on uniforms (fixed algorithm)."""
    u = np.maximum(gen.random(shape), _MIN_UNIFORM)
    return ndtri(u)


def _complex_normal(gen: np.random.Generator, shape) -> np.ndarray:
    """CN(0, 1) draws: variance 1/2 in each of the real and imaginary parts."""
    re = _normal(gen, shape)
    im = _normal(gen, shape)
    return (re + 1j * im) * np.sqrt(0.5)


@dataclass(frozen=True)
class SparseSignal:
    """A k-sparse ground-truth vector together with its support set."""

    values: np.ndarray
    support: np.ndarray
    n: int
    k: int
    field: ScalarField

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=self.field.dtype))
        object.__setattr__(self, "support", np.asarray(self.support, dtype=np.int64))
        if self.values.shape != (self.n,):
            raise ValueError(f"values must have shape ({self.n},)")
        if not 1 <= self.k <= self.n:
            raise ValueError(f"sparsity k={self.k} out of range for n={self.n}")
        if self.support.shape != (self.k,) or len(np.unique(self.support)) != self.k:
            raise ValueError("support must hold k distinct indices")
        if self.support.min() < 0 or self.support.max() >= self.n:
            raise ValueError("support indices out of range")
        nz = np.flatnonzero(self.values)
        if not np.array_equal(nz, np.sort(self.support)):
            raise ValueError("nonzero positions of values must equal the support")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True)
class MeasurementSet:
    """Sensing rows and amplitude data: the (A, psi) pair fed to the solver.

    ``psi`` may contain negative entries when additive noise is active; they
    are stored unmodified.
    """

    rows: np.ndarray
    psi: np.ndarray
    m: int
    n: int
    field: ScalarField

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", np.asarray(self.rows, dtype=self.field.dtype))
        object.__setattr__(self, "psi", np.asarray(self.psi, dtype=np.float64))
        if self.rows.shape != (self.m, self.n):
            raise ValueError(f"rows must have shape ({self.m}, {self.n})")
        if self.psi.shape != (self.m,):
            raise ValueError(f"psi must have shape ({self.m},)")
        if not np.all(np.isfinite(self.psi)):
            raise ValueError("psi entries must be finite")

    @cached_property
    def row_norms(self) -> np.ndarray:
        """Euclidean norms of the full sensing rows (cached)."""
        return np.linalg.norm(self.rows, axis=1)


class NoiseKind(Enum):
    NONE = "none"
    ADDITIVE_GAUSSIAN = "additive_gaussian"
    TARGET_SNR_DB = "target_snr_db"


@dataclass(frozen=True)
class NoiseSpec:
    """Additive amplitude-noise specification.

    ``TARGET_SNR_DB`` resolves to a concrete sigma from the clean
    measurements at measure time via :func:`snr_to_sigma`.
    """

    kind: NoiseKind = NoiseKind.NONE
    sigma: float = 0.0
    snr_db: float = 0.0

    def __post_init__(self) -> None:
        if self.kind is NoiseKind.ADDITIVE_GAUSSIAN and not self.sigma >= 0:
            raise ValueError("sigma must be >= 0")

    @classmethod
    def none(cls) -> "NoiseSpec":
        return cls()

    @classmethod
    def additive_gaussian(cls, sigma: float) -> "NoiseSpec":
        return cls(kind=NoiseKind.ADDITIVE_GAUSSIAN, sigma=float(sigma))

    @classmethod
    def target_snr_db(cls, snr_db: float) -> "NoiseSpec":
        return cls(kind=NoiseKind.TARGET_SNR_DB, snr_db=float(snr_db))


def _uniform_support(n: int, k: int, gen: np.random.Generator) -> np.ndarray:
    return np.sort(gen.permutation(n)[:k]).astype(np.int64)


def sample_gaussian_signal(n: int, k: int, field: ScalarField, rng: SeededRng) -> SparseSignal:
    """Draw a k-sparse signal with i.i.d. standard normal nonzero entries.

    The support is uniform among k-subsets of {0..n-1}; nonzeros are N(0, 1)
    in the real field and CN(0, 1) in the complex field.
    """
    if not 1 <= k <= n:
        raise ValueError(f"require 1 <= k <= n, got k={k}, n={n}")
    gen = rng.generator()
    support = _uniform_support(n, k, gen)
    values = np.zeros(n, dtype=field.dtype)
    if field is ScalarField.COMPLEX:
        values[support] = _complex_normal(gen, k)
    else:
        values[support] = _normal(gen, k)
    return SparseSignal(values=values, support=support, n=n, k=k, field=field)


def sample_flat_signal(n: int, k: int, field: ScalarField, rng: SeededRng) -> SparseSignal:
    """Draw a unit-norm k-sparse signal whose nonzeros all have magnitude 1/sqrt(k).

    Real nonzeros carry uniform random signs, complex ones uniform random
    phases.  This generator saturates the minimum-entry condition
    x_min^2 = ||x||^2 / k exactly.
    """
    if not 1 <= k <= n:
        raise ValueError(f"require 1 <= k <= n, got k={k}, n={n}")
    gen = rng.generator()
    support = _uniform_support(n, k, gen)
    values = np.zeros(n, dtype=field.dtype)
    mag = 1.0 / np.sqrt(k)
    if field is ScalarField.COMPLEX:
        theta = gen.random(k) * (2.0 * np.pi)
        values[support] = mag * np.exp(1j * theta)
    else:
        signs = np.where(gen.random(k) < 0.5, -1.0, 1.0)
        values[support] = mag * signs
    return SparseSignal(values=values, support=support, n=n, k=k, field=field)


def sample_measurement_matrix(m: int, n: int, field: ScalarField, rng: SeededRng) -> np.ndarray:
    """Draw an m-by-n sensing matrix with i.i.d. rows a_i ~ N(0, I_n).

    Complex field entries are CN(0, 1), i.e. variance 1/2 in each part, so
    E|a_ij|^2 = 1 in both fields.
    """
    if m < 1 or n < 1:
        raise ValueError(f"matrix dimensions must be positive, got m={m}, n={n}")
    gen = rng.generator()
    if field is ScalarField.COMPLEX:
        return _complex_normal(gen, (m, n))
    return _normal(gen, (m, n))


def _clean_amplitudes(x: SparseSignal, rows: np.ndarray) -> np.ndarray:
    """|<a_i, x>| for every row, via exactly rounded support sums.

    Each inner product is accumulated with math.fsum over the signal support,
    so the result is invariant under any joint permutation of matrix columns
    and signal coordinates (the summand multiset is unchanged).
    """
    if x.field is ScalarField.COMPLEX:
        # a_i^H x: the row entries enter conjugated.
        prods = np.conj(rows[:, x.support]) * x.values[x.support]
        out = np.fromiter(
            (abs(complex(fsum(row.real), fsum(row.imag))) for row in prods),
            dtype=np.float64,
            count=prods.shape[0],
        )
    else:
        prods = rows[:, x.support] * x.values[x.support]
        out = np.fromiter((abs(fsum(row)) for row in prods), dtype=np.float64, count=prods.shape[0])
    return out


def measure(
    x: SparseSignal,
    rows: np.ndarray,
    noise: NoiseSpec = NoiseSpec.none(),
    rng: Optional[SeededRng] = None,
) -> MeasurementSet:
    """Form amplitude data psi_i = |<a_i, x>| (+ eta_i under additive noise).

    Noisy amplitudes may be negative and are not clamped.  A target-SNR
    noise spec is resolved to a concrete sigma from the clean measurements.
    """
    x.field.check(rows, "rows")
    rows = np.asarray(rows, dtype=x.field.dtype)
    if rows.ndim != 2 or rows.shape[1] != x.n:
        raise ValueError(f"matrix shape {rows.shape} incompatible with signal length {x.n}")
    m = rows.shape[0]
    clean = _clean_amplitudes(x, rows)
    if noise.kind is NoiseKind.NONE:
        psi = clean
    else:
        if noise.kind is NoiseKind.TARGET_SNR_DB:
            sigma = snr_to_sigma(x, rows, noise.snr_db)
        else:
            sigma = noise.sigma
        if rng is None:
            raise ValueError("an rng is required when noise is active")
        psi = clean + sigma * _normal(rng.generator(), m)
    return MeasurementSet(rows=rows, psi=psi, m=m, n=x.n, field=x.field)


def snr_to_sigma(x: SparseSignal, rows: np.ndarray, snr_db: float) -> float:
    """Noise level sigma achieving SNR = 10 log10(sum_i |<a_i, x>|^2 / sigma^2)."""
    rows = np.asarray(rows, dtype=x.field.dtype)
    if rows.ndim != 2 or rows.shape[1] != x.n:
        raise ValueError(f"matrix shape {rows.shape} incompatible with signal length {x.n}")
    energy = float(np.sum(_clean_amplitudes(x, rows) ** 2))
    if energy == 0.0:
        raise ValueError("all measurements are zero; SNR is undefined")
    return float(np.sqrt(energy / 10.0 ** (snr_db / 10.0)))


def amplitude_loss(z: np.ndarray, meas: MeasurementSet) -> float:
    """Amplitude least-squares loss (1/2m) sum_i (psi_i - |<a_i, z>|)^2."""
    z = np.asarray(z)
    meas.field.check(z, "z")
    if z.shape != (meas.n,):
        raise ValueError(f"z must have shape ({meas.n},)")
    if meas.field is ScalarField.COMPLEX:
        mags = np.abs(meas.rows @ np.conj(z))
    else:
        mags = np.abs(meas.rows @ z)
    resid = meas.psi - mags
    return float(resid @ resid) / (2.0 * meas.m)


def dist(z: np.ndarray, x: np.ndarray, field: ScalarField) -> float:
    """Distance modulo the global phase ambiguity.

    Real field: min over s in {+1, -1} of ||z - s x||.  Complex field: the
    closed form sqrt(||z||^2 + ||x||^2 - 2 |<x, z>|), the minimum of
    ||z e^{j phi} - x|| over unimodular phases.
    """
    z = np.asarray(z)
    x = np.asarray(x)
    field.check(z, "z")
    field.check(x, "x")
    if z.shape != x.shape:
        raise ValueError(f"shape mismatch: {z.shape} vs {x.shape}")
    if field is ScalarField.COMPLEX:
        gap = np.linalg.norm(z) ** 2 + np.linalg.norm(x) ** 2 - 2.0 * abs(np.vdot(x, z))
        return float(np.sqrt(max(gap, 0.0)))
    return float(min(np.linalg.norm(z - x), np.linalg.norm(z + x)))


def relative_mse(z: np.ndarray, x: np.ndarray, field: ScalarField) -> float:
    """dist(z, x) / ||x||; a trial succeeds when this is below 1e-5."""
    nx = np.linalg.norm(x)
    if nx == 0.0:
        raise ValueError("relative error is undefined for a zero reference signal")
    return dist(z, x, field) / float(nx)
