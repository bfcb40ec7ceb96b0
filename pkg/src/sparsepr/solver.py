"""Two-stage sparse phase retrieval solver.

Stage one estimates the signal support from the statistic
``(1/m) sum_i psi_i^2 |a_ij|^2`` and builds a restricted
orthogonality-promoting initialization with power iterations; stage two
refines it with hard-thresholded truncated amplitude-flow gradient steps

    z^{t+1} = H_k( z^t - (mu/m) sum_{i in I} (w_i - psi_i w_i/|w_i|) a_i ),
    I = { i : |w_i| >= psi_i / (1 + gamma) },   w_i = <a_i, z^t>.

A dense baseline variant runs the same machinery with the full support and
no thresholding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .model import (
    MeasurementSet,
    ScalarField,
    SeededRng,
    STREAM_POWER,
    dist,
    _complex_normal,
    _normal,
)

__all__ = [
    "Variant",
    "SolverConfig",
    "SupportEstimate",
    "TraceRecord",
    "SolverTrace",
    "SolverOutput",
    "NumericalDegeneracyError",
    "estimate_support",
    "select_complement_set",
    "power_init",
    "scale_and_embed",
    "truncation_set",
    "truncated_gradient",
    "hard_threshold",
    "sparta_iterate",
    "solve",
]

# Rows with |<a_i, z>| at or below this relative level are dropped from the
# truncation set and the gradient sum (the generalized gradient is undefined
# at <a_i, z> = 0).
EPS_GUARD = 1e-12


class NumericalDegeneracyError(RuntimeError):
    """Raised when the initialization matrix is identically zero."""


class Variant(Enum):
    SPARTA = "sparta"
    SPARTA0 = "sparta0"
    DENSE_TAF = "taf"

    @property
    def thresholds(self) -> bool:
        return self is not Variant.DENSE_TAF


@dataclass(frozen=True)
class SolverConfig:
    """All solver knobs.

    ``k_used`` is the sparsity handed to the solver; it may differ from the
    true sparsity.  Variant ``SPARTA0`` ignores it and substitutes
    ``ceil(sqrt(n))``; the dense baseline uses the full dimension.  A
    ``gamma`` of ``math.inf`` disables the truncation threshold.  Setting
    ``early_stop_tol`` to None reproduces the strict fixed-iteration-count
    behavior.
    """

    variant: Variant = Variant.SPARTA
    k_used: int = 1
    mu: float = 1.0
    gamma: float = 1.0
    trunc_fraction: float = 1.0 / 6.0
    power_iters: int = 100
    max_iters: int = 1000
    early_stop_tol: Optional[float] = 1e-12
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive (math.inf allowed)")
        if self.k_used < 1:
            raise ValueError("k_used must be at least 1")
        if not 0.0 < self.trunc_fraction <= 1.0:
            raise ValueError("trunc_fraction must lie in (0, 1]")
        if self.power_iters < 1:
            raise ValueError("power_iters must be at least 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.early_stop_tol is not None and not self.early_stop_tol > 0:
            raise ValueError("early_stop_tol must be positive or None")

    def effective_k(self, n: int) -> int:
        if self.variant is Variant.SPARTA0:
            return min(n, math.ceil(math.sqrt(n)))
        if self.variant is Variant.DENSE_TAF:
            return n
        return self.k_used

    def trunc_count(self, m: int) -> int:
        return min(m, max(1, math.ceil(self.trunc_fraction * m)))


@dataclass(frozen=True)
class SupportEstimate:
    """Top-k indices of the support statistic, with the full score vector."""

    indices: np.ndarray
    scores: np.ndarray


@dataclass(frozen=True)
class TraceRecord:
    """State of iterate z^t plus the update that produced z^{t+1}.

    ``trunc_count`` and ``rel_update`` are None on the final record, which
    has no successor iterate.  ``rel_mse`` is None when no ground truth was
    supplied.
    """

    iteration: int
    loss: float
    rel_update: Optional[float]
    trunc_count: Optional[int]
    rel_mse: Optional[float]


@dataclass(frozen=True)
class SolverTrace:
    records: list[TraceRecord]

    @property
    def iterations(self) -> int:
        """Number of gradient steps actually performed."""
        return len(self.records) - 1

    def rel_mse_series(self) -> list[float]:
        return [r.rel_mse for r in self.records if r.rel_mse is not None]


@dataclass(frozen=True)
class SolverOutput:
    estimate: np.ndarray
    init: np.ndarray
    support: SupportEstimate
    trace: SolverTrace


def _row_products(meas: MeasurementSet, z: np.ndarray, nz: Optional[np.ndarray] = None) -> np.ndarray:
    """w_i = <a_i, z> for every row (a_i^H z in the complex field).

    When ``nz`` holds the sorted nonzero positions of z, only those columns
    enter the product.
    """
    rows = meas.rows
    if meas.field is ScalarField.COMPLEX:
        if nz is not None:
            return np.conj(rows[:, nz] @ np.conj(z[nz]))
        return np.conj(rows @ np.conj(z))
    if nz is not None:
        return rows[:, nz] @ z[nz]
    return rows @ z


def _trunc_mask(meas: MeasurementSet, z: np.ndarray, w: np.ndarray, gamma: float) -> np.ndarray:
    aw = np.abs(w)
    thresh = meas.psi / (1.0 + gamma)  # gamma = inf collapses this to 0
    guard = aw > EPS_GUARD * meas.row_norms * np.linalg.norm(z)
    return (aw >= thresh) & guard


def estimate_support(meas: MeasurementSet, k_used: int) -> SupportEstimate:
    """Indices of the k largest values of (1/m) sum_i psi_i^2 |a_ij|^2.

    On-support coordinates separate from off-support ones by 2 x_j^2 in
    expectation.  Ties break toward the smaller index.
    """
    if not 1 <= k_used <= meas.n:
        raise ValueError(f"require 1 <= k_used <= n, got k_used={k_used}, n={meas.n}")
    if meas.field is ScalarField.COMPLEX:
        sq = meas.rows.real**2 + meas.rows.imag**2
    else:
        sq = meas.rows**2
    sq *= (meas.psi**2)[:, None]
    # Accumulate row by row: a single left-to-right reduction order shared by
    # all columns makes the scores exactly equivariant under column
    # permutations (blocked reductions are not).
    acc = np.zeros(meas.n)
    for row in sq:
        acc += row
    scores = acc / meas.m
    if k_used == meas.n:
        indices = np.arange(meas.n, dtype=np.int64)
    else:
        top = np.argsort(-scores, kind="stable")[:k_used]
        indices = np.sort(top).astype(np.int64)
    return SupportEstimate(indices=indices, scores=scores)


def select_complement_set(meas: MeasurementSet, support: SupportEstimate, count: int) -> np.ndarray:
    """Rows most aligned with the restricted signal: top ratios psi_i / ||a_{i,S}||.

    Rows vanishing on the support get ratio -inf and are never selected.
    Ties break toward the smaller index; indices return sorted.
    """
    idx = support.indices
    if len(idx) == 0:
        raise ValueError("support estimate is empty")
    if not 1 <= count <= meas.m:
        raise ValueError(f"require 1 <= count <= m, got count={count}, m={meas.m}")
    norms = np.linalg.norm(meas.rows[:, idx], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(norms > 0, meas.psi / np.where(norms > 0, norms, 1.0), -np.inf)
    top = np.argsort(-ratios, kind="stable")[:count]
    return np.sort(top).astype(np.int64)


def power_init(
    meas: MeasurementSet,
    support: SupportEstimate,
    complement_set: np.ndarray,
    power_iters: int,
    rng: SeededRng,
) -> np.ndarray:
    """Principal eigenvector of the restricted row-direction average.

    Runs ``power_iters`` rounds of v <- Y v / ||Y v|| where
    Y = (1/|C|) sum_{i in C} a_{i,S} a_{i,S}^H / ||a_{i,S}||^2, applied
    implicitly as two matrix-vector products per round.  The start vector is
    a random unit vector drawn from ``rng``.
    """
    if len(complement_set) == 0:
        raise ValueError("complement set is empty")
    if power_iters < 1:
        raise ValueError("power_iters must be at least 1")
    sub = meas.rows[np.ix_(complement_set, support.indices)]
    norms = np.linalg.norm(sub, axis=1)
    if not np.any(norms > 0):
        raise NumericalDegeneracyError("every selected row vanishes on the support")
    # Zero rows (never produced by select_complement_set) contribute nothing.
    scale = np.where(norms > 0, norms, 1.0)
    w_mat = sub / scale[:, None]
    if np.any(norms == 0):
        w_mat[norms == 0] = 0.0
    count = len(complement_set)
    gen = rng.generator()
    k = len(support.indices)
    if meas.field is ScalarField.COMPLEX:
        v = _complex_normal(gen, k)
    else:
        v = _normal(gen, k)
    v /= np.linalg.norm(v)
    complex_field = meas.field is ScalarField.COMPLEX
    for _ in range(power_iters):
        if complex_field:
            y = w_mat.T @ np.conj(w_mat @ np.conj(v)) / count
        else:
            y = w_mat.T @ (w_mat @ v) / count
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            raise NumericalDegeneracyError("power iteration collapsed to the zero vector")
        v = y / nrm
    return v


def scale_and_embed(restricted: np.ndarray, support: SupportEstimate, meas: MeasurementSet) -> np.ndarray:
    """Zero-pad the restricted vector and scale by the norm estimate sqrt(mean psi^2)."""
    idx = support.indices
    if len(restricted) != len(idx):
        raise ValueError("restricted vector length must match the support size")
    norm_est = float(np.sqrt(np.mean(meas.psi**2)))
    z0 = np.zeros(meas.n, dtype=meas.field.dtype)
    z0[idx] = norm_est * np.asarray(restricted, dtype=meas.field.dtype)
    return z0


def truncation_set(z: np.ndarray, meas: MeasurementSet, gamma: float) -> np.ndarray:
    """Indices i with |<a_i, z>| >= psi_i / (1 + gamma), minus the zero-guard."""
    if not gamma > 0:
        raise ValueError("gamma must be positive (math.inf allowed)")
    meas.field.check(z, "z")
    z = np.asarray(z, dtype=meas.field.dtype)
    if z.shape != (meas.n,):
        raise ValueError(f"z must have shape ({meas.n},)")
    w = _row_products(meas, z)
    return np.flatnonzero(_trunc_mask(meas, z, w, gamma)).astype(np.int64)


def truncated_gradient(z: np.ndarray, meas: MeasurementSet, gamma: float) -> np.ndarray:
    """Amplitude-loss gradient restricted to the trusted-sign rows.

    Returns (1/m) sum_{i in I} (w_i - psi_i w_i / |w_i|) a_i; rows caught by
    the zero-guard are skipped.  In the complex field this is the Wirtinger
    gradient whose real and imaginary parts match the coordinate-wise
    derivatives of the loss.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive (math.inf allowed)")
    meas.field.check(z, "z")
    z = np.asarray(z, dtype=meas.field.dtype)
    if z.shape != (meas.n,):
        raise ValueError(f"z must have shape ({meas.n},)")
    w = _row_products(meas, z)
    mask = _trunc_mask(meas, z, w, gamma)
    aw = np.abs(w)
    unit = np.where(mask, w / np.where(aw > 0, aw, 1.0), 0.0)
    resid = np.where(mask, w, 0.0) - meas.psi * unit
    return meas.rows.T @ resid / meas.m


def hard_threshold(u: np.ndarray, k: int) -> np.ndarray:
    """Best k-term approximation: keep the k largest-magnitude entries.

    Magnitude ties break toward the smaller index so the operator is fully
    deterministic.
    """
    u = np.asarray(u)
    n = len(u)
    if not 0 <= k <= n:
        raise ValueError(f"require 0 <= k <= n, got k={k}, n={n}")
    if k == n:
        return u.copy()
    out = np.zeros_like(u)
    if k > 0:
        keep = np.argsort(-np.abs(u), kind="stable")[:k]
        out[keep] = u[keep]
    return out


def sparta_iterate(z: np.ndarray, meas: MeasurementSet, config: SolverConfig) -> np.ndarray:
    """One refinement step: gradient move, then hard threshold (unless dense)."""
    u = np.asarray(z, dtype=meas.field.dtype) - config.mu * truncated_gradient(z, meas, config.gamma)
    if config.variant.thresholds:
        return hard_threshold(u, config.effective_k(meas.n))
    return u


def _rel_update(z_next: np.ndarray, z: np.ndarray) -> float:
    denom = np.linalg.norm(z)
    diff = np.linalg.norm(z_next - z)
    if denom == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return float(diff / denom)


def solve(
    meas: MeasurementSet,
    config: SolverConfig,
    ground_truth: Optional[np.ndarray] = None,
    rng: Optional[SeededRng] = None,
) -> SolverOutput:
    """Run the full pipeline: support, restricted init, thresholded refinement.

    ``rng`` seeds the power-iteration start vector; by default it derives
    from ``config.seed``.  When ``ground_truth`` is given, every trace record
    carries the relative error of the iterate.  The trace is always
    returned, whether or not the iterates converged.
    """
    n, m = meas.n, meas.m
    k_eff = config.effective_k(n)
    if config.variant is Variant.SPARTA and not 1 <= config.k_used <= n:
        raise ValueError(f"require 1 <= k_used <= n, got k_used={config.k_used}, n={n}")
    if rng is None:
        rng = SeededRng(config.seed, STREAM_POWER)

    support = estimate_support(meas, k_eff)
    complement = select_complement_set(meas, support, config.trunc_count(m))
    restricted = power_init(meas, support, complement, config.power_iters, rng)
    z0 = scale_and_embed(restricted, support, meas)

    threshold = config.variant.thresholds
    # The forward product can skip zero columns once iterates are sparse.
    use_sparse = threshold and k_eff * 4 <= n
    x = None
    if ground_truth is not None:
        meas.field.check(ground_truth, "ground_truth")
        x = np.asarray(ground_truth, dtype=meas.field.dtype)
        x_norm = float(np.linalg.norm(x))
    complex_field = meas.field is ScalarField.COMPLEX
    inv_thresh_scale = 1.0 + config.gamma

    def rel_err(z: np.ndarray) -> Optional[float]:
        if x is None:
            return None
        return dist(z, x, meas.field) / x_norm

    records: list[TraceRecord] = []
    z = z0
    nz: Optional[np.ndarray] = support.indices if use_sparse else None
    # Diverging baselines may overflow to inf; the trace records it honestly.
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(config.max_iters):
            w = _row_products(meas, z, nz)
            aw = np.abs(w)
            loss = float((meas.psi - aw) @ (meas.psi - aw)) / (2.0 * m)
            mask = (aw >= meas.psi / inv_thresh_scale) & (
                aw > EPS_GUARD * meas.row_norms * np.linalg.norm(z)
            )
            unit = np.where(mask, w / np.where(aw > 0, aw, 1.0), 0.0)
            resid = np.where(mask, w, 0.0) - meas.psi * unit
            u = z - (config.mu / m) * (meas.rows.T @ resid)
            if threshold:
                keep = np.argsort(-np.abs(u), kind="stable")[:k_eff]
                z_next = np.zeros_like(u)
                z_next[keep] = u[keep]
                nz = np.sort(keep) if use_sparse else None
            else:
                z_next = u
            upd = _rel_update(z_next, z)
            records.append(
                TraceRecord(
                    iteration=t,
                    loss=loss,
                    rel_update=upd,
                    trunc_count=int(np.count_nonzero(mask)),
                    rel_mse=rel_err(z),
                )
            )
            z = z_next
            if config.early_stop_tol is not None and upd < config.early_stop_tol:
                break

        w = _row_products(meas, z, nz)
        final_loss = float((meas.psi - np.abs(w)) @ (meas.psi - np.abs(w))) / (2.0 * m)
        records.append(
            TraceRecord(
                iteration=len(records),
                loss=final_loss,
                rel_update=None,
                trunc_count=None,
                rel_mse=rel_err(z),
            )
        )
    return SolverOutput(estimate=z, init=z0, support=support, trace=SolverTrace(records))
