"""Render benchmark CSV files as figures.

Consumes the two CSV schemas emitted by the sparsepr CLI (sweep rows and
per-iteration traces) and draws success-rate curves, the sparsity frontier,
convergence traces, and error-versus-SNR lines.  Output is deterministic:
identical input CSVs yield byte-identical image files.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

# Deterministic SVG ids and selectable text in the output.
matplotlib.rcParams["svg.hashsalt"] = "sparsepr-figures"
matplotlib.rcParams["svg.fonttype"] = "none"

SWEEP_COLUMNS = (
    "variant,n,k_true,k_used,m,snr_db,trials,successes,success_rate,"
    "mean_rel_mse,median_rel_mse,mean_iters,mean_wall_ms"
).split(",")
TRACE_COLUMNS = "variant,seed,iter,rel_mse,loss,trunc_count,rel_update".split(",")


class SchemaError(ValueError):
    """Input CSV does not carry the columns the figure kind needs."""


class FigureKind(Enum):
    SUCCESS_VS_M = "SuccessVsM"
    SUCCESS_VS_K = "SuccessVsK"
    CONVERGENCE_TRACE = "ConvergenceTrace"
    MSE_VS_SNR = "MseVsSnr"

    @property
    def required_columns(self) -> list[str]:
        if self is FigureKind.CONVERGENCE_TRACE:
            return TRACE_COLUMNS
        return SWEEP_COLUMNS


@dataclass(frozen=True)
class FigureSpec:
    """What to draw: input CSVs, figure kind, and the output image path."""

    inputs: tuple[str, ...]
    kind: FigureKind
    output: str
    png: bool = False

    def __post_init__(self) -> None:
        if not self.inputs:
            raise ValueError("at least one input CSV is required")


def _read_rows(paths: Sequence[str], required: list[str]) -> list[dict]:
    rows: list[dict] = []
    for path in paths:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in required if c not in header]
            if missing:
                raise SchemaError(f"{path}: missing column {missing[0]!r}")
            rows.extend(reader)
    return rows


def _floats(rows: Iterable[dict], column: str) -> list[float]:
    return [float(r[column]) for r in rows]


def _variants(rows: list[dict]) -> list[str]:
    seen: list[str] = []
    for r in rows:
        if r["variant"] not in seen:
            seen.append(r["variant"])
    return seen


def _draw_sweep(ax, rows: list[dict], x_of, xlabel: str) -> None:
    for variant in _variants(rows):
        sub = [r for r in rows if r["variant"] == variant]
        pairs = sorted((x_of(r), float(r["success_rate"])) for r in sub)
        ax.plot([p[0] for p in pairs], [p[1] for p in pairs], marker="o", label=variant)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("empirical success rate")
    ax.set_ylim(-0.02, 1.02)


def _draw_trace(ax, rows: list[dict]) -> None:
    series: dict[tuple[str, str], list[tuple[int, float]]] = {}
    for r in rows:
        if r["rel_mse"] == "":
            continue
        series.setdefault((r["variant"], r["seed"]), []).append(
            (int(r["iter"]), float(r["rel_mse"]))
        )
    labeled: set[str] = set()
    for (variant, _seed), pts in series.items():
        pts.sort()
        label = variant if variant not in labeled else None
        labeled.add(variant)
        ax.semilogy([p[0] for p in pts], [p[1] for p in pts], label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel("relative error")


def _draw_snr(ax, rows: list[dict]) -> None:
    groups: dict[tuple[str, str], list[dict]] = {}
    for r in rows:
        groups.setdefault((r["variant"], r["m"]), []).append(r)
    many_m = len({m for (_v, m) in groups}) > 1
    for (variant, m), sub in groups.items():
        pairs = sorted((float(r["snr_db"]), float(r["mean_rel_mse"])) for r in sub)
        label = f"{variant} (m={m})" if many_m else variant
        ax.semilogy([p[0] for p in pairs], [p[1] for p in pairs], marker="o", label=label)
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("mean relative error")


def render(spec: FigureSpec):
    """Draw the figure and write it to ``spec.output``; returns the Figure.

    The input CSVs are validated against the schema the kind requires before
    any drawing happens; a missing column aborts with a :class:`SchemaError`
    naming it.
    """
    rows = _read_rows(spec.inputs, spec.kind.required_columns)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    if spec.kind is FigureKind.SUCCESS_VS_M:
        _draw_sweep(ax, rows, lambda r: int(r["m"]) / int(r["n"]), "m/n")
    elif spec.kind is FigureKind.SUCCESS_VS_K:
        _draw_sweep(ax, rows, lambda r: int(r["k_true"]), "sparsity k")
    elif spec.kind is FigureKind.CONVERGENCE_TRACE:
        _draw_trace(ax, rows)
    else:
        _draw_snr(ax, rows)
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    out = Path(spec.output)
    if spec.png or out.suffix.lower() == ".png":
        fig.savefig(out, format="png", dpi=120, metadata={"Software": None})
    else:
        fig.savefig(out, format="svg", metadata={"Date": None})
    return fig
