"""PNG figures for experiment reports.

The CSV tables written next to each figure remain the machine-readable
output; figures are a convenience view of the same numbers.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .models import TimeSeries
from .montecarlo import CoverageReport, EquivalenceReport, MergingReport, NegligibilityReport

__all__ = ["plot_report", "plot_coverage", "plot_merging", "plot_equivalence", "plot_negligibility", "plot_series"]


def _figure(width: float = 6.0, height: float = 4.0):
    fig = Figure(figsize=(width, height), dpi=100)
    FigureCanvasAgg(fig)
    return fig, fig.add_subplot(1, 1, 1)


def _save(fig: Figure, path: Path) -> Path:
    fig.tight_layout()
    # fixed metadata keeps repeated runs byte-identical
    fig.savefig(path, format="png", metadata={"Software": None})
    return path


def plot_coverage(reports: Sequence[CoverageReport], path: Path) -> Path:
    fig, ax = _figure()
    labels = [f"{r.variant}\nT={r.T}" for r in reports]
    cov = np.array([r.coverage for r in reports])
    err = 1.96 * np.array([r.binomial_se for r in reports])
    pos = np.arange(len(reports))
    ax.errorbar(pos, cov, yerr=err, fmt="o", capsize=4, label="empirical coverage")
    for i, r in enumerate(reports):
        ax.hlines(r.target, i - 0.3, i + 0.3, colors="k", linestyles="--", label="nominal" if i == 0 else None)
    ax.set_xticks(pos)
    ax.set_xticklabels(labels)
    ax.set_xlim(-0.6, len(reports) - 0.4)
    ax.set_ylabel("conditional coverage")
    ax.legend(loc="best")
    return _save(fig, path)


def plot_merging(report: MergingReport, path: Path) -> Path:
    fig, ax = _figure()
    T = np.array(report.T_grid, dtype=float)
    ax.loglog(T, report.column("d_bl"), "o-", label="d_BL(2IP, SPL)")
    ax.loglog(T, report.column("d_k_2ip"), "s--", label="d_K(2IP, plug-in), median")
    ax.loglog(T, report.column("d_k_spl"), "^--", label="d_K(SPL, plug-in), median")
    ax.set_xlabel("T")
    ax.set_ylabel("distance")
    ax.set_title(f"{report.model}: error-law distances")
    ax.legend()
    return _save(fig, path)


def plot_equivalence(report: EquivalenceReport, path: Path) -> Path:
    fig, ax = _figure()
    T = np.array(report.T_grid, dtype=float)
    ax.loglog(T, report.column("median_center_gap"), "o-", label="median |center gap|")
    ax.loglog(T, report.column("median_quantile_gap_upper"), "s--", label=f"median quantile gap, u={report.u_upper:g}")
    ref = report.rows[0]["median_center_gap"] * np.sqrt(T[0] / T)
    ax.loglog(T, ref, "k:", label="slope -1/2")
    ax.set_xlabel("T")
    ax.set_ylabel("STA vs SPL gap")
    ax.set_title(f"{report.model}: STA and SPL agreement")
    ax.legend()
    return _save(fig, path)


def plot_negligibility(report: NegligibilityReport, path: Path) -> Path:
    fig, ax = _figure()
    rows = [r for r in report.rows if r["t1"] != 1]
    d = np.array([r["offset"] for r in rows], dtype=float)
    med = np.array([r["median"] for r in rows])
    ax.semilogy(d, med, "o-", label="median sqrt(T) gap")
    ax.fill_between(d, [r["p10"] for r in rows], [r["p90"] for r in rows], alpha=0.25, label="10-90% band")
    if np.isfinite(report.log_beta) and med[0] > 0:
        ax.semilogy(d, med[0] * np.exp(report.log_beta * (d - d[0])), "k:", label="slope log(beta)")
    ax.set_xlabel("T - t1")
    ax.set_ylabel("sqrt(T) |truncation gap|")
    ax.set_title(f"T={report.T}, fitted slope {report.slope:.3f}")
    ax.legend()
    return _save(fig, path)


def plot_series(series: TimeSeries, path: Path) -> Path:
    fig, ax = _figure(8.0, 3.0)
    t = np.arange(series.origin, series.origin + len(series))
    ax.plot(t, series.values, lw=0.6)
    ax.set_xlabel("t")
    ax.set_ylabel("x")
    return _save(fig, path)


def plot_report(kind: str, reports: Sequence, path: Path) -> list[Path]:
    """Render ``reports`` of one experiment kind; several reports get numbered files."""
    path = Path(path)
    if kind == "coverage":
        return [plot_coverage(reports, path)]
    plotter = {"merging": plot_merging, "equivalence": plot_equivalence, "negligibility": plot_negligibility}[kind]
    if len(reports) == 1:
        return [plotter(reports[0], path)]
    return [plotter(r, path.with_name(f"{path.stem}_{i + 1}{path.suffix}")) for i, r in enumerate(reports)]
