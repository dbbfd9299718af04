"""Static figure emission for experiment reports.

Figures are SVG with a fixed hash salt and no timestamp metadata, so a
given report always renders byte-identical files.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "copmtl"

import matplotlib.pyplot as plt
import numpy as np

from ..errors import UsageError
from .experiments import ExperimentReport

_METRIC_KEYS = ("mse_left", "mse_right", "acc_left", "acc_right", "auc_left", "auc_right")


def slope_label(slope: float) -> str:
    return f"fitted slope: {slope:.4f}"


def _save(fig, out_dir: str, name: str) -> str:
    path = os.path.join(out_dir, name)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _cv_figures(report: ExperimentReport, out_dir: str) -> list[str]:
    methods = sorted({str(r["method"]) for r in report.records})
    paths = []
    fig, axes = plt.subplots(2, 3, figsize=(10, 6))
    for ax, key in zip(axes.ravel(), _METRIC_KEYS):
        data = [
            [float(r[key]) for r in report.records if r["method"] == method]
            for method in methods
        ]
        ax.boxplot(data, tick_labels=methods)
        ax.set_title(key)
        ax.grid(True, alpha=0.3)
    fig.suptitle("cross-validation metrics per method")
    fig.tight_layout()
    paths.append(_save(fig, out_dir, "cv_metrics.svg"))

    wins = {k: v for k, v in report.summary.items() if k.startswith("win_")}
    if wins:
        fig, ax = plt.subplots(figsize=(7, 4))
        names = [k[len("win_") :] for k in wins]
        ax.bar(names, [float(v) for v in wins.values()], color="#4878d0")
        total = float(report.summary.get("folds", 0)) * float(report.summary.get("repeats", 0))
        if total:
            ax.axhline(total / 2, color="gray", linestyle="--", linewidth=1)
        ax.set_ylabel("folds won by the copula model")
        ax.tick_params(axis="x", rotation=30)
        fig.tight_layout()
        paths.append(_save(fig, out_dir, "cv_win_counts.svg"))
    return paths


def _rate_figure(report: ExperimentReport, out_dir: str, err_key: str, name: str) -> list[str]:
    ns = sorted({int(r["n"]) for r in report.records})
    medians = []
    for n in ns:
        vals = [float(r[err_key]) for r in report.records if int(r["n"]) == n]
        medians.append(np.median(vals))
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.loglog(ns, medians, "o-", color="#4878d0")
    slope = report.summary.get("slope")
    if slope is not None:
        anchor = medians[0] * (np.asarray(ns, dtype=float) / ns[0]) ** float(slope)
        ax.loglog(ns, anchor, "--", color="gray", linewidth=1)
        ax.annotate(
            slope_label(float(slope)),
            xy=(0.05, 0.08),
            xycoords="axes fraction",
            fontsize=10,
        )
    ax.set_xlabel("sample size")
    ax.set_ylabel(f"median {err_key}")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    return [_save(fig, out_dir, name)]


def _efficiency_figures(report: ExperimentReport, out_dir: str) -> list[str]:
    grid_values = sorted({float(r["grid_value"]) for r in report.records})
    if len(grid_values) > 1:
        ratios = []
        for g in grid_values:
            rows = [r for r in report.records if float(r["grid_value"]) == g and r["converged"]]
            ratios.append(
                np.mean([r["sq_err_fes"] for r in rows]) / np.mean([r["sq_err_ols"] for r in rows])
            )
        fig, ax = plt.subplots(figsize=(6, 4.5))
        ax.plot(grid_values, ratios, "o-", color="#4878d0")
        ax.axhline(1.0, color="gray", linestyle="--", linewidth=1)
        ax.set_xlabel("cross-correlation knob")
        ax.set_ylabel("squared-error ratio (copula / empirical)")
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        return [_save(fig, out_dir, "efficiency_sweep.svg")]
    ols = [float(r["sq_err_ols"]) for r in report.records]
    fes = [float(r["sq_err_fes"]) for r in report.records]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.boxplot([ols, fes], tick_labels=["empirical", "copula"])
    ratio = report.summary.get("ratio")
    p_value = report.summary.get("p_one_sided")
    if ratio is not None and p_value is not None:
        ax.annotate(
            f"error ratio: {float(ratio):.3f}  (one-sided p = {float(p_value):.2e})",
            xy=(0.05, 0.92),
            xycoords="axes fraction",
            fontsize=10,
        )
    ax.set_ylabel("squared estimation error")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return [_save(fig, out_dir, "efficiency_errors.svg")]


def emit_plots(report: ExperimentReport, out_dir) -> list[str]:
    """Render the report's figures as SVG files; returns written paths.

    Deterministic: the same report renders bit-identical bytes.
    """
    if not report.records:
        raise UsageError("no records")
    out_dir = str(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    if report.experiment == "cv":
        return _cv_figures(report, out_dir)
    if report.experiment == "consistency":
        return _rate_figure(report, out_dir, "err_sigma1", "consistency_rate.svg")
    if report.experiment == "mle_equiv":
        return _rate_figure(report, out_dir, "distance", "mle_equiv_rate.svg")
    if report.experiment == "efficiency":
        return _efficiency_figures(report, out_dir)
    # generic fallback: boxplot every numeric column
    numeric = [
        c
        for c in report.columns
        if report.records and isinstance(report.records[0].get(c), float)
    ]
    if not numeric:
        raise UsageError(f"report {report.experiment!r} has no numeric columns to plot")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.boxplot(
        [[float(r[c]) for r in report.records] for c in numeric], tick_labels=numeric
    )
    ax.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    return [_save(fig, out_dir, f"{report.experiment}_columns.svg")]
