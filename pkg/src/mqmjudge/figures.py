"""Render report figures to files alongside the delimited outputs.

Every CLI report path can emit a matplotlib figure next to its CSV/JSON;
pass --no-figures to skip rendering. All functions return the written
path.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .analytics import ALIGNED, MISALIGNED, BudgetProfile, DistributionReport  # noqa: E402
from .attribution import AttributionResult  # noqa: E402
from .metaeval import MetaReport  # noqa: E402

_HUMAN_COLOR = "#4a7bbc"
_METRIC_COLOR = "#c65b4e"


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def render_distribution(report: DistributionReport, path) -> Path:
    """Side-by-side score histograms with the zero-rate gap annotated."""
    edges = np.asarray(report.bin_edges)
    centers = (edges[:-1] + edges[1:]) / 2
    width = np.diff(edges) * 0.42
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(centers - width / 2, report.human_density, width=width, label="human", color=_HUMAN_COLOR)
    ax.bar(centers + width / 2, report.metric_density, width=width, label="metric", color=_METRIC_COLOR)
    ax.set_xlabel("MQM score")
    ax.set_ylabel("fraction of segments")
    ax.set_title(
        f"score distributions (zero rate: human {report.human_zero_rate:.2f}, "
        f"metric {report.metric_zero_rate:.2f}, overestimation {report.overestimation_index:+.2f})"
    )
    ax.legend()
    return _save(fig, path)


def render_budget_profile(profile: BudgetProfile, path) -> Path:
    """Box plot of thinking tokens per difficulty bin, split by alignment."""
    fig, ax = plt.subplots(figsize=(8, 4))
    positions, stats, colors = [], [], []
    labels = []
    for idx, b in enumerate(profile.bins):
        for offset, (tag, color) in enumerate(
            ((ALIGNED, _HUMAN_COLOR), (MISALIGNED, _METRIC_COLOR))
        ):
            cell = profile.cells[(b.label, tag)]
            if cell.count == 0:
                continue
            positions.append(idx * 2.0 + offset * 0.7)
            colors.append(color)
            stats.append(
                {
                    "label": f"{b.label}/{tag}",
                    "whislo": cell.minimum,
                    "q1": cell.q1,
                    "med": cell.median,
                    "q3": cell.q3,
                    "whishi": cell.maximum,
                    "fliers": [],
                }
            )
        labels.append((idx * 2.0 + 0.35, b.label))
    if stats:
        artists = ax.bxp(stats, positions=positions, widths=0.6, showfliers=False, patch_artist=True)
        for patch, color in zip(artists["boxes"], colors):
            patch.set_facecolor(color)
            patch.set_alpha(0.6)
    ax.set_xticks([x for x, _ in labels])
    ax.set_xticklabels([lab for _, lab in labels])
    ax.set_xlabel("human-score difficulty bin")
    ax.set_ylabel("thinking tokens")
    ax.set_title(f"thinking budget by difficulty (tau = {profile.tau})")
    handles = [
        plt.Rectangle((0, 0), 1, 1, facecolor=_HUMAN_COLOR, alpha=0.6),
        plt.Rectangle((0, 0), 1, 1, facecolor=_METRIC_COLOR, alpha=0.6),
    ]
    ax.legend(handles, [ALIGNED, MISALIGNED])
    return _save(fig, path)


def render_typology(counts, path, top_n: int = 15) -> Path:
    """Horizontal bars of the most frequent discrepancy types."""
    items = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]
    fig, ax = plt.subplots(figsize=(7, max(2.5, 0.4 * len(items) + 1)))
    if items:
        labels = [f"{sev} {cat}" for (sev, cat), _ in items][::-1]
        values = [v for _, v in items][::-1]
        ax.barh(labels, values, color=_METRIC_COLOR)
    ax.set_xlabel("discrepancy count")
    ax.set_title("judge vs human discrepancies by error type")
    return _save(fig, path)


def render_attribution(results: dict[str, AttributionResult], path) -> Path:
    """Grouped bars of source/reference contributions per granularity."""
    fig, ax = plt.subplots(figsize=(6, 4))
    names = list(results)
    x = np.arange(len(names), dtype=float)
    phi_s = [float(results[n].phi_source) for n in names]
    phi_r = [float(results[n].phi_reference) for n in names]
    ax.bar(x - 0.2, phi_s, width=0.4, label="source", color=_HUMAN_COLOR)
    ax.bar(x + 0.2, phi_r, width=0.4, label="reference", color=_METRIC_COLOR)
    ax.axhline(0, color="black", linewidth=0.8)
    ax.set_xticks(x)
    ax.set_xticklabels(names)
    ax.set_ylabel("contribution to evaluation performance")
    ax.set_title("evaluation-material attribution")
    ax.legend()
    return _save(fig, path)


def render_meta_report(report: MetaReport, path) -> Path:
    """Per-language SPA and tie-calibrated accuracy bars."""
    langs = sorted(report.per_language)
    x = np.arange(len(langs), dtype=float)
    spa = [report.per_language[lp].spa * 100 for lp in langs]
    acc = [report.per_language[lp].acc_eq_star * 100 for lp in langs]
    fig, ax = plt.subplots(figsize=(6.5, 4))
    ax.bar(x - 0.2, spa, width=0.4, label="SPA (%)", color=_HUMAN_COLOR)
    ax.bar(x + 0.2, acc, width=0.4, label="Acc*_eq (%)", color=_METRIC_COLOR)
    ax.set_xticks(x)
    ax.set_xticklabels(langs)
    ax.set_ylim(0, 100)
    ax.set_title(f"meta-evaluation (avg all = {report.avg_all * 100:.1f})")
    ax.legend()
    return _save(fig, path)
