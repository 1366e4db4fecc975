"""Evaluation reports: JSON + text summaries, CSV data files, SVG figures.

Every figure gets a sibling machine-readable data file; the SVGs are derived
artifacts only. Figure output is deterministic (fixed hash salt, no embedded
dates) so seeded reruns are byte-identical.
"""

from __future__ import annotations

import json
import os

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "respira"

import matplotlib.pyplot as plt
import numpy as np

from .detect import CalibrationResult, Confusion, RocCurve, ScoredCycle, round_reported

DURATION_BIN_SECONDS = 0.25
SCORE_BINS = 50

_SAVEFIG = {"format": "svg", "metadata": {"Date": None}}


def duration_histogram(durations, bin_seconds: float = DURATION_BIN_SECONDS):
    durations = np.asarray(list(durations), dtype=np.float64)
    top = max(bin_seconds, float(np.ceil(durations.max() / bin_seconds)) * bin_seconds)
    edges = np.arange(0.0, top + bin_seconds / 2, bin_seconds)
    counts, _ = np.histogram(durations, bins=edges)
    return edges, counts


def score_histogram(scores: list[ScoredCycle], bins: int = SCORE_BINS):
    values = np.array([s.score for s in scores])
    anom = np.array([bool(s.label) for s in scores])
    edges = np.linspace(values.min(), values.max(), bins + 1)
    normal_counts, _ = np.histogram(values[~anom], bins=edges)
    anom_counts, _ = np.histogram(values[anom], bins=edges)
    return edges, normal_counts, anom_counts


def write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def write_score_csv(path: str, scores: list[ScoredCycle]) -> None:
    rows = [
        (s.recording_id, s.cycle_index, "anomalous" if s.label else "normal", float(s.score))
        for s in scores
    ]
    write_csv(path, ["recording_id", "cycle_index", "label", "score"], rows)


# ---------------------------------------------------------------------------
# figures

def plot_duration_histogram(path: str, edges, counts) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(edges[:-1], counts, width=np.diff(edges), align="edge", color="tab:blue")
    ax.set_xlabel("cycle length [s]")
    ax.set_ylabel("observations")
    ax.set_title("Breathing cycle durations")
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)


def plot_score_distributions(path: str, edges, normal_counts, anom_counts, title: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    width = np.diff(edges)
    ax.bar(edges[:-1], normal_counts, width=width, align="edge", alpha=0.6, label="normal", color="tab:green")
    ax.bar(edges[:-1], anom_counts, width=width, align="edge", alpha=0.6, label="anomalous", color="tab:red")
    ax.set_xlabel("reconstruction MSE")
    ax.set_ylabel("cycles")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)


def plot_roc(path: str, roc: RocCurve, title: str) -> None:
    xs = [p[0] for p in roc.points]
    ys = [p[1] for p in roc.points]
    fig, ax = plt.subplots(figsize=(4.2, 4))
    ax.plot(xs, ys, color="tab:blue", label=f"AUC = {roc.auc:.3f}")
    ax.plot([0, 1], [0, 1], linestyle="--", color="gray", linewidth=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title(title)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)


def plot_threshold_sweep(path: str, thresholds, accuracies, chosen: float, title: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(thresholds, accuracies, color="tab:blue")
    ax.axvline(chosen, color="tab:red", linestyle="--", label=f"threshold = {chosen:.4g}")
    ax.set_xlabel("threshold")
    ax.set_ylabel("balanced accuracy")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)


# ---------------------------------------------------------------------------
# assembled run report

def threshold_entry(source: str, threshold: float, c: Confusion) -> dict:
    return {
        "source": source,
        "threshold": threshold,
        "tpr": c.tpr,
        "tnr": c.tnr,
        "balanced_accuracy": c.balanced_accuracy,
        "reported": {
            "tpr": round_reported(c.tpr),
            "tnr": round_reported(c.tnr),
            "balanced_accuracy": round_reported(c.balanced_accuracy),
        },
    }


def write_report_json(path: str, report: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def format_split_table(stats: dict) -> str:
    classes = ["crackles", "wheezes", "both", "normal", "total"]
    rows = [("Training", "train"), ("Validation", "validation"), ("Testing", "test"), ("Total", "total")]
    lines = ["{:<12}".format("") + "".join(f"{c.capitalize():>10}" for c in classes)]
    for title, key in rows:
        row = stats[key]
        lines.append(f"{title:<12}" + "".join(f"{row[c]:>10}" for c in classes))
    after = stats.get("train_after_exclusion")
    if after is not None:
        lines.append(
            f"(training keeps only its {after['total']} normal cycles; "
            f"{stats['train']['total'] - after['total']} anomalous train-side cycles are excluded)"
        )
    return "\n".join(lines)


def format_threshold_table(entries: list[dict]) -> str:
    lines = [f"{'threshold source':<24}{'threshold':>14}{'TPR':>8}{'TNR':>8}{'ACC':>8}"]
    for e in entries:
        r = e["reported"]
        lines.append(
            f"{e['source']:<24}{e['threshold']:>14.6g}"
            f"{r['tpr']:>8.2f}{r['tnr']:>8.2f}{r['balanced_accuracy']:>8.2f}"
        )
    return "\n".join(lines)
