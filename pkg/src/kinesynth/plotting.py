"""SVG figures and the metric summary table.

SVG output is made reproducible by fixing matplotlib's id hash salt and
dropping the date from the file metadata.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .data import CHANNELS, IMPAIRMENTS, SAMPLE_RATE, TASK_NAMES, TASKS  # noqa: E402

SVG_SALT = "kinesynth"
IMPAIRMENT_MARKERS = {"Control": "o", "Mild": "s", "ModerateSevere": "^"}
TABLE_ROWS = (("Precision", "precision"), ("Recall", "recall"), ("F1 Score", "f1"), ("Accuracy", "accuracy"))
CONDITION_TITLES = {"real_only": "Real only", "augmented": "Real + synthetic"}


def _save(fig, path) -> Path:
    path = Path(path)
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_confusion(counts, labels, path, title: str = "") -> Path:
    """Row-normalised heatmap with the percentage of each true class in every cell."""
    counts = np.asarray(counts, dtype=np.float64)
    keep = np.flatnonzero(counts.sum(axis=1) + counts.sum(axis=0) > 0)
    counts = counts[np.ix_(keep, keep)]
    labels = [labels[i] for i in keep]
    rows = counts.sum(axis=1, keepdims=True)
    pct = np.divide(100.0 * counts, rows, out=np.zeros_like(counts), where=rows > 0)
    n = len(labels)
    fig, ax = plt.subplots(figsize=(1.2 + 0.55 * n, 1.0 + 0.5 * n))
    im = ax.imshow(pct, cmap="Blues", vmin=0, vmax=100)
    for i in range(n):
        for j in range(n):
            ax.text(j, i, f"{pct[i, j]:.0f}", ha="center", va="center", fontsize=7,
                    color="white" if pct[i, j] > 60 else "black")
    ax.set_xticks(range(n), labels, rotation=90, fontsize=7)
    ax.set_yticks(range(n), labels, fontsize=7)
    ax.set_xlabel("Predicted")
    ax.set_ylabel("True")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, label="% of true class")
    fig.tight_layout()
    return _save(fig, path)


def plot_embedding(rows, path, title: str = "t-SNE") -> Path:
    """Colour by task, marker by impairment; synthetic points are drawn open."""
    tasks = [t for t in TASKS if any(r["task"] == t for r in rows)]
    colours = {t: plt.get_cmap("tab10")(i % 10) for i, t in enumerate(tasks)}
    fig, ax = plt.subplots(figsize=(7, 5.5))
    for task in tasks:
        for imp in IMPAIRMENTS:
            for prov in ("real", "synthetic"):
                pts = [(r["x"], r["y"]) for r in rows
                       if r["task"] == task and r["impairment"] == imp and r["provenance"] == prov]
                if not pts:
                    continue
                xy = np.array(pts)
                c = colours[task]
                ax.scatter(xy[:, 0], xy[:, 1], s=22, marker=IMPAIRMENT_MARKERS[imp],
                           facecolors=c if prov == "real" else "none", edgecolors=[c], linewidths=0.9)
    handles = [plt.Line2D([], [], ls="", marker="o", color=colours[t], label=f"{t} {TASK_NAMES[t]}")
               for t in tasks]
    handles += [plt.Line2D([], [], ls="", marker=IMPAIRMENT_MARKERS[i], color="grey", label=i) for i in IMPAIRMENTS]
    handles.append(plt.Line2D([], [], ls="", marker="o", markerfacecolor="none", color="grey",
                              label="open = synthetic"))
    ax.legend(handles=handles, fontsize=7, loc="center left", bbox_to_anchor=(1.0, 0.5))
    ax.set_title(title)
    ax.set_xticks([])
    ax.set_yticks([])
    fig.tight_layout()
    return _save(fig, path)


def plot_trajectories(panels, channels, path) -> Path:
    """Overlay of real and synthetic trajectories.

    ``panels`` maps a class label to ``(real, synthetic)`` stacks of shape
    (n, 9, T); one row per class and one column per channel index.
    """
    names = list(panels)
    fig, axes = plt.subplots(len(names), len(channels), figsize=(3.0 * len(channels), 2.2 * len(names)),
                             squeeze=False, sharex=True)
    for r, name in enumerate(names):
        real, syn = panels[name]
        for c, ch in enumerate(channels):
            ax = axes[r, c]
            t = np.arange(real.shape[-1] if len(real) else syn.shape[-1]) / SAMPLE_RATE
            for x in real:
                ax.plot(t, x[ch], color="tab:blue", lw=0.6, alpha=0.6)
            for x in syn:
                ax.plot(t, x[ch], color="tab:orange", lw=0.6, alpha=0.6, ls="--")
            if r == 0:
                ax.set_title(CHANNELS[ch], fontsize=8)
            if c == 0:
                ax.set_ylabel(name, fontsize=8)
            ax.tick_params(labelsize=7)
    for ax in axes[-1]:
        ax.set_xlabel("time (s)", fontsize=8)
    fig.legend(handles=[plt.Line2D([], [], color="tab:blue", label="real"),
                        plt.Line2D([], [], color="tab:orange", ls="--", label="synthetic")],
               loc="upper right", fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def metric_table(report: dict) -> list[list[str]]:
    """Rows Precision/Recall/F1 Score/Accuracy; one mean +/- std column per condition."""
    conds = [c for c in ("real_only", "augmented") if c in report["conditions"]]
    table = [["Metric", *(CONDITION_TITLES[c] for c in conds)]]
    for title, key in TABLE_ROWS:
        row = [title]
        for c in conds:
            mean = report["conditions"][c]["mean"][key]
            std = report["conditions"][c]["std"][key]
            row.append(f"{mean:.3f} ± {std:.3f}")
        table.append(row)
    return table


def write_metric_table(report: dict, directory) -> tuple[Path, Path]:
    table = metric_table(report)
    directory = Path(directory)
    csv_path = directory / "metrics_table.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(table)
    widths = [max(len(r[i]) for r in table) for i in range(len(table[0]))]
    lines = ["| " + " | ".join(cell.ljust(w) for cell, w in zip(row, widths)) + " |" for row in table]
    lines.insert(1, "|" + "|".join("-" * (w + 2) for w in widths) + "|")
    md_path = directory / "metrics_table.md"
    md_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return csv_path, md_path
