"""Plot emission for run reports. Uses the non-interactive Agg backend."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .engine import RunReport

METRICS = ("oscr", "closed_acc", "auc")


def metric_bars(reports: list[RunReport], out_path: str, title: str = ""):
    """Grouped per-task bars (mean across seeds, std as error bars)."""
    if not reports:
        raise ValueError("no reports to plot")
    n_tasks = len(reports[0].tasks)
    fig, ax = plt.subplots(figsize=(1.8 * n_tasks + 2, 4))
    width = 0.25
    xs = np.arange(n_tasks)
    for i, metric in enumerate(METRICS):
        vals = np.array([[getattr(r.tasks[t], metric) for r in reports]
                         for t in range(n_tasks)])
        ax.bar(xs + (i - 1) * width, vals.mean(axis=1), width,
               yerr=vals.std(axis=1), capsize=3, label=metric)
    ax.set_xticks(xs, [f"task {t + 1}" for t in range(n_tasks)])
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def oscr_curve(reports: list[RunReport], task_index: int, out_path: str,
               title: str = ""):
    """Correct-classification rate against false positive rate for one task,
    one line per seed."""
    if not reports:
        raise ValueError("no reports to plot")
    if not 1 <= task_index <= len(reports[0].tasks):
        raise ValueError(f"task_index {task_index} out of range")
    fig, ax = plt.subplots(figsize=(5, 4.5))
    for r in reports:
        curve = np.array(r.tasks[task_index - 1].curve)
        ax.plot(curve[:, 0], curve[:, 1], alpha=0.8, label=f"seed {r.seed}")
    ax.set_xlabel("false positive rate (unknowns)")
    ax.set_ylabel("correct classification rate")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.05)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def comparison_bars(groups: dict[str, list[RunReport]], out_path: str,
                    metric: str = "oscr", title: str = ""):
    """Average-metric bars across labeled report groups (methods, ablations)."""
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}")
    labels = list(groups.keys())
    if not labels:
        raise ValueError("no groups to plot")
    means, stds = [], []
    for label in labels:
        vals = np.array([r.averages[metric] for r in groups[label]])
        means.append(vals.mean())
        stds.append(vals.std())
    fig, ax = plt.subplots(figsize=(1.2 * len(labels) + 2, 4))
    ax.bar(np.arange(len(labels)), means, yerr=stds, capsize=3)
    ax.set_xticks(np.arange(len(labels)), labels, rotation=20, ha="right")
    ax.set_ylabel(f"mean {metric}")
    ax.set_ylim(0, 1.05)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_report_dir(report_dir: str, out_dir: str | None = None):
    """Render every report group found in a run output directory.

    Groups files by their prefix (report_, baseline_, ablate_*_) and
    emits bar and curve figures per group plus one comparison figure.
    """
    import json

    out_dir = report_dir if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    groups: dict[str, list[RunReport]] = {}
    for name in sorted(os.listdir(report_dir)):
        if not name.endswith(".json"):
            continue
        stem = name[:-5]
        if "_seed" not in stem:
            continue
        prefix = stem.rsplit("_seed", 1)[0]
        with open(os.path.join(report_dir, name)) as fh:
            payload = json.load(fh)
        if not isinstance(payload, dict) or "tasks" not in payload:
            continue
        groups.setdefault(prefix, []).append(RunReport.from_dict(payload))
    if not groups:
        raise ValueError(f"no report JSON files found under {report_dir}")
    written = []
    for prefix, reports in groups.items():
        bars = os.path.join(out_dir, f"{prefix}_metrics.png")
        metric_bars(reports, bars, title=prefix)
        written.append(bars)
        for t in range(1, len(reports[0].tasks) + 1):
            curve_path = os.path.join(out_dir, f"{prefix}_curves_task{t}.png")
            oscr_curve(reports, t, curve_path, title=f"{prefix} task {t}")
            written.append(curve_path)
    if len(groups) > 1:
        cmp_path = os.path.join(out_dir, "comparison_oscr.png")
        comparison_bars(groups, cmp_path, metric="oscr")
        written.append(cmp_path)
    return written
