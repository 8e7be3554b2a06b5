"""Command line entry points: run, ablate, plot, prepare-data."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import ABLATIONS, ConfigError, RunConfig, load_config
from .engine import RunReport, run_sequence, softmax_threshold_baseline
from .metrics import write_curve

# Relative output_dir values are resolved under this root when set.
OUTPUT_ROOT_ENV = "GRAPHCIL_OUTPUT_ROOT"


class _RuntimeFailure(Exception):
    """Wraps errors raised after validation succeeded (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract reserves 2 for
    runtime failures, so remap usage problems to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="graphcil",
                description="Class-incremental node classification with "
                            "open-set recognition")
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="train over the task stream and evaluate")
    run_p.add_argument("config", help="YAML run configuration")
    run_p.add_argument("--baseline", action="store_true",
                       help="also train the softmax-threshold reference model")

    abl_p = sub.add_parser("ablate",
                           help="run with one component disabled and compare "
                                "against the full method at equal seeds")
    abl_p.add_argument("config", help="YAML run configuration")
    abl_p.add_argument("--ablation", required=True, choices=list(ABLATIONS))

    plot_p = sub.add_parser("plot", help="render figures from report JSON files")
    plot_p.add_argument("report_dir")
    plot_p.add_argument("--out", default=None, help="figure output directory")

    prep = sub.add_parser("prepare-data", help="generate or convert a dataset")
    prep_sub = prep.add_subparsers(dest="mode", required=True)
    blobs = prep_sub.add_parser("blobs", help="synthetic homophilous blob graph")
    blobs.add_argument("out_dir")
    blobs.add_argument("--classes", type=int, required=True)
    blobs.add_argument("--nodes-per-class", type=int, required=True)
    blobs.add_argument("--feat-dim", type=int, required=True)
    blobs.add_argument("--class-sep", type=float, default=1.0)
    blobs.add_argument("--noise", type=float, default=1.0)
    blobs.add_argument("--intra-p", type=float, default=0.05)
    blobs.add_argument("--inter-p", type=float, default=0.002)
    blobs.add_argument("--seed", type=int, default=0)
    conv = prep_sub.add_parser("convert", help="convert an npz graph to text files")
    conv.add_argument("npz_path")
    conv.add_argument("out_dir")
    return p


def _resolve_output_dir(rc: RunConfig) -> str:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not os.path.isabs(rc.output_dir):
        return os.path.join(root, rc.output_dir)
    return rc.output_dir


def _write_report(report: RunReport, out_dir: str, prefix: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{prefix}_seed{report.seed}.json")
    with open(path, "w") as fh:
        fh.write(report.to_json())
    curve_dir = os.path.join(out_dir, "curves")
    os.makedirs(curve_dir, exist_ok=True)
    for task in report.tasks:
        write_curve(os.path.join(
            curve_dir, f"{prefix}_seed{report.seed}_task{task.task_index}.tsv"),
            task.curve)
    log_dir = os.path.join(out_dir, "logs")
    os.makedirs(log_dir, exist_ok=True)
    for t, rows in enumerate(report.loss_history, start=1):
        if not rows:
            continue
        log_path = os.path.join(log_dir, f"{prefix}_seed{report.seed}_task{t}.tsv")
        cols = list(rows[0].keys())
        with open(log_path, "w") as fh:
            fh.write("\t".join(cols) + "\n")
            for row in rows:
                fh.write("\t".join(f"{row[c]:.10g}" if isinstance(row[c], float)
                                   else str(row[c]) for c in cols) + "\n")
    return path


def _summarize(reports: list[RunReport], out_dir: str, prefix: str) -> dict:
    n_tasks = len(reports[0].tasks)
    per_task = []
    for t in range(n_tasks):
        entry = {"task_index": t + 1}
        for metric in ("oscr", "closed_acc", "auc"):
            vals = np.array([getattr(r.tasks[t], metric) for r in reports])
            entry[metric] = {"mean": float(vals.mean()), "std": float(vals.std())}
        per_task.append(entry)
    averages = {}
    for metric in ("oscr", "closed_acc", "auc"):
        vals = np.array([r.averages[metric] for r in reports])
        averages[metric] = {"mean": float(vals.mean()), "std": float(vals.std())}
    summary = {
        "method": reports[0].method,
        "seeds": [r.seed for r in reports],
        "per_task": per_task,
        "averages": averages,
    }
    with open(os.path.join(out_dir, f"{prefix}_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary


def _print_summary(summary: dict):
    print(f"method: {summary['method']}  seeds: {summary['seeds']}")
    for entry in summary["per_task"]:
        cells = "  ".join(
            f"{m}={entry[m]['mean']:.4f}+/-{entry[m]['std']:.4f}"
            for m in ("oscr", "closed_acc", "auc"))
        print(f"  task {entry['task_index']}: {cells}")
    avg = summary["averages"]
    cells = "  ".join(f"{m}={avg[m]['mean']:.4f}+/-{avg[m]['std']:.4f}"
                      for m in ("oscr", "closed_acc", "auc"))
    print(f"  average: {cells}")


def _run_seeds(graph, rc: RunConfig, out_dir: str, runner, prefix: str) -> list[RunReport]:
    reports = []
    for seed in rc.seeds:
        report = runner(graph, seed)
        path = _write_report(report, out_dir, prefix)
        print(f"seed {seed}: wrote {path}")
        reports.append(report)
    _print_summary(_summarize(reports, out_dir, prefix))
    return reports


def cmd_run(args) -> int:
    rc = load_config(args.config)
    out_dir = _resolve_output_dir(rc)
    graph = rc.load_dataset()
    for seed in rc.seeds:
        rc.engine_config(seed)

    def runner(g, seed):
        return run_sequence(g, rc.knowns_per_task, rc.unknowns_per_task,
                            rc.split_fractions, rc.engine_config(seed),
                            checkpoint_dir=os.path.join(out_dir, "checkpoints"))

    try:
        _run_seeds(graph, rc, out_dir, runner, "report")
        if args.baseline:
            def base_runner(g, seed):
                return softmax_threshold_baseline(
                    g, rc.knowns_per_task, rc.unknowns_per_task,
                    rc.split_fractions, rc.engine_config(seed))
            _run_seeds(graph, rc, out_dir, base_runner, "baseline")
    except Exception as exc:
        raise _RuntimeFailure(exc) from exc
    return 0


def cmd_ablate(args) -> int:
    rc = load_config(args.config)
    out_dir = _resolve_output_dir(rc)
    graph = rc.load_dataset()
    name = args.ablation
    for seed in rc.seeds:
        rc.engine_config(seed, ablation=name)
    safe = name.replace("-", "_")

    def full_runner(g, seed):
        return run_sequence(g, rc.knowns_per_task, rc.unknowns_per_task,
                            rc.split_fractions, rc.engine_config(seed))

    def ablated_runner(g, seed):
        return run_sequence(g, rc.knowns_per_task, rc.unknowns_per_task,
                            rc.split_fractions, rc.engine_config(seed, ablation=name))

    try:
        full = _run_seeds(graph, rc, out_dir, full_runner, "report")
        ablated = _run_seeds(graph, rc, out_dir, ablated_runner, f"ablate_{safe}")
        rows = []
        for f, a in zip(full, ablated):
            rows.append({
                "seed": f.seed,
                "full_oscr": f.averages["oscr"],
                "ablated_oscr": a.averages["oscr"],
                "delta": f.averages["oscr"] - a.averages["oscr"],
            })
        comparison = {
            "ablation": name,
            "rows": rows,
            "full_mean_oscr": float(np.mean([r["full_oscr"] for r in rows])),
            "ablated_mean_oscr": float(np.mean([r["ablated_oscr"] for r in rows])),
        }
        cmp_path = os.path.join(out_dir, f"ablate_{safe}_comparison.json")
        with open(cmp_path, "w") as fh:
            json.dump(comparison, fh, indent=2, sort_keys=True)
        print(f"comparison ({name}):")
        for row in rows:
            print(f"  seed {row['seed']}: full={row['full_oscr']:.4f} "
                  f"ablated={row['ablated_oscr']:.4f} delta={row['delta']:+.4f}")
        print(f"  mean: full={comparison['full_mean_oscr']:.4f} "
              f"ablated={comparison['ablated_mean_oscr']:.4f}")
    except Exception as exc:
        raise _RuntimeFailure(exc) from exc
    return 0


def cmd_plot(args) -> int:
    from .plots import render_report_dir

    written = render_report_dir(args.report_dir, args.out)
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_prepare_data(args) -> int:
    if args.mode == "blobs":
        from .datasets import write_blob_dataset

        g = write_blob_dataset(
            args.out_dir, num_classes=args.classes,
            nodes_per_class=args.nodes_per_class, feat_dim=args.feat_dim,
            class_sep=args.class_sep, noise=args.noise,
            intra_p=args.intra_p, inter_p=args.inter_p, seed=args.seed)
        print(f"wrote {args.out_dir}: {g.num_nodes} nodes, {g.num_edges} edges, "
              f"{g.classes().size} classes")
    else:
        from .datasets import convert_npz

        g = convert_npz(args.npz_path, args.out_dir)
        print(f"wrote {args.out_dir}: {g.num_nodes} nodes, {g.num_edges} edges, "
              f"{g.classes().size} classes")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": cmd_run,
        "ablate": cmd_ablate,
        "plot": cmd_plot,
        "prepare-data": cmd_prepare_data,
    }
    try:
        return handlers[args.command](args)
    except _RuntimeFailure as exc:
        print(f"runtime failure: {exc.__cause__}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - single CLI failure funnel
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
