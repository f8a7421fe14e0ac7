"""SVG figures (with CSV sidecars holding the plotted points)."""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import UsageError  # noqa: E402
from .output import read_table, write_table  # noqa: E402

plt.rcParams["svg.hashsalt"] = "kasync"


def _save(fig, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _bar(path: Path, counts: dict, xlabel: str, title: str):
    keys = sorted(counts)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(keys, [counts[k] for k in keys], color="tab:blue")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("frequency")
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, path.with_suffix(".svg"))
    write_table(path.with_suffix(".csv"), (xlabel.replace(" ", "_"), "frequency"),
                [(k, counts[k]) for k in keys])


def plot_run(run_dir, w_g: float = 0.1) -> list:
    """Accuracy curve, staleness histogram and predominated-gradient histogram."""
    run_dir = Path(run_dir)
    mfile, afile = run_dir / "metrics.csv", run_dir / "aggregation.csv"
    if not mfile.exists() or not afile.exists():
        raise UsageError(f"{run_dir} has no metrics.csv/aggregation.csv")
    out = run_dir / "plots"
    rows = [r for r in read_table(mfile) if r["test_acc"] != ""]
    pts = [(int(r["iter"]), float(r["test_acc"])) for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if pts:
        ax.plot(*zip(*pts), marker=".")
    ax.set_xlabel("iteration")
    ax.set_ylabel("test accuracy")
    fig.tight_layout()
    _save(fig, out / "accuracy.svg")
    write_table(out / "accuracy.csv", ("iter", "test_acc"), pts)

    agg = read_table(afile)
    _bar(out / "staleness_hist", Counter(int(r["gap"]) for r in agg), "staleness gap",
         "staleness of aggregated gradients")
    per_iter = defaultdict(int)
    for r in agg:
        per_iter[r["iter"]] += float(r["weight"]) > w_g
    _bar(out / "predominated_hist", Counter(per_iter.values()), "predominated count",
         f"gradients with weight > {w_g}")
    return sorted(out.glob("*.svg"))


def plot_sweep(sweep_dir) -> list:
    """One accuracy figure per (P, K, L_num) cell, one seed-averaged curve per variant."""
    sweep_dir = Path(sweep_dir)
    summary = sweep_dir / "sweep_summary.csv"
    if not summary.exists():
        raise UsageError(f"{sweep_dir} has no sweep_summary.csv")
    cells = defaultdict(lambda: defaultdict(list))
    for row in read_table(summary):
        key = (int(row["P"]), int(row["K"]), int(row["L_num"]))
        cells[key][row["variant"]].append(sweep_dir / row["run_dir"])
    written = []
    for (P, K, L), variants in sorted(cells.items()):
        name = f"accuracy_P{P}_K{K}_L{L}"
        fig, ax = plt.subplots(figsize=(5, 3.5))
        sidecar = []
        for variant, dirs in sorted(variants.items()):
            curves = defaultdict(list)
            for d in dirs:
                for r in read_table(d / "metrics.csv"):
                    if r["test_acc"] != "":
                        curves[int(r["iter"])].append(float(r["test_acc"]))
            xs = sorted(curves)
            ys = [sum(curves[x]) / len(curves[x]) for x in xs]
            ax.plot(xs, ys, label=variant)
            sidecar += [(variant, x, y) for x, y in zip(xs, ys)]
        ax.set_xlabel("iteration")
        ax.set_ylabel("test accuracy")
        ax.set_title(f"P/K = {P}/{K}, L_num = {L}")
        ax.legend()
        fig.tight_layout()
        _save(fig, sweep_dir / "plots" / f"{name}.svg")
        write_table(sweep_dir / "plots" / f"{name}.csv", ("variant", "iter", "test_acc"), sidecar)
        written.append(sweep_dir / "plots" / f"{name}.svg")
    return written


def emit_plots(path) -> list:
    path = Path(path)
    if not path.is_dir():
        raise UsageError(f"{path} is not a directory")
    if (path / "sweep_summary.csv").exists():
        return plot_sweep(path)
    if (path / "metrics.csv").exists():
        w_g = 0.1
        if (path / "config.json").exists():
            w_g = json.loads((path / "config.json").read_text()).get("w_g", w_g)
        return plot_run(path, w_g)
    raise UsageError(f"{path} contains neither a run nor a sweep")
