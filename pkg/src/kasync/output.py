"""Serialisation of run results: CSV tables and JSON summaries.

Floats are written with 17 significant digits so every value round-trips
exactly; files are written to a temporary name and renamed into place.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

from . import metrics

METRICS_COLUMNS = ("iter", "vtime", "stage", "eta", "sum_loss", "tau_min",
                   "tau_ave_inst", "n_agg_inst", "test_acc")
AGGREGATION_COLUMNS = ("iter", "slot", "client_id", "gap", "weight", "fallback")


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (int, str)):
        return str(x)
    return format(float(x), ".17g")


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def metrics_rows(log: metrics.MetricsLog, mu: float):
    for r in log.records:
        yield (r.iteration, r.vtime, r.stage, r.eta, r.sum_loss, r.tau_min,
               metrics.weighted_staleness(r.weights, r.gaps),
               metrics.aggregated_count(r.weights, mu), r.test_acc)


def write_metrics_csv(path, log: metrics.MetricsLog, mu: float = 10.0):
    atomic_write(path, _csv_text(METRICS_COLUMNS, metrics_rows(log, mu)))


def write_aggregation_csv(path, log: metrics.MetricsLog):
    rows = ((r.iteration, slot, cid, gap, w, r.fallback)
            for r in log.records
            for slot, (cid, gap, w) in enumerate(zip(r.client_ids, r.gaps, r.weights)))
    atomic_write(path, _csv_text(AGGREGATION_COLUMNS, rows))


def write_table(path, header, rows):
    atomic_write(path, _csv_text(header, rows))


def read_table(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summarize(log: metrics.MetricsLog, mu: float = 10.0, w_g: float = 0.1, A_num: int = 10) -> dict:
    acc = log.accuracies()
    stability = metrics.training_stability(acc, A_num) if len(acc) >= A_num and min(acc) > 0 else None
    return {
        "iterations": len(log),
        "final_accuracy": acc[-1] if acc else None,
        "tau_ave": metrics.avg_staleness(log) if len(log) else None,
        "n_ave": metrics.avg_aggregated_count(log, mu) if len(log) else None,
        "stability": stability,
        "predominated_histogram": {str(k): v for k, v in metrics.predominated_histogram(log, w_g).items()},
        "fallback_iterations": sum(1 for r in log.records if r.fallback),
        "stage_two_from": next((r.iteration for r in log.records if r.stage == 2), None),
        "seed": log.seed,
        "config": log.config,
    }


def write_json(path, obj):
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")
