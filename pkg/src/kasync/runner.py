"""Single runs and Cartesian sweeps that write their results to disk."""

from __future__ import annotations

import copy
import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import output
from .config import ALGORITHM_DEFAULTS, ExperimentConfig
from .errors import UsageError
from .simulator import run

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ("P", "K", "L_num", "variant", "seed", "final_accuracy", "tau_ave", "n_ave",
                 "stability", "run_dir")


def run_experiment(config: ExperimentConfig, out_dir) -> dict:
    """Run one experiment and write config.json, metrics.csv, aggregation.csv, summary.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    output.write_json(out_dir / "config.json", config.to_dict())
    mlog = run(config)
    output.write_metrics_csv(out_dir / "metrics.csv", mlog, config.mu)
    output.write_aggregation_csv(out_dir / "aggregation.csv", mlog)
    summary = output.summarize(mlog, config.mu, config.w_g, config.A_num)
    output.write_json(out_dir / "summary.json", summary)
    log.info("run %s: final accuracy %s", out_dir, summary["final_accuracy"])
    return summary


def _axis(axes: dict, key: str, fallback):
    if key not in axes:
        return [fallback]
    values = axes[key]
    if not isinstance(values, list) or not values:
        raise UsageError(f"sweep axis {key!r} must be a non-empty list")
    return values


def expand_sweep(sweep: dict) -> list:
    """Cartesian product of the declared axes as (cell_name, config_dict) pairs.

    Recognised axes: ``pk`` (list of [P, K]), ``L_num``, ``variants``, ``seeds``.
    ``algorithms`` optionally maps a variant to its hyperparameters;
    otherwise each variant inherits ``eta0`` from the base algorithm.
    """
    if not isinstance(sweep, dict) or not isinstance(sweep.get("base"), dict):
        raise UsageError("sweep config needs a 'base' experiment object")
    base = sweep["base"]
    axes = sweep.get("axes", {})
    unknown = set(axes) - {"pk", "L_num", "variants", "seeds"}
    if unknown:
        raise UsageError(f"unknown sweep axis {sorted(unknown)[0]!r}")
    part = base.get("partition", {})
    algo = base.get("algorithm", {})
    pks = _axis(axes, "pk", [part.get("P"), base.get("K")])
    lnums = _axis(axes, "L_num", part.get("L_num"))
    variants = _axis(axes, "variants", algo.get("variant"))
    seeds = _axis(axes, "seeds", base.get("seed"))
    if any(s is None for s in seeds):
        raise UsageError("every run needs an explicit seed")
    per_variant = sweep.get("algorithms", {})
    cells = []
    for (P, K), L, v, s in itertools.product(pks, lnums, variants, seeds):
        cfg = copy.deepcopy(base)
        cfg["seed"] = s
        cfg["K"] = K
        cfg.setdefault("partition", {}).update({"P": P, "L_num": L})
        params = {k: algo[k] for k in ALGORITHM_DEFAULTS.get(v, {}) if k in algo}
        if v in per_variant:
            params.update(per_variant[v])
        cfg["algorithm"] = {"variant": v, **params}
        cells.append((f"P{P}_K{K}_L{L}_{v}/seed_{s}", cfg))
    return cells


def _run_cell(args):
    rel, cfg_dict, out = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    summary = run_experiment(cfg, Path(out) / rel)
    return rel, cfg, summary


def run_sweep(sweep: dict, out_dir, parallel: int = 1) -> list:
    cells = expand_sweep(sweep)
    # validate everything before spending time on any run
    for _, cfg in cells:
        ExperimentConfig.from_dict(cfg)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(rel, cfg, str(out_dir)) for rel, cfg in cells]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]
    rows = []
    for rel, cfg, s in results:
        rows.append((cfg.partition.P, cfg.K, cfg.partition.L_num, cfg.algorithm.variant, cfg.seed,
                     s["final_accuracy"], s["tau_ave"], s["n_ave"], s["stability"], rel))
    output.write_table(out_dir / "sweep_summary.csv", SWEEP_COLUMNS, rows)
    return rows


def dump_partition(config: ExperimentConfig, out_dir) -> Path:
    """Write the label-skewed shards for inspection: partition.csv plus shards.npz."""
    from .simulator import build_world

    world = build_world(config)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, arrays = [], {}
    for c in world.clients:
        labels, counts = np.unique(c.shard.labels, return_counts=True)
        rows += [(c.id, int(lab), int(n)) for lab, n in zip(labels, counts)]
        arrays[f"features_{c.id}"] = c.shard.features
        arrays[f"labels_{c.id}"] = c.shard.labels
    output.write_table(out_dir / "partition.csv", ("client_id", "label", "count"), rows)
    np.savez_compressed(out_dir / "shards.npz", **arrays)
    output.write_json(out_dir / "config.json", config.to_dict())
    return out_dir / "partition.csv"

