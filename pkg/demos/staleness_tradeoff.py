"""Damping stale gradients costs you gradients.

Weighting each report by base ** -gap suppresses stale gradients, which
lowers the weighted staleness tau_ave. But the sharper the weighting, the
fewer reports carry a non-negligible weight (N_ave), and with label-skewed
clients fewer reports means a more biased update. This script sweeps the
base of a plain exponential-weight plus momentum aggregator (no similarity
filter) and prints both quantities.
"""

import math

from scipy.stats import spearmanr

from kasync import metrics
from kasync.config import ExperimentConfig
from kasync.simulator import run


def config(base, seed=0):
    return ExperimentConfig.from_dict({
        "seed": seed, "iterations": 200, "K": 20, "batch_size": 16, "eval_every": 50,
        "partition": {"P": 400, "L_num": 1},
        "model": {"kind": "mlp", "hidden_dim": 16},
        "algorithm": {"variant": "expmom", "eta0": 0.05, "base": base},
    })


if __name__ == "__main__":
    rows = []
    print(f"{'base':>6} {'N_ave':>7} {'tau_ave':>8} {'final acc':>10}")
    for base in [1.0, 1.1, math.e / 2, 1.6, 2.0, math.e, 5.0, 10.0]:
        log = run(config(base))
        rows.append((base, metrics.avg_aggregated_count(log, 10), metrics.avg_staleness(log)))
        print(f"{base:>6.3f} {rows[-1][1]:>7.2f} {rows[-1][2]:>8.2f} {log.final_accuracy():>10.4f}")
    _, n, tau = zip(*rows)
    rho = spearmanr(n, [-t for t in tau]).statistic
    print(f"rank correlation between gradients kept and staleness removed: {rho:.2f}")
