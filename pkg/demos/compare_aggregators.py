"""WKAFL against the comparison rules on one-label-per-client shards.

With a single label per client, every gradient pulls toward its own class,
and with K = 8 of P = 80 clients per update the stale reports are common.
The script trains each aggregation rule on the same five seeds and prints
the mean final accuracy and the training stability (std of log accuracy
over the last ten evaluations). It takes a minute or so.
"""

import numpy as np

from kasync import metrics
from kasync.config import ExperimentConfig, read_json, with_overrides
from kasync.simulator import run

VARIANTS = ["wkafl", "twafl", "sasgd", "gsgm", "kavg"]


def main(config_path="demos/configs/run.json", seeds=range(5)):
    base = read_json(config_path)
    print(f"{'variant':>8} {'final acc':>10} {'stability':>10} {'tau_ave':>8} {'N_ave':>6}")
    for variant in VARIANTS:
        acc, stab, tau, n = [], [], [], []
        for s in seeds:
            cfg = ExperimentConfig.from_dict(with_overrides(
                base, {"seed": s, "algorithm": {"variant": variant, "eta0": 0.05}}))
            log = run(cfg)
            acc.append(log.final_accuracy())
            stab.append(metrics.training_stability(log.accuracies(), 10))
            tau.append(metrics.avg_staleness(log))
            n.append(metrics.avg_aggregated_count(log, 10))
        print(f"{variant:>8} {np.mean(acc):>10.4f} {np.mean(stab):>10.4f} "
              f"{np.mean(tau):>8.2f} {np.mean(n):>6.2f}")


if __name__ == "__main__":
    main()
