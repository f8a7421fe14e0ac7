"""How stale are K-async gradients?

Every iteration hands fresh parameters to exactly K clients, so at most K
in-flight jobs can share any given fetch iteration. Once the initial
broadcast has aged, the average of (gap + 1) over all P jobs therefore
cannot drop below (K / 2P)(1 + floor(P/K)) floor(P/K), roughly P / 2K.

This script watches that average on a simulator with heterogeneous,
randomly drawn client speeds and prints it next to the bound.
"""

import math
from fractions import Fraction

import numpy as np

from kasync.datagen import synth_gaussian
from kasync.model import ModelSpec
from kasync.simulator import ClientProfile, LatencyModel, Simulator


def lower_bound(P, K):
    f = P // K
    return Fraction(K, 2 * P) * (1 + f) * f


def observe(P, K, extra=60, seed=0):
    rng = np.random.default_rng(seed)
    spec = ModelSpec("logistic", 2, 2)
    shard = synth_gaussian(2, 2, 2, 1.0, seed=0)
    rates = np.exp(rng.uniform(np.log(0.1), 0.0, size=P))
    clients = [ClientProfile(i, shard, LatencyModel("shifted_exponential", rate=float(r)), 1)
               for i, r in enumerate(rates)]
    sim = Simulator(clients, np.zeros(spec.num_params), spec, seed)
    means = []
    for _ in range(math.ceil(P / K) + extra):
        if sim.iteration >= math.ceil(P / K):
            means.append(np.mean([g + 1 for g in sim.in_flight_gaps()]))
        done = sim.collect_k(K)
        sim.iteration += 1
        sim.dispatch([r.client_id for r in done], np.zeros(spec.num_params), sim.iteration)
    return np.array(means)


if __name__ == "__main__":
    print(f"{'P':>5} {'K':>3} {'bound':>7} {'P/2K':>6} {'min mean':>9} {'avg mean':>9}")
    for P, K in [(4, 2), (40, 4), (100, 10), (1000, 10)]:
        m = observe(P, K)
        print(f"{P:>5} {K:>3} {float(lower_bound(P, K)):>7.2f} {P / (2 * K):>6.1f} "
              f"{m.min():>9.2f} {m.mean():>9.2f}")
