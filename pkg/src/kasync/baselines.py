"""Comparison aggregation rules sharing the WKAFL server interface.

* ``kavg``   -- uniform 1/K average at a fixed step size.
* ``twafl``  -- batch-size times ``(e/2) ** -gap`` coefficients, *not*
  renormalised, so stale iterations take shorter steps.
* ``sasgd``  -- per-gradient step ``eta0 / (gap + 1)``, averaged over K.
* ``gsgm``   -- round-robin scheduling (each client contributes at most once
  per round) plus a global momentum refreshed at the end of each round.
* ``expmom`` -- staleness-exponential weights on momentum-augmented
  gradients with no similarity filter; used to study the tension between
  staleness damping and the number of gradients that matter.

For logging every rule reports its relative aggregation weights on the
simplex, whatever the absolute scale of its coefficients.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import UsageError
from .simulator import GradientReport, ServerAlgorithm, StepResult
from .wkafl import STALENESS_BASE, WkaflParams, WkaflServer, clip_to_bound, staleness_weights


def _stack(reports: Sequence[GradientReport]) -> np.ndarray:
    if not reports:
        raise UsageError("need at least one report")
    return np.asarray([r.gradient for r in reports], dtype=np.float64)


def kavg_step(params, reports, eta):
    G = _stack(reports)
    K = len(reports)
    return params - eta * G.mean(axis=0), np.full(K, 1.0 / K)


def twafl_coefficients(reports) -> np.ndarray:
    m = np.array([r.batch_size for r in reports], dtype=np.float64)
    gaps = np.array([r.staleness for r in reports], dtype=np.float64)
    return (m / m.sum()) * STALENESS_BASE ** (-gaps)


def twafl_step(params, reports, eta):
    G = _stack(reports)
    coef = twafl_coefficients(reports)
    m = np.array([r.batch_size for r in reports], dtype=np.float64)
    shares = m * staleness_weights([r.staleness for r in reports])
    return params - eta * (coef @ G), shares / shares.sum()


def sasgd_rates(reports, eta0) -> np.ndarray:
    # gap 0 counts as staleness 1 so the freshest gradient gets eta0
    return np.array([eta0 / (r.staleness + 1) for r in reports])


def sasgd_step(params, reports, eta0):
    G = _stack(reports)
    rates = sasgd_rates(reports, eta0)
    inv = 1.0 / np.array([r.staleness + 1 for r in reports], dtype=np.float64)
    return params - (rates @ G) / len(reports), inv / inv.sum()


class KavgServer(ServerAlgorithm):
    name = "kavg"

    def __init__(self, params, eta0):
        super().__init__(params)
        self.eta0 = eta0

    def step(self, reports):
        self.params, w = kavg_step(self.params, reports, self.eta0)
        return StepResult(self.eta0, tuple(w.tolist()))


class TwaflServer(KavgServer):
    name = "twafl"

    def step(self, reports):
        self.params, w = twafl_step(self.params, reports, self.eta0)
        return StepResult(self.eta0, tuple(w.tolist()))


class SasgdServer(KavgServer):
    name = "sasgd"

    def step(self, reports):
        self.params, w = sasgd_step(self.params, reports, self.eta0)
        return StepResult(float(sasgd_rates(reports, self.eta0).mean()), tuple(w.tolist()))


class GsgmServer(ServerAlgorithm):
    """Round-scheduled K-async SGD with a global momentum.

    A round ends once all P clients have contributed one gradient. Each
    iteration steps along ``mu_g * momentum + mean(gradients)``; at the end
    of a round the momentum becomes ``mu_g * momentum + mean`` of that
    round's per-iteration mean gradients.
    """

    name = "gsgm"

    def __init__(self, params, eta0, mu_g, P):
        super().__init__(params)
        self.eta0 = eta0
        self.mu_g = mu_g
        self.P = P
        self.used: set = set()
        self.momentum = np.zeros_like(self.params)
        self._round_sum = np.zeros_like(self.params)
        self._round_n = 0
        self.rounds = 0

    def wanted(self, K):
        return min(K, self.P - len(self.used))

    def accepts(self, client_id):
        return client_id not in self.used

    def step(self, reports):
        G = _stack(reports)
        for r in reports:
            if r.client_id in self.used:
                raise UsageError(f"client {r.client_id} already contributed this round")
            self.used.add(r.client_id)
        mean = G.mean(axis=0)
        self.params = self.params - self.eta0 * (self.mu_g * self.momentum + mean)
        self._round_sum += mean
        self._round_n += 1
        if len(self.used) >= self.P:
            self.momentum = self.mu_g * self.momentum + self._round_sum / self._round_n
            self._round_sum = np.zeros_like(self.params)
            self._round_n = 0
            self.used = set()
            self.rounds += 1
        K = len(reports)
        return StepResult(self.eta0, tuple([1.0 / K] * K))


class ExpMomentumServer(ServerAlgorithm):
    name = "expmom"

    def __init__(self, params, eta0, alpha, base, CB):
        super().__init__(params)
        self.eta0 = eta0
        self.alpha = alpha
        self.base = base
        self.CB = CB
        self.g_prev = np.zeros_like(self.params)

    def step(self, reports):
        vecs = [clip_to_bound(r.gradient + self.alpha * self.g_prev, self.CB) for r in reports]
        w = staleness_weights([r.staleness for r in reports], self.base)
        g = np.tensordot(w, np.asarray(vecs), axes=1)
        self.g_prev = g
        self.params = self.params - self.eta0 * g
        return StepResult(self.eta0, tuple(w.tolist()))


def make_server(algorithm, params, P: int, K: int) -> ServerAlgorithm:
    """Instantiate the server for an AlgorithmConfig (variant + params dict)."""
    v, p = algorithm.variant, dict(algorithm.params)
    if v == "wkafl":
        return WkaflServer(params, WkaflParams(K=K, **p))
    if v == "kavg":
        return KavgServer(params, p["eta0"])
    if v == "twafl":
        return TwaflServer(params, p["eta0"])
    if v == "sasgd":
        return SasgdServer(params, p["eta0"])
    if v == "gsgm":
        return GsgmServer(params, p["eta0"], p["mu_g"], P)
    if v == "expmom":
        return ExpMomentumServer(params, p["eta0"], p["alpha"], p.get("base", math.e / 2), p["CB"])
    raise UsageError(f"unknown algorithm variant {v!r}")
