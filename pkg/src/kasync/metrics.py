"""Per-iteration metric records and the reducers computed over them."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import UsageError


@dataclass
class IterationRecord:
    iteration: int
    vtime: float
    eta: float
    stage: int
    client_ids: tuple
    gaps: tuple
    weights: tuple
    sum_loss: float
    fallback: bool = False
    test_acc: Optional[float] = None

    @property
    def tau_min(self) -> int:
        return min(self.gaps)


@dataclass
class MetricsLog:
    records: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seed: Optional[int] = None

    def __len__(self):
        return len(self.records)

    def append(self, rec: IterationRecord):
        self.records.append(rec)

    def accuracies(self) -> list:
        return [r.test_acc for r in self.records if r.test_acc is not None]

    def final_accuracy(self) -> Optional[float]:
        acc = self.accuracies()
        return acc[-1] if acc else None


def weighted_staleness(weights: Sequence[float], gaps: Sequence[int]) -> float:
    return float(np.dot(weights, gaps))


def aggregated_count(weights: Sequence[float], mu: float) -> int:
    """Number of weights at least ``max(weights) / mu``."""
    if mu <= 0:
        raise UsageError("mu must be positive")
    w = np.asarray(weights, dtype=np.float64)
    return int(np.count_nonzero(w >= w.max() / mu))


def _require_records(log: MetricsLog):
    if not log.records:
        raise UsageError("metrics need at least one iteration")


def avg_staleness(log: MetricsLog) -> float:
    """Mean over iterations of the weight-averaged staleness gap."""
    _require_records(log)
    return float(np.mean([weighted_staleness(r.weights, r.gaps) for r in log.records]))


def avg_aggregated_count(log: MetricsLog, mu: float = 10.0) -> float:
    """Mean number of non-negligible weights (``p >= p_max / mu``) per iteration."""
    _require_records(log)
    return float(np.mean([aggregated_count(r.weights, mu) for r in log.records]))


def predominated_histogram(log: MetricsLog, w_g: float = 0.1) -> dict:
    """Frequency table of how many weights exceed ``w_g`` per iteration."""
    if not 0 < w_g <= 1:
        raise UsageError("w_g must lie in (0, 1]")
    counts = Counter(int(np.count_nonzero(np.asarray(r.weights) > w_g)) for r in log.records)
    return dict(sorted(counts.items()))


def training_stability(accuracies: Sequence[float], A_num: int = 10) -> float:
    """Population std of ln(accuracy) over the last ``A_num`` evaluations."""
    if A_num < 1:
        raise UsageError("A_num must be >= 1")
    if len(accuracies) < A_num:
        raise UsageError(f"need {A_num} accuracy values, got {len(accuracies)}")
    tail = list(accuracies)[-A_num:]
    if min(tail) <= 0:
        raise UsageError("accuracy must be positive to take its logarithm")
    return float(np.std([math.log(a) for a in tail]))
