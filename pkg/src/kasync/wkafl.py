"""Two-stage weighted K-async aggregation with an adaptive learning rate.

One server iteration, in order:

1. add ``alpha`` times the previous estimated gradient to every report;
2. latch into stage two once the summed client loss is <= ``epsilon``;
3. clip every vector to norm ``CB``;
4. estimate the global gradient as a staleness-weighted average with
   weights proportional to ``(e/2) ** -gap``;
5. weight each vector by ``exp(beta * cos(v, estimate))``, dropping those
   whose cosine falls below ``sim_min``; in stage two vectors longer than
   ``B * |estimate|`` are first shrunk to that length;
6. shrink the step size by ``1 / (gamma * min_gap + 1)`` and descend.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import NumericError, UsageError
from .simulator import GradientReport, ServerAlgorithm, StepResult

STALENESS_BASE = math.e / 2


@dataclass(frozen=True)
class WkaflParams:
    eta0: float = 0.1
    alpha: float = 0.5
    beta: float = 2.0
    sim_min: float = 0.3
    gamma: float = 0.1
    B: float = 4.0
    CB: float = 10.0
    epsilon: Optional[float] = None
    K: int = 1

    def __post_init__(self):
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", 0.3 * self.K)
        if self.eta0 <= 0 or self.alpha < 0 or self.beta <= 0:
            raise UsageError("need eta0 > 0, alpha >= 0, beta > 0")
        if not 0 < self.gamma < 1:
            raise UsageError("gamma must lie in (0, 1)")
        if self.B <= 0 or self.CB <= 0 or self.epsilon <= 0:
            raise UsageError("B, CB and epsilon must be positive")


@dataclass
class ServerState:
    params: np.ndarray
    g_bar_prev: np.ndarray
    stage: int = 1
    iteration: int = 0
    last: Optional[StepResult] = field(default=None, compare=False)

    @classmethod
    def initial(cls, params) -> "ServerState":
        params = np.array(params, dtype=np.float64)
        return cls(params=params, g_bar_prev=np.zeros_like(params))


def apply_momentum(gradients: Sequence[np.ndarray], g_bar_prev: np.ndarray, alpha: float) -> list:
    return [np.asarray(g, dtype=np.float64) + alpha * g_bar_prev for g in gradients]


def clip_to_bound(g: np.ndarray, CB: float) -> np.ndarray:
    """Scale ``g`` by ``min(1, CB / |g|)``; the zero vector passes through."""
    if CB <= 0:
        raise UsageError("clip bound must be positive")
    g = np.asarray(g, dtype=np.float64)
    norm = np.linalg.norm(g)
    if norm <= CB:
        return g.copy()
    return g * (CB / norm)


def staleness_weights(gaps: Sequence[float], base: float = STALENESS_BASE) -> np.ndarray:
    """Normalised ``base ** -gap`` computed relative to the smallest gap.

    Subtracting the minimum before exponentiating keeps the freshest weight
    at exactly 1 before normalisation, so nothing underflows to a 0/0.
    """
    gaps = np.asarray(gaps, dtype=np.float64)
    if gaps.size == 0:
        raise UsageError("need at least one gap")
    if base == 1.0:
        return np.full(gaps.size, 1.0 / gaps.size)
    a = np.exp(-(gaps - gaps.min()) * math.log(base))
    return a / a.sum()


def estimate_unbiased(clipped: Sequence[np.ndarray], gaps: Sequence[float]):
    """Staleness-weighted average of the clipped vectors; returns (estimate, weights)."""
    w = staleness_weights(gaps)
    return np.tensordot(w, np.asarray(clipped, dtype=np.float64), axes=1), w


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def similarities(vectors: Sequence[np.ndarray], g_bar: np.ndarray) -> np.ndarray:
    # A zero estimate carries no direction: every vector counts as consistent.
    if not np.any(g_bar):
        return np.ones(len(vectors))
    return np.array([cosine(v, g_bar) for v in vectors])


def cap_norms(vectors: Sequence[np.ndarray], g_bar: np.ndarray, B: float, keep=None) -> list:
    """Shrink the selected vectors longer than ``B * |g_bar|`` to exactly that length."""
    cap = B * np.linalg.norm(g_bar)
    out = [np.asarray(v, dtype=np.float64) for v in vectors]
    for i, v in enumerate(out):
        if keep is not None and not keep[i]:
            continue
        n = np.linalg.norm(v)
        if n >= cap and n > 0:
            out[i] = v * (cap / n)
    return out


def sagrad(clipped: Sequence[np.ndarray], g_bar: np.ndarray, p: WkaflParams, stage: int):
    """Select and aggregate the vectors consistent with ``g_bar``.

    Returns ``(g_agg, weights)``. When no vector clears ``sim_min`` the
    weights are all zero and ``g_agg`` falls back to ``g_bar``.
    """
    vecs = [np.asarray(v, dtype=np.float64) for v in clipped]
    sims = similarities(vecs, g_bar)
    keep = sims >= p.sim_min
    raw = np.zeros(len(vecs))
    if keep.any():
        raw[keep] = np.exp(p.beta * (sims[keep] - sims[keep].max()))
    if stage == 2:
        vecs = cap_norms(vecs, g_bar, p.B, keep)
    total = raw.sum()
    if total == 0.0:
        return np.array(g_bar, dtype=np.float64), raw
    weights = raw / total
    g_agg = np.zeros_like(g_bar, dtype=np.float64)
    for w, v in zip(weights, vecs):
        if w:
            g_agg += w * v
    return g_agg, weights


def adapt_lr(eta0: float, min_gap: float, gamma: float) -> float:
    if min_gap < 0:
        raise UsageError("staleness gap cannot be negative")
    return eta0 / (min_gap * gamma + 1.0)


def stage_check(losses: Sequence[float], epsilon: float, stage: int) -> int:
    if stage not in (1, 2):
        raise UsageError(f"invalid stage {stage}")
    if stage == 2 or math.fsum(losses) <= epsilon:
        return 2
    return 1


def server_step(state: ServerState, reports: Sequence[GradientReport], p: WkaflParams) -> ServerState:
    """One full server iteration; returns the successor state."""
    if not reports:
        raise UsageError("server_step needs at least one report")
    tilde = apply_momentum([r.gradient for r in reports], state.g_bar_prev, p.alpha)
    stage = stage_check([r.loss for r in reports], p.epsilon, state.stage)
    clipped = [clip_to_bound(v, p.CB) for v in tilde]
    gaps = [r.staleness for r in reports]
    g_bar, est_w = estimate_unbiased(clipped, gaps)
    g_agg, weights = sagrad(clipped, g_bar, p, stage)
    fallback = not weights.any()
    eta = adapt_lr(p.eta0, min(gaps), p.gamma)
    new_params = state.params - eta * g_agg
    if not np.all(np.isfinite(new_params)):
        raise NumericError("non-finite update", iteration=state.iteration + 1)
    logged = est_w if fallback else weights
    return replace(state, params=new_params, g_bar_prev=g_bar, stage=stage,
                   iteration=state.iteration + 1,
                   last=StepResult(eta, tuple(logged.tolist()), stage, fallback))


class WkaflServer(ServerAlgorithm):
    name = "wkafl"

    def __init__(self, params, p: WkaflParams):
        super().__init__(params)
        self.p = p
        self.state = ServerState.initial(self.params)

    def step(self, reports):
        self.state = server_step(self.state, reports, self.p)
        self.params = self.state.params
        self.stage = self.state.stage
        return self.state.last
