"""Virtual-time simulation of K-asynchronous federated training.

Every client always has exactly one job in flight: it fetched the global
parameters at some server iteration and will deliver a gradient at a
sampled completion time. Each server iteration pops the K earliest
completions (ties broken by client id), updates the model, and hands the
new parameters back to those K clients only. Everyone else keeps working
on whatever parameters they fetched.

Staleness is stored as the raw gap ``current_iteration - fetch_iteration``,
so a gradient computed on the newest parameters has gap 0.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import model as mdl
from .errors import InternalError, NumericError, UsageError
from .metrics import IterationRecord, MetricsLog

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LatencyModel:
    kind: str = "shifted_exponential"
    shift: float = 0.0
    rate: float = 1.0
    mu: float = 0.0
    sigma: float = 1.0
    value: float = 1.0

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "shifted_exponential":
            if math.isinf(self.rate):
                return self.shift
            return self.shift + rng.exponential(1.0 / self.rate)
        if self.kind == "lognormal":
            return float(rng.lognormal(self.mu, self.sigma))
        if self.kind == "deterministic":
            return self.value
        raise UsageError(f"unknown latency model {self.kind!r}")

    @property
    def mean(self) -> float:
        if self.kind == "shifted_exponential":
            return self.shift + (0.0 if math.isinf(self.rate) else 1.0 / self.rate)
        if self.kind == "lognormal":
            return math.exp(self.mu + self.sigma ** 2 / 2)
        return self.value


@dataclass
class ClientProfile:
    id: int
    shard: object
    latency: LatencyModel
    batch_size: int

    def __post_init__(self):
        if len(self.shard) == 0:
            raise UsageError(f"client {self.id} has an empty shard")
        if self.batch_size > len(self.shard):
            raise UsageError(
                f"client {self.id}: batch size {self.batch_size} exceeds shard size {len(self.shard)}")


@dataclass
class GradientReport:
    client_id: int
    gradient: np.ndarray
    loss: float
    fetch_iteration: int
    staleness: int
    batch_size: int = 1


@dataclass
class _Job:
    fetch_iteration: int
    completion_time: float
    params: np.ndarray


class ServerAlgorithm:
    """Interface every aggregation rule implements.

    ``step`` consumes one iteration's reports, updates ``self.params`` in
    place of the old vector and returns a StepResult.
    """

    name = "base"

    def __init__(self, params):
        self.params = np.array(params, dtype=np.float64)
        self.stage = 1

    def wanted(self, K: int) -> int:
        """How many reports the next iteration should wait for."""
        return K

    def accepts(self, client_id: int) -> bool:
        return True

    def step(self, reports: Sequence[GradientReport]) -> "StepResult":
        raise NotImplementedError


@dataclass
class StepResult:
    eta: float
    weights: tuple
    stage: int = 1
    fallback: bool = False


class Simulator:
    """Event queue plus per-client jobs; the state behind one run.

    Construction broadcasts ``params`` (iteration 0) to every client.
    """

    def __init__(self, clients: Sequence[ClientProfile], params, model_spec: mdl.ModelSpec,
                 seed: int):
        if not clients:
            raise UsageError("need at least one client")
        self.clients = {c.id: c for c in clients}
        if len(self.clients) != len(clients):
            raise UsageError("client ids must be unique")
        self.model_spec = model_spec
        self.clock = 0.0
        self.iteration = 0
        self.queue: list = []
        self.jobs: dict = {}
        self.latency_rng = np.random.default_rng([seed, 1])
        self.batch_rng = np.random.default_rng([seed, 2])
        self.dispatch([c.id for c in clients], params, 0)

    @property
    def P(self) -> int:
        return len(self.clients)

    def dispatch(self, client_ids: Sequence[int], params, iteration: int):
        """Start a new job for each listed (idle) client on ``params``."""
        snapshot = np.array(params, dtype=np.float64)
        snapshot.setflags(write=False)
        for cid in client_ids:
            if cid in self.jobs:
                raise InternalError(f"client {cid} already has a job in flight")
            done = self.clock + self.clients[cid].latency.sample(self.latency_rng)
            self.jobs[cid] = _Job(iteration, done, snapshot)
            heapq.heappush(self.queue, (done, cid))

    def _pop(self):
        t, cid = heapq.heappop(self.queue)
        if t < self.clock:
            raise InternalError(f"event at {t} precedes clock {self.clock}")
        self.clock = t
        return cid, self.jobs.pop(cid)

    def _compute(self, cid: int, job: _Job) -> GradientReport:
        client = self.clients[cid]
        batch = mdl.sample_batch(client.shard, client.batch_size, self.batch_rng)
        loss, grad = mdl.loss_and_gradient(self.model_spec, job.params, batch)
        return GradientReport(cid, grad, loss, job.fetch_iteration,
                              self.iteration - job.fetch_iteration, client.batch_size)

    def collect_k(self, K: int, accept: Optional[Callable[[int], bool]] = None,
                  params=None) -> list:
        """Pop the first K completions and compute their gradients.

        With ``accept``, completions it rejects are thrown away and their
        clients immediately re-dispatched on ``params`` at the current
        iteration. Reporting clients are left idle for :meth:`dispatch`.
        """
        if not 1 <= K <= self.P:
            raise UsageError(f"K={K} must lie in [1, P={self.P}]")
        reports = []
        while len(reports) < K:
            if not self.queue:
                raise InternalError("event queue exhausted before K reports arrived")
            cid, job = self._pop()
            if accept is not None and not accept(cid):
                self.dispatch([cid], job.params if params is None else params, self.iteration)
                continue
            reports.append(self._compute(cid, job))
        return reports

    def in_flight_gaps(self) -> list:
        return [self.iteration - j.fetch_iteration for j in self.jobs.values()]


def simulate(sim: Simulator, server: ServerAlgorithm, K: int, iterations: int,
             evaluate: Optional[Callable[[np.ndarray], float]] = None,
             eval_every: int = 25) -> MetricsLog:
    """Drive ``iterations`` rounds of collect -> server step -> re-dispatch."""
    out = MetricsLog()
    for j in range(1, iterations + 1):
        k = server.wanted(K)
        try:
            reports = sim.collect_k(k, accept=server.accepts, params=server.params)
            res = server.step(reports)
        except NumericError as exc:
            if exc.iteration is not None:
                raise
            raise NumericError(exc.args[0].split(" layer=")[0], iteration=j,
                               layer=exc.layer) from exc
        if not np.all(np.isfinite(server.params)):
            raise NumericError("non-finite parameters after update", iteration=j)
        sim.iteration += 1
        sim.dispatch([r.client_id for r in reports], server.params, sim.iteration)
        acc = None
        if evaluate is not None and (j % eval_every == 0 or j == iterations):
            acc = evaluate(server.params)
        out.append(IterationRecord(
            iteration=j, vtime=sim.clock, eta=res.eta, stage=res.stage,
            client_ids=tuple(r.client_id for r in reports),
            gaps=tuple(r.staleness for r in reports),
            weights=tuple(float(w) for w in res.weights),
            sum_loss=float(sum(r.loss for r in reports)),
            fallback=res.fallback, test_acc=acc))
        if acc is not None:
            log.debug("iter %d acc %.4f eta %.4g stage %d", j, acc, res.eta, res.stage)
    return out


@dataclass
class World:
    spec: mdl.ModelSpec
    clients: list
    train: object
    test: object
    init_params: np.ndarray
    extras: dict = field(default_factory=dict)


def build_latencies(cfg, P: int, seed: int) -> list:
    if cfg.kind == "shifted_exponential":
        rng = np.random.default_rng([seed, 3])
        rates = np.exp(rng.uniform(np.log(cfg.rate_min), np.log(cfg.rate_max), size=P))
        return [LatencyModel("shifted_exponential", shift=cfg.shift, rate=float(r)) for r in rates]
    if cfg.kind == "lognormal":
        return [LatencyModel("lognormal", mu=cfg.mu, sigma=cfg.sigma)] * P
    return [LatencyModel("deterministic", value=cfg.values[i % len(cfg.values)]) for i in range(P)]


def build_world(config) -> World:
    """Datasets, shards, client profiles and w_0 for an ExperimentConfig."""
    from . import datagen

    ds = config.dataset
    if ds.kind == "synth_gaussian":
        train = datagen.synth_gaussian(ds.classes, ds.dim, ds.per_class, ds.separation, config.seed)
        test = datagen.synth_gaussian(ds.classes, ds.dim, ds.test_per_class, ds.separation,
                                      config.seed + 7919)
    else:
        train = datagen.load_idx(ds.train_images, ds.train_labels)
        test = datagen.load_idx(ds.test_images, ds.test_labels)
        classes = max(train.class_count, test.class_count)
        train.class_count = test.class_count = classes
    pc = config.partition
    shards = datagen.partition_non_iid(
        train, datagen.PartitionSpec(pc.P, pc.L_num, pc.D_min, pc.D_max, config.seed))
    spec = mdl.ModelSpec(config.model.kind, train.dim, train.class_count, config.model.hidden_dim)
    lat = build_latencies(config.latency, pc.P, config.seed)
    clients = [ClientProfile(i, shards[i], lat[i], config.batch_size) for i in range(pc.P)]
    w0 = mdl.init_params(spec, np.random.default_rng([config.seed, 4]))
    return World(spec, clients, train, test, w0)


def run(config, server: Optional[ServerAlgorithm] = None, world: Optional[World] = None) -> MetricsLog:
    """Execute one configured experiment; deterministic given ``config.seed``."""
    from .baselines import make_server

    world = world or build_world(config)
    if server is None:
        server = make_server(config.algorithm, world.init_params, P=config.partition.P, K=config.K)
    sim = Simulator(world.clients, server.params, world.spec, config.seed)

    def evaluate(params):
        return mdl.evaluate_accuracy(world.spec, params, world.test)

    out = simulate(sim, server, config.K, config.iterations, evaluate, config.eval_every)
    out.config = config.to_dict()
    out.seed = config.seed
    world.extras["final_params"] = server.params.copy()
    return out
