"""Experiment configuration: typed dataclasses plus validation from plain dicts.

Configs are JSON documents. Every validation failure raises ConfigError
whose ``path`` is the dotted field name, e.g. ``partition.L_num``.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigError

_REQUIRED = object()

VARIANTS = ("wkafl", "twafl", "sasgd", "gsgm", "kavg", "expmom")

# Per-variant hyperparameters and their defaults. ``None`` for epsilon
# means "0.3 * K", resolved once K is known.
ALGORITHM_DEFAULTS = {
    "wkafl": {"eta0": 0.1, "alpha": 0.5, "beta": 2.0, "sim_min": 0.3, "gamma": 0.1,
              "B": 4.0, "CB": 10.0, "epsilon": None},
    "twafl": {"eta0": 0.1},
    "sasgd": {"eta0": 0.1},
    "gsgm": {"eta0": 0.1, "mu_g": 0.9},
    "kavg": {"eta0": 0.1},
    "expmom": {"eta0": 0.1, "alpha": 0.5, "base": math.e / 2, "CB": 10.0},
}


def _get(d: dict, key: str, path: str, kind=float, default=_REQUIRED, check=None, why=""):
    full = f"{path}.{key}" if path else key
    if key not in d or d[key] is None:
        if default is _REQUIRED:
            raise ConfigError(full, "required field missing")
        return default
    value = d[key]
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(full, f"expected integer, got {value!r}")
    elif kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(full, f"expected number, got {value!r}")
        value = float(value)
    elif kind is str:
        if not isinstance(value, str):
            raise ConfigError(full, f"expected string, got {value!r}")
    if check is not None and not check(value):
        raise ConfigError(full, why or f"invalid value {value!r}")
    return value


def _section(d: dict, key: str) -> dict:
    sub = d.get(key)
    if not isinstance(sub, dict):
        raise ConfigError(key, "required section missing or not an object")
    return sub


@dataclass
class DatasetConfig:
    kind: str = "synth_gaussian"
    classes: int = 4
    dim: int = 10
    per_class: int = 500
    test_per_class: int = 250
    separation: float = 4.0
    train_images: Optional[str] = None
    train_labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None

    @classmethod
    def from_dict(cls, d: dict, path="dataset"):
        kind = _get(d, "kind", path, str, "synth_gaussian",
                    lambda v: v in ("synth_gaussian", "idx"), "must be synth_gaussian or idx")
        if kind == "idx":
            return cls(kind=kind, **{k: _get(d, k, path, str) for k in
                                     ("train_images", "train_labels", "test_images", "test_labels")})
        pos = lambda v: v >= 1  # noqa: E731
        return cls(
            kind=kind,
            classes=_get(d, "classes", path, int, 4, lambda v: v >= 2, "must be >= 2"),
            dim=_get(d, "dim", path, int, 10, pos, "must be >= 1"),
            per_class=_get(d, "per_class", path, int, 500, pos, "must be >= 1"),
            test_per_class=_get(d, "test_per_class", path, int, 250, pos, "must be >= 1"),
            separation=_get(d, "separation", path, float, 4.0, lambda v: v >= 0, "must be >= 0"),
        )


@dataclass
class PartitionConfig:
    P: int
    L_num: int
    D_min: int = 50
    D_max: int = 150

    @classmethod
    def from_dict(cls, d: dict, path="partition"):
        out = cls(
            P=_get(d, "P", path, int, check=lambda v: v >= 1, why="must be >= 1"),
            L_num=_get(d, "L_num", path, int, check=lambda v: v >= 1, why="must be >= 1"),
            D_min=_get(d, "D_min", path, int, 50, lambda v: v >= 1, "must be >= 1"),
            D_max=_get(d, "D_max", path, int, 150, lambda v: v >= 1, "must be >= 1"),
        )
        if out.D_min > out.D_max:
            raise ConfigError(f"{path}.D_max", "must be >= D_min")
        if out.D_min < out.L_num:
            raise ConfigError(f"{path}.D_min", "must be >= L_num")
        return out


@dataclass
class ModelConfig:
    kind: str = "logistic"
    hidden_dim: Optional[int] = None

    @classmethod
    def from_dict(cls, d: dict, path="model"):
        kind = _get(d, "kind", path, str, "logistic", lambda v: v in ("logistic", "mlp"),
                    "must be logistic or mlp")
        hidden = _get(d, "hidden_dim", path, int, None if kind == "logistic" else _REQUIRED,
                      lambda v: v >= 1, "must be >= 1")
        return cls(kind=kind, hidden_dim=hidden)


@dataclass
class LatencyConfig:
    """Client compute-time model.

    ``shifted_exponential``: shift + Exp(rate), with each client's rate drawn
    log-uniformly from [rate_min, rate_max]. ``lognormal``: LogNormal(mu,
    sigma) for every client. ``deterministic``: fixed per-client ``values``
    (cycled if shorter than P) or a single ``value``.
    """
    kind: str = "shifted_exponential"
    shift: float = 0.0
    rate_min: float = 0.1
    rate_max: float = 1.0
    mu: float = 0.0
    sigma: float = 1.0
    values: list = field(default_factory=lambda: [1.0])

    @classmethod
    def from_dict(cls, d: dict, path="latency"):
        kinds = ("shifted_exponential", "lognormal", "deterministic")
        kind = _get(d, "kind", path, str, "shifted_exponential", lambda v: v in kinds,
                    f"must be one of {kinds}")
        out = cls(kind=kind)
        if kind == "shifted_exponential":
            out.shift = _get(d, "shift", path, float, 0.0, lambda v: v >= 0, "must be >= 0")
            out.rate_min = _get(d, "rate_min", path, float, 0.1, lambda v: v > 0, "must be > 0")
            out.rate_max = _get(d, "rate_max", path, float, 1.0, lambda v: v > 0, "must be > 0")
            if out.rate_min > out.rate_max:
                raise ConfigError(f"{path}.rate_max", "must be >= rate_min")
        elif kind == "lognormal":
            out.mu = _get(d, "mu", path, float, 0.0)
            out.sigma = _get(d, "sigma", path, float, 1.0, lambda v: v >= 0, "must be >= 0")
        else:
            if "values" in d:
                vals = d["values"]
                if (not isinstance(vals, list) or not vals
                        or not all(isinstance(v, (int, float)) and v >= 0 for v in vals)):
                    raise ConfigError(f"{path}.values", "must be a non-empty list of numbers >= 0")
                out.values = [float(v) for v in vals]
            else:
                out.values = [_get(d, "value", path, float, 1.0, lambda v: v >= 0, "must be >= 0")]
        return out


@dataclass
class AlgorithmConfig:
    variant: str
    params: dict

    @classmethod
    def from_dict(cls, d: dict, K: int, path="algorithm"):
        variant = _get(d, "variant", path, str, check=lambda v: v in VARIANTS,
                       why=f"must be one of {VARIANTS}")
        defaults = ALGORITHM_DEFAULTS[variant]
        unknown = set(d) - set(defaults) - {"variant"}
        if unknown:
            raise ConfigError(f"{path}.{sorted(unknown)[0]}", f"not a {variant} hyperparameter")
        params = {}
        for key, default in defaults.items():
            params[key] = _get(d, key, path, float, default)
        if variant == "wkafl" and params["epsilon"] is None:
            params["epsilon"] = 0.3 * K
        _check_algorithm(variant, params, path)
        return cls(variant=variant, params=params)


def _check_algorithm(variant, p, path):
    rules = {
        "eta0": (lambda v: v >= 0, "must be >= 0"),
        "alpha": (lambda v: v >= 0, "must be >= 0"),
        "beta": (lambda v: v > 0, "must be > 0"),
        "sim_min": (lambda v: -1 <= v <= 1, "must lie in [-1, 1]"),
        "gamma": (lambda v: 0 < v < 1, "must lie in (0, 1)"),
        "B": (lambda v: v > 0, "must be > 0"),
        "CB": (lambda v: v > 0, "must be > 0"),
        "epsilon": (lambda v: v > 0, "must be > 0"),
        "mu_g": (lambda v: 0 <= v < 1, "must lie in [0, 1)"),
        "base": (lambda v: v >= 1, "must be >= 1"),
    }
    for key, value in p.items():
        ok, why = rules[key]
        if not ok(value):
            raise ConfigError(f"{path}.{key}", why)


@dataclass
class ExperimentConfig:
    seed: int
    iterations: int
    K: int
    batch_size: int
    dataset: DatasetConfig
    partition: PartitionConfig
    model: ModelConfig
    latency: LatencyConfig
    algorithm: AlgorithmConfig
    eval_every: int = 25
    mu: float = 10.0
    w_g: float = 0.1
    A_num: int = 10

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("", "config must be an object")
        seed = _get(d, "seed", "", int)
        K = _get(d, "K", "", int, check=lambda v: v >= 1, why="must be >= 1")
        partition = PartitionConfig.from_dict(_section(d, "partition"))
        if K > partition.P:
            raise ConfigError("K", f"K={K} exceeds client count P={partition.P}")
        batch = _get(d, "batch_size", "", int, 16, lambda v: v >= 1, "must be >= 1")
        if batch > partition.D_min:
            raise ConfigError("batch_size", "must not exceed partition.D_min")
        dataset = DatasetConfig.from_dict(d.get("dataset", {}))
        if dataset.kind == "synth_gaussian" and partition.L_num > dataset.classes:
            raise ConfigError("partition.L_num", "exceeds dataset.classes")
        return cls(
            seed=seed,
            iterations=_get(d, "iterations", "", int, check=lambda v: v >= 1, why="must be >= 1"),
            K=K,
            batch_size=batch,
            dataset=dataset,
            partition=partition,
            model=ModelConfig.from_dict(d.get("model", {})),
            latency=LatencyConfig.from_dict(d.get("latency", {})),
            algorithm=AlgorithmConfig.from_dict(_section(d, "algorithm"), K),
            eval_every=_get(d, "eval_every", "", int, 25, lambda v: v >= 1, "must be >= 1"),
            mu=_get(d, "mu", "", float, 10.0, lambda v: v > 0, "must be > 0"),
            w_g=_get(d, "w_g", "", float, 0.1, lambda v: 0 < v <= 1, "must lie in (0, 1]"),
            A_num=_get(d, "A_num", "", int, 10, lambda v: v >= 1, "must be >= 1"),
        )

    def to_dict(self) -> dict:
        out = asdict(self)
        algo = out.pop("algorithm")
        out["algorithm"] = {"variant": algo["variant"], **algo["params"]}
        return out


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(read_json(path))


def read_json(path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError("", f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"not valid JSON: {exc}") from None


def with_overrides(base: dict, changes: dict) -> dict:
    """Deep-copied config dict with dotted-key overrides, e.g. ``{"partition.P": 40}``."""
    out = copy.deepcopy(base)
    for dotted, value in changes.items():
        node = out
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return out
