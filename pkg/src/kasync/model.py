"""Small differentiable classifiers with hand-written gradients.

Two architectures are supported, both trained with mean softmax
cross-entropy:

* ``logistic`` -- multinomial logistic regression. Parameter layout is the
  row-major ``(C, d)`` weight matrix followed by the ``C`` biases.
* ``mlp`` -- one ReLU hidden layer. Layout is ``W1 (h, d)``, ``b1 (h)``,
  ``W2 (C, h)``, ``b2 (C)`` concatenated.

Parameters always travel as flat float64 vectors so the server side can
treat them as plain arrays.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, NumericError, UsageError

KINDS = ("logistic", "mlp")


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_dim: int
    num_classes: int
    hidden_dim: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError("model.kind", f"unknown model kind {self.kind!r}")
        if self.input_dim < 1:
            raise ConfigError("model.input_dim", "must be positive")
        if self.num_classes < 2:
            raise ConfigError("model.num_classes", "must be >= 2")
        if self.kind == "mlp" and (self.hidden_dim is None or self.hidden_dim < 1):
            raise ConfigError("model.hidden_dim", "mlp needs a positive hidden_dim")

    @property
    def num_params(self) -> int:
        d, c = self.input_dim, self.num_classes
        if self.kind == "logistic":
            return c * d + c
        h = self.hidden_dim
        return h * d + h + c * h + c


@dataclass
class MiniBatch:
    features: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.labels)


def _unpack(spec: ModelSpec, params: np.ndarray):
    d, c = spec.input_dim, spec.num_classes
    if spec.kind == "logistic":
        W = params[: c * d].reshape(c, d)
        b = params[c * d:]
        return W, b
    h = spec.hidden_dim
    o = 0
    W1 = params[o:o + h * d].reshape(h, d)
    o += h * d
    b1 = params[o:o + h]
    o += h
    W2 = params[o:o + c * h].reshape(c, h)
    o += c * h
    b2 = params[o:o + c]
    return W1, b1, W2, b2


def _check_inputs(spec: ModelSpec, params, batch: MiniBatch):
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1 or params.size != spec.num_params:
        raise ConfigError(
            "params", f"expected {spec.num_params} parameters, got {params.size}")
    X = np.asarray(batch.features, dtype=np.float64)
    y = np.asarray(batch.labels)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise ConfigError(
            "batch.features", f"expected (n, {spec.input_dim}), got {X.shape}")
    if y.shape != (X.shape[0],) or X.shape[0] < 1:
        raise ConfigError("batch.labels", "need one label per row and n >= 1")
    if y.min() < 0 or y.max() >= spec.num_classes:
        raise ConfigError("batch.labels", f"labels must lie in [0, {spec.num_classes})")
    return params, X, y.astype(np.intp)


def _finite(arr, layer):
    if not np.all(np.isfinite(arr)):
        raise NumericError("non-finite values", layer=layer)


def _quiet(fn):
    # Overflow is detected explicitly and reported as NumericError, so the
    # floating-point warnings numpy would print on the way are redundant.
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        with np.errstate(over="ignore", invalid="ignore"):
            return fn(*args, **kwargs)
    return wrapper


@_quiet
def _scores(spec, params, X, check=True):
    """Forward pass; returns (logits, cache)."""
    if spec.kind == "logistic":
        W, b = _unpack(spec, params)
        z = X @ W.T + b
        if check:
            _finite(z, "output")
        return z, None
    W1, b1, W2, b2 = _unpack(spec, params)
    pre = X @ W1.T + b1
    if check:
        _finite(pre, "hidden")
    act = np.maximum(pre, 0.0)
    z = act @ W2.T + b2
    if check:
        _finite(z, "output")
    return z, (pre, act)


def _xent(z, y):
    zmax = z.max(axis=1, keepdims=True)
    shifted = z - zmax
    lse = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(lse - shifted[np.arange(len(y)), y])), shifted, lse


def loss(spec: ModelSpec, params, batch: MiniBatch) -> float:
    """Mean cross-entropy of ``batch`` under ``params``."""
    params, X, y = _check_inputs(spec, params, batch)
    z, _ = _scores(spec, params, X)
    value, _, _ = _xent(z, y)
    return value


@_quiet
def loss_and_gradient(spec: ModelSpec, params, batch: MiniBatch):
    """Mean cross-entropy and its exact gradient with respect to ``params``.

    Raises ConfigError on shape mismatches and NumericError (naming the
    layer) if any intermediate becomes non-finite.
    """
    params, X, y = _check_inputs(spec, params, batch)
    n = X.shape[0]
    z, cache = _scores(spec, params, X)
    value, shifted, lse = _xent(z, y)
    if not np.isfinite(value):
        raise NumericError("non-finite loss", layer="loss")
    dz = np.exp(shifted - lse[:, None])
    dz[np.arange(n), y] -= 1.0
    dz /= n

    if spec.kind == "logistic":
        grad = np.concatenate([(dz.T @ X).ravel(), dz.sum(axis=0)])
    else:
        pre, act = cache
        _, _, W2, _ = _unpack(spec, params)
        dW2 = dz.T @ act
        db2 = dz.sum(axis=0)
        dpre = (dz @ W2) * (pre > 0)
        dW1 = dpre.T @ X
        db1 = dpre.sum(axis=0)
        grad = np.concatenate([dW1.ravel(), db1, dW2.ravel(), db2])
    _finite(grad, "gradient")
    return value, grad


def finite_diff_gradient(spec: ModelSpec, params, batch: MiniBatch, h: float = 1e-5,
                         loss_fn: Optional[Callable[[np.ndarray], float]] = None):
    """Central-difference gradient oracle.

    The step for coordinate k is ``h * max(1, |theta_k|)``. ``loss_fn``
    replaces the model loss (it receives the perturbed parameter vector);
    it exists so the oracle itself can be checked on closed-form functions.
    """
    if h <= 0:
        raise UsageError("finite-difference step must be positive")
    theta = np.array(params, dtype=np.float64)
    if loss_fn is None:
        def loss_fn(p):
            return loss(spec, p, batch)
    out = np.empty_like(theta)
    for k in range(theta.size):
        step = h * max(1.0, abs(theta[k]))
        orig = theta[k]
        theta[k] = orig + step
        f_plus = loss_fn(theta)
        theta[k] = orig - step
        f_minus = loss_fn(theta)
        theta[k] = orig
        out[k] = (f_plus - f_minus) / (2.0 * step)
    return out


def predict(spec: ModelSpec, params, features) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    z, _ = _scores(spec, params, np.asarray(features, dtype=np.float64), check=False)
    # np.argmax resolves ties to the lowest class index.
    return np.argmax(z, axis=1)


def evaluate_accuracy(spec: ModelSpec, params, dataset) -> float:
    """Fraction of ``dataset`` samples whose top-scoring class equals the label."""
    if len(dataset.labels) == 0:
        raise UsageError("cannot evaluate accuracy on an empty dataset")
    pred = predict(spec, params, dataset.features)
    return float(np.mean(pred == np.asarray(dataset.labels)))


def init_params(spec: ModelSpec, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Initial parameter vector: zeros for logistic, He-scaled W1/W2 for mlp."""
    if spec.kind == "logistic":
        return np.zeros(spec.num_params)
    if rng is None:
        raise UsageError("mlp initialisation needs an rng")
    d, h, c = spec.input_dim, spec.hidden_dim, spec.num_classes
    W1 = rng.normal(0.0, np.sqrt(2.0 / d), size=(h, d))
    W2 = rng.normal(0.0, np.sqrt(2.0 / h), size=(c, h))
    return np.concatenate([W1.ravel(), np.zeros(h), W2.ravel(), np.zeros(c)])


def sample_batch(dataset, batch_size: int, rng: np.random.Generator) -> MiniBatch:
    """Uniform mini-batch without replacement."""
    n = len(dataset.labels)
    if batch_size > n:
        raise UsageError(f"batch size {batch_size} exceeds dataset size {n}")
    idx = rng.choice(n, size=batch_size, replace=False)
    return MiniBatch(dataset.features[idx], dataset.labels[idx])


def train_centralized(spec: ModelSpec, dataset, steps: int, batch_size: int, lr: float,
                      rng: np.random.Generator, params=None) -> np.ndarray:
    """Plain mini-batch SGD on pooled data; the reference for federated runs."""
    w = init_params(spec, rng) if params is None else np.array(params, dtype=np.float64)
    for _ in range(steps):
        _, g = loss_and_gradient(spec, w, sample_batch(dataset, batch_size, rng))
        w -= lr * g
    return w
