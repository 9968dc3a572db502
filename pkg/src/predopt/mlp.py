"""From-scratch multilayer perceptron with manual backpropagation.

ReLU hidden layers, linear output, He-uniform initialization, and
AdaGrad/Adam updates with global-norm gradient clipping. step() descends
on the supplied gradient: pass the loss gradient to minimize, or the
negated utility gradient to ascend.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MlpModel",
    "OptimizerState",
    "Gradients",
    "init_mlp",
    "forward",
    "backward",
    "make_optimizer",
    "step",
    "clone_model",
    "save_checkpoint",
    "load_checkpoint",
]

EPS = 1e-10
CHECKPOINT_SCHEMA = 1


@dataclass
class MlpModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]

    def parameter_arrays(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend([W, b])
        return out

    def assert_finite(self):
        for arr in self.parameter_arrays():
            if not np.all(np.isfinite(arr)):
                raise FloatingPointError("model parameters became non-finite")


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        out = []
        for dW, db in zip(self.weights, self.biases):
            out.extend([dW, db])
        return out


def init_mlp(layer_sizes, rng: np.random.Generator) -> MlpModel:
    """He-uniform weights (limit sqrt(6/fan_in)), zero biases."""
    sizes = list(layer_sizes)
    if len(sizes) < 2:
        raise ValueError("need at least an input and an output size")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights=weights, biases=biases)


def forward(model: MlpModel, xi) -> tuple[np.ndarray, list]:
    """Prediction plus the activation cache needed by backward."""
    x = np.asarray(xi, dtype=float)
    if x.shape != (model.weights[0].shape[1],):
        raise ValueError(f"input dimension {x.shape} does not match first layer {model.weights[0].shape}")
    cache = [x]
    a = x
    last = len(model.weights) - 1
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = W @ a + b
        cache.append(z)
        a = z if i == last else np.maximum(z, 0.0)
    return a, cache


def backward(model: MlpModel, cache: list, upstream) -> Gradients:
    """Exact gradients of upstream . prediction for every weight and bias.

    ReLU subgradient at 0 is taken as 0. Also returns the gradient with
    respect to the input for end-to-end checks.
    """
    if len(cache) != len(model.weights) + 1:
        raise ValueError("stale or mismatched forward cache")
    delta = np.asarray(upstream, dtype=float).copy()
    dWs: list[np.ndarray] = [None] * len(model.weights)
    dbs: list[np.ndarray] = [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        if i == 0:
            a_prev = cache[0]
        else:
            a_prev = np.maximum(cache[i], 0.0)
        dWs[i] = np.outer(delta, a_prev)
        dbs[i] = delta
        delta = model.weights[i].T @ delta
        if i > 0:
            delta = delta * (cache[i] > 0.0)
    return Gradients(weights=dWs, biases=dbs, input=delta)


@dataclass
class OptimizerState:
    kind: str
    learning_rate: float
    clip_norm: float | None = None
    accumulators: list[np.ndarray] = field(default_factory=list)
    moments: list[np.ndarray] = field(default_factory=list)
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999


def make_optimizer(
    model: MlpModel,
    kind: str = "adagrad",
    learning_rate: float = 0.01,
    clip_norm: float | None = None,
) -> OptimizerState:
    if kind not in ("adagrad", "adam"):
        raise ValueError("optimizer kind must be 'adagrad' or 'adam'")
    if learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    shapes = [np.zeros_like(p) for p in model.parameter_arrays()]
    return OptimizerState(
        kind=kind,
        learning_rate=learning_rate,
        clip_norm=clip_norm,
        accumulators=shapes,
        moments=[np.zeros_like(p) for p in model.parameter_arrays()] if kind == "adam" else [],
    )


def step(model: MlpModel, grads: Gradients, opt: OptimizerState) -> MlpModel:
    """Clip the global gradient norm, apply one descent update in place."""
    arrays = grads.arrays()
    total = 0.0
    for g in arrays:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient; no update applied")
        total += float(np.sum(g * g))
    gnorm = np.sqrt(total)
    if opt.clip_norm is not None and gnorm > opt.clip_norm > 0:
        arrays = [g * (opt.clip_norm / gnorm) for g in arrays]

    params = model.parameter_arrays()
    opt.step_count += 1
    if opt.kind == "adagrad":
        for p, g, acc in zip(params, arrays, opt.accumulators):
            acc += g * g
            p -= opt.learning_rate * g / (np.sqrt(acc) + EPS)
    else:
        b1, b2, t = opt.beta1, opt.beta2, opt.step_count
        for p, g, m, v in zip(params, arrays, opt.moments, opt.accumulators):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / (1.0 - b1**t)
            v_hat = v / (1.0 - b2**t)
            p -= opt.learning_rate * m_hat / (np.sqrt(v_hat) + EPS)
    model.assert_finite()
    return model


def clone_model(model: MlpModel) -> MlpModel:
    return MlpModel(
        weights=[W.copy() for W in model.weights],
        biases=[b.copy() for b in model.biases],
    )


def save_checkpoint(model: MlpModel, path):
    payload = {
        "schema_version": CHECKPOINT_SCHEMA,
        "layer_sizes": model.layer_sizes,
        "weights": [W.tolist() for W in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> MlpModel:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("schema_version") != CHECKPOINT_SCHEMA:
        raise ValueError(f"unsupported checkpoint schema {payload.get('schema_version')!r}")
    return MlpModel(
        weights=[np.asarray(W, dtype=float) for W in payload["weights"]],
        biases=[np.asarray(b, dtype=float) for b in payload["biases"]],
    )
