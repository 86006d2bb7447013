"""Fully-connected power-control policy with exact backpropagation.

The network maps the K^2 channel magnitudes to K transmit powers. Hidden
layers are ReLU; the output layer is a logistic sigmoid scaled by p_max, so
every output lands strictly inside (0, p_max) and the power box holds by
construction. Parameters live in one flat vector, layer-major: W0 row-major,
b0, W1, b1, ...
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass(eq=False)
class ModelParams:
    layer_sizes: tuple[int, ...]
    values: np.ndarray
    p_max: float

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2 or any(s < 1 for s in self.layer_sizes):
            raise ValueError(f"bad layer sizes {self.layer_sizes}")
        self.values = np.asarray(self.values, dtype=float)
        want = param_count(self.layer_sizes)
        if self.values.shape != (want,):
            raise ValueError(f"expected {want} parameter values, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("parameter values must be finite")
        self.p_max = float(self.p_max)
        if not self.p_max > 0:
            raise ValueError("p_max must be positive")


@dataclass(eq=False)
class ForwardTrace:
    inputs: list  # activation entering each layer, (n, fan_in)
    pre_acts: list  # z of each layer, (n, fan_out)
    outputs: np.ndarray  # (n, K) powers
    single: bool  # True when forward was called with a 1-D x


def param_count(layer_sizes) -> int:
    return sum((fi + 1) * fo for fi, fo in zip(layer_sizes[:-1], layer_sizes[1:]))


def _layer_views(params: ModelParams):
    """(W, b) views into the flat value vector, no copies."""
    out = []
    pos = 0
    sizes = params.layer_sizes
    for fi, fo in zip(sizes[:-1], sizes[1:]):
        w = params.values[pos : pos + fi * fo].reshape(fo, fi)
        pos += fi * fo
        b = params.values[pos : pos + fo]
        pos += fo
        out.append((w, b))
    return out


def init(layer_sizes, p_max: float, rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    chunks = []
    for fi, fo in zip(layer_sizes[:-1], layer_sizes[1:]):
        a = np.sqrt(6.0 / (fi + fo))
        chunks.append(rng.uniform(-a, a, size=fi * fo))
        chunks.append(np.zeros(fo))
    return ModelParams(tuple(layer_sizes), np.concatenate(chunks), p_max)


def features(sample) -> np.ndarray:
    """Row-major channel magnitudes |h_kj|, the network input."""
    return np.abs(sample.h).ravel()


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(params: ModelParams, x):
    """Evaluate the policy. x is one feature vector or an (n, K^2) batch.

    Returns (powers, trace); powers match the input's batch shape.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.ndim != 2 or a.shape[1] != params.layer_sizes[0]:
        raise ValueError(f"expected input width {params.layer_sizes[0]}, got shape {x.shape}")
    layers = _layer_views(params)
    inputs, pre_acts = [], []
    for i, (w, b) in enumerate(layers):
        inputs.append(a)
        z = a @ w.T + b
        pre_acts.append(z)
        if i < len(layers) - 1:
            a = np.maximum(z, 0.0)
        else:
            a = params.p_max * _sigmoid(z)
    trace = ForwardTrace(inputs, pre_acts, a, single)
    return (a[0] if single else a), trace


def backward(params: ModelParams, trace: ForwardTrace, upstream) -> np.ndarray:
    """Gradient of sum_i <upstream_i, pi(params; x_i)> over the flat values.

    upstream must match the shape of the forward outputs (per-sample rows
    for a batched trace). For a single upstream vector this is J^T upstream.
    """
    u = np.asarray(upstream, dtype=float)
    if u.ndim == 1:
        u = u[None, :]
    if u.shape != trace.outputs.shape:
        raise ValueError(f"upstream shape {upstream.shape} does not match outputs {trace.outputs.shape}")
    layers = _layer_views(params)
    if len(trace.inputs) != len(layers) or trace.inputs[0].shape[1] != params.layer_sizes[0]:
        raise ValueError("trace does not match params")

    s = trace.outputs / params.p_max
    dz = u * params.p_max * s * (1.0 - s)
    grads = [None] * len(layers)
    for i in reversed(range(len(layers))):
        w, _ = layers[i]
        grads[i] = (dz.T @ trace.inputs[i], dz.sum(axis=0))
        if i > 0:
            dz = (dz @ w) * (trace.pre_acts[i - 1] > 0.0)
    return np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])


def updated(params: ModelParams, delta: np.ndarray) -> ModelParams:
    """New snapshot with values + delta; inputs are never mutated."""
    return ModelParams(params.layer_sizes, params.values + delta, params.p_max)


def save_params(params: ModelParams, path):
    """Write a checkpoint; floats serialize via repr so round-trips are exact."""
    doc = {
        "layer_sizes": list(params.layer_sizes),
        "p_max": params.p_max,
        "values": params.values.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_params(path) -> ModelParams:
    with open(path) as fh:
        doc = json.load(fh)
    try:
        return ModelParams(tuple(doc["layer_sizes"]), np.array(doc["values"], dtype=float), doc["p_max"])
    except KeyError as e:
        raise ValueError(f"checkpoint missing field {e}") from e
