"""Per-sample losses, fairness weights, and the compositional objective.

Two per-sample losses drive everything:

  ell  training loss: squared error against the solver label, or the
       negative achieved sum rate.
  u    performance loss feeding the sample weights: by default the negative
       of the rate ratio, u = -R(pi(theta, h); h) / rbar(h), so a sample the
       policy serves badly scores high.

The sample weights are lam_i = e^{u_i} / sum_j e^{u_j}, and the training
objective is the weighted loss F = sum_i lam_i ell_i. F factors into a
composition F = f(g(theta); theta) with

  g(theta)    = (1/n) sum_i e^{u_i}
  f(z; theta) = (1/(n z)) sum_i e^{u_i} ell_i

which is the form the stochastic compositional trainer consumes: g_eval and
f_eval below are its (minibatch) value/gradient oracles, and full_objective
evaluates F with its exact gradient

  grad F = grad g * d f/d z + grad_theta f,

algebraically equal to the softmax-weighted expression. full_objective
applies a joint max-shift to the exponentials of f and g (their ratio is
unchanged); g_eval reports the raw unshifted mean, which is what the
trainer's tracking variable follows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model, wsr

UPPER_LOSSES = ("mse", "neg_sum_rate")
LOWER_LOSSES = ("weighted_neg_sum_rate", "same_as_upper")
ALPHA_MODES = ("wmmse_ratio", "unit")

U_GUARD = 50.0
Y_FLOOR = 1e-8


class TrackingCollapseError(RuntimeError):
    """The compositional denominator fell below its floor."""


@dataclass
class LossSpec:
    upper: str = "mse"
    lower: str = "weighted_neg_sum_rate"
    alpha_mode: str = "wmmse_ratio"
    noise: float = 1.0

    def __post_init__(self):
        if self.upper not in UPPER_LOSSES:
            raise ValueError(f"unknown upper loss {self.upper!r}")
        if self.lower not in LOWER_LOSSES:
            raise ValueError(f"unknown lower loss {self.lower!r}")
        if self.alpha_mode not in ALPHA_MODES:
            raise ValueError(f"unknown alpha_mode {self.alpha_mode!r}")
        if not self.noise > 0:
            raise ValueError("noise must be positive")


@dataclass(eq=False)
class CompositionalEval:
    """One batch's compositional pieces at a given z."""

    g_value: float
    f_value: float
    grad_g: np.ndarray
    grad1_f: float
    grad2_f: np.ndarray


@dataclass(eq=False)
class _BatchTerms:
    ell: np.ndarray | None
    up_ell: np.ndarray | None
    u: np.ndarray | None
    up_u: np.ndarray | None
    trace: model.ForwardTrace


def _batch_terms(spec, params, samples, need_ell=True, need_u=True) -> _BatchTerms:
    if not samples:
        raise ValueError("empty sample batch")
    x = np.stack([model.features(s) for s in samples])
    outputs, trace = model.forward(params, x)
    gains = np.stack([np.abs(s.h) ** 2 for s in samples])

    need_rate = spec.upper == "neg_sum_rate" or (need_u and spec.lower == "weighted_neg_sum_rate")
    rates = grad_p = None
    if need_rate:
        rates = wsr.sum_rate_many(gains, outputs, noise=spec.noise)
        grad_p = wsr.grad_sum_rate_many(gains, outputs, noise=spec.noise)

    ell = up_ell = None
    if need_ell or spec.lower == "same_as_upper":
        if spec.upper == "mse":
            labels = _stack_labels(samples)
            diff = outputs - labels
            ell = np.sum(diff * diff, axis=1)
            up_ell = 2.0 * diff
        else:
            ell = -rates
            up_ell = -grad_p

    u = up_u = None
    if need_u:
        if spec.lower == "same_as_upper":
            u, up_u = ell, up_ell
        else:
            alpha = _alphas(spec, samples)
            u = -alpha * rates
            up_u = -alpha[:, None] * grad_p
        if np.any(np.abs(u) > U_GUARD):
            worst = float(np.max(np.abs(u)))
            raise ValueError(f"|u| guard exceeded: max |u| = {worst:.3g} > {U_GUARD}")

    return _BatchTerms(ell, up_ell, u, up_u, trace)


def _stack_labels(samples):
    for i, s in enumerate(samples):
        if s.p_label is None:
            raise ValueError(f"sample {i} has no p_label; MSE loss needs solver labels")
    return np.stack([s.p_label for s in samples])


def _alphas(spec, samples):
    if spec.alpha_mode == "unit":
        return np.ones(len(samples))
    for i, s in enumerate(samples):
        if s.rbar is None or not s.rbar > 0:
            raise ValueError(f"sample {i} is degenerate: rbar must be positive, got {s.rbar}")
    return 1.0 / np.array([s.rbar for s in samples])


def loss_upper(spec: LossSpec, params, sample):
    """(value, grad) of the training loss on one sample."""
    t = _batch_terms(spec, params, [sample], need_u=False)
    return float(t.ell[0]), model.backward(params, t.trace, t.up_ell)


def loss_lower_u(spec: LossSpec, params, sample):
    """(value, grad) of the performance loss u on one sample."""
    t = _batch_terms(spec, params, [sample], need_ell=False)
    return float(t.u[0]), model.backward(params, t.trace, t.up_u)


def weighted_upper(spec: LossSpec, params, batch, weights):
    """Per-sample training losses plus the gradient of their weighted sum.

    One forward pass serves both SGD (uniform weights give the mean loss)
    and the minimax baseline (dual weights).
    """
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(batch),):
        raise ValueError(f"{w.shape} weights for {len(batch)} samples")
    t = _batch_terms(spec, params, batch, need_u=False)
    grad = model.backward(params, t.trace, w[:, None] * t.up_ell)
    return t.ell.copy(), grad


def lower_values(spec: LossSpec, params, samples) -> np.ndarray:
    """u values for a whole pool, no gradients; used for memory selection."""
    return _batch_terms(spec, params, samples, need_ell=False).u.copy()


def softmax_weights(u_values) -> np.ndarray:
    """Sample weights lam_i = e^{u_i} / sum e^{u_j}, max-shifted."""
    u = np.asarray(u_values, dtype=float)
    if u.ndim != 1 or u.size == 0:
        raise ValueError("u_values must be a nonempty vector")
    if np.any(np.abs(u) > U_GUARD):
        raise ValueError(f"|u| guard exceeded: max |u| = {np.max(np.abs(u)):.3g} > {U_GUARD}")
    e = np.exp(u - np.max(u))
    return e / e.sum()


def g_value(spec: LossSpec, params, batch) -> float:
    """Raw mean of e^{u_i} over the batch, no gradients."""
    t = _batch_terms(spec, params, batch, need_ell=False)
    return float(np.mean(np.exp(t.u)))


def g_eval(spec: LossSpec, params, batch):
    """(value, grad) of g(theta) = (1/n) sum_i e^{u_i} on a batch."""
    t = _batch_terms(spec, params, batch, need_ell=False)
    e = np.exp(t.u)
    grad = model.backward(params, t.trace, (e / len(batch))[:, None] * t.up_u)
    return float(e.mean()), grad


def f_eval(spec: LossSpec, params, batch, z: float, floor: float = Y_FLOOR):
    """(value, d/dz, grad_theta) of f(z; theta) = sum_i e^{u_i} ell_i / (n z)."""
    if not z >= floor:
        raise TrackingCollapseError(f"f evaluated at z={z!r}, below the {floor} floor")
    t = _batch_terms(spec, params, batch)
    e = np.exp(t.u)
    n = len(batch)
    value = float(np.sum(e * t.ell) / (n * z))
    grad1 = -value / z
    upstream = (e[:, None] * (t.ell[:, None] * t.up_u + t.up_ell)) / (n * z)
    grad2 = model.backward(params, t.trace, upstream)
    return value, grad1, grad2


def eval_composition(spec: LossSpec, params, batch, z: float | None = None) -> CompositionalEval:
    """All compositional pieces of one batch, sharing a single forward pass.

    With z omitted, f is evaluated at the batch's own raw g value, so
    f_value is the batch's compositional objective.
    """
    t = _batch_terms(spec, params, batch)
    e = np.exp(t.u)
    n = len(batch)
    gv = float(e.mean())
    grad_g = model.backward(params, t.trace, (e / n)[:, None] * t.up_u)
    if z is None:
        z = gv
    if not z >= Y_FLOOR:
        raise TrackingCollapseError(f"f evaluated at z={z!r}, below the {Y_FLOOR} floor")
    fv = float(np.sum(e * t.ell) / (n * z))
    grad1 = -fv / z
    upstream = (e[:, None] * (t.ell[:, None] * t.up_u + t.up_ell)) / (n * z)
    grad2 = model.backward(params, t.trace, upstream)
    return CompositionalEval(gv, fv, grad_g, grad1, grad2)


def full_objective(spec: LossSpec, params, dataset):
    """(F, gradF) of the weighted objective over a full dataset.

    Computed in shifted form: with lam the softmax of u, F = sum lam_i ell_i
    and grad F = sum_i lam_i (up_ell_i + (ell_i - F) up_u_i) pulled back
    through the network, which is exactly grad_g * d f/d z + grad_theta f.
    """
    t = _batch_terms(spec, params, dataset)
    lam = softmax_weights(t.u)
    value = float(lam @ t.ell)
    upstream = lam[:, None] * (t.up_ell + (t.ell - value)[:, None] * t.up_u)
    return value, model.backward(params, t.trace, upstream)


def pool_stats(spec: LossSpec, params, dataset):
    """(F, raw g) over a dataset, values only; cheap instrumentation hook."""
    t = _batch_terms(spec, params, dataset)
    lam = softmax_weights(t.u)
    return float(lam @ t.ell), float(np.mean(np.exp(t.u)))
