"""Optimization loops for the power-control policy.

Four training modes share the objective module's oracles:

  scsc_train  stochastic compositional updates for the weighted objective.
              A scalar tracking variable y follows the inner mean
              g(theta) = (1/n) sum e^{u_i}; each step refreshes y from two
              correction terms on a fresh minibatch phi, then descends the
              chain-rule gradient grad_g * d f/d z + grad_theta f evaluated
              at z = y on an independent minibatch xi.
  gd_train    full-batch gradient descent on the exact weighted objective.
  sgd_train   plain epoch SGD on the unweighted mean training loss, the
              optimizer behind the non-fairness baselines.
  gda_train   two-timescale descent/ascent for the minimax baseline: theta
              descends the dual-weighted loss while the dual ascends by a
              multiplicative update that keeps it on the simplex exactly.

y must stay above a small floor; a collapse aborts with diagnostics rather
than being clamped, since downstream quantities divide by y.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass

import numpy as np

from . import model, objective
from .objective import TrackingCollapseError, Y_FLOOR

DEFAULT_ALPHA = 1e-3
DEFAULT_BETA = 0.1
DEFAULT_L0 = 10.0


class DivergenceError(RuntimeError):
    """Training produced non-finite values."""


@dataclass(eq=False)
class TrainerState:
    """Compositional trainer state: current and previous params plus y."""

    params: model.ModelParams
    params_prev: model.ModelParams
    y: float | None
    step: int
    alpha: float
    beta: float
    rng: np.random.Generator

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must be in (0, 1]")
        if self.step < 0:
            raise ValueError("step must be nonnegative")


@dataclass(eq=False)
class DualWeights:
    """Per-sample dual weights on the probability simplex."""

    lam: np.ndarray

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        if self.lam.ndim != 1 or self.lam.size == 0:
            raise ValueError("dual weights must be a nonempty vector")
        if np.any(self.lam < 0) or abs(self.lam.sum() - 1.0) > 1e-12:
            raise ValueError("dual weights are not on the simplex")

    @classmethod
    def uniform(cls, n: int) -> "DualWeights":
        return cls(np.full(n, 1.0 / n))


@dataclass
class TraceRow:
    """One instrumented training step; unused fields stay None."""

    step: int
    objective: float
    grad_norm: float | None = None
    y: float | None = None
    tracking_error: float | None = None


def theorem_schedule(iters: int, l0: float = DEFAULT_L0):
    """(alpha, beta) = (1/(L0 sqrt(K)), 1/sqrt(K)) for a K-step run."""
    if iters < 1:
        raise ValueError("iters must be at least 1")
    beta = 1.0 / np.sqrt(iters)
    return beta / l0, beta


def init_state(params, alpha=DEFAULT_ALPHA, beta=DEFAULT_BETA, rng=None) -> TrainerState:
    """Fresh state at step 0; y is set from the first minibatch seen."""
    if rng is None:
        rng = np.random.default_rng()
    return TrainerState(params, params, None, 0, alpha, beta, rng)


def _descend(params, delta) -> model.ModelParams:
    values = params.values + delta
    if not np.all(np.isfinite(values)):
        raise DivergenceError("parameter update produced non-finite values; reduce alpha")
    return model.ModelParams(params.layer_sizes, values, params.p_max)


def scsc_step(state: TrainerState, spec, batch_xi, batch_phi) -> TrainerState:
    """One compositional update: refresh y, then descend at z = y."""
    if state.y is None:
        raise ValueError("tracking variable not initialized; run scsc_train or set y")
    if not state.y >= Y_FLOOR:
        raise TrackingCollapseError(
            f"tracking collapsed at step {state.step}: y = {state.y!r} (floor {Y_FLOOR})"
        )
    g_cur, grad_g = objective.g_eval(spec, state.params, batch_phi)
    g_prev = objective.g_value(spec, state.params_prev, batch_phi)
    y_new = (1.0 - state.beta) * (state.y + g_cur - g_prev) + state.beta * g_cur
    if not y_new >= Y_FLOOR:
        raise TrackingCollapseError(
            f"tracking collapsed at step {state.step}: y = {y_new!r} (floor {Y_FLOOR})"
        )
    _, grad1, grad2 = objective.f_eval(spec, state.params, batch_xi, z=y_new)
    params_new = _descend(state.params, -state.alpha * (grad_g * grad1 + grad2))
    return dataclasses.replace(
        state, params=params_new, params_prev=state.params, y=y_new, step=state.step + 1
    )


def scsc_train(state: TrainerState, spec, pool, iters: int, minibatch_size: int, trace=None) -> TrainerState:
    """iters compositional steps with fresh uniform minibatches per step.

    Trace rows, when requested, snapshot each step's pre-update params:
    the full-pool objective, the new y, and its squared tracking error
    against the full-pool g.
    """
    if not pool:
        raise ValueError("empty training pool")
    if minibatch_size < 1:
        raise ValueError("minibatch_size must be at least 1")
    if iters < 0:
        raise ValueError("iters must be nonnegative")
    n = len(pool)
    for _ in range(iters):
        xi_idx = state.rng.integers(0, n, minibatch_size)
        phi_idx = state.rng.integers(0, n, minibatch_size)
        xi = [pool[i] for i in xi_idx]
        phi = [pool[i] for i in phi_idx]
        if state.y is None:
            y0 = objective.g_value(spec, state.params, phi)
            if not y0 >= Y_FLOOR:
                raise TrackingCollapseError(
                    f"tracking collapsed at initialization: y = {y0!r} (floor {Y_FLOOR})"
                )
            state = dataclasses.replace(state, y=y0)
        before = state.params
        state = scsc_step(state, spec, xi, phi)
        if trace is not None:
            f_val, g_bar = objective.pool_stats(spec, before, pool)
            trace.append(
                TraceRow(
                    step=state.step - 1,
                    objective=f_val,
                    y=state.y,
                    tracking_error=(state.y - g_bar) ** 2,
                )
            )
    return state


def gd_train(params, spec, dataset, iters: int, alpha: float, trace=None) -> model.ModelParams:
    """Full-batch descent on the weighted objective."""
    if not dataset:
        raise ValueError("empty dataset")
    if iters < 0 or alpha < 0:
        raise ValueError("iters and alpha must be nonnegative")
    for k in range(iters):
        value, grad = objective.full_objective(spec, params, dataset)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise DivergenceError(f"objective diverged at iteration {k}; reduce alpha")
        if trace is not None:
            trace.append(TraceRow(step=k, objective=value, grad_norm=float(np.linalg.norm(grad))))
        params = _descend(params, -alpha * grad)
    return params


def sgd_train(params, spec, dataset, epochs: int, minibatch: int, alpha: float, rng) -> model.ModelParams:
    """Epoch SGD on the unweighted mean training loss."""
    if not dataset:
        raise ValueError("empty dataset")
    if minibatch < 1:
        raise ValueError("minibatch must be at least 1")
    if epochs < 0 or alpha < 0:
        raise ValueError("epochs and alpha must be nonnegative")
    n = len(dataset)
    for _ in range(epochs):
        perm = rng.permutation(n)
        for s in range(0, n, minibatch):
            batch = [dataset[i] for i in perm[s : s + minibatch]]
            ells, grad = objective.weighted_upper(
                spec, params, batch, np.full(len(batch), 1.0 / len(batch))
            )
            if not np.all(np.isfinite(ells)):
                raise DivergenceError("training loss diverged; reduce alpha")
            params = _descend(params, -alpha * grad)
    return params


def gda_train(params, dual: DualWeights, spec, dataset, iters: int, alpha_theta: float, alpha_lambda: float):
    """Two-timescale minimax: simultaneous theta descent and dual ascent.

    Both updates at step k use the same loss evaluation. The dual moves by
    lam_i <- lam_i * exp(alpha_lambda * ell_i), max-shifted and renormalized,
    so it stays on the simplex exactly.
    """
    if not dataset:
        raise ValueError("empty dataset")
    if dual.lam.size != len(dataset):
        raise ValueError(f"{dual.lam.size} dual weights for {len(dataset)} samples")
    if not alpha_lambda > alpha_theta:
        raise ValueError("two-timescale ascent needs alpha_lambda > alpha_theta")
    if alpha_theta < 0 or iters < 0:
        raise ValueError("alpha_theta and iters must be nonnegative")
    lam = dual.lam.copy()
    for _ in range(iters):
        ells, grad = objective.weighted_upper(spec, params, dataset, lam)
        if not np.all(np.isfinite(ells)):
            raise DivergenceError("training loss diverged; reduce alpha_theta")
        params = _descend(params, -alpha_theta * grad)
        lam = lam * np.exp(alpha_lambda * (ells - ells.max()))
        lam = lam / lam.sum()
    return params, DualWeights(lam)


def write_trace_csv(path, rows) -> None:
    """Trace rows as CSV; absent fields are left empty."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "objective", "grad_norm", "y", "tracking_error"])
        for r in rows:
            writer.writerow(
                [
                    r.step,
                    repr(r.objective),
                    "" if r.grad_norm is None else repr(r.grad_norm),
                    "" if r.y is None else repr(r.y),
                    "" if r.tracking_error is None else repr(r.tracking_error),
                ]
            )
