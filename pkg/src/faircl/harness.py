"""Continual-learning outer loop, strategy dispatch, and evaluation.

Six strategies consume the same episode stream. All of them train first and
update their memory afterwards, warm-starting each round from the previous
round's parameters:

  TL             newest batch only, plain SGD, no memory.
  Reservoir      memory + batch with SGD; reservoir-sampled memory.
  Bilevel        memory + batch with the compositional trainer; keeps the
                 M worst-served samples (largest u) of the training pool.
  Minimax        memory + batch with descent/ascent; keeps the M samples
                 with the largest final dual weights.
  JointEqual     every sample seen so far, plain SGD.
  JointWeighted  every sample seen so far, compositional trainer.

Training consumes bare sample batches and never sees episode boundaries;
only evaluation groups the held-out sets by episode.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import memory as memory_mod
from . import model, objective, trainer, wsr
from .objective import LossSpec

METHODS = ("TL", "Reservoir", "Bilevel", "Minimax", "JointEqual", "JointWeighted")
SGD_METHODS = ("TL", "Reservoir", "JointEqual")
SCSC_METHODS = ("Bilevel", "JointWeighted")


class TrainingAborted(RuntimeError):
    """A strategy's trainer failed; metrics gathered so far ride along."""

    def __init__(self, message, rows):
        super().__init__(message)
        self.rows = rows


@dataclass
class StrategyConfig:
    method: str
    memory_capacity: int = 0
    loss: LossSpec = field(default_factory=LossSpec)
    hidden_sizes: tuple[int, ...] = (200, 80)
    p_max: float = 1.0
    epochs: int = 20
    minibatch_size: int = 50
    alpha: float = trainer.DEFAULT_ALPHA
    beta: float = trainer.DEFAULT_BETA
    scsc_iters: int | None = None
    gda_alpha_theta: float | None = None
    gda_alpha_lambda: float | None = None
    gda_iters: int | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; valid: {', '.join(METHODS)}")
        if self.memory_capacity < 0:
            raise ValueError("memory_capacity must be nonnegative")
        if self.epochs < 0 or self.minibatch_size < 1:
            raise ValueError("bad epochs or minibatch_size")


@dataclass
class MetricsRow:
    seen_samples: int
    method: str
    per_episode_rate: list[float]
    per_episode_ratio: list[float]
    avg_rate: float
    wall_ms: int


def network_policy(params: model.ModelParams):
    """Power allocation by the trained network."""

    def policy(samples):
        x = np.stack([model.features(s) for s in samples])
        return model.forward(params, x)[0]

    return policy


def wmmse_policy(noise: float = 1.0, p_max: float = 1.0):
    """Power allocation by the iterative solver itself."""

    def policy(samples):
        return np.stack(
            [wsr.wmmse(wsr.problem_from_channel(s.h, noise=noise, p_max=p_max))[0] for s in samples]
        )

    return policy


def _set_ratios(policy, test_set, noise):
    gains = np.stack([np.abs(s.h) ** 2 for s in test_set])
    for i, s in enumerate(test_set):
        if s.rbar is None:
            raise ValueError(f"test sample {i} has no rbar; evaluation needs solver rates")
    rbar = np.array([s.rbar for s in test_set])
    rates = wsr.sum_rate_many(gains, np.asarray(policy(test_set), dtype=float), noise=noise)
    return rates, rates / rbar


def evaluate(policy, test_sets, noise: float = 1.0):
    """(mean rate, mean rate/rbar ratio) per episode test set."""
    if not test_sets:
        raise ValueError("no test sets")
    rates, ratios = [], []
    for test_set in test_sets:
        r, q = _set_ratios(policy, test_set, noise)
        rates.append(float(r.mean()))
        ratios.append(float(q.mean()))
    return rates, ratios


def ratio_histogram(policy, test_sets, bin_width: float, noise: float = 1.0):
    """Pooled histogram of per-sample ratios as (bin_lo, bin_hi, count) rows."""
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    pooled = np.concatenate([_set_ratios(policy, ts, noise)[1] for ts in test_sets])
    idx = np.floor(pooled / bin_width).astype(int)
    n_bins = int(idx.max()) + 1
    counts = np.bincount(idx, minlength=n_bins)
    return [(i * bin_width, (i + 1) * bin_width, int(c)) for i, c in enumerate(counts)]


def _epoch_equivalent_iters(explicit, epochs, pool_size, minibatch_size):
    if explicit is not None:
        return explicit
    return epochs * math.ceil(pool_size / minibatch_size)


def _train_round(cfg, params, train_set, rng):
    method = cfg.method
    if method in SGD_METHODS:
        return trainer.sgd_train(
            params, cfg.loss, train_set, cfg.epochs, cfg.minibatch_size, cfg.alpha, rng
        ), None
    if method in SCSC_METHODS:
        iters = _epoch_equivalent_iters(
            cfg.scsc_iters, cfg.epochs, len(train_set), cfg.minibatch_size
        )
        state = trainer.init_state(params, cfg.alpha, cfg.beta, rng)
        state = trainer.scsc_train(state, cfg.loss, train_set, iters, cfg.minibatch_size)
        return state.params, None
    # Minimax: fresh uniform dual each round, final dual drives selection
    iters = _epoch_equivalent_iters(cfg.gda_iters, cfg.epochs, len(train_set), cfg.minibatch_size)
    a_theta = cfg.alpha if cfg.gda_alpha_theta is None else cfg.gda_alpha_theta
    a_lambda = 10.0 * a_theta if cfg.gda_alpha_lambda is None else cfg.gda_alpha_lambda
    params, dual = trainer.gda_train(
        params, trainer.DualWeights.uniform(len(train_set)), cfg.loss, train_set, iters, a_theta, a_lambda
    )
    return params, dual


def _make_buffer(cfg, rng):
    if cfg.method == "TL":
        return memory_mod.MemoryBuffer(0, memory_mod.NO_MEMORY)
    if cfg.method == "Reservoir":
        return memory_mod.MemoryBuffer(cfg.memory_capacity, memory_mod.RESERVOIR, rng=rng)
    if cfg.method in ("Bilevel", "Minimax"):
        return memory_mod.MemoryBuffer(cfg.memory_capacity, memory_mod.BILEVEL_TOP_M)
    return memory_mod.MemoryBuffer(0, memory_mod.JOINT_UNBOUNDED)


def run_continual(stream, cfg: StrategyConfig, rng, init_params=None, on_row=None):
    """Stream the batches through one strategy.

    Returns (rows, params): one MetricsRow per batch plus the final model.
    """
    k = stream.k_pairs
    if init_params is None:
        sizes = (k * k, *cfg.hidden_sizes, k)
        params = model.init(sizes, cfg.p_max, rng)
    else:
        params = init_params
    buf = _make_buffer(cfg, rng)
    rows: list[MetricsRow] = []
    seen = 0
    for batch in stream.iter_batches():
        start = time.perf_counter()
        seen += len(batch)
        train_set = buf.items + list(batch)
        dual = None
        if train_set:
            try:
                params, dual = _train_round(cfg, params, train_set, rng)
            except (trainer.DivergenceError, objective.TrackingCollapseError) as exc:
                raise TrainingAborted(f"{cfg.method}: {exc}", rows) from exc
        if cfg.method == "Reservoir":
            memory_mod.update_reservoir(buf, batch)
        elif cfg.method == "Bilevel" and train_set:
            u = objective.lower_values(cfg.loss, params, train_set)
            memory_mod.update_bilevel(buf, train_set, u)
        elif cfg.method == "Minimax" and dual is not None:
            memory_mod.update_bilevel(buf, train_set, dual.lam)
        elif cfg.method in ("JointEqual", "JointWeighted"):
            memory_mod.update_joint(buf, batch)
        rates, ratios = evaluate(network_policy(params), stream.test_sets, cfg.loss.noise)
        row = MetricsRow(
            seen_samples=seen,
            method=cfg.method,
            per_episode_rate=rates,
            per_episode_ratio=ratios,
            avg_rate=float(np.mean(rates)),
            wall_ms=int(round((time.perf_counter() - start) * 1000)),
        )
        rows.append(row)
        if on_row is not None:
            on_row(row)
    return rows, params


def metrics_header(n_episodes: int) -> list[str]:
    return (
        ["seen", "method"]
        + [f"ep{i}_rate" for i in range(n_episodes)]
        + [f"ep{i}_ratio" for i in range(n_episodes)]
        + ["avg_rate", "wall_ms"]
    )


def write_metrics_csv(path, rows) -> None:
    """One CSV row per round: seen,method,ep*_rate,ep*_ratio,avg_rate,wall_ms."""
    if not rows:
        raise ValueError("no metrics rows")
    n_episodes = len(rows[0].per_episode_rate)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(metrics_header(n_episodes))
        for r in rows:
            writer.writerow(
                [r.seen_samples, r.method]
                + [repr(v) for v in r.per_episode_rate]
                + [repr(v) for v in r.per_episode_ratio]
                + [repr(r.avg_rate), r.wall_ms]
            )
