"""Command-line entry points: dataset generation, training runs, evaluation.

Three subcommands cover the experiment lifecycle:

  gen    draw an episode stream from a config, label every sample with the
         iterative solver, and write it as a dataset file.
  run    stream a dataset through the selected strategies, writing one
         metrics CSV and one model checkpoint per method.
  eval   score a saved model (or the solver itself) on a dataset's test
         sets and write a ratio histogram.

Every command is deterministic given (config, seed): reruns reproduce
output files byte for byte. To keep that guarantee the persisted metrics
zero out the wall_ms column; real timings go to the console instead.

Exit codes: 0 success, 1 usage or input error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import channels, harness, model
from .channels import EpisodeSpec
from .harness import METHODS, StrategyConfig
from .objective import LossSpec

DEFAULT_SCALE = 10


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    seed: int
    k_pairs: int
    episodes: list[EpisodeSpec]
    methods: list[str] = field(default_factory=lambda: list(METHODS))
    p_max: float = 1.0
    noise: float = 1.0
    hidden_sizes: tuple[int, ...] = (200, 80)
    memory_capacity: int = 200
    epochs: int = 20
    minibatch_size: int = 50
    alpha: float = 1e-3
    beta: float = 0.1
    gda_alpha_theta: float | None = None
    gda_alpha_lambda: float | None = None
    loss: LossSpec = field(default_factory=LossSpec)

    def __post_init__(self):
        if not self.episodes:
            raise ValueError("config needs at least one episode")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}; valid: {', '.join(METHODS)}")

    def strategy(self, method: str) -> StrategyConfig:
        return StrategyConfig(
            method=method,
            memory_capacity=self.memory_capacity,
            loss=self.loss,
            hidden_sizes=tuple(self.hidden_sizes),
            p_max=self.p_max,
            epochs=self.epochs,
            minibatch_size=self.minibatch_size,
            alpha=self.alpha,
            beta=self.beta,
            gda_alpha_theta=self.gda_alpha_theta,
            gda_alpha_lambda=self.gda_alpha_lambda,
        )


def default_config(scale: int = DEFAULT_SCALE) -> ExperimentConfig:
    """The stock four-episode setup, shrunk by `scale` to desk size."""
    if scale < 1 or 1000 % scale != 0:
        raise ValueError("scale must be a positive divisor of 1000")
    episodes = [
        EpisodeSpec("rayleigh", 20000 // scale, 1000 // scale, 4),
        EpisodeSpec("rician", 20000 // scale, 1000 // scale, 4),
        EpisodeSpec("geometry", 20000 // scale, 1000 // scale, 4, area_side_m=10.0),
        EpisodeSpec("geometry", 20000 // scale, 1000 // scale, 4, area_side_m=50.0),
    ]
    return ExperimentConfig(seed=0, k_pairs=10, episodes=episodes, memory_capacity=2000 // scale)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = dataclasses.asdict(cfg)
    out["hidden_sizes"] = list(cfg.hidden_sizes)
    out["episodes"] = [dataclasses.asdict(e) for e in cfg.episodes]
    out["loss"] = dataclasses.asdict(cfg.loss)
    return out


def _build_nested(cls, raw: dict, label: str):
    known = {f.name for f in dataclasses.fields(cls)}
    extra = set(raw) - known
    if extra:
        raise ValueError(
            f"unknown {label} keys: {', '.join(sorted(extra))}; valid: {', '.join(sorted(known))}"
        )
    return cls(**raw)


def config_from_dict(raw: dict) -> ExperimentConfig:
    if "seed" not in raw:
        raise ValueError("config missing 'seed'")
    if "k_pairs" not in raw:
        raise ValueError("config missing 'k_pairs'")
    if "episodes" not in raw:
        raise ValueError("config missing 'episodes'")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    extra = set(raw) - known
    if extra:
        raise ValueError(f"unknown config keys: {', '.join(sorted(extra))}")
    kw = dict(raw)
    kw["episodes"] = [_build_nested(EpisodeSpec, e, "episode") for e in raw["episodes"]]
    if "loss" in raw:
        kw["loss"] = _build_nested(LossSpec, raw["loss"], "loss")
    if "hidden_sizes" in raw:
        kw["hidden_sizes"] = tuple(raw["hidden_sizes"])
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def method_rngs(seed: int) -> dict[str, np.random.Generator]:
    """One child generator per method, fixed by canonical order.

    A method's stream depends only on the seed, not on which other
    methods run alongside it.
    """
    children = np.random.SeedSequence(seed).spawn(len(METHODS))
    return {m: np.random.default_rng(s) for m, s in zip(METHODS, children)}


def cmd_gen(args) -> int:
    cfg = _resolve_config(args)
    rng = np.random.default_rng(cfg.seed)
    stream = channels.build_stream(cfg.episodes, cfg.k_pairs, rng)
    samples = list(stream.all_samples())
    channels.add_wmmse_labels(samples, noise=cfg.noise, p_max=cfg.p_max)
    channels.save_dataset(stream, args.out)
    n_train = sum(e.n_train for e in cfg.episodes)
    n_test = sum(e.n_test for e in cfg.episodes)
    print(
        f"wrote {n_train} train + {n_test} test samples "
        f"({len(cfg.episodes)} episodes, K={cfg.k_pairs}) to {args.out}"
    )
    return 0


def _zeroed(row: harness.MetricsRow) -> harness.MetricsRow:
    return dataclasses.replace(row, wall_ms=0)


def _run_method(method, stream, cfg, rng, out_dir):
    start = time.perf_counter()
    rows, err = [], None
    try:
        rows, params = harness.run_continual(stream, cfg.strategy(method), rng)
        model.save_params(params, out_dir / f"model_{method}.json")
    except harness.TrainingAborted as exc:
        rows, err = exc.rows, str(exc)
    if rows:
        harness.write_metrics_csv(out_dir / f"metrics_{method}.csv", [_zeroed(r) for r in rows])
    secs = time.perf_counter() - start
    return method, rows, err, secs


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    stream = channels.load_dataset(args.data)
    if stream.k_pairs != cfg.k_pairs:
        raise UsageError(f"dataset has K={stream.k_pairs}, config says K={cfg.k_pairs}")
    selected = cfg.methods
    if args.methods:
        selected = [m.strip() for m in args.methods.split(",") if m.strip()]
        for m in selected:
            if m not in METHODS:
                raise UsageError(f"unknown method {m!r}; valid: {', '.join(METHODS)}")
    ordered = [m for m in METHODS if m in selected]
    out_dir = _ensure_dir(args.out)
    rngs = method_rngs(cfg.seed)

    results = []
    if args.parallel and len(ordered) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=len(ordered)) as pool:
            futures = [
                pool.submit(_run_method, m, stream, cfg, rngs[m], out_dir) for m in ordered
            ]
            results = [f.result() for f in futures]
    else:
        for m in ordered:
            results.append(_run_method(m, stream, cfg, rngs[m], out_dir))

    failed = False
    for method, rows, err, secs in results:
        if err is not None:
            failed = True
            print(f"{method}: ABORTED after {len(rows)} rounds ({secs:.1f}s): {err}", file=sys.stderr)
            continue
        print(
            f"{method}: {len(rows)} rounds in {secs:.1f}s, "
            f"final avg rate {rows[-1].avg_rate:.4f}, metrics in metrics_{method}.csv"
        )
    return 2 if failed else 0


def cmd_eval(args) -> int:
    stream = channels.load_dataset(args.data)
    noise, p_max = args.noise, args.p_max
    if args.policy == "wmmse":
        policy = harness.wmmse_policy(noise=noise, p_max=p_max)
        label = "wmmse"
    else:
        params = model.load_params(args.checkpoint)
        if params.layer_sizes[0] != stream.k_pairs**2:
            raise UsageError(
                f"checkpoint expects {params.layer_sizes[0]} inputs, "
                f"dataset K={stream.k_pairs} gives {stream.k_pairs ** 2}"
            )
        policy = harness.network_policy(params)
        label = args.checkpoint
    rates, ratios = harness.evaluate(policy, stream.test_sets, noise=noise)
    for i, (r, q) in enumerate(zip(rates, ratios)):
        print(f"episode {i}: mean rate {r:.6f} nats, mean ratio {q:.6f}")
    print(f"average rate {np.mean(rates):.6f} ({label})")
    out_dir = _ensure_dir(args.out)
    hist = harness.ratio_histogram(policy, stream.test_sets, args.bin_width, noise=noise)
    hist_path = out_dir / "histogram.csv"
    with open(hist_path, "w", newline="") as fh:
        fh.write("bin_lo,bin_hi,count\n")
        for lo, hi, count in hist:
            fh.write(f"{lo!r},{hi!r},{count}\n")
    print(f"histogram in {hist_path}")
    return 0


def _ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="faircl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a labeled dataset")
    gen.add_argument("--config", help="config JSON; omit for the stock desk-scale setup")
    gen.add_argument("--seed", type=int, help="override the config seed")
    gen.add_argument("--out", required=True, help="dataset file to write")
    gen.set_defaults(func=cmd_gen)

    run = sub.add_parser("run", help="train strategies over a dataset")
    run.add_argument("--config", help="config JSON; omit for the stock desk-scale setup")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--data", required=True, help="dataset file from gen")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--methods", help="comma-separated subset of methods")
    run.add_argument("--parallel", action="store_true", help="run methods concurrently")
    run.set_defaults(func=cmd_run)

    ev = sub.add_parser("eval", help="score a checkpoint or the solver on a dataset")
    ev.add_argument("--checkpoint", help="model checkpoint JSON")
    ev.add_argument("--data", required=True, help="dataset file from gen")
    ev.add_argument("--out", required=True, help="output directory")
    ev.add_argument("--policy", choices=["checkpoint", "wmmse"], default="checkpoint")
    ev.add_argument("--bin-width", type=float, default=0.1)
    ev.add_argument("--noise", type=float, default=1.0)
    ev.add_argument("--p-max", type=float, default=1.0)
    ev.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "eval" and args.policy == "checkpoint" and not args.checkpoint:
            raise UsageError("--checkpoint is required unless --policy wmmse")
        return args.func(args)
    except (UsageError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
