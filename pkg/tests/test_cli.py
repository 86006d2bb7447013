import json

import numpy as np
import pytest

from faircl import channels, cli, model
from faircl.channels import EpisodeSpec
from faircl.cli import ExperimentConfig, config_from_dict, config_to_dict, main
from faircl.objective import LossSpec


def tiny_config(**kw):
    defaults = dict(
        seed=3,
        k_pairs=2,
        episodes=[
            EpisodeSpec("rayleigh", 8, 4, 2),
            EpisodeSpec("rician", 8, 4, 2),
        ],
        methods=["TL", "Bilevel"],
        hidden_sizes=(6,),
        memory_capacity=4,
        epochs=1,
        minibatch_size=4,
        alpha=0.01,
        beta=0.2,
    )
    defaults.update(kw)
    return ExperimentConfig(**defaults)


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config_to_dict(tiny_config())))
    return path


def gen(cfg_path, out):
    return main(["gen", "--config", str(cfg_path), "--out", str(out)])


# ------------------------------------------------------------------ config

def test_default_config_scales():
    cfg = cli.default_config()
    assert cfg.episodes[0].n_train == 2000
    assert cfg.memory_capacity == 200
    assert len(cfg.episodes) == 4
    assert cli.default_config(scale=1).episodes[0].n_train == 20000
    with pytest.raises(ValueError, match="scale"):
        cli.default_config(scale=3)


def test_config_round_trip():
    cfg = tiny_config()
    again = config_from_dict(config_to_dict(cfg))
    assert config_to_dict(again) == config_to_dict(cfg)


def test_config_rejects_bad_input():
    with pytest.raises(ValueError, match="seed"):
        config_from_dict({"k_pairs": 2, "episodes": []})
    good = config_to_dict(tiny_config())
    bad = dict(good, extra_knob=1)
    with pytest.raises(ValueError, match="extra_knob"):
        config_from_dict(bad)
    bad = dict(good, methods=["TL", "SGD"])
    with pytest.raises(ValueError, match="SGD"):
        config_from_dict(bad)
    # nested dicts must fail with ValueError too, so the CLI prints a
    # clean error line instead of a TypeError traceback
    bad = dict(good, episodes=[dict(good["episodes"][0], family="rayleigh")])
    with pytest.raises(ValueError, match="episode keys"):
        config_from_dict(bad)
    bad = dict(good, loss=dict(good["loss"], upper_loss="mse"))
    with pytest.raises(ValueError, match="loss keys"):
        config_from_dict(bad)


# --------------------------------------------------------------------- gen

def test_gen_writes_labeled_dataset(tmp_path, cfg_path, capsys):
    out = tmp_path / "data.jsonl"
    assert gen(cfg_path, out) == 0
    assert "16 train + 8 test" in capsys.readouterr().out
    stream = channels.load_dataset(out)
    assert stream.k_pairs == 2
    assert len(stream.test_sets) == 2
    for s in stream.all_samples():
        assert s.p_label is not None and s.rbar is not None


def test_gen_rejects_bad_batching(tmp_path, capsys):
    raw = config_to_dict(tiny_config())
    raw["episodes"][0]["n_train"] = 7
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(raw))
    assert gen(path, tmp_path / "data.jsonl") == 1
    assert "divisible" in capsys.readouterr().err


def test_gen_is_byte_deterministic(tmp_path, cfg_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert gen(cfg_path, a) == 0
    assert gen(cfg_path, b) == 0
    assert a.read_bytes() == b.read_bytes()


def test_gen_seed_flag_overrides(tmp_path, cfg_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["gen", "--config", str(cfg_path), "--out", str(a), "--seed", "9"]) == 0
    assert gen(cfg_path, b) == 0
    assert a.read_bytes() != b.read_bytes()


# --------------------------------------------------------------------- run

def run_cmd(cfg_path, data, out, *extra):
    return main(["run", "--config", str(cfg_path), "--data", str(data), "--out", str(out), *extra])


@pytest.fixture
def data_path(tmp_path, cfg_path):
    out = tmp_path / "data.jsonl"
    assert gen(cfg_path, out) == 0
    return out


def test_run_single_method(tmp_path, cfg_path, data_path, capsys):
    out = tmp_path / "runs"
    assert run_cmd(cfg_path, data_path, out, "--methods", "TL") == 0
    assert "TL:" in capsys.readouterr().out
    lines = (out / "metrics_TL.csv").read_text().splitlines()
    assert lines[0] == "seen,method,ep0_rate,ep1_rate,ep0_ratio,ep1_ratio,avg_rate,wall_ms"
    assert len(lines) == 5
    assert [row.split(",")[0] for row in lines[1:]] == ["4", "8", "12", "16"]
    assert all(row.endswith(",0") for row in lines[1:])
    restored = model.load_params(out / "model_TL.json")
    assert restored.layer_sizes == (4, 6, 2)
    assert not (out / "metrics_Bilevel.csv").exists()


def test_run_unknown_method(tmp_path, cfg_path, data_path, capsys):
    assert run_cmd(cfg_path, data_path, tmp_path / "x", "--methods", "Frontier") == 1
    assert "JointWeighted" in capsys.readouterr().err


def test_run_is_byte_deterministic(tmp_path, cfg_path, data_path):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert run_cmd(cfg_path, data_path, out1) == 0
    assert run_cmd(cfg_path, data_path, out2) == 0
    for name in ("metrics_TL.csv", "metrics_Bilevel.csv", "model_TL.json", "model_Bilevel.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_run_method_rng_independent_of_filter(tmp_path, cfg_path, data_path):
    both, solo = tmp_path / "both", tmp_path / "solo"
    assert run_cmd(cfg_path, data_path, both) == 0
    assert run_cmd(cfg_path, data_path, solo, "--methods", "Bilevel") == 0
    assert (both / "metrics_Bilevel.csv").read_bytes() == (solo / "metrics_Bilevel.csv").read_bytes()


def test_run_parallel_matches_serial(tmp_path, cfg_path, data_path):
    ser, par = tmp_path / "ser", tmp_path / "par"
    assert run_cmd(cfg_path, data_path, ser) == 0
    assert run_cmd(cfg_path, data_path, par, "--parallel") == 0
    for name in ("metrics_TL.csv", "metrics_Bilevel.csv"):
        assert (ser / name).read_bytes() == (par / name).read_bytes()


def test_run_shared_seen_column(tmp_path, cfg_path, data_path):
    out = tmp_path / "all"
    assert run_cmd(cfg_path, data_path, out) == 0
    seen = [
        [row.split(",")[0] for row in (out / f"metrics_{m}.csv").read_text().splitlines()[1:]]
        for m in ("TL", "Bilevel")
    ]
    assert seen[0] == seen[1]


def test_run_k_mismatch(tmp_path, data_path):
    raw = config_to_dict(tiny_config(k_pairs=3, episodes=[EpisodeSpec("rayleigh", 8, 4, 2)]))
    bad_cfg = tmp_path / "k3.json"
    bad_cfg.write_text(json.dumps(raw))
    assert run_cmd(bad_cfg, data_path, tmp_path / "x") == 1


# -------------------------------------------------------------------- eval

def test_eval_wmmse_policy(tmp_path, data_path, capsys):
    out = tmp_path / "eval"
    code = main(["eval", "--data", str(data_path), "--out", str(out), "--policy", "wmmse"])
    assert code == 0
    console = capsys.readouterr().out
    assert "mean ratio 1.000000" in console
    lines = (out / "histogram.csv").read_text().splitlines()
    assert lines[0] == "bin_lo,bin_hi,count"
    assert sum(int(row.split(",")[2]) for row in lines[1:]) == 8


def test_eval_checkpoint(tmp_path, cfg_path, data_path, capsys):
    run_dir = tmp_path / "runs"
    assert run_cmd(cfg_path, data_path, run_dir, "--methods", "TL") == 0
    capsys.readouterr()
    code = main(
        [
            "eval",
            "--data",
            str(data_path),
            "--out",
            str(tmp_path / "eval"),
            "--checkpoint",
            str(run_dir / "model_TL.json"),
        ]
    )
    assert code == 0
    assert "episode 1:" in capsys.readouterr().out


def test_eval_k_mismatch(tmp_path, data_path, capsys):
    ckpt = tmp_path / "wrong.json"
    params = model.init((9, 4, 3), 1.0, np.random.default_rng(0))
    model.save_params(params, ckpt)
    code = main(
        ["eval", "--data", str(data_path), "--out", str(tmp_path / "e"), "--checkpoint", str(ckpt)]
    )
    assert code == 1
    assert "K=2" in capsys.readouterr().err


def test_eval_needs_checkpoint_or_wmmse(tmp_path, data_path, capsys):
    assert main(["eval", "--data", str(data_path), "--out", str(tmp_path / "e")]) == 1
    assert "--checkpoint" in capsys.readouterr().err


# ------------------------------------------------------------------- usage

def test_bad_invocations(capsys):
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["gen"]) == 1
    capsys.readouterr()
