import numpy as np
import pytest
from numpy.testing import assert_allclose

from faircl import channels, model, objective, trainer
from faircl.objective import LossSpec, TrackingCollapseError
from faircl.trainer import DivergenceError, DualWeights, TraceRow

K = 2
SIZES = (K * K, 6, K)


def zero_params(p_max=1.0):
    return model.ModelParams(SIZES, np.zeros(model.param_count(SIZES)), p_max)


def labeled_batch(rng, n, k=K):
    batch = channels.gen_rayleigh(k, n, rng)
    channels.add_wmmse_labels(batch)
    return batch


def constant_pool(n=4):
    # zero channel gains: rates and their gradients vanish identically, so
    # under this spec every loss is 0 and g is exactly 1 at any params
    spec = LossSpec(upper="neg_sum_rate", lower="weighted_neg_sum_rate", alpha_mode="unit")
    pool = [channels.ChannelSample(K, np.zeros((K, K))) for _ in range(n)]
    return spec, pool


def fresh_state(params, alpha=0.1, beta=0.5, seed=0, y=None, step=0):
    return trainer.TrainerState(params, params, y, step, alpha, beta, np.random.default_rng(seed))


# ---------------------------------------------------------------- scsc_step

def test_beta_one_sets_y_to_batch_g():
    rng = np.random.default_rng(1)
    params = model.init(SIZES, 1.0, rng)
    batch = labeled_batch(rng, 3)
    state = fresh_state(params, beta=1.0, y=0.123)
    out = trainer.scsc_step(state, LossSpec(), batch, batch)
    assert out.y == objective.g_value(LossSpec(), params, batch)


def test_y_update_arithmetic():
    # u = ell = ln 2 on every sample makes g = 2 at any zero net;
    # y=1, g_cur = g_prev = 2, beta = 0.5 gives y' = 0.5*(1 + 2 - 2) + 0.5*2
    label = np.array([0.5 + np.sqrt(np.log(2.0)), 0.5])
    pool = [channels.ChannelSample(K, np.zeros((K, K)), p_label=label) for _ in range(3)]
    spec = LossSpec(upper="mse", lower="same_as_upper")
    state = fresh_state(zero_params(), beta=0.5, y=1.0)
    out = trainer.scsc_step(state, spec, pool, pool)
    assert out.y == pytest.approx(1.5, abs=1e-12)
    assert out.step == 1
    assert out.params_prev is state.params


def test_constant_losses_fix_params():
    spec, pool = constant_pool()
    state = fresh_state(zero_params(), y=1.0)
    out = trainer.scsc_step(state, spec, pool, pool)
    assert np.array_equal(out.params.values, state.params.values)
    assert out.y == 1.0


def test_uninitialized_y_rejected():
    spec, pool = constant_pool()
    with pytest.raises(ValueError, match="not initialized"):
        trainer.scsc_step(fresh_state(zero_params()), spec, pool, pool)


def test_collapse_raises_with_step():
    spec, pool = constant_pool()
    state = fresh_state(zero_params(), y=1e-9, step=7)
    with pytest.raises(TrackingCollapseError, match="step 7"):
        trainer.scsc_step(state, spec, pool, pool)


# ---------------------------------------------------------------- scsc_train

def test_zero_iters_returns_state_unchanged():
    spec, pool = constant_pool()
    state = fresh_state(zero_params())
    out = trainer.scsc_train(state, spec, pool, iters=0, minibatch_size=2)
    assert out is state


def test_y_converges_geometrically_on_fixture():
    # constant g = 1: starting from y = 0.5, y_k - 1 shrinks by (1 - beta)
    spec, pool = constant_pool()
    beta = 0.25
    state = fresh_state(zero_params(), beta=beta, y=0.5)
    for k in range(1, 11):
        state = trainer.scsc_train(state, spec, pool, iters=1, minibatch_size=2)
        assert state.y - 1.0 == pytest.approx(-0.5 * (1 - beta) ** k, rel=1e-12)


def test_y_initialized_from_first_minibatch():
    rng = np.random.default_rng(2)
    params = model.init(SIZES, 1.0, rng)
    pool = labeled_batch(rng, 8)
    state = trainer.init_state(params, alpha=1e-3, beta=0.2, rng=np.random.default_rng(3))
    out = trainer.scsc_train(state, LossSpec(), pool, iters=1, minibatch_size=4)
    # replay the draws: y0 = g on the phi batch, and one step leaves y at y0
    r = np.random.default_rng(3)
    r.integers(0, 8, 4)
    phi = [pool[i] for i in r.integers(0, 8, 4)]
    assert out.y == pytest.approx(objective.g_value(LossSpec(), params, phi), rel=1e-12)


def test_scsc_deterministic():
    rng = np.random.default_rng(4)
    params = model.init(SIZES, 1.0, rng)
    pool = labeled_batch(rng, 12)

    def run():
        state = trainer.init_state(params, alpha=0.01, beta=0.2, rng=np.random.default_rng(9))
        return trainer.scsc_train(state, LossSpec(), pool, iters=40, minibatch_size=4)

    a, b = run(), run()
    assert np.array_equal(a.params.values, b.params.values)
    assert a.y == b.y and a.step == b.step == 40


def test_tracking_error_contracts():
    rng = np.random.default_rng(5)
    params = model.init(SIZES, 1.0, rng)
    pool = labeled_batch(rng, 20)
    state = trainer.init_state(params, alpha=0.005, beta=0.05, rng=np.random.default_rng(6))
    rows = []
    trainer.scsc_train(state, LossSpec(), pool, iters=400, minibatch_size=5, trace=rows)
    errs = np.array([r.tracking_error for r in rows])
    assert errs[-50:].mean() < errs[:50].mean()
    assert min(r.y for r in rows) >= 1e-8


# ---------------------------------------------------------------- gd_train

def test_gd_zero_gradient_fixture():
    spec, pool = constant_pool()
    params = zero_params()
    out = trainer.gd_train(params, spec, pool, iters=5, alpha=0.1)
    assert np.array_equal(out.values, params.values)


def test_gd_zero_alpha():
    rng = np.random.default_rng(7)
    params = model.init(SIZES, 1.0, rng)
    out = trainer.gd_train(params, LossSpec(), labeled_batch(rng, 4), iters=3, alpha=0.0)
    assert np.array_equal(out.values, params.values)


def test_gd_descends_and_trend():
    rng = np.random.default_rng(8)
    params = model.init(SIZES, 1.0, rng)
    pool = labeled_batch(rng, 8)
    rows = []
    trainer.gd_train(params, LossSpec(), pool, iters=300, alpha=0.05, trace=rows)
    norms2 = np.array([r.grad_norm for r in rows]) ** 2
    assert rows[-1].objective < rows[0].objective
    assert norms2.min() < norms2[:30].min()


def test_gd_divergence_error():
    # distant labels give gradients ~1e4; this alpha overflows the update
    pool = [
        channels.ChannelSample(K, np.zeros((K, K)), p_label=np.array([1e4, 0.5]))
        for _ in range(2)
    ]
    spec = LossSpec(upper="mse", lower="weighted_neg_sum_rate", alpha_mode="unit")
    with np.errstate(over="ignore"), pytest.raises(DivergenceError, match="alpha"):
        trainer.gd_train(zero_params(), spec, pool, iters=2, alpha=1e306)


# ---------------------------------------------------------------- sgd_train

def test_sgd_zero_upstream_fixture():
    params = zero_params()
    pool = [channels.ChannelSample(K, np.zeros((K, K)), p_label=np.full(K, 0.5)) for _ in range(4)]
    out = trainer.sgd_train(params, LossSpec(upper="mse"), pool, 5, 2, 0.5, np.random.default_rng(0))
    assert np.array_equal(out.values, params.values)


def test_sgd_zero_epochs():
    rng = np.random.default_rng(10)
    params = model.init(SIZES, 1.0, rng)
    out = trainer.sgd_train(params, LossSpec(), labeled_batch(rng, 4), 0, 2, 0.1, rng)
    assert out is params


def test_sgd_overfits_tiny_set():
    rng = np.random.default_rng(11)
    params = model.init((K * K, 8, K), 1.0, rng)
    pool = channels.gen_rayleigh(K, 4, rng)
    for s in pool:
        s.p_label = rng.uniform(0.2, 0.8, size=K)
    spec = LossSpec(upper="mse")
    out = trainer.sgd_train(params, spec, pool, 500, 2, 0.5, np.random.default_rng(12))
    final = np.mean([objective.loss_upper(spec, out, s)[0] for s in pool])
    assert final < 1e-3


# ---------------------------------------------------------------- gda_train

def gda_spec():
    return LossSpec(upper="mse", lower="same_as_upper")


def test_gda_identical_losses_keep_uniform_dual():
    rng = np.random.default_rng(13)
    sample = labeled_batch(rng, 1)[0]
    pool = [sample] * 5
    params = model.init(SIZES, 1.0, rng)
    _, dual = trainer.gda_train(params, DualWeights.uniform(5), gda_spec(), pool, 20, 0.01, 0.1)
    assert_allclose(dual.lam, np.full(5, 0.2), rtol=0, atol=0)


def test_gda_single_sample_dual_stays_one():
    rng = np.random.default_rng(14)
    pool = labeled_batch(rng, 1)
    params = model.init(SIZES, 1.0, rng)
    _, dual = trainer.gda_train(params, DualWeights.uniform(1), gda_spec(), pool, 10, 0.01, 0.1)
    assert dual.lam[0] == 1.0


def test_gda_dual_follows_closed_form():
    # frozen theta (alpha_theta = 0): ell_1 = 0.25, ell_2 = 0 are constants,
    # so lam_1 after k steps is 1 / (1 + c^k) with c = exp(-alpha_lambda/4)
    pool = [
        channels.ChannelSample(K, np.zeros((K, K)), p_label=np.array([1.0, 0.5])),
        channels.ChannelSample(K, np.zeros((K, K)), p_label=np.array([0.5, 0.5])),
    ]
    params = zero_params()
    alpha_lambda = 0.8
    c = np.exp(-alpha_lambda * 0.25)
    dual = DualWeights.uniform(2)
    prev = 0.5
    for k in range(1, 12):
        _, dual = trainer.gda_train(params, dual, gda_spec(), pool, 1, 0.0, alpha_lambda)
        assert dual.lam[0] == pytest.approx(1.0 / (1.0 + c**k), rel=1e-12)
        assert dual.lam[0] > prev
        assert dual.lam.sum() == pytest.approx(1.0, abs=1e-12)
        prev = dual.lam[0]


def test_gda_validation():
    rng = np.random.default_rng(15)
    pool = labeled_batch(rng, 3)
    params = model.init(SIZES, 1.0, rng)
    with pytest.raises(ValueError, match="simplex"):
        DualWeights(np.array([0.7, 0.7, -0.4]))
    with pytest.raises(ValueError, match="alpha_lambda"):
        trainer.gda_train(params, DualWeights.uniform(3), gda_spec(), pool, 1, 0.1, 0.1)
    with pytest.raises(ValueError, match="dual weights"):
        trainer.gda_train(params, DualWeights.uniform(2), gda_spec(), pool, 1, 0.01, 0.1)


# ---------------------------------------------------------------- plumbing

def test_theorem_schedule():
    alpha, beta = trainer.theorem_schedule(400)
    assert beta == 0.05
    assert alpha == pytest.approx(0.005)
    alpha2, _ = trainer.theorem_schedule(400, l0=20.0)
    assert alpha2 == pytest.approx(0.0025)
    with pytest.raises(ValueError):
        trainer.theorem_schedule(0)


def test_state_validation():
    p = zero_params()
    with pytest.raises(ValueError, match="alpha"):
        trainer.TrainerState(p, p, None, 0, 0.0, 0.5, np.random.default_rng(0))
    with pytest.raises(ValueError, match="beta"):
        trainer.TrainerState(p, p, None, 0, 0.1, 1.5, np.random.default_rng(0))


def test_trace_csv_round_trip(tmp_path):
    rows = [
        TraceRow(step=0, objective=1.25, grad_norm=0.5),
        TraceRow(step=1, objective=1.0, y=0.75, tracking_error=1e-3),
    ]
    path = tmp_path / "trace.csv"
    trainer.write_trace_csv(path, rows)
    lines = path.read_text().splitlines()
    assert lines[0] == "step,objective,grad_norm,y,tracking_error"
    assert lines[1] == "0,1.25,0.5,,"
    assert lines[2] == "1,1.0,,0.75,0.001"
