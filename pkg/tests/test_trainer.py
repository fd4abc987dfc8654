from __future__ import annotations

import math

import numpy as np
import pytest

from helpers import SMALL_GRID, bfs_policy_action, gae_oracle, gradient_check
from mdpforge.envs import make_env, wrap
from mdpforge.iel import check, parse
from mdpforge.trainer import (
    Adam,
    Batch,
    LossConfig,
    PolicySpec,
    TrainConfig,
    TrainConfigError,
    act,
    action_probs,
    compute_gae,
    detect_plateau,
    evaluate,
    fitness,
    gaussian_log_prob,
    init_params,
    loss_and_grad,
    ppo_update,
    train,
)
from mdpforge.trainer.nets import log_softmax, mlp_forward
from mdpforge.trainer.ppo import clip_by_global_norm, global_norm

TINY = TrainConfig(
    total_steps=256, num_envs=4, rollout_length=32, eval_episodes=4, checkpoints=2, minibatches=2, update_epochs=2
)


@pytest.fixture(scope="module")
def small():
    env = make_env("grid_pickup", SMALL_GRID)
    obs, rew = env.defaults()
    return env, wrap(env, obs, rew)


# -- networks -------------------------------------------------------------------------------
def test_init_is_seeded():
    spec = PolicySpec(5, "discrete", 4, (8, 8))
    a, b, c = init_params(spec, 1), init_params(spec, 1), init_params(spec, 2)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert any(not np.array_equal(a[k], c[k]) for k in a)


@pytest.mark.parametrize(
    "spec",
    [PolicySpec(98, "discrete", 4), PolicySpec(11, "continuous", 2, (32,)), PolicySpec(3, "discrete", 2, (5, 6, 7))],
)
def test_param_count_closed_form(spec):
    params = init_params(spec, 0)
    sizes_pi = [spec.obs_dim, *spec.hidden, spec.action_n]
    sizes_v = [spec.obs_dim, *spec.hidden, 1]
    formula = sum((i + 1) * o for s in (sizes_pi, sizes_v) for i, o in zip(s[:-1], s[1:]))
    formula += 0 if spec.discrete else spec.action_n
    assert spec.param_count() == formula == sum(p.size for p in params.values())


def test_discrete_probabilities_normalized():
    rng = np.random.default_rng(0)
    for seed in range(20):
        spec = PolicySpec(7, "discrete", int(rng.integers(2, 6)), (16,))
        params = init_params(spec, seed)
        params["pi.W1"] = rng.normal(scale=5, size=params["pi.W1"].shape)
        p = action_probs(params, rng.normal(size=(50, 7)))
        assert np.all(np.abs(p.sum(axis=1) - 1.0) < 1e-9)


def test_gaussian_log_prob_matches_closed_form():
    rng = np.random.default_rng(1)
    mean = rng.normal(size=(100, 3))
    log_std = rng.normal(scale=0.5, size=3)
    x = mean + rng.normal(size=(100, 3))
    sigma = np.exp(log_std)
    density = np.prod(np.exp(-((x - mean) ** 2) / (2 * sigma**2)) / (sigma * math.sqrt(2 * math.pi)), axis=1)
    assert np.max(np.abs(gaussian_log_prob(mean, log_std, x) - np.log(density))) < 1e-9


def test_greedy_act_is_argmax():
    spec = PolicySpec(4, "discrete", 3, (8,))
    params = init_params(spec, 3)
    params["pi.W1"] = np.random.default_rng(0).normal(size=params["pi.W1"].shape)
    obs = np.random.default_rng(1).normal(size=(10, 4))
    a, logp, v = act(params, spec, obs, None)
    logits, _ = mlp_forward(params, "pi", obs)
    np.testing.assert_array_equal(a, np.argmax(logits, axis=1))
    np.testing.assert_allclose(logp, log_softmax(logits)[np.arange(10), a])
    assert v.shape == (10,)


# -- GAE -------------------------------------------------------------------------------------
def test_gae_one_step_td():
    adv, ret = compute_gae(np.array([2.0]), np.array([0.5]), np.array([1.0]), 0.99, 0.0, 7.0)
    assert adv[0] == 2.0 - 0.5
    assert ret[0] == 2.0


def test_gae_monte_carlo_case():
    r = np.array([1.0, 2.0, 3.0, 4.0])
    adv, _ = compute_gae(r, np.zeros(4), np.zeros(4), 1.0, 1.0, 0.0)
    np.testing.assert_array_equal(adv, [10.0, 9.0, 7.0, 4.0])


def test_gae_matches_recursive_oracle():
    rng = np.random.default_rng(2)
    for _ in range(100):
        T = int(rng.integers(1, 65))
        r, v = rng.normal(size=T), rng.normal(size=T)
        d = (rng.random(T) < 0.1).astype(float)
        gamma, lam, last = rng.uniform(0.8, 1.0), rng.uniform(0.0, 1.0), rng.normal()
        adv, ret = compute_gae(r, v, d, gamma, lam, last)
        o_adv, o_ret = gae_oracle(r, v, d, gamma, lam, last)
        assert np.max(np.abs(adv - o_adv)) <= 1e-12
        assert np.max(np.abs(ret - o_ret)) <= 1e-12


def test_gae_batched_columns_are_independent():
    rng = np.random.default_rng(3)
    r, v = rng.normal(size=(16, 3)), rng.normal(size=(16, 3))
    d = (rng.random((16, 3)) < 0.2).astype(float)
    last = rng.normal(size=3)
    adv, _ = compute_gae(r, v, d, 0.99, 0.95, last)
    for j in range(3):
        col, _ = compute_gae(r[:, j], v[:, j], d[:, j], 0.99, 0.95, last[j])
        np.testing.assert_array_equal(adv[:, j], col)


def test_gae_rejects_misaligned_inputs():
    with pytest.raises(ValueError):
        compute_gae(np.zeros(3), np.zeros(4), np.zeros(3), 0.99, 0.95, 0.0)


# -- PPO loss --------------------------------------------------------------------------------
def _batch_at_current_policy(spec, params, adv, ret=None, shift=0.0):
    n = len(adv)
    obs = np.random.default_rng(4).normal(size=(n, spec.obs_dim))
    actions = np.zeros(n)
    logits, _ = mlp_forward(params, "pi", obs)
    logp = log_softmax(logits)[np.arange(n), 0]
    if ret is None:
        v, _ = mlp_forward(params, "v", obs)
        ret = v[:, 0]
    return Batch(obs, actions, logp - shift, np.asarray(adv, dtype=float), ret)


def test_zero_advantage_zero_value_error_losses():
    spec = PolicySpec(3, "discrete", 2, (4,))
    params = init_params(spec, 0)
    info, _ = loss_and_grad(params, spec, _batch_at_current_policy(spec, params, np.zeros(6)), LossConfig(0.2, 0.0, 0.5))
    assert info["policy"] == 0.0
    assert info["value"] == 0.0


def test_ratio_above_band_uses_clipped_surrogate():
    spec = PolicySpec(3, "discrete", 2, (4,))
    params = init_params(spec, 0)
    adv = np.full(5, 1.5)
    batch = _batch_at_current_policy(spec, params, adv, shift=math.log(2.0))  # ratio 2
    info, _ = loss_and_grad(params, spec, batch, LossConfig(0.2, 0.0, 0.5))
    assert info["policy"] == pytest.approx(-1.2 * 1.5, abs=1e-12)
    assert info["clip_frac"] == 1.0


def test_gradients_match_finite_differences():
    for seed in range(20):
        ok, worst = gradient_check(seed)
        assert ok, f"seed {seed}: worst relative error {worst}"


def test_clip_by_global_norm():
    grads = {"a": np.array([3.0, 4.0]), "b": np.array([12.0])}
    clipped, norm = clip_by_global_norm(grads, 6.5)
    assert norm == 13.0
    assert global_norm(clipped) == pytest.approx(6.5)
    same, _ = clip_by_global_norm(grads, 100.0)
    assert same is grads


def test_adam_first_step_moves_by_learning_rate():
    opt = Adam(lr=0.1)
    out = opt.step({"w": np.array([1.0, -1.0])}, {"w": np.array([0.5, -2.0])})
    np.testing.assert_allclose(out["w"], [0.9, -0.9], atol=1e-6)


def test_ppo_update_reduces_loss_on_fixed_batch():
    spec = PolicySpec(3, "discrete", 3, (16,))
    params = init_params(spec, 0)
    rng = np.random.default_rng(0)
    batch = _batch_at_current_policy(spec, params, rng.normal(size=32), ret=rng.normal(size=32))
    cfg = LossConfig(0.2, 0.0, 0.5)
    opt = Adam(lr=1e-2)
    before = loss_and_grad(params, spec, batch, cfg)[0]["total"]
    for _ in range(20):
        params, _ = ppo_update(params, spec, batch, cfg, opt, 0.5)
    assert loss_and_grad(params, spec, batch, cfg)[0]["total"] < before


# -- training loop -------------------------------------------------------------------------------
def test_budget_below_one_rollout_rejected():
    with pytest.raises(TrainConfigError):
        TrainConfig(total_steps=100, num_envs=4, rollout_length=32)


def test_train_is_deterministic(small):
    _, induced = small
    a, b = train(induced, TINY, 5), train(induced, TINY, 5)
    assert a.diagnostics.to_dict() == b.diagnostics.to_dict()
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    assert a.diagnostics.steps_used == 256
    assert len(a.diagnostics.eval_success) == 2


def test_train_on_continuous_env():
    env = make_env("point_track")
    obs, rew = env.defaults()
    cfg = TrainConfig(total_steps=128, num_envs=2, rollout_length=64, eval_episodes=2, checkpoints=1, minibatches=2)
    res = train(wrap(env, obs, rew), cfg, 0)
    assert not res.crashed and res.params["pi.log_std"].shape == (2,)


def test_always_turning_policy_scores_zero(small):
    env, induced = small
    spec = PolicySpec.for_env(induced.obs_dim, env.action_spec, (8,))
    params = init_params(spec, 0)
    params["pi.W1"][:] = 0.0
    params["pi.b1"][:] = [0.0, 10.0, 0.0, 0.0]  # always turn left
    assert evaluate(params, spec, induced, 20, 0) == 0.0


def test_scripted_oracle_always_succeeds():
    env = make_env("grid_pickup")
    successes = []
    for seed in range(50):
        state = env.reset(seed)
        for _ in range(env.horizon):
            state, done = env.step(state, bfs_policy_action(env, state))
            if done:
                break
        successes.append(env.success(env.episode_stats({k: np.asarray(v)[None] for k, v in state.items()})[0]))
    assert np.mean(successes) == 1.0


def test_evaluation_ignores_the_reward_program(small):
    env, induced = small
    obs, _ = env.defaults()
    other = wrap(env, obs, check(parse("return 5 * sp.agent_x - s.step_num"), "reward", env.schema))
    params = train(induced, TINY, 1).params
    spec = PolicySpec.for_env(induced.obs_dim, env.action_spec, TINY.hidden)
    assert evaluate(params, spec, induced, 30, 9) == evaluate(params, spec, other, 30, 9)


def test_default_eval_episodes():
    assert TrainConfig().eval_episodes == 50


def test_fitness_mean_and_parallel_determinism(small):
    _, induced = small
    seq = fitness(induced, TINY, [1, 2, 3], workers=1)
    par = fitness(induced, TINY, [1, 2, 3], workers=3)
    assert seq.to_dict() == par.to_dict()
    assert seq.mean == pytest.approx(float(np.mean(seq.per_seed)), abs=1e-15)


def test_fitness_crash_is_reported(small):
    env, _ = small
    obs, _ = env.defaults()
    bad = wrap(env, obs, check(parse("return 1 / (s.step_num - s.step_num)"), "reward", env.schema))
    res = fitness(bad, TINY, [1, 2])
    assert res.crashed and res.mean is None
    assert res.fault["kind"] == "division-by-zero"


def test_plateau_detection():
    assert detect_plateau([0.5, 0.5, 0.4, 0.5])
    assert not detect_plateau([0.1, 0.2, 0.3, 0.4])
    assert not detect_plateau([0.3])
