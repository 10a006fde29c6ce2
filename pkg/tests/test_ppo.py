"""GAE against a brute-force oracle, exact gradients, PPO behaviour."""

import numpy as np
import pytest

from vsloco import networks as nets
from vsloco.ppo import (
    PPOAgent,
    RolloutBuffer,
    TrainConfig,
    allocate_buffer,
    compute_gae,
    normalize_advantages,
    train_config_from_dict,
)

F32 = np.float32


def brute_force_gae(buffer, gamma, lam):
    """O(T^2) evaluation of the discounted-sum definition of GAE."""
    T, n = buffer.horizon, buffer.n_envs
    adv = np.zeros((T, n))
    for env in range(n):
        for t in range(T):
            total = 0.0
            for l in range(T - t):
                k = t + l
                term = buffer.terminations[k, env]
                trunc = buffer.truncations[k, env]
                next_v = (
                    buffer.truncation_values[k, env] if trunc else buffer.values[k + 1, env]
                )
                delta = (
                    buffer.rewards[k, env]
                    + gamma * next_v * (not term)
                    - buffer.values[k, env]
                )
                total += (gamma * lam) ** l * delta
                if term or trunc:
                    break
            adv[t, env] = total
    return adv


def random_buffer(rng, T=50, n=4, p_term=0.08, p_trunc=0.05):
    buf = allocate_buffer(T, n, 1, 1, 1)
    buf.rewards = rng.normal(0, 1, (T, n))
    buf.values = rng.normal(0, 1, (T + 1, n))
    buf.terminations = rng.random((T, n)) < p_term
    buf.truncations = (rng.random((T, n)) < p_trunc) & ~buf.terminations
    buf.truncation_values = rng.normal(0, 1, (T, n)) * buf.truncations
    return buf


def test_gae_matches_brute_force_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100):
        buf = random_buffer(rng)
        adv, ret = compute_gae(buf, 0.99, 0.95)
        oracle = brute_force_gae(buf, 0.99, 0.95)
        assert np.allclose(adv, oracle, atol=1e-9, rtol=0)
        assert np.allclose(ret, adv + buf.values[:-1], atol=0)


def test_gae_hand_example():
    # rewards [1,1], values [0.5,0.5], bootstrap 0.5, gamma .99, lam .95
    buf = allocate_buffer(2, 1, 1, 1, 1)
    buf.rewards[:, 0] = 1.0
    buf.values[:, 0] = 0.5
    adv, ret = compute_gae(buf, 0.99, 0.95)
    assert abs(adv[1, 0] - 0.995) < 1e-12
    assert abs(adv[0, 0] - (0.995 + 0.99 * 0.95 * 0.995)) < 1e-12
    assert abs(adv[0, 0] - 1.93080) < 5e-6  # the printed 5-decimal value


def test_gae_lambda_zero_is_one_step():
    rng = np.random.default_rng(3)
    buf = random_buffer(rng, T=20)
    adv, _ = compute_gae(buf, 0.99, 1e-12)  # lam ~ 0 (0 excluded by config, fine here)
    for t in range(20):
        next_v = np.where(buf.truncations[t], buf.truncation_values[t], buf.values[t + 1])
        delta = buf.rewards[t] + 0.99 * next_v * ~buf.terminations[t] - buf.values[t]
        assert np.allclose(adv[t], delta, atol=1e-9)


def test_gae_cuts_at_done():
    rng = np.random.default_rng(4)
    buf = random_buffer(rng, T=30, p_term=0.0, p_trunc=0.0)
    buf.terminations[10, :] = True
    adv1, _ = compute_gae(buf, 0.99, 0.95)
    buf.rewards[11:] += 100.0  # anything after the cut must not matter
    buf.values[12:] -= 50.0
    adv2, _ = compute_gae(buf, 0.99, 0.95)
    assert np.allclose(adv1[: 11], adv2[: 11], atol=0)


def test_advantage_normalization():
    rng = np.random.default_rng(5)
    adv = rng.normal(3.0, 7.0, (24, 64))
    out = normalize_advantages(adv)
    assert abs(out.mean()) < 1e-9
    assert abs(out.std() - 1.0) < 1e-6


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(gamma=1.5)
    with pytest.raises(ValueError):
        TrainConfig(clip_ratio=0.0)
    with pytest.raises(ValueError):
        train_config_from_dict({"gamma": 0.99, "warp": 1})
    cfg = train_config_from_dict({"n_envs": 8, "n_iterations": 2})
    assert cfg.n_envs == 8 and cfg.gamma == 0.99


def _mlp_forward64(mlp, x):
    """Float64 reference forward pass (oracle for the finite differences)."""
    h = np.asarray(x, dtype=np.float64)
    last = len(mlp.W) - 1
    for k, (W, b) in enumerate(zip(mlp.W, mlp.b)):
        h = h @ W.astype(np.float64).T + b.astype(np.float64)
        if k < last:
            h = np.tanh(h)
    return h


def _numeric_grad(f, param, eps=1e-5):
    g = np.zeros(param.shape, dtype=np.float64)
    flat = param.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        hi = f()
        flat[i] = old - eps
        lo = f()
        flat[i] = old
        gf[i] = (hi - lo) / (2 * eps)
    return g


def test_actor_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    actor = nets.GaussianActor(4, 2, [8], rng, init_std=0.7)
    obs = rng.normal(0, 1, (6, 4)).astype(F32)
    actions = rng.normal(0, 1, (6, 2)).astype(F32)
    weights = rng.normal(0, 1, 6).astype(F32)

    def loss64():
        mean = _mlp_forward64(actor.mlp, obs)
        log_std = actor.log_std.astype(np.float64)
        z = (actions.astype(np.float64) - mean) / np.exp(log_std)
        logp = (-0.5 * z**2 - log_std - 0.5 * np.log(2 * np.pi)).sum(axis=-1)
        return float(np.sum(weights.astype(np.float64) * logp))

    logp, _, cache = actor.evaluate(obs, actions)
    grads = actor.backward(cache, weights)
    # finite differences on a float64 twin of the same computation; the
    # float32 analytic grads must agree to f32 accumulation accuracy
    for p, g in zip(actor.params, grads):
        numeric = _numeric_grad(loss64, p)
        assert np.allclose(g, numeric, atol=5e-3, rtol=2e-3), p.shape


def test_critic_gradients_match_finite_differences():
    rng = np.random.default_rng(8)
    critic = nets.Critic(3, [8], rng)
    x = rng.normal(0, 1, (5, 3)).astype(F32)
    target = rng.normal(0, 1, 5).astype(F32)

    def loss64():
        v = _mlp_forward64(critic.mlp, x)[:, 0]
        return float(np.mean((v - target.astype(np.float64)) ** 2))

    v, cache = critic.evaluate(x)
    grads = critic.backward(cache, (2.0 * (v - target) / 5).astype(F32))
    for p, g in zip(critic.params, grads):
        numeric = _numeric_grad(loss64, p)
        assert np.allclose(g, numeric, atol=5e-4, rtol=1e-3)


def test_grad_norm_clip():
    grads = [np.full((3, 3), 10.0, dtype=F32), np.full(3, -10.0, dtype=F32)]
    clipped, norm = nets.clip_grad_norm(grads, 1.0)
    total = np.sqrt(sum(np.sum(g.astype(np.float64) ** 2) for g in clipped))
    assert norm > 1.0
    assert abs(total - 1.0) < 1e-5
    small = [np.full(2, 0.1, dtype=F32)]
    kept, _ = nets.clip_grad_norm(small, 1.0)
    assert np.array_equal(kept[0], small[0])


def make_bandit_agent(cfg, seed=0):
    rng = np.random.default_rng(seed)
    agent = PPOAgent("PLS", 1, 1, 1, cfg, rng)
    # the bandit has no meaningful scales
    agent.bundle.obs_scale = np.ones(1, dtype=F32)
    agent.bundle.priv_scale = np.ones(1, dtype=F32)
    return agent, rng


def bandit_rollout(agent, rng, n=256):
    obs = np.zeros((n, 1), dtype=F32)
    buf = allocate_buffer(1, n, 1, 1, 1)
    action, logp = agent.bundle.act_sampled(obs, rng)
    reward = -((action[:, 0] - 0.3) ** 2)
    buf.obs[0] = obs
    buf.priv[0] = obs
    buf.actions[0] = action
    buf.log_probs[0] = logp
    buf.rewards[0] = reward
    buf.values[0] = agent.bundle.value(obs)
    buf.terminations[0] = True
    return buf


def test_ratio_identity_at_unchanged_params():
    cfg = TrainConfig(n_envs=32, n_iterations=1, hidden=[16, 16])
    agent, rng = make_bandit_agent(cfg)
    buf = bandit_rollout(agent, rng, n=64)
    logp, _, _ = agent.bundle.actor.evaluate(
        buf.obs[0] * agent.bundle.obs_scale, buf.actions[0]
    )
    ratio = np.exp(logp - buf.log_probs[0])
    assert np.all(np.abs(ratio - 1.0) < 1e-12)


def test_zero_advantage_keeps_policy_mean():
    cfg = TrainConfig(n_envs=64, n_iterations=1, hidden=[16, 16], entropy_coef=1e-8,
                      learning_rate=1e-3)
    agent, rng = make_bandit_agent(cfg)
    buf = bandit_rollout(agent, rng, n=64)
    buf.rewards[0] = 1.0  # constant reward -> advantages constant
    mean_before = agent.bundle.actor.mean_action(np.zeros((1, 1), dtype=F32)).copy()
    agent.update(buf, rng)
    mean_after = agent.bundle.actor.mean_action(np.zeros((1, 1), dtype=F32))
    # constant advantages normalize to ~0, so the policy mean barely moves
    assert np.all(np.abs(mean_after - mean_before) < 5e-3)


def test_bandit_converges_to_optimum():
    cfg = TrainConfig(
        n_envs=256, n_iterations=200, hidden=[32, 32], learning_rate=1e-2,
        entropy_coef=0.005, min_std=0.05, seed=0,
    )
    agent, rng = make_bandit_agent(cfg, seed=0)
    for _ in range(200):
        buf = bandit_rollout(agent, rng, n=256)
        agent.update(buf, rng)
    mean = float(agent.bundle.actor.mean_action(np.zeros((1, 1), dtype=F32))[0, 0])
    assert abs(mean - 0.3) < 0.05


def test_update_aborts_on_non_finite_loss():
    cfg = TrainConfig(n_envs=16, n_iterations=1, hidden=[8])
    agent, rng = make_bandit_agent(cfg)
    buf = bandit_rollout(agent, rng, n=16)
    buf.rewards[0, 0] = np.nan
    with pytest.raises((RuntimeError, ValueError)):
        agent.update(buf, rng)
