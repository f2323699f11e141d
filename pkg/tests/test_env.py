"""Point-reach environment: shared group initials, clamped integration,
horizon truncation, strict success test, synthetic cost accounting."""

import numpy as np
import pytest

from dvla.core import ConfigError, UsageError
from dvla.env import EnvConfig, LatencyModel, ReachEnv, per_env_latency


def _cfg(**kw):
    base = dict(n_envs=8, horizon=8, obs_dim=4, act_dim=2, dt=0.1,
                success_radius=0.15, step_cost=50.0)
    base.update(kw)
    return EnvConfig(**base)


def _env(cfg=None, seed=0, groups=2):
    cfg = cfg or _cfg()
    return ReachEnv(cfg, seed=seed, group_layout=(groups, cfg.n_envs // groups))


def test_latency_formula_midpoint():
    cfg = _cfg(latency_model=LatencyModel(ell0=100.0, n0=768, beta=1.0, gamma=1.0))
    assert per_env_latency(1536, cfg) == pytest.approx(200.0)


def test_latency_below_saturation_is_flat():
    cfg = _cfg(latency_model=LatencyModel(ell0=100.0, n0=768, beta=1.0, gamma=1.0))
    assert per_env_latency(768, cfg) == pytest.approx(100.0)
    assert per_env_latency(10, cfg) == pytest.approx(100.0)


def test_latency_without_model_is_step_cost():
    assert per_env_latency(10_000, _cfg(step_cost=50.0)) == pytest.approx(50.0)


def test_latency_gamma_shapes_growth():
    cfg = _cfg(latency_model=LatencyModel(ell0=100.0, n0=768, beta=0.5, gamma=2.0))
    # (n - n0)/n0 = 1 -> 100 * (1 + 0.5 * 1^2)
    assert per_env_latency(1536, cfg) == pytest.approx(150.0)
    assert per_env_latency(2304, cfg) == pytest.approx(100.0 * (1 + 0.5 * 4.0))


def test_group_layout_must_cover_envs():
    with pytest.raises(ConfigError):
        ReachEnv(_cfg(), seed=0, group_layout=(3, 3))


def test_group_shares_initial_condition():
    env = _env(groups=2)
    env.reset_episode(0)
    for g in range(2):
        sl = slice(g * 4, (g + 1) * 4)
        assert np.all(env.agent_pos[sl] == env.agent_pos[sl][0])
        assert np.all(env.target_pos[sl] == env.target_pos[sl][0])
    # the two groups differ from each other
    assert not np.array_equal(env.agent_pos[0], env.agent_pos[4])


def test_reset_is_deterministic_per_seed_and_episode():
    a = _env(seed=3)
    b = _env(seed=3)
    oa = a.reset_episode(5)
    ob = b.reset_episode(5)
    assert np.array_equal(oa, ob)
    assert not np.array_equal(a.reset_episode(6), oa)


def test_initial_distance_within_band():
    env = _env(groups=8, cfg=_cfg(n_envs=8))
    for ep in range(20):
        env.reset_episode(ep)
        d = np.linalg.norm(env.agent_pos - env.target_pos, axis=1)
        assert np.all(d >= 0.35 - 1e-6)
        assert np.all(d <= 0.85 + 1e-6)
        assert np.all(np.abs(env.target_pos) <= 0.95 + 1e-6)


def test_observation_layout():
    env = _env()
    obs = env.reset_episode(0)
    assert obs.shape == (8, 4)
    assert np.array_equal(obs[:, 0:2], env.agent_pos)
    assert np.array_equal(obs[:, 2:4], env.target_pos)


def test_observation_noise_pad_dims():
    env = _env(cfg=_cfg(obs_dim=6))
    obs = env.reset_episode(0)
    assert obs.shape == (8, 6)
    # pad differs per env (independent noise substreams)
    assert not np.array_equal(obs[0, 4:], obs[1, 4:])


def test_position_clamped_to_unit_box():
    env = _env()
    env.reset_episode(0)
    env.agent_pos[:] = np.array([0.95, 0.0], dtype=np.float32)
    actions = np.zeros((8, 1, 2), dtype=np.float32)
    actions[:, 0, 0] = 1.0
    env.step_chunk(actions)
    np.testing.assert_allclose(env.agent_pos[:, 0], 1.0)
    np.testing.assert_allclose(env.agent_pos[:, 1], 0.0)


def test_action_components_clamped():
    env = _env()
    env.reset_episode(0)
    env.agent_pos[:] = 0.0
    actions = np.full((8, 1, 2), 5.0, dtype=np.float32)
    env.step_chunk(actions)
    # clamped to 1.0 per component, dt 0.1
    np.testing.assert_allclose(env.agent_pos, 0.1, rtol=1e-6)


def test_chunk_truncates_at_horizon():
    env = _env()
    env.reset_episode(0)
    chunk3 = np.zeros((8, 3, 2), dtype=np.float32)
    _, done, cost = env.step_chunk(chunk3)
    assert not done.any() and np.all(env.t == 3)
    env.step_chunk(chunk3)
    assert np.all(env.t == 6)
    # horizon 8: third chunk of 3 applies only 2 substeps
    _, done, cost = env.step_chunk(chunk3)
    assert done.all()
    assert np.all(env.t == 8)
    np.testing.assert_allclose(cost, 2 * 50.0)


def test_cost_counts_applied_substeps():
    env = _env()
    env.reset_episode(0)
    _, _, cost = env.step_chunk(np.zeros((8, 4, 2), dtype=np.float32))
    np.testing.assert_allclose(cost, 4 * 50.0)


def test_step_before_reset_rejected():
    env = _env()
    with pytest.raises(UsageError):
        env.step_chunk(np.zeros((8, 1, 2), dtype=np.float32))


def test_step_after_done_rejected():
    env = _env()
    env.reset_episode(0)
    env.step_chunk(np.zeros((8, 8, 2), dtype=np.float32))
    with pytest.raises(UsageError):
        env.step_chunk(np.zeros((8, 1, 2), dtype=np.float32))


def test_bad_action_shape_rejected():
    env = _env()
    env.reset_episode(0)
    with pytest.raises(UsageError):
        env.step_chunk(np.zeros((8, 2), dtype=np.float32))
    with pytest.raises(UsageError):
        env.step_chunk(np.zeros((4, 1, 2), dtype=np.float32))


def test_outcome_needs_finished_episode():
    env = _env()
    env.reset_episode(0)
    with pytest.raises(UsageError):
        env.outcomes()


def test_outcome_strictly_inside_radius():
    env = _env()
    env.reset_episode(0)
    env.step_chunk(np.zeros((8, 8, 2), dtype=np.float32))
    env.agent_pos[:] = env.target_pos  # distance 0 -> success
    assert env.outcomes().all()
    env.agent_pos[:, 0] = env.target_pos[:, 0] + 0.15  # exactly the radius
    assert not env.outcomes().any()


def test_validation_rejects_bad_dims():
    with pytest.raises(ConfigError):
        _cfg(obs_dim=3).validate()
    with pytest.raises(ConfigError):
        _cfg(act_dim=3).validate()
    with pytest.raises(ConfigError):
        _cfg(dt=0.0).validate()
    with pytest.raises(ConfigError):
        LatencyModel(ell0=-1.0, n0=768, beta=1.0, gamma=1.0).validate()
