"""Gaussian chunk policy: init bounds, closed-form densities, exact
flatten/unflatten round trips, and a finite-difference gradient oracle."""

import numpy as np
import pytest

from dvla.core import Rng, UsageError
from dvla.policy import (ActionChunk, PolicyConfig, PolicyParams, backward,
                         backward_batch, flatten, forward, log_prob_of,
                         policy_init, sample_chunk, sample_chunk_batch,
                         unflatten)

LOG_2PI = float(np.log(2.0 * np.pi))


def _identity_net():
    """1-in 1-hidden 1-out net with unit weights: forward(x) = tanh(x)."""
    return PolicyParams(
        w1=np.array([[1.0]], dtype=np.float32),
        b1=np.zeros(1, dtype=np.float32),
        w2=np.array([[1.0]], dtype=np.float32),
        b2=np.zeros(1, dtype=np.float32),
        log_std=np.zeros(1, dtype=np.float32),
    )


def _zero_mean_params(d=2, obs_dim=3, hidden=4, log_std=0.0):
    """All-zero weights: mean chunk is exactly zero for any obs."""
    return PolicyParams(
        w1=np.zeros((hidden, obs_dim), dtype=np.float32),
        b1=np.zeros(hidden, dtype=np.float32),
        w2=np.zeros((d, hidden), dtype=np.float32),
        b2=np.zeros(d, dtype=np.float32),
        log_std=np.full(d, log_std, dtype=np.float32),
    )


def test_init_bounds_and_shapes():
    cfg = PolicyConfig(obs_dim=4, hidden=8, chunk=4, act_dim=2)
    p = policy_init(cfg, Rng(0))
    assert p.w1.shape == (8, 4) and p.w2.shape == (8, 8)
    assert np.abs(p.w1).max() <= 1.0 / np.sqrt(4.0)
    assert np.abs(p.w2).max() <= 1.0 / np.sqrt(8.0)
    assert np.all(p.b1 == 0.0) and np.all(p.b2 == 0.0)
    np.testing.assert_allclose(p.log_std, -0.5)
    assert p.n_params == cfg.n_params


def test_identity_net_tanh():
    out = forward(_identity_net(), np.array([0.5], dtype=np.float32))
    assert out.shape == (1,)
    assert out[0] == pytest.approx(np.tanh(0.5), abs=1e-6)
    assert out[0] == pytest.approx(0.462117, abs=1e-5)


def test_forward_batch_matches_single():
    cfg = PolicyConfig(obs_dim=4, hidden=8, chunk=2, act_dim=2)
    p = policy_init(cfg, Rng(1))
    obs = Rng(2).gaussian2d((5, 4))
    batch = forward(p, obs)
    for i in range(5):
        np.testing.assert_allclose(forward(p, obs[i]), batch[i], rtol=1e-6)


def test_log_prob_at_mean_closed_form():
    p = _zero_mean_params(d=2, log_std=0.0)
    obs = np.zeros(3, dtype=np.float32)
    # actions == mean, D=2, sigma=1: log p = -D/2 * log(2 pi)
    lp = log_prob_of(p, obs, np.zeros(2, dtype=np.float32))
    assert lp == pytest.approx(-LOG_2PI, abs=1e-6)


def test_log_prob_unit_offset_closed_form():
    p = _zero_mean_params(d=2, log_std=0.0)
    obs = np.zeros(3, dtype=np.float32)
    lp = log_prob_of(p, obs, np.array([1.0, 0.0], dtype=np.float32))
    assert lp == pytest.approx(-0.5 - LOG_2PI, abs=1e-6)
    assert lp == pytest.approx(-2.337877, abs=1e-5)


def test_one_sigma_shift_costs_half():
    p = _zero_mean_params(d=2, log_std=-0.3)
    obs = np.zeros(3, dtype=np.float32)
    at_mean = log_prob_of(p, obs, np.zeros(2, dtype=np.float32))
    shifted = np.array([np.exp(-0.3), 0.0], dtype=np.float32)
    assert log_prob_of(p, obs, shifted) == pytest.approx(at_mean - 0.5, abs=1e-5)


def test_flatten_unflatten_bitwise_round_trip():
    cfg = PolicyConfig(obs_dim=4, hidden=8, chunk=4, act_dim=2)
    p = policy_init(cfg, Rng(3))
    flat = flatten(p)
    q = unflatten(cfg, flat)
    assert np.array_equal(flatten(q), flat)
    for name in ("w1", "b1", "w2", "b2", "log_std"):
        assert np.array_equal(getattr(p, name), getattr(q, name))


def test_unflatten_views_share_memory():
    cfg = PolicyConfig(obs_dim=4, hidden=4, chunk=2, act_dim=2)
    flat = flatten(policy_init(cfg, Rng(4)))
    q = unflatten(cfg, flat, copy=False)
    flat[0] = 123.0
    assert q.w1.ravel()[0] == 123.0
    r = unflatten(cfg, flat, copy=True)
    flat[0] = -1.0
    assert r.w1.ravel()[0] == 123.0


def test_unflatten_rejects_wrong_length():
    cfg = PolicyConfig(obs_dim=4, hidden=4, chunk=2, act_dim=2)
    with pytest.raises(UsageError):
        unflatten(cfg, np.zeros(3, dtype=np.float32))


def test_sample_chunk_single_only():
    cfg = PolicyConfig(obs_dim=4, hidden=4, chunk=2, act_dim=2)
    p = policy_init(cfg, Rng(5))
    with pytest.raises(UsageError):
        sample_chunk(p, np.zeros((3, 4), dtype=np.float32), Rng(0))


def test_sample_chunk_consistency():
    cfg = PolicyConfig(obs_dim=4, hidden=4, chunk=2, act_dim=2)
    p = policy_init(cfg, Rng(5))
    obs = Rng(6).gaussian(4)
    ch = sample_chunk(p, obs, Rng(7))
    assert isinstance(ch, ActionChunk)
    np.testing.assert_allclose(
        ch.sampled, ch.mean + np.exp(p.log_std) * ch.eps, rtol=1e-6)
    assert ch.log_prob == pytest.approx(log_prob_of(p, obs, ch.sampled), abs=1e-6)


def test_sample_chunk_batch_matches_density():
    cfg = PolicyConfig(obs_dim=4, hidden=4, chunk=2, act_dim=2)
    p = policy_init(cfg, Rng(5))
    obs = Rng(6).gaussian2d((6, 4))
    means, sampled, lps = sample_chunk_batch(p, obs, Rng(8))
    assert means.shape == sampled.shape == (6, 4)
    np.testing.assert_allclose(lps, log_prob_of(p, obs, sampled), rtol=1e-6)


def test_zero_params_zero_mean():
    p = _zero_mean_params()
    obs = Rng(0).gaussian(3)
    np.testing.assert_allclose(forward(p, obs), 0.0)


def test_log_std_gradient_at_mean():
    # d log p / d log_std_i = eps_i^2 - 1 = -1 at the mean
    p = _zero_mean_params(d=2, log_std=0.2)
    obs = np.zeros(3, dtype=np.float32)
    grad = backward(p, obs, np.zeros(2, dtype=np.float32), upstream=2.0)
    np.testing.assert_allclose(grad[-2:], -2.0, rtol=1e-6)


def test_backward_matches_finite_differences():
    cfg = PolicyConfig(obs_dim=4, hidden=6, chunk=2, act_dim=2)
    p = policy_init(cfg, Rng(9))
    obs = Rng(10).gaussian(4)
    actions = Rng(11).gaussian(4) * 0.7
    grad = backward(p, obs, actions, upstream=1.0)
    flat = flatten(p).astype(np.float64)
    # h below ~1e-3 the float32 parameter quantization noise dominates the
    # secant, so keep the step large enough that truncation error is the cap
    h = 1e-3
    for idx in range(0, flat.size, 7):
        bump = flat.copy()
        bump[idx] += h
        hi = log_prob_of(unflatten(cfg, bump.astype(np.float32)), obs, actions)
        bump[idx] -= 2 * h
        lo = log_prob_of(unflatten(cfg, bump.astype(np.float32)), obs, actions)
        fd = (hi - lo) / (2 * h)
        assert grad[idx] == pytest.approx(fd, rel=2e-3, abs=2e-4)


def test_backward_batch_accumulates():
    cfg = PolicyConfig(obs_dim=4, hidden=6, chunk=2, act_dim=2)
    p = policy_init(cfg, Rng(12))
    obs = Rng(13).gaussian2d((3, 4))
    acts = Rng(14).gaussian2d((3, 4))
    coeffs = np.array([0.5, -1.0, 2.0])
    out = np.zeros(p.n_params, dtype=np.float64)
    backward_batch(p, obs, acts, coeffs, out)
    want = sum(backward(p, obs[i], acts[i], coeffs[i]) for i in range(3))
    np.testing.assert_allclose(out, want, rtol=1e-5, atol=1e-8)


def test_backward_upstream_scaling():
    cfg = PolicyConfig(obs_dim=4, hidden=6, chunk=2, act_dim=2)
    p = policy_init(cfg, Rng(15))
    obs = Rng(16).gaussian(4)
    acts = Rng(17).gaussian(4)
    g1 = backward(p, obs, acts, upstream=1.0)
    g3 = backward(p, obs, acts, upstream=3.0)
    np.testing.assert_allclose(g3, 3.0 * g1, rtol=1e-6)
