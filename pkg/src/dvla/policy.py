"""Gaussian MLP policy with action chunking and a hand-derived backward pass.

One inference emits a chunk of H actions: the network maps an observation to
H*act_dim means through a single tanh hidden layer; a state-independent
learnable log-std provides exploration. The chunk's joint log-density (sum
over all H*act_dim dims) is the unit the importance ratio is computed on.

Canonical flat parameter order: W1 row-major, b1, W2 row-major, b2, log_std.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import ConfigError, Rng, UsageError, f32mat, f32vec

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class PolicyConfig:
    obs_dim: int
    hidden: int
    chunk: int
    act_dim: int = 2
    init_log_std: float = -0.5

    @property
    def out_dim(self) -> int:
        return self.chunk * self.act_dim

    def validate(self):
        for name in ("obs_dim", "hidden", "chunk", "act_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"policy.{name} must be >= 1")

    @property
    def n_params(self) -> int:
        d = self.out_dim
        return self.hidden * self.obs_dim + self.hidden + d * self.hidden + d + d


@dataclass
class PolicyParams:
    w1: np.ndarray  # (hidden, obs_dim) f32
    b1: np.ndarray  # (hidden,) f32
    w2: np.ndarray  # (out_dim, hidden) f32
    b2: np.ndarray  # (out_dim,) f32
    log_std: np.ndarray  # (out_dim,) f32

    @property
    def n_params(self) -> int:
        return (self.w1.size + self.b1.size + self.w2.size + self.b2.size
                + self.log_std.size)


@dataclass(frozen=True)
class ActionChunk:
    mean: np.ndarray
    sampled: np.ndarray
    log_prob: float
    eps: np.ndarray


def policy_init(cfg: PolicyConfig, rng: Rng) -> PolicyParams:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases, constant log_std."""
    cfg.validate()
    d = cfg.out_dim
    lim1 = 1.0 / np.sqrt(cfg.obs_dim)
    lim2 = 1.0 / np.sqrt(cfg.hidden)
    w1 = rng.uniform(-lim1, lim1, (cfg.hidden, cfg.obs_dim)).astype(np.float32)
    w2 = rng.uniform(-lim2, lim2, (d, cfg.hidden)).astype(np.float32)
    return PolicyParams(
        w1=w1,
        b1=np.zeros(cfg.hidden, dtype=np.float32),
        w2=w2,
        b2=np.zeros(d, dtype=np.float32),
        log_std=np.full(d, cfg.init_log_std, dtype=np.float32),
    )


def flatten(params: PolicyParams) -> np.ndarray:
    return np.concatenate([
        params.w1.ravel(), params.b1, params.w2.ravel(), params.b2,
        params.log_std,
    ]).astype(np.float32, copy=False)


def unflatten(cfg: PolicyConfig, flat: np.ndarray, copy: bool = True) -> PolicyParams:
    """Rebuild structured params from the canonical flat vector.

    With copy=False the fields are views into `flat` (the trainer uses this to
    keep Adam's in-place updates visible through the structured form).
    """
    flat = np.ascontiguousarray(flat, dtype=np.float32)
    if flat.shape != (cfg.n_params,):
        raise UsageError(f"expected {cfg.n_params} params, got shape {flat.shape}")
    d = cfg.out_dim
    sizes = [cfg.hidden * cfg.obs_dim, cfg.hidden, d * cfg.hidden, d, d]
    parts = []
    i = 0
    for sz in sizes:
        part = flat[i:i + sz]
        parts.append(part.copy() if copy else part)
        i += sz
    return PolicyParams(
        w1=parts[0].reshape(cfg.hidden, cfg.obs_dim),
        b1=parts[1],
        w2=parts[2].reshape(d, cfg.hidden),
        b2=parts[3],
        log_std=parts[4],
    )


def _as_batch(obs, obs_dim: int) -> tuple[np.ndarray, bool]:
    a = np.asarray(obs, dtype=np.float32)
    if a.ndim == 1:
        if a.shape[0] != obs_dim:
            raise UsageError(f"obs length {a.shape[0]} != obs_dim {obs_dim}")
        return np.ascontiguousarray(a[None, :]), True
    if a.ndim == 2:
        if a.shape[1] != obs_dim:
            raise UsageError(f"obs width {a.shape[1]} != obs_dim {obs_dim}")
        return np.ascontiguousarray(a), False
    raise UsageError(f"obs must be 1-D or 2-D, got shape {a.shape}")


def forward(params: PolicyParams, obs) -> np.ndarray:
    """Mean chunk for one obs (1-D in, 1-D out) or a batch (2-D in/out)."""
    batch, single = _as_batch(obs, params.w1.shape[1])
    means = kernels.mlp_forward(params.w1, params.b1, params.w2, params.b2, batch)
    return means[0] if single else means


def sample_chunk(params: PolicyParams, obs, rng: Rng) -> ActionChunk:
    """Sample one action chunk: mean + exp(log_std) * eps, eps ~ N(0, I)."""
    mean = forward(params, obs)
    if mean.ndim != 1:
        raise UsageError("sample_chunk takes a single observation; "
                         "use sample_chunk_batch for farms")
    eps = rng.gaussian(mean.shape[0])
    sampled = mean + np.exp(params.log_std) * eps
    lp = kernels.chunk_log_prob(mean[None, :], params.log_std, sampled[None, :])
    return ActionChunk(mean=mean, sampled=sampled, log_prob=float(lp[0]), eps=eps)


def sample_chunk_batch(params: PolicyParams, obs2d: np.ndarray, rng: Rng):
    """Vectorized sampling for a farm: returns (means, sampled, log_probs)."""
    means = forward(params, obs2d)
    if means.ndim != 2:
        raise UsageError("sample_chunk_batch takes a 2-D observation batch")
    eps = rng.gaussian2d(means.shape)
    sampled = means + np.exp(params.log_std)[None, :] * eps
    lps = kernels.chunk_log_prob(means, params.log_std, sampled)
    return means, sampled, lps


def log_prob_of(params: PolicyParams, obs, actions):
    """Joint log-density of an action chunk (scalar for 1-D obs, else (B,))."""
    batch, single = _as_batch(obs, params.w1.shape[1])
    d = params.w2.shape[0]
    acts = np.asarray(actions, dtype=np.float32)
    if single:
        acts = f32vec(acts, d)[None, :]
    else:
        acts = f32mat(acts, (batch.shape[0], d))
    means = kernels.mlp_forward(params.w1, params.b1, params.w2, params.b2, batch)
    lps = kernels.chunk_log_prob(means, params.log_std, np.ascontiguousarray(acts))
    return float(lps[0]) if single else lps


def backward(params: PolicyParams, obs, actions, upstream: float) -> np.ndarray:
    """Gradient of upstream * log_prob_of(params, obs, actions), flat float64."""
    grad = np.zeros(params.n_params, dtype=np.float64)
    batch, single = _as_batch(obs, params.w1.shape[1])
    d = params.w2.shape[0]
    acts = np.asarray(actions, dtype=np.float32)
    if single:
        acts = f32vec(acts, d)[None, :]
        coeffs = np.array([float(upstream)], dtype=np.float64)
    else:
        acts = f32mat(acts, (batch.shape[0], d))
        coeffs = np.asarray(upstream, dtype=np.float64)
        if coeffs.shape != (batch.shape[0],):
            raise UsageError("batch backward needs one upstream per row")
    kernels.policy_backward(
        params.w1, params.b1, params.w2, params.b2, params.log_std,
        batch, np.ascontiguousarray(acts), coeffs, grad,
    )
    return grad


def backward_batch(params: PolicyParams, obs2d, actions2d, coeffs,
                   out: np.ndarray) -> None:
    """Accumulate sum_b coeffs[b] * grad log_prob_b into `out` (float64 flat)."""
    kernels.policy_backward(
        params.w1, params.b1, params.w2, params.b2, params.log_std,
        np.ascontiguousarray(obs2d, dtype=np.float32),
        np.ascontiguousarray(actions2d, dtype=np.float32),
        np.asarray(coeffs, dtype=np.float64),
        out,
    )
