"""Vectorized 2-D reach-target environment with a synthetic compute-cost model.

The farm advances in lock-step: all envs apply one sub-step simultaneously, so
one sub-step costs per_env_latency(n_envs) wall-microseconds for the whole
farm while each env's reported synthetic cost is applied_substeps * l(n)
exactly. Episodes are fixed-horizon; the only reward is a binary outcome at
t == horizon: 1.0 iff the final distance to target is strictly less than
success_radius (a tie counts as failure).

Groups share one initial condition (agent + target) so group-relative
advantage normalization has something to compare; noise padding channels are
per-env substreams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import ConfigError, Rng, UsageError


@dataclass(frozen=True)
class LatencyModel:
    """Per-env latency growth: l(n) = ell0 * (1 + beta*max(0,(n-n0)/n0)^gamma)."""

    ell0: float
    n0: int
    beta: float
    gamma: float

    def validate(self):
        if self.ell0 <= 0 or self.n0 < 1:
            raise ConfigError("latency_model requires ell0 > 0 and n0 >= 1")
        if self.beta < 0 or self.gamma < 0:
            raise ConfigError("latency_model requires beta >= 0 and gamma >= 0")


@dataclass(frozen=True)
class EnvConfig:
    n_envs: int
    horizon: int
    obs_dim: int = 4
    act_dim: int = 2
    dt: float = 0.1
    success_radius: float = 0.15
    step_cost: float = 50.0  # microseconds per env per sub-step (flat model)
    latency_model: LatencyModel | None = None

    def validate(self):
        if self.n_envs < 1:
            raise ConfigError(f"n_envs must be >= 1, got {self.n_envs}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.obs_dim < 4:
            raise ConfigError(f"obs_dim must be >= 4, got {self.obs_dim}")
        if self.act_dim != 2:
            raise ConfigError(f"act_dim must be 2, got {self.act_dim}")
        if self.success_radius <= 0:
            raise ConfigError("success_radius must be > 0")
        if self.dt <= 0:
            raise ConfigError("dt must be > 0")
        if self.step_cost < 0:
            raise ConfigError("step_cost must be >= 0")
        if self.latency_model is not None:
            self.latency_model.validate()


def per_env_latency(n: int, cfg: EnvConfig) -> float:
    """Synthetic per-env sub-step latency in microseconds.

    Flat step_cost when no latency model is configured; otherwise the
    saturation curve l(n) = ell0 * (1 + beta * max(0, (n-n0)/n0)^gamma).
    """
    if n < 1:
        raise ConfigError(f"env count must be >= 1, got {n}")
    lm = cfg.latency_model
    if lm is None:
        return float(cfg.step_cost)
    over = max(0.0, (n - lm.n0) / lm.n0)
    return lm.ell0 * (1.0 + lm.beta * over ** lm.gamma)


_ARENA = 1.0
_SPAWN_BOX = 0.8
_TARGET_BOX = 0.95
_DIST_LO = 0.35
_DIST_HI = 0.85


class ReachEnv:
    """Vectorized farm of 2-D point agents reaching per-group targets."""

    def __init__(self, cfg: EnvConfig, seed: int, group_layout: tuple[int, int],
                 group_id_base: int = 0):
        cfg.validate()
        n_groups, group_size = group_layout
        if n_groups * group_size != cfg.n_envs:
            raise ConfigError(
                f"group layout {n_groups}x{group_size} does not cover "
                f"n_envs={cfg.n_envs}"
            )
        self.cfg = cfg
        self.n_groups = int(n_groups)
        self.group_size = int(group_size)
        self.group_id_base = int(group_id_base)
        self._root = Rng(seed)
        self.agent_pos = np.zeros((cfg.n_envs, 2), dtype=np.float32)
        self.target_pos = np.zeros((cfg.n_envs, 2), dtype=np.float32)
        self.t = np.full(cfg.n_envs, cfg.horizon, dtype=np.int64)
        self.episode = -1
        self._noise_rngs: list[Rng] = []

    def _draw_group_initials(self, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
        agent = rng.uniform(-_SPAWN_BOX, _SPAWN_BOX, 2)
        for _ in range(1000):
            dist = rng.uniform(_DIST_LO, _DIST_HI)
            theta = rng.uniform(0.0, 2.0 * np.pi)
            target = agent + dist * np.array([np.cos(theta), np.sin(theta)])
            if np.abs(target).max() <= _TARGET_BOX:
                return agent.astype(np.float32), target.astype(np.float32)
        # unreachable in practice; keep deterministic anyway
        return agent.astype(np.float32), np.clip(
            target, -_TARGET_BOX, _TARGET_BOX).astype(np.float32)

    def reset_episode(self, episode: int) -> np.ndarray:
        """Start episode `episode`: per-group shared initials, t=0, fresh noise
        substreams. Returns the initial observation batch."""
        cfg = self.cfg
        self.episode = int(episode)
        for g in range(self.n_groups):
            gid = self.group_id_base + g
            rng = self._root.substream("init", episode, gid)
            agent, target = self._draw_group_initials(rng)
            sl = slice(g * self.group_size, (g + 1) * self.group_size)
            self.agent_pos[sl] = agent
            self.target_pos[sl] = target
        self.t[:] = 0
        self._noise_rngs = [
            self._root.substream("noise", episode, e) for e in range(cfg.n_envs)
        ]
        return self.observe()

    def observe(self) -> np.ndarray:
        """(n_envs, obs_dim) float32: agent_pos, target_pos, then noise pad."""
        cfg = self.cfg
        obs = np.empty((cfg.n_envs, cfg.obs_dim), dtype=np.float32)
        obs[:, 0:2] = self.agent_pos
        obs[:, 2:4] = self.target_pos
        pad = cfg.obs_dim - 4
        if pad > 0:
            for e in range(cfg.n_envs):
                obs[e, 4:] = self._noise_rngs[e].gaussian(pad)
        return obs

    def step_chunk(self, actions: np.ndarray):
        """Apply a chunk of H sub-steps per env.

        actions: (n_envs, H, act_dim); components are clamped to [-1, 1]
        before integration. Chunks truncate at the horizon. Returns
        (observation, done flags, per-env synthetic cost in microseconds).
        """
        cfg = self.cfg
        if self.episode < 0:
            raise UsageError("step_chunk before reset_episode")
        a = np.asarray(actions, dtype=np.float32)
        if a.ndim != 3 or a.shape[0] != cfg.n_envs or a.shape[2] != cfg.act_dim:
            raise UsageError(
                f"actions must have shape (n_envs, H, {cfg.act_dim}), got {a.shape}"
            )
        if bool((self.t >= cfg.horizon).all()):
            raise UsageError("stepping a done env without reset")
        a = np.clip(a, -1.0, 1.0)
        applied = kernels.env_step_chunk(
            self.agent_pos, self.t, np.ascontiguousarray(a), cfg.dt, cfg.horizon
        )
        cost_us = applied.astype(np.float64) * per_env_latency(cfg.n_envs, cfg)
        done = self.t >= cfg.horizon
        return self.observe(), done, cost_us

    def outcomes(self) -> np.ndarray:
        """Binary episode rewards; valid only at t == horizon for all envs."""
        if not bool((self.t >= self.cfg.horizon).all()):
            raise UsageError("episode outcome queried before episode end")
        dist = np.linalg.norm(
            self.agent_pos.astype(np.float64) - self.target_pos.astype(np.float64),
            axis=1,
        )
        return (dist < self.cfg.success_radius).astype(np.float32)
