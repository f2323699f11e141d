"""Group-relative policy optimization: the learner inside the trainer lane.

Advantages are episode rewards normalized within a group that shared one
initial condition; the objective is the clipped importance-ratio surrogate
with one joint ratio per inference chunk. Gradients accumulate over
micro-batch slices in a fixed order (group_id, then trajectory index) with
float64 accumulation, followed by one bias-corrected Adam step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import policy as policy_mod
from .core import ConfigError
from .policy import PolicyParams

VALID_RATIO_GRANULARITY = ("chunk",)


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 8
    clip_eps: float = 0.2
    adv_epsilon: float = 1e-8
    micro_batch: int = 8
    lr: float = 3e-3
    beta1: float = 0.9
    beta2: float = 0.999
    opt_eps: float = 1e-8
    max_grad_norm: float | None = None
    kl_coeff: float = 0.0  # optional penalty hook, 0 = off
    ratio_granularity: str = "chunk"

    def validate(self):
        if self.group_size < 2:
            raise ConfigError(f"group_size must be >= 2, got {self.group_size}")
        if not (0.0 < self.clip_eps < 1.0):
            raise ConfigError(f"clip_eps must be in (0, 1), got {self.clip_eps}")
        if self.micro_batch < 1:
            raise ConfigError("micro_batch must be >= 1")
        if self.adv_epsilon <= 0:
            raise ConfigError("adv_epsilon must be > 0")
        if self.kl_coeff < 0:
            raise ConfigError("kl_coeff must be >= 0")
        if self.ratio_granularity not in VALID_RATIO_GRANULARITY:
            raise ConfigError(
                "ratio_granularity must be 'chunk'; per-sub-step ratios are "
                "unrepresentable (one behavior log-prob is stored per chunk)"
            )


@dataclass
class GroupBatch:
    """G trajectories sharing one initial condition and one behavior version.

    obs: (G, C, obs_dim); actions: (G, C, chunk*act_dim);
    behavior_log_prob: (G, C); rewards: (G,). C = chunks per episode.
    """

    group_id: int
    horizon: int
    chunk: int
    obs: np.ndarray
    actions: np.ndarray
    behavior_log_prob: np.ndarray
    rewards: np.ndarray
    behavior_version: int

    @property
    def g(self) -> int:
        return self.obs.shape[0]

    @property
    def n_chunks(self) -> int:
        return self.obs.shape[1]


class GrpoAbort(RuntimeError):
    """Non-finite loss or gradient; carries the offending group id."""

    def __init__(self, group_id: int, detail: str):
        super().__init__(f"update aborted on group {group_id}: {detail}")
        self.group_id = group_id


def compute_advantages(rewards, delta: float) -> np.ndarray:
    """A_i = (r_i - mean(r)) / (popstd(r) + delta); all-zero when var == 0."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.shape[0] < 2:
        raise ConfigError(f"a reward group needs >= 2 entries, got shape {r.shape}")
    mean = r.mean()
    centered = r - mean
    var = (centered * centered).mean()
    if var == 0.0:
        return np.zeros_like(r)
    return centered / (np.sqrt(var) + delta)


def group_advantages(batch: GroupBatch, cfg: GrpoConfig) -> np.ndarray:
    if batch.g != cfg.group_size:
        raise ConfigError(
            f"group {batch.group_id} has {batch.g} trajectories, "
            f"expected G={cfg.group_size}"
        )
    return compute_advantages(batch.rewards, cfg.adv_epsilon)


def clipped_surrogate(ratio: float, adv: float, clip_eps: float):
    """-min(ratio*A, clip(ratio)*A) and its d/d ratio; ties take the
    unclipped derivative so ratio == 1 behaves as plain policy gradient."""
    clipped_ratio = min(max(ratio, 1.0 - clip_eps), 1.0 + clip_eps)
    unclipped = ratio * adv
    clipped = clipped_ratio * adv
    if unclipped <= clipped:
        return -unclipped, -adv
    return -clipped, 0.0


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int, m_buf=None, v_buf=None) -> "AdamState":
        m = np.zeros(n, dtype=np.float64) if m_buf is None else m_buf
        v = np.zeros(n, dtype=np.float64) if v_buf is None else v_buf
        m[:] = 0.0
        v[:] = 0.0
        return cls(m=m, v=v)


def adam_step(flat_params: np.ndarray, grad: np.ndarray, state: AdamState,
              cfg: GrpoConfig) -> np.ndarray:
    """One bias-corrected Adam step, in place on flat_params (float32)."""
    g = np.asarray(grad, dtype=np.float64)
    state.step += 1
    state.m *= cfg.beta1
    state.m += (1.0 - cfg.beta1) * g
    state.v *= cfg.beta2
    state.v += (1.0 - cfg.beta2) * (g * g)
    m_hat = state.m / (1.0 - cfg.beta1 ** state.step)
    v_hat = state.v / (1.0 - cfg.beta2 ** state.step)
    update = flat_params.astype(np.float64) - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.opt_eps)
    flat_params[:] = update.astype(np.float32)
    return flat_params


@dataclass
class UpdateStats:
    version: int
    loss: float
    mean_ratio: float
    clip_fraction: float
    grad_norm: float
    mean_reward: float
    n_traj: int
    n_groups: int
    n_chunks: int
    quarantined: int = 0
    group_ids: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "version": self.version, "loss": self.loss,
            "mean_ratio": self.mean_ratio, "clip_fraction": self.clip_fraction,
            "grad_norm": self.grad_norm, "mean_reward": self.mean_reward,
            "n_traj": self.n_traj, "n_groups": self.n_groups,
            "n_chunks": self.n_chunks, "quarantined": self.quarantined,
        }


def _ordered(batches) -> list[GroupBatch]:
    return sorted(batches, key=lambda b: b.group_id)


def _log_prob_f64(params: PolicyParams, obs2d: np.ndarray,
                  acts2d: np.ndarray) -> np.ndarray:
    """Reference joint log-density, float64 end to end (no shared kernels)."""
    x = obs2d.astype(np.float64)
    hidden = np.tanh(x @ params.w1.T.astype(np.float64)
                     + params.b1.astype(np.float64))
    mu = hidden @ params.w2.T.astype(np.float64) + params.b2.astype(np.float64)
    s = params.log_std.astype(np.float64)
    eps = (acts2d.astype(np.float64) - mu) * np.exp(-s)
    d = mu.shape[1]
    return (-0.5 * eps * eps - s).sum(axis=1) - 0.5 * np.log(2.0 * np.pi) * d


def grpo_loss(params: PolicyParams, batches, cfg: GrpoConfig) -> float:
    """Scalar surrogate loss via an independent float64 path (no shared
    kernels); this is the function the finite-difference oracle
    differentiates."""
    cfg.validate()
    batches = _ordered(batches)
    n_traj = sum(b.g for b in batches)
    total = 0.0
    for batch in batches:
        advs = group_advantages(batch, cfg)
        weight = 1.0 / (n_traj * batch.n_chunks)
        for i in range(batch.g):
            lp_now = _log_prob_f64(params, batch.obs[i], batch.actions[i])
            for c in range(batch.n_chunks):
                rho = float(np.exp(lp_now[c] - float(batch.behavior_log_prob[i, c])))
                contrib, _ = clipped_surrogate(rho, float(advs[i]), cfg.clip_eps)
                total += weight * contrib
                if cfg.kl_coeff > 0.0:
                    diff = lp_now[c] - float(batch.behavior_log_prob[i, c])
                    total += weight * 0.5 * cfg.kl_coeff * diff * diff
    return total


def grpo_grad(params: PolicyParams, batches, cfg: GrpoConfig,
              out_grad: np.ndarray | None = None):
    """Micro-batched loss + gradient accumulation in canonical flat order.

    Returns (loss, grad_sum, stats_dict). grad_sum is the SUM-form gradient
    scaled by 1/(n_traj*C) per chunk term; callers doing data-parallel
    reduction re-scale across workers (see runtime).
    """
    cfg.validate()
    batches = _ordered(batches)
    if not batches:
        raise ConfigError("grpo update needs at least one group")
    n_traj = sum(b.g for b in batches)
    grad = out_grad if out_grad is not None else np.zeros(
        params.n_params, dtype=np.float64)
    grad[:] = 0.0

    entries = []  # (batch, traj index, advantage)
    for batch in batches:
        advs = group_advantages(batch, cfg)
        if not np.isfinite(batch.rewards).all():
            raise GrpoAbort(batch.group_id, "non-finite reward")
        for i in range(batch.g):
            entries.append((batch, i, float(advs[i])))

    total_loss = 0.0
    ratio_sum = 0.0
    clip_count = 0
    chunk_count = 0
    for s in range(0, len(entries), cfg.micro_batch):
        chunk_entries = entries[s:s + cfg.micro_batch]
        obs_rows = []
        act_rows = []
        coeffs = []
        for batch, i, adv in chunk_entries:
            weight = 1.0 / (n_traj * batch.n_chunks)
            lp_now = policy_mod.log_prob_of(params, batch.obs[i], batch.actions[i])
            blp = batch.behavior_log_prob[i].astype(np.float64)
            if not np.isfinite(lp_now).all():
                raise GrpoAbort(batch.group_id, "non-finite log-prob")
            rhos = np.exp(lp_now - blp)
            if not np.isfinite(rhos).all():
                raise GrpoAbort(batch.group_id, "non-finite importance ratio")
            for c in range(batch.n_chunks):
                rho = float(rhos[c])
                contrib, d_drho = clipped_surrogate(rho, adv, cfg.clip_eps)
                coeff = weight * d_drho * rho
                loss_term = weight * contrib
                if cfg.kl_coeff > 0.0:
                    diff = float(lp_now[c] - blp[c])
                    loss_term += weight * 0.5 * cfg.kl_coeff * diff * diff
                    coeff += weight * cfg.kl_coeff * diff
                total_loss += loss_term
                ratio_sum += rho
                chunk_count += 1
                if d_drho == 0.0:
                    clip_count += 1
                obs_rows.append(batch.obs[i, c])
                act_rows.append(batch.actions[i, c])
                coeffs.append(coeff)
        policy_mod.backward_batch(
            params, np.stack(obs_rows), np.stack(act_rows),
            np.asarray(coeffs, dtype=np.float64), grad,
        )

    if not np.isfinite(total_loss) or not np.isfinite(grad).all():
        raise GrpoAbort(batches[0].group_id, "non-finite loss or gradient")
    stats = {
        "loss": float(total_loss),
        "mean_ratio": ratio_sum / max(chunk_count, 1),
        "clip_fraction": clip_count / max(chunk_count, 1),
        "n_traj": n_traj,
        "n_groups": len(batches),
        "n_chunks": chunk_count,
        "mean_reward": float(np.mean([b.rewards.mean() for b in batches])),
        "group_ids": [b.group_id for b in batches],
    }
    return float(total_loss), grad, stats


def clip_grad_norm(grad: np.ndarray, max_norm: float | None) -> float:
    norm = float(np.sqrt((grad * grad).sum()))
    if max_norm is not None and norm > max_norm > 0:
        grad *= max_norm / norm
    return norm


def grpo_update(params: PolicyParams, batches, cfg: GrpoConfig,
                adam: AdamState, version: int):
    """One full update: grad, optional norm clip, Adam. Returns
    (new PolicyParams, UpdateStats) with version incremented by 1."""
    loss, grad, stats = grpo_grad(params, batches, cfg)
    norm = clip_grad_norm(grad, cfg.max_grad_norm)
    flat = policy_mod.flatten(params)
    adam_step(flat, grad, adam, cfg)
    new_params = policy_mod.unflatten(infer_policy_config(params), flat)
    ustats = UpdateStats(
        version=version + 1, loss=loss, mean_ratio=stats["mean_ratio"],
        clip_fraction=stats["clip_fraction"], grad_norm=norm,
        mean_reward=stats["mean_reward"], n_traj=stats["n_traj"],
        n_groups=stats["n_groups"], n_chunks=stats["n_chunks"],
        group_ids=stats["group_ids"],
    )
    return new_params, ustats


def infer_policy_config(params: PolicyParams) -> policy_mod.PolicyConfig:
    """Recover the structural config implied by a params object."""
    hidden, obs_dim = params.w1.shape
    out_dim = params.w2.shape[0]
    # act_dim=2 fixed by the env; chunk = out_dim/2
    return policy_mod.PolicyConfig(
        obs_dim=obs_dim, hidden=hidden, chunk=out_dim // 2, act_dim=2,
    )
