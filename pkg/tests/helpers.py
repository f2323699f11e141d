"""Shared oracle builders used by the unit tests and the acceptance suite."""

from __future__ import annotations

import numpy as np

from dvla.core import Rng
from dvla.grpo import GroupBatch, GrpoConfig, grpo_grad, grpo_loss
from dvla.policy import (
    PolicyConfig,
    flatten,
    policy_init,
    sample_chunk_batch,
    unflatten,
)

GRAD_CHECK_POLICY = PolicyConfig(obs_dim=4, hidden=8, chunk=4, act_dim=2)
GRAD_CHECK_GRPO = GrpoConfig(group_size=4, clip_eps=0.2, adv_epsilon=1e-8,
                             micro_batch=4, lr=1e-3)


def make_gradient_case(seed: int, n_groups: int = 2, n_chunks: int = 2):
    """Seeded (params, batches) pair for gradient checking.

    Behavior log-probs get a +-0.05 jitter in log space so importance
    ratios are genuinely off 1.0 yet stay inside the open interval
    (0.8, 1.2), away from the clip corners where the surrogate has kinks
    and a finite-difference secant would straddle a non-differentiable
    point.
    """
    pcfg = GRAD_CHECK_POLICY
    gcfg = GRAD_CHECK_GRPO
    rng = Rng(seed)
    params = policy_init(pcfg, rng.substream("init"))
    batches = []
    for gid in range(n_groups):
        g = gcfg.group_size
        obs = rng.substream("obs", gid).gaussian2d(
            (g * n_chunks, pcfg.obs_dim)).reshape(g, n_chunks, pcfg.obs_dim)
        acts = np.zeros((g, n_chunks, pcfg.out_dim), dtype=np.float32)
        blp = np.zeros((g, n_chunks), dtype=np.float32)
        for i in range(g):
            _, sampled, lp = sample_chunk_batch(
                params, obs[i], rng.substream("eps", gid, i))
            acts[i] = sampled
            blp[i] = lp.astype(np.float32)
        blp = blp + rng.substream("jit", gid).uniform(
            -0.05, 0.05, blp.size).reshape(blp.shape).astype(np.float32)
        rewards = rng.substream("r", gid).uniform(0, 1, g).astype(np.float32)
        batches.append(GroupBatch(
            group_id=gid, horizon=pcfg.chunk * n_chunks, chunk=pcfg.chunk,
            obs=obs, actions=acts, behavior_log_prob=blp, rewards=rewards,
            behavior_version=0,
        ))
    return params, batches


def central_fd_gradient(params, batches, gcfg: GrpoConfig, h: float = 1e-3):
    """Central finite differences of the float64 surrogate loss.

    Each secant divides by the step actually realized after float32
    parameter quantization, so the probe is exact for the evaluated
    points rather than for the nominal +-h.
    """
    pcfg = GRAD_CHECK_POLICY
    flat = flatten(params).astype(np.float64)
    fd = np.zeros(flat.size)
    for idx in range(flat.size):
        up = flat.copy()
        up[idx] += h
        dn = flat.copy()
        dn[idx] -= h
        p_up = unflatten(pcfg, up.astype(np.float32))
        p_dn = unflatten(pcfg, dn.astype(np.float32))
        delta = (flatten(p_up).astype(np.float64)[idx]
                 - flatten(p_dn).astype(np.float64)[idx])
        fd[idx] = (grpo_loss(p_up, batches, gcfg)
                   - grpo_loss(p_dn, batches, gcfg)) / delta
    return fd


def gradient_check_error(seed: int, h: float = 1e-3) -> float:
    """Worst-component error of grpo_grad against the fd probe, measured
    relative to the gradient's largest component (components near zero
    carry only truncation noise, which has no relative meaning)."""
    params, batches = make_gradient_case(seed)
    _, grad, _ = grpo_grad(params, batches, GRAD_CHECK_GRPO)
    fd = central_fd_gradient(params, batches, GRAD_CHECK_GRPO, h=h)
    return float(np.abs(grad - fd).max() / np.abs(fd).max())


def dyadic_rewards(rng: Rng, g: int) -> np.ndarray:
    """Rewards on a 1/8 grid in [-8, 8]: exactly representable, and with
    group sizes that are powers of two every intermediate mean stays
    exact, making translation invariance a bitwise property."""
    return rng.integers(-64, 65, g).astype(np.float64) / 8.0


try:
    from numba import njit as _njit
except ImportError:  # pragma: no cover - numba is a hard dependency
    def _njit(*a, **k):
        return a[0] if a and callable(a[0]) else (lambda f: f)


@_njit(cache=True)
def brute_force_trace(capacity, is_alloc, size, align, pick, out_ok, out_off):
    """Reference allocator that keeps no free list at all.

    Live blocks sit in two parallel orders (offset for gap walks, birth for
    free picks) and every allocation rescans the gaps between live blocks
    from scratch. Same observable contract as the production trace kernel:
    out_ok 1/0 alloc success/failure, 3/2 free done/skipped; out_off is the
    placed or freed offset (-1 otherwise). Returns (total_free,
    largest_free, extent_count) of the final layout.
    """
    n = is_alloc.shape[0]
    off_sorted = np.empty(n + 1, np.int64)
    sz_sorted = np.empty(n + 1, np.int64)
    id_sorted = np.empty(n + 1, np.int64)
    birth_ids = np.empty(n + 1, np.int64)
    n_live = 0
    for i in range(n):
        if is_alloc[i] == 1:
            sz = size[i]
            al = align[i]
            placed = np.int64(-1)
            ins = n_live
            prev_end = np.int64(0)
            for j in range(n_live):
                aligned = ((prev_end + al - 1) // al) * al
                if aligned + sz <= off_sorted[j]:
                    placed = aligned
                    ins = j
                    break
                prev_end = off_sorted[j] + sz_sorted[j]
            if placed < 0:
                aligned = ((prev_end + al - 1) // al) * al
                if aligned + sz <= capacity:
                    placed = aligned
                    ins = n_live
            if placed < 0:
                out_ok[i] = 0
                out_off[i] = -1
            else:
                for k in range(n_live, ins, -1):
                    off_sorted[k] = off_sorted[k - 1]
                    sz_sorted[k] = sz_sorted[k - 1]
                    id_sorted[k] = id_sorted[k - 1]
                off_sorted[ins] = placed
                sz_sorted[ins] = sz
                id_sorted[ins] = i
                birth_ids[n_live] = i
                n_live += 1
                out_ok[i] = 1
                out_off[i] = placed
        else:
            if n_live == 0:
                out_ok[i] = 2
                out_off[i] = -1
            else:
                idx = np.int64(pick[i] % np.uint64(n_live))
                tgt = birth_ids[idx]
                for k in range(idx, n_live - 1):
                    birth_ids[k] = birth_ids[k + 1]
                for j in range(n_live):
                    if id_sorted[j] == tgt:
                        out_off[i] = off_sorted[j]
                        for k in range(j, n_live - 1):
                            off_sorted[k] = off_sorted[k + 1]
                            sz_sorted[k] = sz_sorted[k + 1]
                            id_sorted[k] = id_sorted[k + 1]
                        break
                n_live -= 1
                out_ok[i] = 3
    total_free = np.int64(capacity)
    largest = np.int64(0)
    extents = np.int64(0)
    prev_end = np.int64(0)
    for j in range(n_live):
        total_free -= sz_sorted[j]
        gap = off_sorted[j] - prev_end
        if gap > 0:
            extents += 1
            if gap > largest:
                largest = gap
        prev_end = off_sorted[j] + sz_sorted[j]
    gap = capacity - prev_end
    if gap > 0:
        extents += 1
        if gap > largest:
            largest = gap
    return total_free, largest, extents
