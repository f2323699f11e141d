"""Pure numpy/python implementations of the kernels.

Semantics (placement decisions, integer arithmetic, float dtypes) match the
numba backend exactly; only speed differs.
"""

from __future__ import annotations

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))

_SPIN_ARR = np.arange(1.0, 513.0)


def spin(iters: int) -> float:
    """Arithmetic busy-loop; returns a value so the work cannot be elided.

    One `iters` unit is one scalar multiply-add in the numba backend; here
    the loop is chunked through numpy to keep per-call overhead sane.
    """
    s = 0.0
    arr = _SPIN_ARR
    chunk = arr.shape[0]
    full, rest = divmod(int(iters), chunk)
    for _ in range(full):
        s += float((arr * 1.0000001).sum())
    if rest:
        s += float((arr[:rest] * 1.0000001).sum())
    return s


def mlp_forward(w1, b1, w2, b2, obs):
    """tanh MLP means for a batch: (B, obs_dim) f32 -> (B, out_dim) f32."""
    hidden = np.tanh(obs @ w1.T + b1)
    return hidden @ w2.T + b2


def chunk_log_prob(means, log_std, actions):
    """Joint diagonal-Gaussian log density per row, accumulated in float64.

    means/actions: (B, D) f32; log_std: (D,) f32; returns (B,) f64.
    """
    mu = means.astype(np.float64)
    s = log_std.astype(np.float64)
    a = actions.astype(np.float64)
    eps = (a - mu) * np.exp(-s)
    d = means.shape[1]
    return (-0.5 * eps * eps - s).sum(axis=1) - 0.5 * LOG_2PI * d


def policy_backward(w1, b1, w2, b2, log_std, obs, actions, coeffs, out):
    """Accumulate sum_b coeffs[b] * d log_prob_b / d params into `out`.

    out is the float64 flat gradient in canonical order
    [W1 row-major, b1, W2 row-major, b2, log_std]. Internals are float64.
    """
    x = obs.astype(np.float64)
    a = actions.astype(np.float64)
    fw1 = w1.astype(np.float64)
    fb1 = b1.astype(np.float64)
    fw2 = w2.astype(np.float64)
    fb2 = b2.astype(np.float64)
    s = log_std.astype(np.float64)
    c = np.asarray(coeffs, dtype=np.float64)

    z = x @ fw1.T + fb1
    h = np.tanh(z)
    mu = h @ fw2.T + fb2
    inv_sig = np.exp(-s)
    eps = (a - mu) * inv_sig

    gmu = c[:, None] * (eps * inv_sig)
    g_w2 = gmu.T @ h
    g_b2 = gmu.sum(axis=0)
    gh = gmu @ fw2
    gz = gh * (1.0 - h * h)
    g_w1 = gz.T @ x
    g_b1 = gz.sum(axis=0)
    g_s = (c[:, None] * (eps * eps - 1.0)).sum(axis=0)

    hdim, odim = w1.shape
    ddim = w2.shape[0]
    i = 0
    out[i:i + hdim * odim] += g_w1.ravel()
    i += hdim * odim
    out[i:i + hdim] += g_b1
    i += hdim
    out[i:i + ddim * hdim] += g_w2.ravel()
    i += ddim * hdim
    out[i:i + ddim] += g_b2
    i += ddim
    out[i:i + ddim] += g_s


def env_step_chunk(pos, t, actions, dt, horizon):
    """Apply up to H clamped sub-steps per env; mutates pos/t, returns applied.

    pos: (n, 2) f32 in/out; t: (n,) i64 in/out; actions: (n, H, 2) f32 already
    clamped to [-1, 1]. Envs at t == horizon stop early (chunk truncation).
    """
    n, h_steps, _ = actions.shape
    fdt = np.float32(dt)
    applied = np.zeros(n, dtype=np.int64)
    for k in range(h_steps):
        live = t < horizon
        if not live.any():
            break
        p = pos[live] + actions[live, k, :] * fdt
        np.clip(p, np.float32(-1.0), np.float32(1.0), out=p)
        pos[live] = p
        t[live] += 1
        applied[live] += 1
    return applied


def _align_up(off: int, align: int) -> int:
    return ((off + align - 1) // align) * align


def alloc_trace_run(capacity, is_alloc, size, align, pick, out_ok, out_off):
    """Run an alloc/free trace against a first-fit free-list arena.

    is_alloc[i]=1: first-fit allocate size[i] at alignment align[i].
    is_alloc[i]=0: free the (pick[i] mod live_count)'th oldest live block
    (no-op when nothing is live).

    out_ok: 1/0 alloc success/failure, 3 free done, 2 free skipped.
    out_off: placed offset for allocs (-1 on failure), freed offset for frees.
    Returns (total_free, largest_free, extent_count) of the final free list.
    """
    n = is_alloc.shape[0]
    free_off = [0]
    free_size = [int(capacity)]
    live_ids: list[int] = []
    live_off = {}
    live_size = {}
    for i in range(n):
        if is_alloc[i]:
            sz = int(size[i])
            al = int(align[i])
            placed = -1
            for j in range(len(free_off)):
                fo = free_off[j]
                fs = free_size[j]
                aligned = _align_up(fo, al)
                if aligned + sz <= fo + fs:
                    placed = j
                    break
            if placed < 0:
                out_ok[i] = 0
                out_off[i] = -1
                continue
            fo = free_off[placed]
            fs = free_size[placed]
            aligned = _align_up(fo, al)
            lead = aligned - fo
            tail = (fo + fs) - (aligned + sz)
            if lead > 0 and tail > 0:
                free_size[placed] = lead
                free_off.insert(placed + 1, aligned + sz)
                free_size.insert(placed + 1, tail)
            elif lead > 0:
                free_size[placed] = lead
            elif tail > 0:
                free_off[placed] = aligned + sz
                free_size[placed] = tail
            else:
                free_off.pop(placed)
                free_size.pop(placed)
            out_ok[i] = 1
            out_off[i] = aligned
            live_ids.append(i)
            live_off[i] = aligned
            live_size[i] = sz
        else:
            if not live_ids:
                out_ok[i] = 2
                out_off[i] = -1
                continue
            idx = int(pick[i]) % len(live_ids)
            tgt = live_ids.pop(idx)
            off = live_off.pop(tgt)
            sz = live_size.pop(tgt)
            lo = 0
            hi = len(free_off)
            while lo < hi:
                mid = (lo + hi) // 2
                if free_off[mid] < off:
                    lo = mid + 1
                else:
                    hi = mid
            j = lo
            merge_prev = j > 0 and free_off[j - 1] + free_size[j - 1] == off
            merge_next = j < len(free_off) and off + sz == free_off[j]
            if merge_prev and merge_next:
                free_size[j - 1] += sz + free_size[j]
                free_off.pop(j)
                free_size.pop(j)
            elif merge_prev:
                free_size[j - 1] += sz
            elif merge_next:
                free_off[j] = off
                free_size[j] += sz
            else:
                free_off.insert(j, off)
                free_size.insert(j, sz)
            out_ok[i] = 3
            out_off[i] = off
    total_free = sum(free_size)
    largest = max(free_size) if free_size else 0
    return total_free, largest, len(free_off)


def alloc_oracle_run(capacity, is_alloc, size, align, pick, out_ok, out_off):
    """Brute-force reference allocator: recompute gaps from the sorted live
    set on every alloc instead of maintaining a free list.

    Same trace semantics and outputs as alloc_trace_run.
    """
    n = is_alloc.shape[0]
    live: list[tuple[int, int]] = []  # (offset, size), address-sorted
    live_ids: list[int] = []
    id_alloc = {}
    for i in range(n):
        if is_alloc[i]:
            sz = int(size[i])
            al = int(align[i])
            prev_end = 0
            placed = -1
            for off, lsz in live:
                aligned = _align_up(prev_end, al)
                if aligned + sz <= off:
                    placed = aligned
                    break
                prev_end = off + lsz
            if placed < 0:
                aligned = _align_up(prev_end, al)
                if aligned + sz <= capacity:
                    placed = aligned
            if placed < 0:
                out_ok[i] = 0
                out_off[i] = -1
                continue
            lo = 0
            hi = len(live)
            while lo < hi:
                mid = (lo + hi) // 2
                if live[mid][0] < placed:
                    lo = mid + 1
                else:
                    hi = mid
            live.insert(lo, (placed, sz))
            live_ids.append(i)
            id_alloc[i] = (placed, sz)
            out_ok[i] = 1
            out_off[i] = placed
        else:
            if not live_ids:
                out_ok[i] = 2
                out_off[i] = -1
                continue
            idx = int(pick[i]) % len(live_ids)
            tgt = live_ids.pop(idx)
            entry = id_alloc.pop(tgt)
            live.remove(entry)
            out_ok[i] = 3
            out_off[i] = entry[0]
    total_live = sum(sz for _, sz in live)
    total_free = capacity - total_live
    largest = 0
    prev_end = 0
    for off, lsz in live:
        largest = max(largest, off - prev_end)
        prev_end = off + lsz
    largest = max(largest, capacity - prev_end)
    extents = 0
    prev_end = 0
    for off, lsz in live:
        if off > prev_end:
            extents += 1
        prev_end = off + lsz
    if capacity > prev_end:
        extents += 1
    return total_free, largest, extents
