"""Numba-compiled kernels. Signatures and semantics mirror numpy_backend.

All compute kernels use nogil=True so lanes spinning or crunching here never
hold the GIL; cache=True persists compilation across processes.
"""

from __future__ import annotations

import numpy as np
from numba import njit

LOG_2PI = float(np.log(2.0 * np.pi))


@njit(cache=True, nogil=True)
def spin(iters: int) -> float:
    x = 1.000000123
    s = 0.0
    for _ in range(iters):
        x = x * 1.0000001 + 1e-9
        s += x
        if x > 2.0:
            x -= 1.0
    return s


@njit(cache=True, nogil=True)
def mlp_forward(w1, b1, w2, b2, obs):
    n = obs.shape[0]
    hdim = w1.shape[0]
    odim = w1.shape[1]
    ddim = w2.shape[0]
    out = np.empty((n, ddim), dtype=np.float32)
    hidden = np.empty(hdim, dtype=np.float64)
    for b in range(n):
        for j in range(hdim):
            acc = float(b1[j])
            for k in range(odim):
                acc += float(w1[j, k]) * float(obs[b, k])
            hidden[j] = np.tanh(acc)
        for d in range(ddim):
            acc = float(b2[d])
            for j in range(hdim):
                acc += float(w2[d, j]) * hidden[j]
            out[b, d] = acc
    return out


@njit(cache=True, nogil=True)
def chunk_log_prob(means, log_std, actions):
    n = means.shape[0]
    d = means.shape[1]
    out = np.empty(n, dtype=np.float64)
    for b in range(n):
        acc = -0.5 * LOG_2PI * d
        for k in range(d):
            s = float(log_std[k])
            eps = (float(actions[b, k]) - float(means[b, k])) * np.exp(-s)
            acc += -0.5 * eps * eps - s
        out[b] = acc
    return out


@njit(cache=True, nogil=True)
def policy_backward(w1, b1, w2, b2, log_std, obs, actions, coeffs, out):
    n = obs.shape[0]
    hdim = w1.shape[0]
    odim = w1.shape[1]
    ddim = w2.shape[0]
    off_b1 = hdim * odim
    off_w2 = off_b1 + hdim
    off_b2 = off_w2 + ddim * hdim
    off_ls = off_b2 + ddim

    hidden = np.empty(hdim, dtype=np.float64)
    mu = np.empty(ddim, dtype=np.float64)
    gmu = np.empty(ddim, dtype=np.float64)
    gz = np.empty(hdim, dtype=np.float64)

    for b in range(n):
        c = float(coeffs[b])
        for j in range(hdim):
            acc = float(b1[j])
            for k in range(odim):
                acc += float(w1[j, k]) * float(obs[b, k])
            hidden[j] = np.tanh(acc)
        for d in range(ddim):
            acc = float(b2[d])
            for j in range(hdim):
                acc += float(w2[d, j]) * hidden[j]
            mu[d] = acc
        for d in range(ddim):
            s = float(log_std[d])
            inv_sig = np.exp(-s)
            eps = (float(actions[b, d]) - mu[d]) * inv_sig
            g = c * eps * inv_sig
            gmu[d] = g
            out[off_b2 + d] += g
            out[off_ls + d] += c * (eps * eps - 1.0)
            base = off_w2 + d * hdim
            for j in range(hdim):
                out[base + j] += g * hidden[j]
        for j in range(hdim):
            acc = 0.0
            for d in range(ddim):
                acc += gmu[d] * float(w2[d, j])
            gz[j] = acc * (1.0 - hidden[j] * hidden[j])
        for j in range(hdim):
            g = gz[j]
            out[off_b1 + j] += g
            base = j * odim
            for k in range(odim):
                out[base + k] += g * float(obs[b, k])


@njit(cache=True, nogil=True)
def env_step_chunk(pos, t, actions, dt, horizon):
    n = actions.shape[0]
    h_steps = actions.shape[1]
    fdt = np.float32(dt)
    one = np.float32(1.0)
    applied = np.zeros(n, dtype=np.int64)
    for i in range(n):
        for k in range(h_steps):
            if t[i] >= horizon:
                break
            for d in range(2):
                p = pos[i, d] + actions[i, k, d] * fdt
                if p > one:
                    p = one
                elif p < -one:
                    p = -one
                pos[i, d] = p
            t[i] += 1
            applied[i] += 1
    return applied


@njit(cache=True, nogil=True)
def alloc_trace_run(capacity, is_alloc, size, align, pick, out_ok, out_off):
    n = is_alloc.shape[0]
    free_off = np.empty(n + 2, dtype=np.int64)
    free_size = np.empty(n + 2, dtype=np.int64)
    free_off[0] = 0
    free_size[0] = capacity
    n_free = 1
    live_ids = np.empty(n, dtype=np.int64)
    n_live = 0
    blk_off = np.empty(n, dtype=np.int64)
    blk_size = np.empty(n, dtype=np.int64)

    for i in range(n):
        if is_alloc[i] == 1:
            sz = size[i]
            al = align[i]
            placed = -1
            aligned = np.int64(-1)
            for j in range(n_free):
                fo = free_off[j]
                fs = free_size[j]
                a = ((fo + al - 1) // al) * al
                if a + sz <= fo + fs:
                    placed = j
                    aligned = a
                    break
            if placed < 0:
                out_ok[i] = 0
                out_off[i] = -1
                continue
            fo = free_off[placed]
            fs = free_size[placed]
            lead = aligned - fo
            tail = (fo + fs) - (aligned + sz)
            if lead > 0 and tail > 0:
                free_size[placed] = lead
                for j in range(n_free, placed + 1, -1):
                    free_off[j] = free_off[j - 1]
                    free_size[j] = free_size[j - 1]
                free_off[placed + 1] = aligned + sz
                free_size[placed + 1] = tail
                n_free += 1
            elif lead > 0:
                free_size[placed] = lead
            elif tail > 0:
                free_off[placed] = aligned + sz
                free_size[placed] = tail
            else:
                for j in range(placed, n_free - 1):
                    free_off[j] = free_off[j + 1]
                    free_size[j] = free_size[j + 1]
                n_free -= 1
            out_ok[i] = 1
            out_off[i] = aligned
            live_ids[n_live] = i
            n_live += 1
            blk_off[i] = aligned
            blk_size[i] = sz
        else:
            if n_live == 0:
                out_ok[i] = 2
                out_off[i] = -1
                continue
            idx = np.int64(pick[i] % np.uint64(n_live))
            tgt = live_ids[idx]
            for j in range(idx, n_live - 1):
                live_ids[j] = live_ids[j + 1]
            n_live -= 1
            off = blk_off[tgt]
            sz = blk_size[tgt]
            lo = 0
            hi = n_free
            while lo < hi:
                mid = (lo + hi) // 2
                if free_off[mid] < off:
                    lo = mid + 1
                else:
                    hi = mid
            j = lo
            merge_prev = j > 0 and free_off[j - 1] + free_size[j - 1] == off
            merge_next = j < n_free and off + sz == free_off[j]
            if merge_prev and merge_next:
                free_size[j - 1] += sz + free_size[j]
                for k in range(j, n_free - 1):
                    free_off[k] = free_off[k + 1]
                    free_size[k] = free_size[k + 1]
                n_free -= 1
            elif merge_prev:
                free_size[j - 1] += sz
            elif merge_next:
                free_off[j] = off
                free_size[j] += sz
            else:
                for k in range(n_free, j, -1):
                    free_off[k] = free_off[k - 1]
                    free_size[k] = free_size[k - 1]
                free_off[j] = off
                free_size[j] = sz
                n_free += 1
            out_ok[i] = 3
            out_off[i] = off
    total_free = np.int64(0)
    largest = np.int64(0)
    for j in range(n_free):
        total_free += free_size[j]
        if free_size[j] > largest:
            largest = free_size[j]
    return total_free, largest, np.int64(n_free)


@njit(cache=True, nogil=True)
def alloc_oracle_run(capacity, is_alloc, size, align, pick, out_ok, out_off):
    n = is_alloc.shape[0]
    live_o = np.empty(n, dtype=np.int64)
    live_s = np.empty(n, dtype=np.int64)
    n_intervals = 0
    live_ids = np.empty(n, dtype=np.int64)
    n_live = 0
    blk_off = np.empty(n, dtype=np.int64)
    blk_size = np.empty(n, dtype=np.int64)

    for i in range(n):
        if is_alloc[i] == 1:
            sz = size[i]
            al = align[i]
            prev_end = np.int64(0)
            placed = np.int64(-1)
            for j in range(n_intervals):
                a = ((prev_end + al - 1) // al) * al
                if a + sz <= live_o[j]:
                    placed = a
                    break
                prev_end = live_o[j] + live_s[j]
            if placed < 0:
                a = ((prev_end + al - 1) // al) * al
                if a + sz <= capacity:
                    placed = a
            if placed < 0:
                out_ok[i] = 0
                out_off[i] = -1
                continue
            lo = 0
            hi = n_intervals
            while lo < hi:
                mid = (lo + hi) // 2
                if live_o[mid] < placed:
                    lo = mid + 1
                else:
                    hi = mid
            for j in range(n_intervals, lo, -1):
                live_o[j] = live_o[j - 1]
                live_s[j] = live_s[j - 1]
            live_o[lo] = placed
            live_s[lo] = sz
            n_intervals += 1
            live_ids[n_live] = i
            n_live += 1
            blk_off[i] = placed
            blk_size[i] = sz
            out_ok[i] = 1
            out_off[i] = placed
        else:
            if n_live == 0:
                out_ok[i] = 2
                out_off[i] = -1
                continue
            idx = np.int64(pick[i] % np.uint64(n_live))
            tgt = live_ids[idx]
            for j in range(idx, n_live - 1):
                live_ids[j] = live_ids[j + 1]
            n_live -= 1
            off = blk_off[tgt]
            lo = 0
            hi = n_intervals
            while lo < hi:
                mid = (lo + hi) // 2
                if live_o[mid] < off:
                    lo = mid + 1
                else:
                    hi = mid
            for j in range(lo, n_intervals - 1):
                live_o[j] = live_o[j + 1]
                live_s[j] = live_s[j + 1]
            n_intervals -= 1
            out_ok[i] = 3
            out_off[i] = off
    total_live = np.int64(0)
    for j in range(n_intervals):
        total_live += live_s[j]
    total_free = capacity - total_live
    largest = np.int64(0)
    prev_end = np.int64(0)
    extents = np.int64(0)
    for j in range(n_intervals):
        gap = live_o[j] - prev_end
        if gap > 0:
            extents += 1
            if gap > largest:
                largest = gap
        prev_end = live_o[j] + live_s[j]
    gap = capacity - prev_end
    if gap > 0:
        extents += 1
        if gap > largest:
            largest = gap
    return total_free, largest, extents
