"""Arena memory pools: first-fit free list with coalescing and generations.

Two-pool discipline: long-lived model state (params, gradients, optimizer
moments) lives in a ModelCompute pool; epoch-scoped environment scratch
(observation padding, transfer staging) lives in an EnvAux pool that is reset
wholesale at epoch boundaries. A UnifiedBaseline pool exists to demonstrate
the cross-fragmentation the split prevents. Pools back host memory only.
"""

from __future__ import annotations

import itertools
from bisect import bisect_left
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernels
from .core import ConfigError, UsageError


class PoolKind(Enum):
    MODEL_COMPUTE = "model_compute"
    ENV_AUX = "env_aux"
    UNIFIED_BASELINE = "unified_baseline"


class AllocFailure(Exception):
    """No free extent fits the request; the caller decides the fallback."""

    def __init__(self, kind: PoolKind, size: int, align: int):
        super().__init__(f"{kind.value} pool cannot place {size} bytes @align {align}")
        self.kind = kind
        self.size = size
        self.align = align


class PoolUsageError(UsageError):
    """Double free, stale generation, or lifecycle misuse."""


@dataclass(frozen=True)
class PoolHandle:
    pool_id: int
    offset: int
    size: int
    generation: int
    serial: int


@dataclass(frozen=True)
class PoolStats:
    live_bytes: int
    total_free: int
    largest_free_block: int
    fragmentation: float  # 1 - largest/total_free; 0 when total_free == 0
    failed_allocs: int
    alloc_count: int
    free_count: int
    churn_bytes: int
    generation: int


def _align_up(off: int, align: int) -> int:
    return ((off + align - 1) // align) * align


_pool_ids = itertools.count(1)


class Pool:
    """Single-owner arena; not shared across lanes."""

    def __init__(self, kind: PoolKind, capacity: int):
        if capacity <= 0:
            raise ConfigError(f"pool capacity must be > 0, got {capacity}")
        self.kind = kind
        self.capacity = int(capacity)
        self.pool_id = next(_pool_ids)
        self.generation = 0
        self.data = np.zeros(self.capacity, dtype=np.uint8)
        self._free_off = [0]
        self._free_size = [self.capacity]
        self._live: dict[int, PoolHandle] = {}
        self._serials = itertools.count(1)
        self.alloc_count = 0
        self.free_count = 0
        self.failed_allocs = 0
        self.churn_bytes = 0

    def alloc(self, size: int, align: int = 1) -> PoolHandle:
        """First-fit allocate; raises AllocFailure when nothing fits."""
        if size <= 0:
            raise ConfigError(f"alloc size must be > 0, got {size}")
        if align < 1 or (align & (align - 1)) != 0:
            raise ConfigError(f"align must be a power of two, got {align}")
        fo_list = self._free_off
        fs_list = self._free_size
        for j in range(len(fo_list)):
            fo = fo_list[j]
            fs = fs_list[j]
            aligned = _align_up(fo, align)
            if aligned + size <= fo + fs:
                lead = aligned - fo
                tail = (fo + fs) - (aligned + size)
                if lead > 0 and tail > 0:
                    fs_list[j] = lead
                    fo_list.insert(j + 1, aligned + size)
                    fs_list.insert(j + 1, tail)
                elif lead > 0:
                    fs_list[j] = lead
                elif tail > 0:
                    fo_list[j] = aligned + size
                    fs_list[j] = tail
                else:
                    fo_list.pop(j)
                    fs_list.pop(j)
                handle = PoolHandle(
                    pool_id=self.pool_id, offset=aligned, size=size,
                    generation=self.generation, serial=next(self._serials),
                )
                self._live[handle.serial] = handle
                self.alloc_count += 1
                self.churn_bytes += size
                return handle
        self.failed_allocs += 1
        raise AllocFailure(self.kind, size, align)

    def free(self, handle: PoolHandle) -> None:
        if handle.pool_id != self.pool_id:
            raise PoolUsageError(f"handle {handle} belongs to another pool")
        if handle.generation != self.generation:
            raise PoolUsageError(
                f"stale handle {handle}: generation {handle.generation} != "
                f"{self.generation}"
            )
        if self._live.pop(handle.serial, None) is None:
            raise PoolUsageError(f"double free of {handle}")
        self._insert_free(handle.offset, handle.size)
        self.free_count += 1

    def _insert_free(self, off: int, size: int) -> None:
        j = bisect_left(self._free_off, off)
        merge_prev = j > 0 and self._free_off[j - 1] + self._free_size[j - 1] == off
        merge_next = j < len(self._free_off) and off + size == self._free_off[j]
        if merge_prev and merge_next:
            self._free_size[j - 1] += size + self._free_size[j]
            self._free_off.pop(j)
            self._free_size.pop(j)
        elif merge_prev:
            self._free_size[j - 1] += size
        elif merge_next:
            self._free_off[j] = off
            self._free_size[j] += size
        else:
            self._free_off.insert(j, off)
            self._free_size.insert(j, size)

    def epoch_reset(self) -> None:
        """Invalidate every handle and return to one free extent; EnvAux only."""
        if self.kind is not PoolKind.ENV_AUX:
            raise PoolUsageError(
                f"epoch_reset on a {self.kind.value} pool; model allocations "
                "are long-lived by contract"
            )
        self.generation += 1
        self._live.clear()
        self._free_off = [0]
        self._free_size = [self.capacity]

    def view(self, handle: PoolHandle, dtype=np.uint8, count: int | None = None):
        """Zero-copy numpy view of a live allocation."""
        if handle.generation != self.generation or handle.serial not in self._live:
            raise PoolUsageError(f"view of dead or stale handle {handle}")
        item = np.dtype(dtype).itemsize
        n = handle.size // item if count is None else count
        if n * item > handle.size:
            raise PoolUsageError(f"view of {n}x{dtype} exceeds {handle.size} bytes")
        return self.data[handle.offset:handle.offset + n * item].view(dtype)

    def stats(self) -> PoolStats:
        total_free = sum(self._free_size)
        largest = max(self._free_size) if self._free_size else 0
        frag = 0.0 if total_free == 0 else 1.0 - largest / total_free
        return PoolStats(
            live_bytes=self.capacity - total_free,
            total_free=total_free,
            largest_free_block=largest,
            fragmentation=frag,
            failed_allocs=self.failed_allocs,
            alloc_count=self.alloc_count,
            free_count=self.free_count,
            churn_bytes=self.churn_bytes,
            generation=self.generation,
        )

    def run_trace(self, is_alloc, size, align, pick):
        """Batched trace through the backend kernel (same first-fit policy
        as the single-op path; equivalence is property-tested)."""
        n = len(is_alloc)
        out_ok = np.zeros(n, dtype=np.uint8)
        out_off = np.zeros(n, dtype=np.int64)
        final = kernels.alloc_trace_run(
            self.capacity,
            np.ascontiguousarray(is_alloc, dtype=np.uint8),
            np.ascontiguousarray(size, dtype=np.int64),
            np.ascontiguousarray(align, dtype=np.int64),
            np.ascontiguousarray(pick, dtype=np.uint64),
            out_ok, out_off,
        )
        return out_ok, out_off, tuple(int(x) for x in final)


def pool_create(kind: PoolKind, capacity: int) -> Pool:
    return Pool(kind, capacity)


def random_workload(seed: int, n_ops: int, capacity: int):
    """Deterministic random alloc/free trace arrays for oracle equivalence.

    Free targets are resolved inside the allocators (pick mod live count on a
    birth-ordered live list) so generation stays a pure array transform.
    """
    gen = np.random.Generator(np.random.Philox(key=seed))
    is_alloc = (gen.random(n_ops) < 0.6).astype(np.uint8)
    # log-uniform sizes 16..4096
    size = np.exp(gen.uniform(np.log(16), np.log(4096), n_ops)).astype(np.int64)
    align = np.choose(gen.integers(0, 4, n_ops), [1, 8, 64, 256]).astype(np.int64)
    pick = gen.integers(0, 1 << 63, n_ops).astype(np.uint64)
    return is_alloc, size, align, pick


def churn_script(n_rounds: int = 7):
    """Scripted interleaving of epoch-scoped scratch churn with long-lived
    model-block growth, ending in one model-sized request.

    Returns (ops, model_request) where ops is a list of
    ("alloc_scratch", size) | ("free_scratch", birth_index) |
    ("alloc_model", size) events with deterministic sizes. Each round takes
    one large scratch buffer (strictly growing, so first-fit cannot recycle
    an earlier round's hole), some ephemeral small scratch, and one model
    block of matching size; the previous round's large buffer is then
    released. In one unified pool the model blocks land between consecutive
    scratch extents and pin every hole, so the final request fails with
    roughly half the pool free. Under the dual-pool split the scratch holes
    coalesce freely in their own arena and the model pool packs densely, so
    the same request succeeds.
    """
    ops: list[tuple] = []
    birth = 0
    prev_big = None
    for r in range(n_rounds):
        big = 104448 + 2048 * r
        ops.append(("alloc_scratch", big))
        big_birth = birth
        birth += 1
        if r >= 2:
            # ephemeral small scratch; lands inside an earlier hole and is
            # released the same round, so the end-state layout is unmoved
            for small in (3072, 5120):
                ops.append(("alloc_scratch", small))
                birth += 1
            ops.append(("alloc_model", big))
            ops.append(("free_scratch", birth - 2))
            ops.append(("free_scratch", birth - 1))
        else:
            ops.append(("alloc_model", big))
        if prev_big is not None:
            ops.append(("free_scratch", prev_big))
        prev_big = big_birth
    ops.append(("free_scratch", prev_big))
    return ops, 131072


UNIFIED_CAPACITY = (1 << 20) + (1 << 19)  # == model + env, a fair split
MODEL_CAPACITY = 1 << 20
ENV_CAPACITY = 1 << 19


def run_churn(unified: bool):
    """Run the scripted churn; returns (model_request_failed, stats per pool)."""
    if unified:
        model_pool = scratch_pool = Pool(PoolKind.UNIFIED_BASELINE, UNIFIED_CAPACITY)
    else:
        model_pool = Pool(PoolKind.MODEL_COMPUTE, MODEL_CAPACITY)
        scratch_pool = Pool(PoolKind.ENV_AUX, ENV_CAPACITY)
    ops, final_request = churn_script()
    scratch_handles: dict[int, PoolHandle] = {}
    birth = 0
    for op in ops:
        if op[0] == "alloc_scratch":
            try:
                scratch_handles[birth] = scratch_pool.alloc(op[1], align=64)
            except AllocFailure:
                pass
            birth += 1
        elif op[0] == "free_scratch":
            h = scratch_handles.pop(op[1], None)
            if h is not None:
                scratch_pool.free(h)
        else:
            try:
                model_pool.alloc(op[1], align=256)
            except AllocFailure:
                pass
    failed = False
    try:
        model_pool.alloc(final_request, align=256)
    except AllocFailure:
        failed = True
    stats = {"model": model_pool.stats()}
    if not unified:
        stats["env"] = scratch_pool.stats()
    return failed, stats
