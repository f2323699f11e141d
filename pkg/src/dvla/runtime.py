"""The live four-lane execution engine.

Lane A samples fixed-horizon epochs with its installed snapshot; Lane B
receives broadcast snapshots and stages them; Lane C consumes trajectory
groups from the bounded data channel and trains; Lane D broadcasts each new
version on the weight control plane. A dedicated serialized loop provides
the synchronous alternation baseline (not async-with-limit-0, so the two
schedulers can be compared honestly).

Costs come from the same model the simulator uses. In virtual-time mode a
burn advances the lane clock and cross-lane interactions propagate causal
timestamps through the channels; in busy mode a burn spins the CPU in short
quanta, re-reading the slot-group load each quantum so co-resident lanes
slow each other down the way the contention model says they should.

Coordination is exactly three primitives: the bounded data channel
(backpressure), the latest-wins weight mailbox, and the two-ended staleness
gate (sampler end: version frontier minus installed version must not exceed
the limit; trainer end: a new version may not be published while a sampler
is mid-epoch on weights older than the new version minus the limit).
"""

from __future__ import annotations

import bisect
import hashlib
import logging
import math
import threading
import time
import queue as queue_mod
from collections import deque
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernels, wire
from .config import RunConfig, link_profile
from .core import ConfigError, ParamSnapshot, Rng, mix64, snapshot_from_params
from .env import ReachEnv
from .grpo import AdamState, GroupBatch, GrpoAbort, adam_step, clip_grad_norm, grpo_grad
from .planes import (Channel, ChannelClosed, ControlPlane, Plane, RunAborted,
                     Transport, TransportMode)
from .policy import flatten, policy_init, sample_chunk_batch, unflatten
from .pools import Pool, PoolKind

log = logging.getLogger("dvla.runtime")

_QUANTUM_US = 200.0


class LaneId(Enum):
    SAMPLER = "Sampler"
    WEIGHT_RECV = "WeightRecv"
    TRAINER = "Trainer"
    WEIGHT_DIST = "WeightDist"


class RunMode(Enum):
    SYNC_ALTERNATING = "sync"
    ASYNC_SWIMLANE = "async"


class RunAbort(RuntimeError):
    """Run-level failure: watchdog timeout or a poisoned update."""

    def __init__(self, reason: str, lane: str = "", epoch: int = -1,
                 lane_states: dict | None = None):
        self.reason = reason
        self.lane = lane
        self.epoch = epoch
        self.lane_states = lane_states or {}
        super().__init__(
            f"{reason} (lane={lane or 'n/a'}, epoch={epoch}); "
            f"lanes: {self.lane_states}")


# ------------------------------------------------------------ lane plumbing

_spin_rate = [0.0]  # calibrated spin iterations per microsecond


def _calibrate_spin() -> float:
    if _spin_rate[0] > 0:
        return _spin_rate[0]
    kernels.spin(50_000)
    iters = 400_000
    best = 0.0
    for _ in range(3):
        t0 = time.perf_counter()
        kernels.spin(iters)
        dt = time.perf_counter() - t0
        best = max(best, iters / max(dt * 1e6, 1e-3))
    _spin_rate[0] = max(best, 100.0)
    return _spin_rate[0]


class SlotDomain:
    """A contention domain: the physical slots of one or more groups."""

    def __init__(self, key):
        self.key = key
        self._n = 0
        self._lock = threading.Lock()

    def enter(self):
        with self._lock:
            self._n += 1

    def leave(self):
        with self._lock:
            self._n -= 1

    def active(self) -> int:
        with self._lock:
            return max(1, self._n)


class Monitor:
    """Lane heartbeat registry; the watchdog aborts silent runs."""

    def __init__(self, abort: threading.Event):
        self.abort = abort
        self._lock = threading.Lock()
        self._lanes: dict = {}
        self.abort_reason: str | None = None
        self.abort_lane = ""
        self.abort_epoch = -1

    def beat(self, lane: str, state: str | None = None):
        with self._lock:
            prev = self._lanes.get(lane)
            self._lanes[lane] = (time.perf_counter(),
                                 state if state is not None else
                                 (prev[1] if prev else "run"))

    def fail(self, reason: str, lane: str, epoch: int):
        with self._lock:
            if self.abort_reason is None:
                self.abort_reason = reason
                self.abort_lane = lane
                self.abort_epoch = epoch
        self.abort.set()

    def dump(self) -> dict:
        with self._lock:
            now = time.perf_counter()
            return {lane: f"{state} (last beat {now - ts:.2f}s ago)"
                    for lane, (ts, state) in self._lanes.items()}

    def stale_lanes(self, timeout: float) -> list:
        with self._lock:
            now = time.perf_counter()
            return [lane for lane, (ts, state) in self._lanes.items()
                    if state != "done" and now - ts > timeout]


class LaneClock:
    """Virtual mode: accumulate modeled cost. Busy mode: really spin."""

    def __init__(self, virtual: bool, monitor: Monitor, lane: str):
        self.virtual = virtual
        self.monitor = monitor
        self.lane = lane
        self.now_v = 0.0
        self.busy = 0.0
        self.on_advance = None  # progress watermark hook (virtual mode)

    def time(self) -> float:
        return self.now_v if self.virtual else time.perf_counter()

    def chan_now(self):
        return self.now_v if self.virtual else None

    def fold(self, stamp: float):
        """Advance the virtual clock past an event stamp."""
        if stamp > self.now_v:
            self.now_v = stamp
        if self.on_advance is not None:
            self.on_advance(self.now_v)

    def burn(self, us: float, domain: SlotDomain, static_factor: int = 1):
        if us <= 0:
            return
        if self.virtual:
            self.now_v += us * static_factor * 1e-6
            if self.on_advance is not None:
                self.on_advance(self.now_v)
            self.monitor.beat(self.lane)
            return
        rate = _calibrate_spin()
        domain.enter()
        try:
            remaining = us
            while remaining > 0.5:
                if self.monitor.abort.is_set():
                    raise RunAborted(f"abort during burn on {self.lane}")
                k = domain.active()
                q = min(_QUANTUM_US, remaining * k)
                kernels.spin(int(q * rate))
                remaining -= q / k
                self.monitor.beat(self.lane)
        finally:
            domain.leave()


_VEPS = 1e-12


class VersionBoard:
    """Shared counters implementing the two-ended staleness gate.

    frontier = published version + batches produced but not yet processed;
    the sampler may start an epoch iff frontier - installed <= limit. The
    trainer may publish V+1 iff the sampler is between epochs or has
    installed at least V+1 - limit.

    Virtual-clock runs need lane timestamps that do not depend on how the OS
    happens to schedule the threads. The trainer therefore deposits every
    published snapshot with its (publish, delivery) stamps, and the gate
    replays those events in stamp order: the latest publish overwrites an
    undelivered older one exactly as the latest-wins mailbox would, installs
    happen when the surviving delivery stamp passes, and an admission is
    committed only once the trainer's own clock watermark has moved past it
    (any event the trainer emits later must carry a later stamp, so committed
    outcomes are final). The trainer-side pacing wait mirrors this with
    boundary windows and install-crossing events guarded by the sampler's
    watermark.
    """

    def __init__(self, limit: int, monitor: Monitor, snap0: ParamSnapshot):
        self.limit = limit
        self.monitor = monitor
        self._c = threading.Condition()
        self.version = 0
        self.produced = 0
        self.processed = 0
        self.installed = 0
        self.snap = snap0
        self.at_boundary = True
        self.boundary_stamp = 0.0
        self.staleness_max = 0
        self.regressions_ignored = 0
        self.epoch_meta: dict = {}
        # virtual-time event records
        self.delivered: dict = {}  # version -> (pub stamp, avail stamp, snap)
        self.pub_stamps: list = []
        self.q_stamps: list = []
        self.install_events: list = []  # (version, effect stamp), chronological
        self.windows: list = [[0.0, None]]  # boundary intervals [start, close)
        self.sampler_state = "boundary"  # boundary | rolling | done
        self.sampler_mark = 0.0
        self.trainer_mark = 0.0
        self.trainer_done = False
        self.gate_curfew: float | None = None  # provisional window close
        self.starved_probe = None  # () -> trainer blocked on empty channel

    # ---- clock watermarks (virtual mode)
    def note_sampler(self, now: float):
        with self._c:
            if now > self.sampler_mark:
                self.sampler_mark = now
                self._c.notify_all()

    def note_trainer(self, now: float):
        with self._c:
            if now > self.trainer_mark:
                self.trainer_mark = now
                self._c.notify_all()

    def mark_trainer_done(self):
        with self._c:
            self.trainer_done = True
            self._c.notify_all()

    def mark_sampler_done(self, clock: LaneClock):
        with self._c:
            self.sampler_state = "done"
            self.at_boundary = True
            if clock.now_v > self.sampler_mark:
                self.sampler_mark = clock.now_v
            self._c.notify_all()

    # ---- weight distribution side
    def deposit(self, snap: ParamSnapshot, pub: float, avail: float):
        with self._c:
            if snap.version <= self.installed or snap.version in self.delivered:
                self.regressions_ignored += 1
                log.warning("ignoring stale weight snapshot v%d (installed v%d)",
                            snap.version, self.installed)
                return
            self.delivered[snap.version] = (pub, avail, snap)
            self._c.notify_all()

    # ---- sampler side
    def boundary(self, clock: LaneClock):
        with self._c:
            self.at_boundary = True
            self.sampler_state = "boundary"
            self.boundary_stamp = clock.now_v
            self.gate_curfew = None
            self.windows.append([clock.now_v, None])
            if clock.now_v > self.sampler_mark:
                self.sampler_mark = clock.now_v
            self._c.notify_all()

    def produce(self, epoch: int, meta: dict):
        with self._c:
            self.epoch_meta[epoch] = meta
            self.produced += 1
            self._c.notify_all()

    def _horizon(self) -> float:
        """Stamp floor for future trainer events. Walk outcomes at or below
        this are final: anything the trainer emits later is stamped later."""
        if self.trainer_done:
            return math.inf
        if self.starved_probe is not None and self.starved_probe():
            # the trainer is blocked on an empty data queue; its next event
            # waits on a batch this sampler has not even started producing
            return math.inf
        return self.trainer_mark

    def _gate_walk(self, b: float):
        """Replay deliveries and quarantines from boundary stamp b.
        Returns (admission stamp | None, installs up to the admission)."""
        inst = self.installed
        evs = []
        for v, (pub, avail, _s) in self.delivered.items():
            if v > inst:
                evs.append((avail, 0, "avail", v))
                evs.append((pub, 1, "pub", v))
        for q in self.q_stamps:
            if q > b + _VEPS:
                evs.append((q, 2, "quar", 0))
        evs.sort()
        n_quar = bisect.bisect_right(self.q_stamps, b + _VEPS)

        def open_at(quar, inst_v):
            return self.produced - quar - inst_v <= self.limit

        pending = None
        ripe = set()
        installs = []
        admit = None
        idx = 0
        # events up to the window start only shape the mailbox state at b
        while idx < len(evs) and evs[idx][0] <= b + _VEPS:
            _t, _p, kind, v = evs[idx]
            if kind == "pub":
                pending = v
            elif kind == "avail":
                ripe.add(v)
            idx += 1
        if pending is not None and pending in ripe:
            inst = pending
            installs.append((pending, b))
            pending = None
        if open_at(n_quar, inst):
            admit = b
        while admit is None and idx < len(evs):
            t_ev, _p, kind, v = evs[idx]
            idx += 1
            if kind == "pub":
                pending = v
                # zero-delay broadcast: delivery lands at the publish stamp
                # itself, and its avail event sorted ahead of this one
                if self.delivered[v][1] <= t_ev + _VEPS:
                    inst = v
                    installs.append((v, t_ev))
                    pending = None
                    if open_at(n_quar, inst):
                        admit = t_ev
            elif kind == "avail":
                if pending == v:
                    inst = v
                    installs.append((v, t_ev))
                    pending = None
                    if open_at(n_quar, inst):
                        admit = t_ev
            else:
                n_quar += 1
                if open_at(n_quar, inst):
                    admit = t_ev
        return admit, installs

    def _commit_installs(self, installs, horizon: float):
        for v, s in installs:
            if s > horizon + _VEPS:
                break
            if v > self.installed:
                self.installed = v
                self.snap = self.delivered[v][2]
                self.install_events.append((v, s))
        for v in [k for k in self.delivered if k <= self.installed]:
            del self.delivered[v]

    def _versions_at(self, t: float) -> int:
        return bisect.bisect_right(self.pub_stamps, t + _VEPS)

    def wait_gate(self, clock: LaneClock):
        """Block until the frontier gate admits the next epoch. Returns
        (snapshot, staleness observed at epoch start)."""
        if not clock.virtual:
            return self._wait_gate_busy(clock)
        with self._c:
            b = clock.now_v
            while True:
                if self.monitor.abort.is_set():
                    raise RunAborted("abort in gate wait")
                admit, installs = self._gate_walk(b)
                horizon = self._horizon()
                self._commit_installs(installs, horizon)
                if admit is not None and admit <= horizon + _VEPS:
                    self.gate_curfew = None
                    self.windows[-1][1] = admit
                    self.at_boundary = False
                    self.sampler_state = "rolling"
                    if admit > self.sampler_mark:
                        self.sampler_mark = admit
                    clock.fold(admit)
                    stal = self._versions_at(admit) - self.installed
                    if stal > self.staleness_max:
                        self.staleness_max = stal
                    self._c.notify_all()
                    return self.snap, stal
                self.gate_curfew = admit
                self.monitor.beat(LaneId.SAMPLER.value, "gate-wait")
                self._c.wait(0.05)

    def _wait_gate_busy(self, clock: LaneClock):
        with self._c:
            while True:
                if self.monitor.abort.is_set():
                    raise RunAborted("abort in gate wait")
                newest = max(self.delivered, default=0)
                if newest > self.installed:
                    self.installed = newest
                    self.snap = self.delivered[newest][2]
                    for v in [k for k in self.delivered if k <= newest]:
                        del self.delivered[v]
                    self._c.notify_all()
                if (self.version + self.produced - self.processed
                        - self.installed) <= self.limit:
                    stal = self.version - self.installed
                    if stal > self.staleness_max:
                        self.staleness_max = stal
                    self.at_boundary = False
                    self.sampler_state = "rolling"
                    return self.snap, stal
                self.monitor.beat(LaneId.SAMPLER.value, "gate-wait")
                self._c.wait(0.05)

    # ---- trainer side
    def _sampler_floor(self) -> float:
        """Lower bound on the stamp of any future sampler event."""
        if self.sampler_state == "done":
            return math.inf
        if self.sampler_state == "rolling":
            return self.sampler_mark
        # at the gate: future events are the uncommitted walk outcomes, or
        # hinge on trainer events that have not happened yet
        admit, installs = self._gate_walk(self.boundary_stamp)
        floor = math.inf
        for v, s in installs:
            if v > self.installed and s < floor:
                floor = s
        if admit is not None and admit < floor:
            floor = admit
        return floor

    def _pacing_staleness(self, next_version: int, t: float) -> int:
        """Versions the mid-epoch sampler would lag behind if next_version
        were published at stamp t (zero when it sits at a boundary)."""
        if self.sampler_state == "done":
            return 0
        for start, close in self.windows[-4:]:
            cl = close if close is not None else math.inf
            if start - _VEPS <= t < cl - _VEPS:
                return 0
        inst_at = 0
        for v, s in self.install_events:
            if s <= t + _VEPS:
                inst_at = v
        return max(0, next_version - inst_at)

    def wait_pacing(self, next_version: int, clock: LaneClock):
        """Block until the sampler is between epochs or fresh enough for
        `next_version` to exist. Folds the admitting state's stamp."""
        if not clock.virtual:
            return self._wait_pacing_busy(next_version, clock)
        req = next_version - self.limit
        with self._c:
            while True:
                if self.monitor.abort.is_set():
                    raise RunAborted("abort in pacing wait")
                now = clock.now_v
                arms = []
                if self.sampler_state == "done":
                    arms.append(now)
                crossed = None
                for v, s in self.install_events:
                    if v >= req:
                        crossed = max(now, s)
                        break
                if crossed is None and self.installed >= req:
                    crossed = now
                if crossed is not None:
                    arms.append(crossed)
                for start, close in self.windows[-4:]:
                    t_arm = max(now, start)
                    cl = close if close is not None else self.gate_curfew
                    if cl is None:
                        if self.sampler_state == "boundary":
                            arms.append(t_arm)
                    elif t_arm < cl - _VEPS:
                        arms.append(t_arm)
                if arms:
                    t_star = min(arms)
                    if t_star <= self._sampler_floor() + _VEPS:
                        contrib = self._pacing_staleness(next_version, t_star)
                        if contrib > self.staleness_max:
                            self.staleness_max = contrib
                        clock.fold(t_star)
                        return
                self.monitor.beat(LaneId.TRAINER.value, "pacing-wait")
                self._c.wait(0.05)

    def _wait_pacing_busy(self, next_version: int, clock: LaneClock):
        with self._c:
            while True:
                if self.monitor.abort.is_set():
                    raise RunAborted("abort in pacing wait")
                if self.sampler_state == "done" or self.at_boundary or \
                        self.installed >= next_version - self.limit:
                    return
                self.monitor.beat(LaneId.TRAINER.value, "pacing-wait")
                self._c.wait(0.05)

    def publish(self, clock: LaneClock):
        with self._c:
            self.version += 1
            self.processed += 1
            if clock.virtual:
                self.pub_stamps.append(clock.now_v)
            elif not self.at_boundary:
                # busy mode tracks publish-time staleness from live state;
                # virtual mode accounts for it at the pacing admission
                self.staleness_max = max(self.staleness_max,
                                         self.version - self.installed)
            self._c.notify_all()
            return self.version

    def quarantine(self, clock: LaneClock):
        with self._c:
            self.processed += 1
            if clock.virtual:
                bisect.insort(self.q_stamps, clock.now_v)
            self._c.notify_all()

    def take_meta(self, epoch: int) -> dict:
        with self._c:
            return self.epoch_meta.pop(epoch)


# ----------------------------------------------------------------- reducer

class GradReducer:
    """Cross-node gradient mean over the inter-node control link.

    Gradients travel as float32 weight-snapshot frames; every node decodes
    every frame in node order and computes the identical 64-bit mean, so the
    replicated optimizer states never diverge. Single-node runs short-circuit
    to a no-op.
    """

    def __init__(self, nodes: int, transport: Transport | None,
                 abort: threading.Event, virtual: bool):
        self.nodes = nodes
        self.transport = transport
        self.abort = abort
        self.virtual = virtual
        self._c = threading.Condition()
        self._rounds: dict = {}  # round -> {node: (frame, stamp)}
        self._done: dict = {}

    def _send_frames(self, rnd: int, grad: np.ndarray):
        """Encode the gradient once per peer; returns (frame, frame_size)."""
        msg = ParamSnapshot(version=rnd, params=grad.astype(np.float32))
        frame = nbytes = None
        for _ in range(self.nodes - 1):
            frame, nbytes, _delay = self.transport.outbound(msg)
        return frame, nbytes

    def reduce(self, node: int, rnd: int, grad: np.ndarray,
               clock: LaneClock) -> np.ndarray:
        if self.nodes == 1:
            return grad
        frame, nbytes = self._send_frames(rnd, grad)
        with self._c:
            slot = self._rounds.setdefault(rnd, {})
            slot[node] = (frame, clock.now_v)
            self._c.notify_all()
            while len(slot) < self.nodes:
                if self.abort.is_set():
                    raise RunAborted("abort in gradient reduce")
                clock.monitor.beat(clock.lane, "reduce-wait")
                self._c.wait(0.05)
            total = np.zeros(grad.shape[0], dtype=np.float64)
            stamp = 0.0
            for n in range(self.nodes):
                payload, s = slot[n]
                if n == node:
                    msg = wire.decode(payload)
                else:
                    msg = self.transport.inbound(payload)
                total += msg.params.astype(np.float64)
                stamp = max(stamp, s)
            self._done[rnd] = self._done.get(rnd, 0) + 1
            if self._done[rnd] >= self.nodes:
                del self._rounds[rnd]
                del self._done[rnd]
        if self.virtual:
            delay = self.transport.profile.delay_s(nbytes * (self.nodes - 1))
            clock.fold(stamp + delay)
        return total / self.nodes

    def reduce_serial(self, rnd: int, grads: list) -> np.ndarray:
        """Sync-mode path: every node's gradient is already on hand."""
        if self.nodes == 1:
            return grads[0]
        frames = [self._send_frames(rnd, g)[0] for g in grads]
        total = np.zeros(grads[0].shape[0], dtype=np.float64)
        for n, frame in enumerate(frames):
            total += wire.decode(frame).params.astype(np.float64)
        return total / self.nodes


def _membership_exchange(rnd: int, nodes: int, transport: Transport):
    """Coordinator metadata per update epoch: node 0 announces membership,
    peers acknowledge; all frames transit the inter-node control link."""
    members = ",".join(str(i) for i in range(nodes)).encode()
    meta = wire.MetadataMsg(entries=(("members", members),
                                     ("epoch", str(rnd).encode())))
    for peer in range(1, nodes):
        payload = transport.outbound(meta)[0]
        transport.inbound(payload)
        ack = transport.outbound(wire.AckMsg(epoch_id=rnd))[0]
        transport.inbound(ack)


# ----------------------------------------------------------------- workers

class SamplerWorker:
    """Owns the env farm and the staging pool; one per node."""

    def __init__(self, cfg: RunConfig, node: int, clock: LaneClock,
                 env_domain: SlotDomain, roll_domain: SlotDomain,
                 env_pool: Pool, roll_factor: int):
        self.cfg = cfg
        self.node = node
        self.clock = clock
        self.env_domain = env_domain
        self.roll_domain = roll_domain
        self.env_pool = env_pool
        self.roll_factor = roll_factor
        g = cfg.groups_per_epoch
        self.env = ReachEnv(cfg.env, seed=mix64(cfg.runtime.seed ^ (node * 0x9E3779B9)),
                            group_layout=(g, cfg.grpo.group_size),
                            group_id_base=node * g)
        self.rng = Rng(mix64(cfg.runtime.seed + 0x5EED))
        self.infer_burn_us = (cfg.env.n_envs * cfg.runtime.t_infer_chunk_us
                              / cfg.plan.rollout_slots)

    def run_epoch(self, epoch: int, snap: ParamSnapshot, poison: bool):
        """One fixed-horizon epoch; returns (messages, meta dict)."""
        cfg = self.cfg
        n = cfg.env.n_envs
        c_chunks = cfg.n_chunks
        out_dim = cfg.policy.out_dim
        params = unflatten(cfg.policy, snap.params, copy=False)
        t0 = self.clock.time()

        h_obs = self.env_pool.alloc(c_chunks * n * cfg.env.obs_dim * 4, align=64)
        h_act = self.env_pool.alloc(c_chunks * n * out_dim * 4, align=64)
        h_blp = self.env_pool.alloc(c_chunks * n * 4, align=64)
        obs_buf = self.env_pool.view(h_obs, np.float32).reshape(c_chunks, n, cfg.env.obs_dim)
        act_buf = self.env_pool.view(h_act, np.float32).reshape(c_chunks, n, out_dim)
        blp_buf = self.env_pool.view(h_blp, np.float32).reshape(c_chunks, n)

        obs = self.env.reset_episode(epoch)
        for c in range(c_chunks):
            obs_buf[c] = obs
            eps_rng = self.rng.substream("eps", self.node, epoch, c)
            means, sampled, lps = sample_chunk_batch(params, obs, eps_rng)
            act_buf[c] = sampled
            blp_buf[c] = lps.astype(np.float32)
            self.clock.burn(self.infer_burn_us, self.roll_domain, self.roll_factor)
            acts = sampled.reshape(n, cfg.policy.chunk, cfg.env.act_dim)
            obs, done, cost_us = self.env.step_chunk(acts)
            self.clock.burn(float(cost_us.max()), self.env_domain, self.roll_factor)
        rewards = self.env.outcomes()
        if poison:
            rewards = rewards.copy()
            rewards[0] = np.nan

        gsz = cfg.grpo.group_size
        groups_per_epoch = self.cfg.groups_per_epoch
        msgs = []
        for gi in range(groups_per_epoch):
            lo, hi = gi * gsz, (gi + 1) * gsz
            gb = GroupBatch(
                group_id=(epoch * self.cfg.topology.nodes + self.node)
                * groups_per_epoch + gi,
                horizon=cfg.env.horizon, chunk=cfg.policy.chunk,
                obs=np.ascontiguousarray(obs_buf[:, lo:hi].transpose(1, 0, 2)),
                actions=np.ascontiguousarray(act_buf[:, lo:hi].transpose(1, 0, 2)),
                behavior_log_prob=np.ascontiguousarray(blp_buf[:, lo:hi].T),
                rewards=rewards[lo:hi].copy(),
                behavior_version=snap.version)
            msgs.append(wire.TrajectoryBatchMsg(policy_version=snap.version,
                                                groups=(gb,)))
        self.env_pool.epoch_reset()
        roll_wall = self.clock.time() - t0
        self.clock.busy += roll_wall
        meta = {"roll_wall": roll_wall, "success_rate": float(np.nanmean(rewards)),
                "behavior_version": snap.version, "epoch": epoch}
        return msgs, meta


class TrainerWorker:
    """Owns parameters, optimizer state, and the model pool; one per node."""

    def __init__(self, cfg: RunConfig, node: int, clock: LaneClock,
                 domain: SlotDomain, model_pool: Pool, reducer: GradReducer,
                 act_factor: int):
        self.cfg = cfg
        self.node = node
        self.clock = clock
        self.domain = domain
        self.pool = model_pool
        self.reducer = reducer
        self.act_factor = act_factor
        p = cfg.policy.n_params
        self.h_flat = model_pool.alloc(p * 4, align=64)
        self.h_m = model_pool.alloc(p * 8, align=64)
        self.h_v = model_pool.alloc(p * 8, align=64)
        self.flat = model_pool.view(self.h_flat, np.float32, count=p)
        init = policy_init(cfg.policy, Rng(cfg.runtime.seed).substream("policy-init"))
        self.flat[:] = flatten(init)
        self.params = unflatten(cfg.policy, self.flat, copy=False)
        self.adam = AdamState.zeros(p, m_buf=model_pool.view(self.h_m, np.float64, count=p),
                                    v_buf=model_pool.view(self.h_v, np.float64, count=p))
        self.version = 0
        self.workers = cfg.runtime.actor_workers
        if cfg.groups_per_update % self.workers != 0:
            raise ConfigError(
                f"actor_workers {self.workers} must divide groups_per_update "
                f"{cfg.groups_per_update}")
        self.train_burn_us = (cfg.groups_per_update * cfg.grpo.group_size
                              * cfg.env.horizon * cfg.runtime.t_train_us
                              / cfg.plan.actor_slots)

    def snapshot(self) -> ParamSnapshot:
        return snapshot_from_params(self.flat, self.version)

    def update(self, batches: list, transport_nodes: int):
        """Gradient, cross-worker and cross-node reduction, Adam step.
        Returns UpdateStats-bearing dict, or raises GrpoAbort for a poisoned
        batch (caller quarantines)."""
        cfg = self.cfg
        t0 = self.clock.time()
        self.clock.burn(self.train_burn_us, self.domain, self.act_factor)
        w = self.workers
        shard = len(batches) // w
        p = cfg.policy.n_params
        total = np.zeros(p, dtype=np.float64)
        loss = 0.0
        agg = {"mean_ratio": 0.0, "clip_fraction": 0.0, "mean_reward": 0.0}
        for rank in range(w):
            part = batches[rank * shard:(rank + 1) * shard]
            l, g, stats = grpo_grad(self.params, part, cfg.grpo)
            total += g
            loss += l / w
            for k in agg:
                agg[k] += stats[k] / w
        total /= w
        total = self.reducer.reduce(self.node, self.version, total, self.clock) \
            if transport_nodes > 1 else total
        norm = clip_grad_norm(total, cfg.grpo.max_grad_norm)
        adam_step(self.flat, total, self.adam, cfg.grpo)
        if not np.isfinite(self.flat).all():
            raise RunAbort("non-finite parameters after update",
                           lane=LaneId.TRAINER.value, epoch=self.version)
        self.version += 1
        wall = self.clock.time() - t0
        self.clock.busy += wall
        return {"version": self.version, "loss": loss, "grad_norm": norm,
                "train_wall": wall, **agg}


# ------------------------------------------------------------------ reports

@dataclass
class EpochReport:
    epoch: int
    policy_version: int
    version_after: int
    rollout_time: float
    actor_time: float
    transfer_time: float
    broadcast_time: float
    step_time: float
    transitions: int
    success_rate: float
    staleness: int
    chunk: int
    end: float

    def to_record(self) -> dict:
        return {
            "kind": "epoch", "epoch": self.epoch,
            "policy_version": self.policy_version,
            "version_after": self.version_after,
            "rollout_time": self.rollout_time, "actor_time": self.actor_time,
            "transfer_time": self.transfer_time,
            "broadcast_time": self.broadcast_time,
            "step_time": self.step_time, "transitions": self.transitions,
            "success_rate": self.success_rate, "staleness": self.staleness,
            "chunk": self.chunk,
        }


@dataclass
class BubbleStats:
    sampler_idle_fraction: float
    trainer_idle_fraction: float
    wall: float
    warmup_dominated: bool


@dataclass
class RunResult:
    mode: str
    reports: list
    update_stats: list
    params: np.ndarray
    counters: dict
    staleness_max: int
    wall: float
    lane_busy: dict
    pool_stats: dict
    config_digest: str
    regressions_ignored: int = 0

    @property
    def params_digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.params).tobytes()).hexdigest()

    def summary(self) -> dict:
        warm = min(len(self.reports) - 1, 1) if self.reports else 0
        post = self.reports[warm:] if len(self.reports) > warm else self.reports
        trans = sum(r.transitions for r in post)
        span = sum(r.step_time for r in post)
        mean = lambda key: (sum(getattr(r, key) for r in post) / len(post)
                            if post else 0.0)
        return {
            "mode": self.mode, "config_digest": self.config_digest,
            "throughput": trans / max(span, 1e-12),
            "rollout_time": mean("rollout_time"),
            "actor_time": mean("actor_time"),
            "transfer_time": mean("transfer_time"),
            "broadcast_time": mean("broadcast_time"),
            "step_time": mean("step_time"),
            "wall": self.wall,
            "staleness_max": self.staleness_max,
        }


def barrier_free_handoff_audit(result: RunResult) -> BubbleStats:
    wall = max(result.wall, 1e-12)
    s_busy = result.lane_busy.get("sampler", 0.0)
    t_busy = result.lane_busy.get("trainer", 0.0)
    return BubbleStats(
        sampler_idle_fraction=max(0.0, 1.0 - s_busy / wall),
        trainer_idle_fraction=max(0.0, 1.0 - t_busy / wall),
        wall=wall,
        warmup_dominated=len(result.reports) <= 1)


# ------------------------------------------------------------------- wiring

class _NodeCtx:
    def __init__(self, cfg: RunConfig, node: int, monitor: Monitor,
                 abort: threading.Event, reducer: GradReducer, domains: dict):
        rt = cfg.runtime
        virtual = rt.virtual_time
        plan = cfg.plan

        def domain_for(component):
            key = (node, tuple(s.slot_id for s in plan.group_of(component).slots))
            if key not in domains:
                domains[key] = SlotDomain(key)
            return domains[key]

        roll_dom = domain_for("rollout")
        act_dom = domain_for("actor")
        env_dom = domain_for("env")
        overlap = 2 if (rt.mode == "async" and act_dom is roll_dom) else 1

        wire_link = link_profile(cfg)
        data_mode = plan.edge_transport("rollout", "actor")
        self.data_tp = Transport(data_mode, Plane.DATA,
                                 profile=wire_link if data_mode is TransportMode.WIRE else None,
                                 name=f"data-n{node}")
        ctrl_mode = plan.edge_transport("actor", "rollout")
        self.ctrl_tp = Transport(ctrl_mode, Plane.CONTROL,
                                 profile=wire_link if ctrl_mode is TransportMode.WIRE else None,
                                 name=f"control-n{node}")
        self.chan = Channel(rt.queue_capacity * cfg.groups_per_epoch,
                            self.data_tp, name=f"data-n{node}", abort_event=abort)
        self.control = ControlPlane(self.ctrl_tp)
        self.mailbox = self.control.subscribe(name=f"weights-n{node}",
                                              abort_event=abort)

        self.model_pool = Pool(PoolKind.MODEL_COMPUTE, cfg.pools.model_capacity)
        self.env_pool = Pool(PoolKind.ENV_AUX, cfg.pools.env_capacity)

        s_clock = LaneClock(virtual, monitor, LaneId.SAMPLER.value)
        t_clock = LaneClock(virtual, monitor, LaneId.TRAINER.value)
        self.sampler = SamplerWorker(cfg, node, s_clock, env_dom, roll_dom,
                                     self.env_pool, overlap)
        self.trainer = TrainerWorker(cfg, node, t_clock, act_dom,
                                     self.model_pool, reducer, overlap)
        self.board = VersionBoard(rt.staleness_limit, monitor,
                                  self.trainer.snapshot())
        self.board.starved_probe = self.chan.consumer_starved
        if virtual:
            s_clock.on_advance = self.board.note_sampler
            t_clock.on_advance = self.board.note_trainer
        self.dist_q: queue_mod.Queue = queue_mod.Queue()
        self.counters = {"produced_groups": 0, "consumed_groups": 0,
                         "quarantined_groups": 0, "quarantined_updates": 0}
        self.reports: list = []
        self.update_stats: list = []
        self.bcast_delay = (wire_link.delay_s(wire.weight_frame_size(cfg.policy.n_params))
                            if ctrl_mode is TransportMode.WIRE else 0.0)


def _epoch_of_group(cfg: RunConfig, group_id: int) -> int:
    return group_id // (cfg.groups_per_epoch * cfg.topology.nodes)


# -------------------------------------------------------------- run drivers

def run(cfg: RunConfig, poison_epochs=frozenset(), metric_writer=None) -> RunResult:
    """Execute a full training run and return reports plus final params.

    poison_epochs is a fault-injection hook for tests: the sampler corrupts
    one reward in those epochs, which the trainer must quarantine.
    """
    cfg.validate()
    abort = threading.Event()
    monitor = Monitor(abort)
    nodes = cfg.topology.nodes
    inter_data = Transport(TransportMode.WIRE, Plane.DATA,
                           profile=cfg.topology.inter_node, name="inter-node-data")
    inter_ctrl = Transport(TransportMode.WIRE, Plane.CONTROL,
                           profile=cfg.topology.inter_node, name="inter-node-control")
    reducer = GradReducer(nodes, inter_ctrl if nodes > 1 else None, abort,
                          cfg.runtime.virtual_time)
    domains: dict = {}
    ctxs = [_NodeCtx(cfg, i, monitor, abort, reducer, domains)
            for i in range(nodes)]

    if cfg.runtime.mode == "sync":
        _run_sync(cfg, ctxs, reducer, inter_ctrl, poison_epochs, monitor)
    else:
        _run_async(cfg, ctxs, reducer, inter_ctrl, poison_epochs, monitor, abort)

    c0 = ctxs[0]
    counters = dict(c0.counters)
    for extra in ctxs[1:]:
        for k, v in extra.counters.items():
            counters[k] += v
    counters.update({
        "updates": c0.trainer.version,
        "data_copies": sum(c.data_tp.copy_counter for c in ctxs),
        "data_bytes": sum(c.data_tp.bytes_counter for c in ctxs),
        "control_copies": sum(c.ctrl_tp.copy_counter for c in ctxs),
        "control_bytes": sum(c.ctrl_tp.bytes_counter for c in ctxs),
        "inter_node_data_copies": inter_data.copy_counter,
        "inter_node_data_bytes": inter_data.bytes_counter,
        "inter_node_control_copies": inter_ctrl.copy_counter,
        "inter_node_control_bytes": inter_ctrl.bytes_counter,
    })
    wall = max(max(c.sampler.clock.time() for c in ctxs),
               max(c.trainer.clock.time() for c in ctxs)) if cfg.runtime.virtual_time \
        else max(getattr(c, "real_wall", 0.0) for c in ctxs)
    lane_busy = {"sampler": sum(c.sampler.clock.busy for c in ctxs) / nodes,
                 "trainer": sum(c.trainer.clock.busy for c in ctxs) / nodes}
    pool_stats = {"model": c0.model_pool.stats().__dict__,
                  "env": c0.env_pool.stats().__dict__}
    result = RunResult(
        mode=cfg.runtime.mode, reports=c0.reports,
        update_stats=c0.update_stats, params=c0.trainer.flat.copy(),
        counters=counters,
        staleness_max=max(c.board.staleness_max for c in ctxs),
        wall=wall, lane_busy=lane_busy, pool_stats=pool_stats,
        config_digest=cfg.digest(),
        regressions_ignored=sum(c.board.regressions_ignored for c in ctxs))
    if metric_writer is not None:
        for r in c0.reports:
            metric_writer.emit(**r.to_record())
        for u in c0.update_stats:
            metric_writer.emit("update", **u)
        for name, st in pool_stats.items():
            metric_writer.emit("pool", pool=name, **st)
        metric_writer.emit("run_summary", **result.summary())
    return result


def _consume_update(cfg, ctx, monitor, take_now):
    """Pull one update's worth of groups off the channel; returns
    (batches, transfer_delay_total, meta)."""
    batches = []
    delays = 0.0
    for _ in range(cfg.groups_per_update):
        while True:
            try:
                msg, new_v, delay = ctx.chan.take(take_now(), timeout=0.5)
                break
            except TimeoutError:
                monitor.beat(LaneId.TRAINER.value, "queue-wait")
        if new_v is not None:
            ctx.trainer.clock.fold(new_v)
        delays += delay
        batches.extend(msg.groups)
    meta = ctx.board.take_meta(_epoch_of_group(cfg, batches[0].group_id))
    return batches, delays, meta


def _emit_report(cfg, ctx, meta, delays, train_wall, prev_end):
    clock = ctx.trainer.clock
    end = clock.time()
    step = end - prev_end[0]
    prev_end[0] = end
    rep = EpochReport(
        epoch=len(ctx.reports), policy_version=meta["behavior_version"],
        version_after=ctx.trainer.version,
        rollout_time=meta["roll_wall"], actor_time=train_wall,
        transfer_time=delays, broadcast_time=ctx.bcast_delay,
        step_time=step,
        transitions=cfg.groups_per_update * cfg.grpo.group_size * cfg.env.horizon,
        success_rate=meta["success_rate"],
        staleness=ctx.trainer.version - 1 - meta["behavior_version"],
        chunk=cfg.policy.chunk, end=end)
    ctx.reports.append(rep)


def _run_sync(cfg, ctxs, reducer, inter_ctrl, poison_epochs, monitor):
    """Strictly serialized rollout -> transfer -> train -> broadcast."""
    nodes = len(ctxs)
    prev_ends = [[0.0] for _ in ctxs]
    t_real0 = time.perf_counter()
    for epoch in range(cfg.runtime.epochs):
        for ctx in ctxs:
            snap, stal = ctx.board.wait_gate(ctx.sampler.clock)
            msgs, meta = ctx.sampler.run_epoch(epoch, snap,
                                               poison=epoch in poison_epochs)
            ctx.board.produce(epoch, meta)
            for m in msgs:
                enter = ctx.chan.put(m, ctx.sampler.clock.chan_now())
                if enter is not None:
                    ctx.sampler.clock.now_v = enter
            ctx.counters["produced_groups"] += len(msgs)
            ctx.board.boundary(ctx.sampler.clock)
        grads_ok = True
        node_updates = []
        for ctx in ctxs:
            # trainer picks up from the sampler's clock in the serialized mode
            ctx.trainer.clock.fold(ctx.sampler.clock.now_v)
            batches, delays, meta = _consume_update(
                cfg, ctx, monitor, ctx.trainer.clock.chan_now)
            node_updates.append((ctx, batches, delays, meta))
        if nodes > 1:
            _membership_exchange(epoch, nodes, inter_ctrl)
        # compute per-node gradients, then reduce serially for determinism
        grads = []
        for ctx, batches, delays, meta in node_updates:
            try:
                t0 = ctx.trainer.clock.time()
                ctx.trainer.clock.burn(ctx.trainer.train_burn_us,
                                       ctx.trainer.domain, 1)
                w = ctx.trainer.workers
                shard = len(batches) // w
                total = np.zeros(cfg.policy.n_params, dtype=np.float64)
                loss = 0.0
                agg = {"mean_ratio": 0.0, "clip_fraction": 0.0, "mean_reward": 0.0}
                for rank in range(w):
                    part = batches[rank * shard:(rank + 1) * shard]
                    l, g, stats = grpo_grad(ctx.trainer.params, part, cfg.grpo)
                    total += g
                    loss += l / w
                    for k in agg:
                        agg[k] += stats[k] / w
                total /= w
                grads.append((ctx, total, loss, agg, delays, meta, t0))
            except GrpoAbort:
                ctx.counters["quarantined_groups"] += len(batches)
                ctx.counters["quarantined_updates"] += 1
                ctx.board.quarantine(ctx.trainer.clock)
                grads_ok = False
        if not grads_ok:
            # keep nodes in lock-step: if any node quarantined, all do
            for ctx2, *_rest in grads:
                ctx2.counters["quarantined_groups"] += cfg.groups_per_update
                ctx2.counters["quarantined_updates"] += 1
                ctx2.board.quarantine(ctx2.trainer.clock)
            continue
        reduced = reducer.reduce_serial(epoch, [g for _, g, *_ in grads]) \
            if nodes > 1 else grads[0][1]
        for i, (ctx, g, loss, agg, delays, meta, t0) in enumerate(grads):
            node_grad = reduced.copy() if nodes > 1 else g
            norm = clip_grad_norm(node_grad, cfg.grpo.max_grad_norm)
            adam_step(ctx.trainer.flat, node_grad, ctx.trainer.adam, cfg.grpo)
            if not np.isfinite(ctx.trainer.flat).all():
                raise RunAbort("non-finite parameters after update",
                               lane=LaneId.TRAINER.value, epoch=epoch,
                               lane_states=monitor.dump())
            ctx.trainer.version += 1
            train_wall = ctx.trainer.clock.time() - t0
            ctx.trainer.clock.busy += train_wall
            snap = ctx.trainer.snapshot()
            pub = ctx.trainer.clock.chan_now()
            avail = ctx.control.broadcast(snap, now_v=pub)
            got = ctx.mailbox.take_newest(now_v=pub, timeout=5.0)
            if got is None:
                raise RunAbort("broadcast did not arrive", LaneId.WEIGHT_DIST.value,
                               epoch, monitor.dump())
            ctx.board.publish(ctx.trainer.clock)
            ctx.board.deposit(snap, pub if pub is not None else 0.0,
                              avail if pub is not None else 0.0)
            if pub is not None:
                ctx.trainer.clock.fold(avail)
            ctx.counters["consumed_groups"] += cfg.groups_per_update
            ctx.update_stats.append({"version": ctx.trainer.version, "loss": loss,
                                     "grad_norm": norm, **agg})
            _emit_report(cfg, ctx, meta, delays, train_wall, prev_ends[i])
            # the sampler resumes after the broadcast lands
            ctx.sampler.clock.fold(ctx.trainer.clock.now_v)
    for ctx in ctxs:
        ctx.real_wall = time.perf_counter() - t_real0


def _run_async(cfg, ctxs, reducer, inter_ctrl, poison_epochs, monitor, abort):
    nodes = len(ctxs)
    epochs = cfg.runtime.epochs
    stop_recv = threading.Event()
    errors: list = []
    t_real0 = time.perf_counter()

    def sampler_lane(ctx):
        clock = ctx.sampler.clock
        try:
            for epoch in range(epochs):
                monitor.beat(LaneId.SAMPLER.value, f"epoch-{epoch}")
                snap, stal = ctx.board.wait_gate(clock)
                msgs, meta = ctx.sampler.run_epoch(epoch, snap,
                                                   poison=epoch in poison_epochs)
                meta["staleness"] = stal
                ctx.board.produce(epoch, meta)
                for m in msgs:
                    while True:
                        try:
                            enter = ctx.chan.put(m, clock.chan_now(), timeout=0.5)
                            break
                        except TimeoutError:
                            monitor.beat(LaneId.SAMPLER.value, "backpressure-wait")
                    if enter is not None:
                        clock.fold(enter)
                ctx.counters["produced_groups"] += len(msgs)
                if epoch == epochs - 1:
                    ctx.board.mark_sampler_done(clock)
                else:
                    ctx.board.boundary(clock)
            monitor.beat(LaneId.SAMPLER.value, "done")
        except (RunAborted, ChannelClosed):
            pass
        except Exception as exc:  # pragma: no cover - defensive
            errors.append(exc)
            monitor.fail(f"sampler crashed: {exc}", LaneId.SAMPLER.value, -1)

    def recv_lane(ctx):
        # Drains and decodes each broadcast frame (staging). In virtual mode
        # the board's delivery schedule was deposited by the publisher, so a
        # slow receive lane cannot distort the modeled timeline; in busy mode
        # the frame is staged here once its real delivery lag has passed.
        try:
            while not stop_recv.is_set():
                monitor.beat(LaneId.WEIGHT_RECV.value, "mailbox-wait")
                got = ctx.mailbox.take_newest(
                    now_v=0.0 if cfg.runtime.virtual_time else None, timeout=0.1)
                if got is None:
                    continue
                if not cfg.runtime.virtual_time:
                    ctx.board.deposit(got[0], 0.0, 0.0)
                monitor.beat(LaneId.WEIGHT_RECV.value, f"staged-{got[0].version}")
        except (RunAborted, ChannelClosed):
            pass
        except Exception as exc:  # pragma: no cover
            errors.append(exc)
            monitor.fail(f"weight-recv crashed: {exc}", LaneId.WEIGHT_RECV.value, -1)

    def trainer_lane(ctx):
        clock = ctx.trainer.clock
        prev_end = [0.0]
        try:
            for update in range(epochs):
                monitor.beat(LaneId.TRAINER.value, f"update-{update}")
                batches, delays, meta = _consume_update(
                    cfg, ctx, monitor, clock.chan_now)
                if nodes > 1 and ctx is ctxs[0]:
                    _membership_exchange(update, nodes, inter_ctrl)
                try:
                    stats = ctx.trainer.update(batches, nodes)
                except GrpoAbort:
                    ctx.counters["quarantined_groups"] += len(batches)
                    ctx.counters["quarantined_updates"] += 1
                    ctx.board.quarantine(clock)
                    continue
                ctx.counters["consumed_groups"] += len(batches)
                ctx.board.wait_pacing(ctx.trainer.version, clock)
                snap = ctx.trainer.snapshot()
                pub = clock.now_v if clock.virtual else None
                avail = (ctx.ctrl_tp.schedule_v(pub, ctx.bcast_delay)
                         if pub is not None else None)
                ctx.board.publish(clock)
                if pub is not None:
                    ctx.board.deposit(snap, pub, avail)
                ctx.dist_q.put((snap, pub, avail))
                train_wall = stats.pop("train_wall")
                ctx.update_stats.append(stats)
                _emit_report(cfg, ctx, meta, delays, train_wall, prev_end)
            monitor.beat(LaneId.TRAINER.value, "done")
        except (RunAborted, ChannelClosed):
            pass
        except RunAbort as exc:
            errors.append(exc)
            monitor.fail(exc.reason, exc.lane, exc.epoch)
        except Exception as exc:  # pragma: no cover
            errors.append(exc)
            monitor.fail(f"trainer crashed: {exc}", LaneId.TRAINER.value, -1)
        finally:
            ctx.board.mark_trainer_done()
            ctx.dist_q.put(None)

    def dist_lane(ctx):
        try:
            while True:
                monitor.beat(LaneId.WEIGHT_DIST.value, "idle")
                try:
                    item = ctx.dist_q.get(timeout=0.1)
                except queue_mod.Empty:
                    continue
                if item is None:
                    return
                snap, stamp, avail = item
                ctx.control.broadcast(snap, now_v=stamp, avail_v=avail)
                monitor.beat(LaneId.WEIGHT_DIST.value, f"broadcast-{snap.version}")
        except (RunAborted, ChannelClosed):
            pass
        except Exception as exc:  # pragma: no cover
            errors.append(exc)
            monitor.fail(f"weight-dist crashed: {exc}", LaneId.WEIGHT_DIST.value, -1)

    threads = []
    for ctx in ctxs:
        for fn, name in ((sampler_lane, "A"), (recv_lane, "B"),
                         (trainer_lane, "C"), (dist_lane, "D")):
            th = threading.Thread(target=fn, args=(ctx,),
                                  name=f"lane-{name}-n{ctx.sampler.node}")
            th.start()
            threads.append(th)

    watchdog_fired = [False]

    def watchdog():
        while any(th.is_alive() for th in threads):
            time.sleep(0.2)
            if abort.is_set():
                return
            stale = monitor.stale_lanes(cfg.runtime.watchdog_s)
            if stale:
                watchdog_fired[0] = True
                monitor.fail(f"watchdog: lanes silent > {cfg.runtime.watchdog_s}s: "
                             f"{stale}", stale[0], -1)
                return

    wd = threading.Thread(target=watchdog, name="watchdog", daemon=True)
    wd.start()
    # trainer finishing all updates ends the run; stop the receive lanes
    for th in threads:
        if th.name.startswith("lane-C"):
            th.join()
    stop_recv.set()
    for ctx in ctxs:
        ctx.chan.close()
    for th in threads:
        th.join(timeout=10)
    for ctx in ctxs:
        ctx.real_wall = time.perf_counter() - t_real0
    if monitor.abort_reason is not None:
        raise RunAbort(monitor.abort_reason, monitor.abort_lane,
                       monitor.abort_epoch, monitor.dump())
    if errors:
        raise errors[0]
