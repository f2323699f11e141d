"""Discrete-event simulator of the two-stage pipeline (rollout incl.
inference; actor) plus its two side channels (batch transfer, weight
broadcast), under any placement plan and either run mode.

The simulator shares the live runtime's coordination rules exactly: bounded
queue in epoch batches, latest-wins snapshot mailbox installed only at epoch
boundaries, the two-ended staleness gate, and linear slot contention
(co-resident active tasks progress at rate 1/k, so overlap on a shared group
emerges as a slowdown rather than being assumed).

The staleness gate is two-ended. The sampler may start an epoch only when
(version frontier - installed version) <= limit, where the frontier counts
batches already produced but not yet turned into published versions; the
trainer may publish version V+1 only when every sampler is between epochs or
has installed at least V+1-limit. At limit 0 this degenerates to lock-step
(the sync schedule); at limit 1 it allows exactly one epoch of overlap.

Deterministic: pure arithmetic on the cost model, no RNG, no wall clock.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

from . import wire
from .config import RunConfig, link_profile, overridden
from .core import ConfigError
from .env import per_env_latency
from .planes import TransportMode

_EPS = 1e-12


# ---------------------------------------------------------------- cost model

def group_frame_bytes(cfg: RunConfig) -> int:
    """Wire size of one trajectory-group frame."""
    c = cfg.n_chunks
    per_traj = 4 + 8 + 4 * c * (cfg.env.obs_dim + cfg.policy.chunk * cfg.env.act_dim + 1)
    return 15 + 8 + 4 + 28 + cfg.grpo.group_size * per_traj


def epoch_data_bytes(cfg: RunConfig) -> int:
    return cfg.groups_per_epoch * group_frame_bytes(cfg)


def weight_bytes(cfg: RunConfig) -> int:
    return wire.weight_frame_size(cfg.policy.n_params)


def rollout_wall_s(cfg: RunConfig) -> float:
    """One epoch of sampling: env farm substeps (lock-step wall, independent
    of slot count) plus chunk inference (divided across rollout slots)."""
    n = cfg.env.n_envs
    env_us = cfg.env.horizon * per_env_latency(n, cfg.env)
    infer_us = cfg.n_chunks * n * cfg.runtime.t_infer_chunk_us
    return (env_us + infer_us / cfg.plan.rollout_slots) * 1e-6


def actor_wall_s(cfg: RunConfig) -> float:
    """One update on one epoch of transitions, divided across actor slots."""
    n_trans = cfg.env.n_envs * cfg.env.horizon
    return n_trans * cfg.runtime.t_train_us / cfg.plan.actor_slots * 1e-6


def _edge_delay_s(cfg: RunConfig, a: str, b: str, nbytes: int,
                  messages: int = 1) -> float:
    if cfg.plan.edge_transport(a, b) is TransportMode.INPROC:
        return 0.0
    prof = link_profile(cfg)
    return messages * prof.latency_us * 1e-6 + (
        nbytes / prof.bandwidth_bps if prof.bandwidth_bps else 0.0)


def transfer_delay_s(cfg: RunConfig) -> float:
    return _edge_delay_s(cfg, "rollout", "actor", epoch_data_bytes(cfg),
                         messages=cfg.groups_per_epoch)


def broadcast_delay_s(cfg: RunConfig) -> float:
    return _edge_delay_s(cfg, "actor", "rollout", weight_bytes(cfg))


def grad_reduce_delay_s(cfg: RunConfig) -> float:
    nodes = cfg.topology.nodes
    if nodes == 1:
        return 0.0
    frame = weight_bytes(cfg)
    return cfg.topology.inter_node.delay_s(frame * (nodes - 1))


# ------------------------------------------------------------------- result

@dataclass
class SimResult:
    mode: str
    throughput: float
    step_time: float
    rollout_time: float
    actor_time: float
    transfer_time: float
    broadcast_time: float
    bottleneck: str
    occupancy: dict
    staleness_max: int
    total_transitions: int
    wall: float
    epochs: list = field(default_factory=list)
    config_digest: str = ""

    def row(self) -> dict:
        return {
            "mode": self.mode, "throughput": self.throughput,
            "step_time": self.step_time, "rollout_time": self.rollout_time,
            "actor_time": self.actor_time, "transfer_time": self.transfer_time,
            "bottleneck": self.bottleneck,
        }


def _bottleneck(roll: float, act: float, transfer: float) -> str:
    best = max(roll, act, transfer)
    if best == roll:
        return "Rollout"
    if best == act:
        return "Actor"
    return "Transfer"


def _finish(cfg: RunConfig, mode: str, rows: list, wall: float,
            busy: dict, staleness_max: int) -> SimResult:
    warm = cfg.runtime.warmup_epochs
    post = rows[warm:] if len(rows) > warm else rows
    n = len(post)
    mean = lambda k: sum(r[k] for r in post) / n
    total_trans = sum(r["transitions"] for r in post)
    base = rows[warm - 1]["end"] if warm and len(rows) > warm else 0.0
    thr = total_trans / max(post[-1]["end"] - base, _EPS)
    occ = {lane: b / max(wall, _EPS) for lane, b in busy.items()}
    return SimResult(
        mode=mode, throughput=thr, step_time=mean("step_time"),
        rollout_time=mean("rollout_time"), actor_time=mean("actor_time"),
        transfer_time=mean("transfer_time"), broadcast_time=mean("broadcast_time"),
        bottleneck=_bottleneck(mean("rollout_time"), mean("actor_time"),
                               mean("transfer_time")),
        occupancy=occ, staleness_max=staleness_max,
        total_transitions=total_trans, wall=wall, epochs=rows,
        config_digest=cfg.digest())


# ---------------------------------------------------------------- sync mode

def _simulate_sync(cfg: RunConfig) -> SimResult:
    roll = rollout_wall_s(cfg)
    act = actor_wall_s(cfg)
    d_xfer = transfer_delay_s(cfg)
    d_bcast = broadcast_delay_s(cfg) + grad_reduce_delay_s(cfg)
    trans = cfg.env.n_envs * cfg.env.horizon
    t = 0.0
    rows = []
    for e in range(cfg.runtime.epochs):
        step = roll + d_xfer + act + d_bcast
        t += step
        rows.append({
            "epoch": e, "rollout_time": roll, "actor_time": act,
            "transfer_time": d_xfer, "broadcast_time": d_bcast,
            "step_time": step, "transitions": trans, "end": t,
        })
    busy = {"sampler": roll * cfg.runtime.epochs,
            "trainer": act * cfg.runtime.epochs}
    return _finish(cfg, "sync", rows, t, busy, staleness_max=0)


# --------------------------------------------------------------- async mode

class _Task:
    __slots__ = ("kind", "node", "remaining", "domain", "start")

    def __init__(self, kind, node, remaining, domain, start):
        self.kind = kind
        self.node = node
        self.remaining = remaining
        self.domain = domain
        self.start = start


class _Node:
    """Per-node lane state for the event loop."""

    def __init__(self, idx):
        self.idx = idx
        self.s_phase = "boundary"  # boundary | rolling | enqueue | done
        self.s_epoch = 0
        self.s_installed = 0
        self.t_phase = "take"  # take | training | pacing | done
        self.t_last_roll_wall = 0.0
        self.t_last_train_wall = 0.0
        self.queue = []  # (epoch, behavior_version, avail_time, roll_wall)
        self.pending = None  # (version, avail_time) latest-wins
        self.ready_batch = None  # (epoch, roll_wall) awaiting queue space
        self.s_busy = 0.0
        self.t_busy = 0.0

    def unprocessed(self) -> int:
        """Batches produced whose updates are not yet published."""
        k = len(self.queue)
        if self.ready_batch is not None:
            k += 1
        if self.t_phase in ("training", "pacing"):
            k += 1
        return k


def _simulate_async(cfg: RunConfig) -> SimResult:
    nodes = [_Node(i) for i in range(cfg.topology.nodes)]
    n_nodes = len(nodes)
    roll = rollout_wall_s(cfg)
    act = actor_wall_s(cfg)
    d_xfer = transfer_delay_s(cfg)
    d_bcast = broadcast_delay_s(cfg)
    d_reduce = grad_reduce_delay_s(cfg)
    trans = cfg.env.n_envs * cfg.env.horizon
    epochs = cfg.runtime.epochs
    limit = cfg.runtime.staleness_limit
    qcap = cfg.runtime.queue_capacity

    roll_dom = tuple(s.slot_id for s in cfg.plan.group_of("rollout").slots)
    act_dom = tuple(s.slot_id for s in cfg.plan.group_of("actor").slots)

    state = {"version": 0, "version_end": 0.0, "staleness_max": 0}
    tasks: list = []
    wakeups: list = []
    barrier: dict = {}  # node idx -> training completion time
    publish_at: list = []  # single pending all-node publish time
    rows = []
    t = 0.0

    def active(domain) -> int:
        return sum(1 for task in tasks if task.domain == domain)

    def gate_ok(nd) -> bool:
        frontier = state["version"] + nd.unprocessed()
        return frontier - nd.s_installed <= limit

    def pacing_ok(next_version) -> bool:
        for nd in nodes:
            if nd.s_phase == "rolling" and nd.s_installed < next_version - limit:
                return False
        return True

    def publish():
        state["version"] += 1
        v = state["version"]
        for nd in nodes:
            if nd.s_phase == "rolling":
                state["staleness_max"] = max(state["staleness_max"],
                                             v - nd.s_installed)
            arrival = t + d_bcast
            if nd.pending is None or v > nd.pending[0]:
                nd.pending = (v, arrival)
            if arrival > t:
                wakeups.append(arrival)
        nd0 = nodes[0]
        step = t - state["version_end"] if v > 1 else t
        rows.append({
            "epoch": v - 1, "rollout_time": nd0.t_last_roll_wall,
            "actor_time": nd0.t_last_train_wall, "transfer_time": d_xfer,
            "broadcast_time": d_bcast, "step_time": step,
            "transitions": trans, "end": t,
        })
        state["version_end"] = t
        for nd in nodes:
            nd.t_phase = "done" if v >= epochs else "take"

    def try_progress():
        moved = True
        while moved:
            moved = False
            for nd in nodes:
                if nd.s_phase == "boundary":
                    if nd.pending is not None and nd.pending[1] <= t + _EPS:
                        ver, _ = nd.pending
                        nd.pending = None
                        if ver > nd.s_installed:
                            nd.s_installed = ver
                        moved = True
                    elif nd.pending is not None:
                        wakeups.append(nd.pending[1])
                    if nd.s_epoch >= epochs:
                        nd.s_phase = "done"
                        moved = True
                    elif gate_ok(nd):
                        stal = state["version"] - nd.s_installed
                        state["staleness_max"] = max(state["staleness_max"], stal)
                        nd.s_phase = "rolling"
                        tasks.append(_Task("roll", nd, roll, roll_dom, t))
                        moved = True
                if nd.s_phase == "enqueue" and len(nd.queue) < qcap:
                    epoch, roll_wall = nd.ready_batch
                    nd.ready_batch = None
                    nd.queue.append((epoch, nd.s_installed, t + d_xfer, roll_wall))
                    if d_xfer > 0:
                        wakeups.append(t + d_xfer)
                    nd.s_epoch += 1
                    nd.s_phase = "boundary"
                    moved = True
                if nd.t_phase == "take" and nd.queue:
                    if nd.queue[0][2] <= t + _EPS:
                        epoch, bver, avail, roll_wall = nd.queue.pop(0)
                        nd.t_last_roll_wall = roll_wall
                        nd.t_phase = "training"
                        tasks.append(_Task("train", nd, act, act_dom, t))
                        moved = True
                    else:
                        wakeups.append(nd.queue[0][2])
                if nd.t_phase == "pacing" and nd.idx not in barrier and \
                        pacing_ok(state["version"] + 1):
                    barrier[nd.idx] = t
                    moved = True
            if len(barrier) == n_nodes and not publish_at:
                at = max(barrier.values()) + d_reduce
                barrier.clear()
                if at <= t + _EPS:
                    publish()
                else:
                    publish_at.append(at)
                    wakeups.append(at)
                moved = True

    try_progress()
    guard = 0
    while any(nd.t_phase != "done" for nd in nodes):
        guard += 1
        if guard > 500000:
            raise RuntimeError("simulation failed to converge (blocking cycle)")
        horizon = None
        for task in tasks:
            eta = t + task.remaining * active(task.domain)
            if horizon is None or eta < horizon:
                horizon = eta
        for w in wakeups:
            if w > t + _EPS and (horizon is None or w < horizon):
                horizon = w
        if horizon is None:
            raise RuntimeError(
                "simulation blocked: no runnable task or pending event "
                f"(version={state['version']})")
        dt = max(horizon - t, 0.0)
        for task in tasks:
            task.remaining -= dt / active(task.domain)
        t = horizon
        wakeups = [w for w in wakeups if w > t + _EPS]
        for task in list(tasks):
            if task.remaining <= 1e-9:
                tasks.remove(task)
                nd = task.node
                wall = t - task.start
                if task.kind == "roll":
                    nd.s_busy += wall
                    nd.ready_batch = (nd.s_epoch, wall)
                    nd.s_phase = "enqueue"
                else:
                    nd.t_busy += wall
                    nd.t_last_train_wall = wall
                    nd.t_phase = "pacing"
        if publish_at and publish_at[0] <= t + _EPS:
            publish_at.clear()
            publish()
        try_progress()

    wall = t
    busy = {"sampler": sum(nd.s_busy for nd in nodes) / n_nodes,
            "trainer": sum(nd.t_busy for nd in nodes) / n_nodes}
    return _finish(cfg, "async", rows, wall, busy, state["staleness_max"])


def simulate(cfg: RunConfig) -> SimResult:
    if cfg.runtime.mode == "sync":
        return _simulate_sync(cfg)
    return _simulate_async(cfg)


# --------------------------------------------------------------- sweeps etc.

SWEEP_COLUMNS = ["n_envs", "mode", "strategy", "ratio", "throughput",
                 "step_time", "rollout_time", "actor_time", "transfer_time",
                 "bottleneck"]


def sweep_envs(cfg: RunConfig, env_counts: list) -> list:
    if list(env_counts) != sorted(env_counts):
        raise ConfigError("env_counts must be sorted ascending")
    out = []
    for n in env_counts:
        c = overridden(cfg, env={"n_envs": int(n)})
        res = simulate(c)
        out.append({
            "n_envs": int(n), "mode": res.mode,
            "strategy": cfg.plan.strategy.value,
            "ratio": f"{cfg.plan.rollout_slots}:{cfg.plan.actor_slots}",
            "throughput": res.throughput, "step_time": res.step_time,
            "rollout_time": res.rollout_time, "actor_time": res.actor_time,
            "transfer_time": res.transfer_time, "bottleneck": res.bottleneck,
        })
    return out


def write_sweep_csv(rows: list, path: str):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow(row)


def fit_check(sim: SimResult, live: dict, threshold: float = 0.10) -> dict:
    """Relative deviation between a simulator result and a live aggregate.

    `live` needs keys: config_digest, mode, throughput, rollout_time,
    actor_time. A mismatched config or mode is a validation error, not a
    deviation.
    """
    if live.get("config_digest") != sim.config_digest:
        raise ConfigError("fit_check: live run and simulation configs differ")
    if live.get("mode") != sim.mode:
        raise ConfigError("fit_check: live run and simulation modes differ")

    def dev(a, b):
        return abs(a - b) / max(abs(b), _EPS)

    report = {
        "throughput_dev": dev(live["throughput"], sim.throughput),
        "rollout_dev": dev(live["rollout_time"], sim.rollout_time),
        "actor_dev": dev(live["actor_time"], sim.actor_time),
        "threshold": threshold,
    }
    report["pass"] = all(report[k] <= threshold for k in
                         ("throughput_dev", "rollout_dev", "actor_dev"))
    return report
