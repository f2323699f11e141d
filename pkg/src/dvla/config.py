"""Run configuration: one JSON file describing the whole experiment.

The tree has six sections (env, policy, grpo, placement, runtime, pools).
Parsing is strict: unknown keys are rejected with the offending key path and
the line it first appears on. The fully resolved tree (defaults applied) has
a stable digest used to pair live runs with simulator runs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .core import ConfigError
from .env import EnvConfig, LatencyModel
from .grpo import GrpoConfig
from .placement import PlacementPlan, Strategy, Topology, plan_build, replicate
from .planes import LinkProfile
from .policy import PolicyConfig

MODES = ("sync", "async")


@dataclass(frozen=True)
class RuntimeConfig:
    mode: str = "sync"
    epochs: int = 8
    queue_capacity: int = 2  # bounded host queue depth, in epoch batches
    staleness_limit: int = 1
    seed: int = 0
    virtual_time: bool = True
    t_infer_chunk_us: float = 5.0  # per env per chunk
    t_train_us: float = 2.0  # per transition
    actor_workers: int = 1
    watchdog_s: float = 30.0
    warmup_epochs: int = 1

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"runtime.mode must be one of {MODES}, got {self.mode!r}")
        if self.epochs < 1:
            raise ConfigError(f"runtime.epochs must be >= 1, got {self.epochs}")
        if self.queue_capacity < 1:
            raise ConfigError("runtime.queue_capacity must be >= 1")
        if self.staleness_limit < 0:
            raise ConfigError("runtime.staleness_limit must be >= 0")
        if self.t_infer_chunk_us < 0 or self.t_train_us < 0:
            raise ConfigError("runtime cost rates must be >= 0")
        if self.actor_workers < 1:
            raise ConfigError("runtime.actor_workers must be >= 1")
        if self.watchdog_s <= 0:
            raise ConfigError("runtime.watchdog_s must be > 0")
        if self.warmup_epochs < 0 or self.warmup_epochs >= self.epochs:
            raise ConfigError(
                f"runtime.warmup_epochs must be in [0, epochs), got {self.warmup_epochs}"
            )


@dataclass(frozen=True)
class PoolsConfig:
    model_capacity: int = 1 << 20
    env_capacity: int = 1 << 19
    unified_baseline: bool = False
    unified_capacity: int = (1 << 20) + (1 << 19)

    def validate(self):
        for name in ("model_capacity", "env_capacity", "unified_capacity"):
            if getattr(self, name) < 1024:
                raise ConfigError(f"pools.{name} must be >= 1024")


@dataclass(frozen=True)
class RunConfig:
    env: EnvConfig
    policy: PolicyConfig
    grpo: GrpoConfig
    plan: PlacementPlan
    topology: Topology
    runtime: RuntimeConfig
    pools: PoolsConfig
    resolved: dict = field(default_factory=dict, compare=False)

    @property
    def groups_per_epoch(self) -> int:
        return self.env.n_envs // self.grpo.group_size

    @property
    def n_chunks(self) -> int:
        return self.env.horizon // self.policy.chunk

    @property
    def groups_per_update(self) -> int:
        # the trainer consumes exactly one rollout epoch per update
        return self.groups_per_epoch

    def digest(self) -> str:
        blob = json.dumps(self.resolved, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def validate(self):
        self.env.validate()
        self.policy.validate()
        self.grpo.validate()
        self.runtime.validate()
        self.pools.validate()
        if self.env.n_envs % self.grpo.group_size != 0:
            raise ConfigError(
                f"group_size {self.grpo.group_size} must divide n_envs {self.env.n_envs}"
            )
        if self.env.horizon % self.policy.chunk != 0:
            raise ConfigError(
                f"chunk {self.policy.chunk} must divide horizon {self.env.horizon}"
            )
        if self.policy.obs_dim != self.env.obs_dim or self.policy.act_dim != self.env.act_dim:
            raise ConfigError("policy dims must match env dims")


_DEFAULTS = {
    "env": {
        "n_envs": 64, "horizon": 16, "obs_dim": 4, "act_dim": 2, "dt": 0.1,
        "success_radius": 0.15, "step_cost_us": 50.0,
        "latency": None,  # or {"ell0_us", "n0", "beta", "gamma"}
    },
    "policy": {"hidden": 32, "chunk": 4, "init_log_std": -0.5},
    "grpo": {
        "group_size": 8, "clip_eps": 0.2, "adv_epsilon": 1e-8, "micro_batch": 8,
        "lr": 3e-3, "beta1": 0.9, "beta2": 0.999, "opt_eps": 1e-8,
        "max_grad_norm": None, "kl_coeff": 0.0, "ratio_granularity": "chunk",
    },
    "placement": {
        "strategy": "disaggregated", "slots": 8, "ratio": "1:1",
        "env_collocated": True, "nodes": 1,
        "link": {"latency_us": 0.0, "bandwidth_bps": None},
        "inter_node_link": {"latency_us": 0.0, "bandwidth_bps": None},
    },
    "runtime": {
        "mode": "sync", "epochs": 8, "queue_capacity": 2, "staleness_limit": 1,
        "seed": 0, "virtual_time": True, "t_infer_chunk_us": 5.0,
        "t_train_us": 2.0, "actor_workers": 1, "watchdog_s": 30.0,
        "warmup_epochs": 1,
    },
    "pools": {
        "model_capacity": 1 << 20, "env_capacity": 1 << 19,
        "unified_baseline": False, "unified_capacity": (1 << 20) + (1 << 19),
    },
}


def _key_line(raw_text: str | None, key: str) -> str:
    if not raw_text:
        return ""
    needle = f'"{key}"'
    for i, line in enumerate(raw_text.splitlines(), start=1):
        if needle in line:
            return f" (line {i})"
    return ""


def _merge(section: str, defaults: dict, given: dict, raw_text: str | None) -> dict:
    out = dict(defaults)
    for key, val in given.items():
        if key not in defaults:
            raise ConfigError(
                f"unknown config key '{section}.{key}'{_key_line(raw_text, key)}"
            )
        if isinstance(defaults[key], dict) and isinstance(val, dict):
            out[key] = _merge(f"{section}.{key}", defaults[key], val, raw_text)
        else:
            out[key] = val
    return out


def resolve(data: dict, raw_text: str | None = None) -> dict:
    """Apply defaults and reject unknown keys at any depth."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    out = {}
    for section, defaults in _DEFAULTS.items():
        given = data.get(section, {})
        if not isinstance(given, dict):
            raise ConfigError(f"config section '{section}' must be an object")
        out[section] = _merge(section, defaults, given, raw_text)
    for key in data:
        if key not in _DEFAULTS:
            raise ConfigError(
                f"unknown config key '{key}'{_key_line(raw_text, key)}"
            )
    return out


def from_dict(data: dict, raw_text: str | None = None) -> RunConfig:
    r = resolve(data, raw_text)

    e = r["env"]
    lat = e["latency"]
    latency = None
    if lat is not None:
        lat = _merge("env.latency", {"ell0_us": 100.0, "n0": 768, "beta": 1.0,
                                     "gamma": 1.0}, lat, raw_text)
        latency = LatencyModel(ell0=float(lat["ell0_us"]), n0=int(lat["n0"]),
                               beta=float(lat["beta"]), gamma=float(lat["gamma"]))
        r["env"]["latency"] = lat
    env = EnvConfig(n_envs=int(e["n_envs"]), horizon=int(e["horizon"]),
                    obs_dim=int(e["obs_dim"]), act_dim=int(e["act_dim"]),
                    dt=float(e["dt"]), success_radius=float(e["success_radius"]),
                    step_cost=float(e["step_cost_us"]), latency_model=latency)

    p = r["policy"]
    policy = PolicyConfig(obs_dim=env.obs_dim, hidden=int(p["hidden"]),
                          chunk=int(p["chunk"]), act_dim=env.act_dim,
                          init_log_std=float(p["init_log_std"]))

    g = r["grpo"]
    grpo = GrpoConfig(
        group_size=int(g["group_size"]), clip_eps=float(g["clip_eps"]),
        adv_epsilon=float(g["adv_epsilon"]), micro_batch=int(g["micro_batch"]),
        lr=float(g["lr"]), beta1=float(g["beta1"]), beta2=float(g["beta2"]),
        opt_eps=float(g["opt_eps"]),
        max_grad_norm=None if g["max_grad_norm"] is None else float(g["max_grad_norm"]),
        kl_coeff=float(g["kl_coeff"]), ratio_granularity=g["ratio_granularity"])

    pl = r["placement"]
    try:
        strategy = Strategy(pl["strategy"])
    except ValueError:
        raise ConfigError(
            f"placement.strategy must be one of "
            f"{[s.value for s in Strategy]}, got {pl['strategy']!r}"
        ) from None
    plan = plan_build(strategy, int(pl["slots"]), pl["ratio"],
                      env_collocated=bool(pl["env_collocated"]))
    inter = pl["inter_node_link"]
    topology = replicate(plan, int(pl["nodes"]),
                         LinkProfile(latency_us=float(inter["latency_us"]),
                                     bandwidth_bps=inter["bandwidth_bps"]))

    rt = r["runtime"]
    runtime = RuntimeConfig(
        mode=rt["mode"], epochs=int(rt["epochs"]),
        queue_capacity=int(rt["queue_capacity"]),
        staleness_limit=int(rt["staleness_limit"]), seed=int(rt["seed"]),
        virtual_time=bool(rt["virtual_time"]),
        t_infer_chunk_us=float(rt["t_infer_chunk_us"]),
        t_train_us=float(rt["t_train_us"]),
        actor_workers=int(rt["actor_workers"]),
        watchdog_s=float(rt["watchdog_s"]),
        warmup_epochs=int(rt["warmup_epochs"]))

    po = r["pools"]
    pools = PoolsConfig(model_capacity=int(po["model_capacity"]),
                        env_capacity=int(po["env_capacity"]),
                        unified_baseline=bool(po["unified_baseline"]),
                        unified_capacity=int(po["unified_capacity"]))

    cfg = RunConfig(env=env, policy=policy, grpo=grpo, plan=plan,
                    topology=topology, runtime=runtime, pools=pools, resolved=r)
    cfg.validate()
    return cfg


def load(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        raw = f.read()
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return from_dict(data, raw_text=raw)


def link_profile(cfg: RunConfig) -> LinkProfile:
    """The intra-node wire link profile from the placement section."""
    lk = cfg.resolved["placement"]["link"]
    prof = LinkProfile(latency_us=float(lk["latency_us"]),
                       bandwidth_bps=lk["bandwidth_bps"])
    prof.validate()
    return prof


def overridden(cfg: RunConfig, **sections) -> RunConfig:
    """Rebuild a config with section-level overrides, e.g.
    overridden(cfg, runtime={"mode": "async"})."""
    data = json.loads(json.dumps(cfg.resolved))
    for section, patch in sections.items():
        if patch is None:
            continue
        data.setdefault(section, {}).update(patch)
    return from_dict(data)
