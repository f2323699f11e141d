"""Placement plans: which components live on which device slots.

Three strategies. Colocated puts every component on every slot of one shared
group. Disaggregated partitions slots between the rollout side and the actor
by an r:a ratio, optionally peeling the environment farm into its own group.
Hybrid partitions like Disaggregated but always pins the environment farm
with rollout.

Edge transport is derived, never chosen: InProc iff both endpoints live in
the same slot group, Wire otherwise. Contention is linear time-sharing: a
task's effective cost is its nominal cost times the number of concurrently
active tasks resident on its group.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .core import ConfigError
from .planes import LinkProfile, TransportMode

COMPONENTS = ("env", "rollout", "actor")


class Strategy(Enum):
    COLOCATED = "colocated"
    DISAGGREGATED = "disaggregated"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class DeviceSlot:
    slot_id: int
    node_id: int = 0


@dataclass(frozen=True)
class SlotGroup:
    name: str
    slots: tuple
    components: tuple

    @property
    def n_slots(self) -> int:
        return len(self.slots)


def parse_ratio(text: str) -> tuple:
    parts = text.split(":")
    if len(parts) != 2:
        raise ConfigError(f"ratio must look like 'R:A', got {text!r}")
    try:
        r, a = int(parts[0]), int(parts[1])
    except ValueError:
        raise ConfigError(f"ratio parts must be integers, got {text!r}") from None
    if r < 1 or a < 1:
        raise ConfigError(f"ratio parts must be >= 1, got {text!r}")
    return r, a


def _nearest_split(slots_total: int, r: int, a: int) -> tuple:
    """Closest integer (rollout, actor) partition to the requested ratio."""
    want = r / (r + a)
    best, best_err = None, None
    for rs in range(1, slots_total):
        err = abs(rs / slots_total - want)
        if best is None or err < best_err:
            best, best_err = rs, err
    return best, slots_total - best


@dataclass(frozen=True)
class PlacementPlan:
    strategy: Strategy
    slots_total: int
    rollout_slots: int
    actor_slots: int
    env_collocated_with_rollout: bool
    groups: tuple = field(default_factory=tuple)

    def group_of(self, component: str) -> SlotGroup:
        for g in self.groups:
            if component in g.components:
                return g
        raise ConfigError(f"unknown component {component!r}")

    def edge_transport(self, a: str, b: str) -> TransportMode:
        if self.group_of(a) is self.group_of(b):
            return TransportMode.INPROC
        return TransportMode.WIRE

    def residents(self, group_name: str) -> tuple:
        for g in self.groups:
            if g.name == group_name:
                return g.components
        raise ConfigError(f"unknown slot group {group_name!r}")

    def describe(self) -> str:
        lines = [
            f"strategy={self.strategy.value} slots={self.slots_total} "
            f"rollout:actor={self.rollout_slots}:{self.actor_slots}"
        ]
        for g in self.groups:
            slot_ids = ",".join(str(s.slot_id) for s in g.slots)
            lines.append(
                f"  group {g.name:<8} slots[{slot_ids}] "
                f"residents={'+'.join(g.components)}"
            )
        for a, b in (("env", "rollout"), ("rollout", "actor"), ("actor", "rollout")):
            lines.append(f"  edge {a}->{b}: {self.edge_transport(a, b).value}")
        return "\n".join(lines)


def _slots(ids, node_id=0):
    return tuple(DeviceSlot(slot_id=i, node_id=node_id) for i in ids)


def plan_build(strategy: Strategy, slots_total: int, ratio: tuple | str | None = None,
               env_collocated: bool | None = None) -> PlacementPlan:
    """Deterministic slot assignment for a strategy; derives edge transports.

    Non-colocated strategies need the ratio to divide slots_total exactly;
    otherwise the error names the nearest feasible split.
    """
    if slots_total < 1:
        raise ConfigError(f"slots_total must be >= 1, got {slots_total}")
    if isinstance(ratio, str):
        ratio = parse_ratio(ratio)

    if strategy is Strategy.COLOCATED:
        group = SlotGroup(name="shared", slots=_slots(range(slots_total)),
                          components=COMPONENTS)
        return PlacementPlan(strategy=strategy, slots_total=slots_total,
                             rollout_slots=slots_total, actor_slots=slots_total,
                             env_collocated_with_rollout=True, groups=(group,))

    if ratio is None:
        raise ConfigError(f"{strategy.value} placement requires a rollout:actor ratio")
    r, a = ratio
    if slots_total % (r + a) != 0 or slots_total < r + a:
        near_r, near_a = _nearest_split(slots_total, r, a) if slots_total >= 2 else (1, 1)
        raise ConfigError(
            f"ratio {r}:{a} does not divide {slots_total} slots; "
            f"nearest feasible split is {near_r}:{near_a}"
        )
    unit = slots_total // (r + a)
    rollout_slots, actor_slots = r * unit, a * unit

    if strategy is Strategy.HYBRID:
        env_collocated = True
    elif env_collocated is None:
        env_collocated = True

    roll_ids = range(rollout_slots)
    actor_ids = range(rollout_slots, slots_total)
    if env_collocated:
        groups = (
            SlotGroup(name="rollout", slots=_slots(roll_ids),
                      components=("env", "rollout")),
            SlotGroup(name="actor", slots=_slots(actor_ids),
                      components=("actor",)),
        )
    else:
        # env farm peeled onto its own group: co-resident on the rollout
        # slots (contention still applies) but across a Wire edge.
        groups = (
            SlotGroup(name="env", slots=_slots(roll_ids), components=("env",)),
            SlotGroup(name="rollout", slots=_slots(roll_ids),
                      components=("rollout",)),
            SlotGroup(name="actor", slots=_slots(actor_ids),
                      components=("actor",)),
        )
    return PlacementPlan(strategy=strategy, slots_total=slots_total,
                         rollout_slots=rollout_slots, actor_slots=actor_slots,
                         env_collocated_with_rollout=bool(env_collocated),
                         groups=groups)


def contention_cost(nominal_cost: float, active_tasks: int) -> float:
    """Linear time-sharing: effective = nominal x co-resident active tasks."""
    if nominal_cost < 0:
        raise ConfigError(f"nominal_cost must be >= 0, got {nominal_cost}")
    return nominal_cost * max(1, active_tasks)


@dataclass(frozen=True)
class Topology:
    nodes: int
    plan: PlacementPlan
    inter_node: LinkProfile

    def node_plans(self) -> tuple:
        return tuple(self.plan for _ in range(self.nodes))


def replicate(plan: PlacementPlan, nodes: int,
              link_profile: LinkProfile | None = None) -> Topology:
    """Clone the single-node closed loop across nodes; only gradient frames
    and coordinator metadata may cross the inter-node link."""
    if nodes < 1:
        raise ConfigError(f"nodes must be >= 1, got {nodes}")
    prof = link_profile if link_profile is not None else LinkProfile()
    prof.validate()
    return Topology(nodes=nodes, plan=plan, inter_node=prof)
