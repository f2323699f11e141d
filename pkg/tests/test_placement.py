"""Placement plans: ratio parsing, slot splits, derived edge transports."""

import pytest

from dvla.core import ConfigError
from dvla.placement import (
    COMPONENTS,
    PlacementPlan,
    Strategy,
    Topology,
    contention_cost,
    parse_ratio,
    plan_build,
    replicate,
)
from dvla.planes import LinkProfile, TransportMode


# ----------------------------------------------------------------- ratio parse

def test_parse_ratio():
    assert parse_ratio("1:1") == (1, 1)
    assert parse_ratio("3:1") == (3, 1)
    assert parse_ratio("12:4") == (12, 4)


def test_parse_ratio_rejects_malformed():
    for bad in ("3", "3:1:2", "a:b", "1.5:1", "0:1", "1:0", "-1:2"):
        with pytest.raises(ConfigError):
            parse_ratio(bad)


# --------------------------------------------------------------------- splits

def test_disaggregated_split_3_to_1():
    plan = plan_build(Strategy.DISAGGREGATED, 8, "3:1")
    assert (plan.rollout_slots, plan.actor_slots) == (6, 2)
    roll = plan.group_of("rollout")
    actor = plan.group_of("actor")
    assert [s.slot_id for s in roll.slots] == [0, 1, 2, 3, 4, 5]
    assert [s.slot_id for s in actor.slots] == [6, 7]


def test_indivisible_ratio_names_nearest_split():
    with pytest.raises(ConfigError, match="nearest feasible split is 5:3"):
        plan_build(Strategy.DISAGGREGATED, 8, "3:2")


def test_ratio_required_for_partitioned_strategies():
    with pytest.raises(ConfigError, match="requires a rollout:actor ratio"):
        plan_build(Strategy.DISAGGREGATED, 8)
    with pytest.raises(ConfigError, match="slots_total"):
        plan_build(Strategy.COLOCATED, 0)


# ------------------------------------------------------------ edge transports

def test_colocated_everything_shares_one_group():
    plan = plan_build(Strategy.COLOCATED, 4)
    assert plan.rollout_slots == plan.actor_slots == 4
    assert plan.residents("shared") == COMPONENTS
    for a in COMPONENTS:
        for b in COMPONENTS:
            assert plan.edge_transport(a, b) is TransportMode.INPROC


def test_disaggregated_actor_edge_is_wire():
    plan = plan_build(Strategy.DISAGGREGATED, 8, (1, 1))
    assert plan.edge_transport("env", "rollout") is TransportMode.INPROC
    assert plan.edge_transport("rollout", "actor") is TransportMode.WIRE
    assert plan.edge_transport("actor", "rollout") is TransportMode.WIRE


def test_hybrid_always_pins_envs_with_rollout():
    plan = plan_build(Strategy.HYBRID, 8, "1:1", env_collocated=False)
    assert plan.env_collocated_with_rollout
    assert plan.edge_transport("env", "rollout") is TransportMode.INPROC
    assert plan.edge_transport("rollout", "actor") is TransportMode.WIRE


def test_peeled_env_farm_crosses_a_wire_on_shared_slots():
    plan = plan_build(Strategy.DISAGGREGATED, 8, "1:1", env_collocated=False)
    assert not plan.env_collocated_with_rollout
    assert plan.edge_transport("env", "rollout") is TransportMode.WIRE
    env = plan.group_of("env")
    roll = plan.group_of("rollout")
    # same physical slots, separate groups
    assert [s.slot_id for s in env.slots] == [s.slot_id for s in roll.slots]


def test_unknown_component_and_group():
    plan = plan_build(Strategy.COLOCATED, 2)
    with pytest.raises(ConfigError, match="unknown component"):
        plan.group_of("learner")
    with pytest.raises(ConfigError, match="unknown slot group"):
        plan.residents("gpu")


def test_describe_lists_groups_and_edges():
    text = plan_build(Strategy.DISAGGREGATED, 8, "3:1").describe()
    assert "rollout:actor=6:2" in text
    assert "edge rollout->actor: wire" in text
    assert "edge env->rollout: inproc" in text


# ----------------------------------------------------------------- contention

def test_contention_is_linear_time_sharing():
    assert contention_cost(10.0, 1) == 10.0
    assert contention_cost(10.0, 2) == 20.0
    assert contention_cost(10.0, 3) == 30.0
    assert contention_cost(10.0, 0) == 10.0  # at least the nominal cost
    with pytest.raises(ConfigError):
        contention_cost(-1.0, 1)


# ------------------------------------------------------------------- topology

def test_replicate_clones_the_plan_per_node():
    plan = plan_build(Strategy.DISAGGREGATED, 8, "1:1")
    topo = replicate(plan, 3, LinkProfile(latency_us=100.0, bandwidth_bps=1e9))
    assert topo.nodes == 3
    assert topo.node_plans() == (plan, plan, plan)
    assert topo.inter_node.latency_us == 100.0


def test_replicate_validation():
    plan = plan_build(Strategy.COLOCATED, 2)
    with pytest.raises(ConfigError, match="nodes"):
        replicate(plan, 0)
    with pytest.raises(ConfigError):
        replicate(plan, 2, LinkProfile(latency_us=-1.0))
