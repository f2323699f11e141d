"""Shared fixtures: small, fast run configurations used across the suite."""

import copy

import pytest

from dvla import config as cfgmod

# A tiny pipeline that still exercises every lane: 4 groups of 4 envs,
# 2 chunks per episode, 8 slots split 1:1.
TINY = {
    "env": {"n_envs": 16, "horizon": 8, "obs_dim": 4, "act_dim": 2,
            "step_cost_us": 50.0},
    "policy": {"hidden": 8, "chunk": 4},
    "grpo": {"group_size": 4, "micro_batch": 4},
    "placement": {"strategy": "disaggregated", "slots": 8, "ratio": "1:1"},
    "runtime": {"mode": "sync", "epochs": 6, "seed": 3,
                "t_infer_chunk_us": 5.0, "t_train_us": 2.0},
}

# Balanced compute: env cost zero and inference volume == training volume,
# so sync rollout and actor walls match exactly (512 us each at 1:1).
BALANCED = {
    "env": {"n_envs": 64, "horizon": 16, "step_cost_us": 0.0},
    "policy": {"hidden": 16, "chunk": 4},
    "grpo": {"group_size": 8, "micro_batch": 8},
    "placement": {"strategy": "disaggregated", "slots": 8, "ratio": "1:1"},
    "runtime": {"mode": "async", "epochs": 12, "staleness_limit": 1,
                "seed": 7, "t_infer_chunk_us": 8.0, "t_train_us": 2.0},
}


def make_cfg(base=None, **sections):
    """Build a RunConfig from a base dict with section-level overrides."""
    data = copy.deepcopy(base if base is not None else TINY)
    for section, patch in sections.items():
        if patch:
            data.setdefault(section, {}).update(patch)
    return cfgmod.from_dict(data)


@pytest.fixture
def tiny_cfg():
    return make_cfg()


@pytest.fixture
def balanced_cfg():
    return make_cfg(BALANCED)
