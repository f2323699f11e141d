"""Desk-scale asynchronous RL training runtime and simulator.

A four-lane pipeline (sampling, weight receive, training, weight
distribution) over decoupled data/control planes, with a toy GRPO learner,
placement planning, dual-pool memory, a binary wire format, and a
discrete-event simulator that predicts the live runtime's throughput.
"""

__version__ = "0.1.0"

from .core import ConfigError, UsageError, Rng, ParamSnapshot
from .config import RunConfig, from_dict, load, overridden
from .runtime import (RunAbort, RunMode, RunResult, LaneId,
                      barrier_free_handoff_audit, run)
from .sim import SimResult, fit_check, simulate, sweep_envs
from .placement import PlacementPlan, Strategy, Topology, plan_build, replicate

__all__ = [
    "ConfigError", "UsageError", "Rng", "ParamSnapshot",
    "RunConfig", "from_dict", "load", "overridden",
    "RunAbort", "RunMode", "RunResult", "LaneId",
    "barrier_free_handoff_audit", "run",
    "SimResult", "fit_check", "simulate", "sweep_envs",
    "PlacementPlan", "Strategy", "Topology", "plan_build", "replicate",
    "__version__",
]
