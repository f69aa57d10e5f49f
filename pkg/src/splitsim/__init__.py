"""Renewable-powered small-cell network simulator with learned sleep control.

Each small cell runs from a solar-charged battery and can shut down, keep
only its radio chain (baseband offloaded to the macro site), or run the
full stack locally.  Per-cell learning agents pick the mode each hour to
trade grid energy against dropped traffic.
"""

from .power import OperativeMode, PowerModelParams, vsc_power, mbs_site_power
from .traces import SolarConfig, TrafficConfig, TraceSet, generate_traces
from .simulator import SimParams, NetworkState, run_episode, step
from .agents import (
    AgentObservation,
    ExplorationSchedule,
    FuzzyQLearningAgent,
    GreedyAgent,
    MembershipSpec,
    QLearningAgent,
    StaticAgent,
    load_policies,
    save_policies,
)

__version__ = "0.1.0"

__all__ = [
    "OperativeMode", "PowerModelParams", "vsc_power", "mbs_site_power",
    "SolarConfig", "TrafficConfig", "TraceSet", "generate_traces",
    "SimParams", "NetworkState", "run_episode", "step",
    "AgentObservation", "ExplorationSchedule", "FuzzyQLearningAgent",
    "GreedyAgent", "MembershipSpec", "QLearningAgent", "StaticAgent",
    "load_policies", "save_policies",
    "__version__",
]
