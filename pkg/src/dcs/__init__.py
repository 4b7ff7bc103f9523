"""Deterministic causal structure: immutable contributions, semilattice state,
provenance graphs, and a seeded simulator to exercise them."""

from .agent import AgentState
from .contribution import Contribution, make_contribution, read_log, validate_contribution, write_log
from .dag import ProvenanceDag, isomorphic, observationally_equivalent
from .network import ExecutionRecord, NetworkConfig, run
from .policy import OperationalPolicy, apply_policy, batching, fifo, lifo, reordering
from .scenario import Scenario, load as load_scenario
from .semilattice import SemilatticeValue, gmap, gset, join, join_all, leq, maxint
from .violations import ViolationMode, ambiguity_rate, run_violation

__version__ = "0.1.0"

__all__ = [
    "AgentState",
    "Contribution",
    "ExecutionRecord",
    "NetworkConfig",
    "OperationalPolicy",
    "ProvenanceDag",
    "Scenario",
    "SemilatticeValue",
    "ViolationMode",
    "ambiguity_rate",
    "apply_policy",
    "batching",
    "fifo",
    "gmap",
    "gset",
    "isomorphic",
    "join",
    "join_all",
    "leq",
    "lifo",
    "load_scenario",
    "make_contribution",
    "maxint",
    "observationally_equivalent",
    "read_log",
    "reordering",
    "run",
    "run_violation",
    "validate_contribution",
    "write_log",
]
