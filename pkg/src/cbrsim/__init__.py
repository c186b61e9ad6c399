"""Cluster-gated replication for opportunistic (delay-tolerant) networks.

Trace replay, utility functions, 1-D utility clustering and the replication
strategies built on them.
"""

from .clustering import ClusterModel, ClusteringConfig, fit_model, kmeans_1d, lvq_update, rank_of
from .engine import RunConfig, RunResult, Simulation, TrafficModel, run
from .metrics import Report, aggregate, delivery_rate_change, routing_gain
from .trace import ContactEvent, ContactTrace, generate_synthetic, load_trace, parse_trace
from .utilities import UtilityKind, UtilityState

__all__ = [
    "ClusterModel",
    "ClusteringConfig",
    "ContactEvent",
    "ContactTrace",
    "Report",
    "RunConfig",
    "RunResult",
    "Simulation",
    "TrafficModel",
    "UtilityKind",
    "UtilityState",
    "aggregate",
    "delivery_rate_change",
    "fit_model",
    "generate_synthetic",
    "kmeans_1d",
    "load_trace",
    "lvq_update",
    "parse_trace",
    "rank_of",
    "routing_gain",
    "run",
]
