"""Hierarchical graph scheduling with nested grow, shrink and cloud bursting."""

from .graph import ResourceGraph, Subgraph, VertexRecord, build_synthetic_cluster
from .grow import GrowResult, add_subgraph, match_grow, match_shrink, update_metadata
from .hierarchy import Hierarchy, SchedulerInstance, build_ladder, check_inclusion, spawn_child
from .jgf import deserialize_jgf, serialize_jgf
from .jobspec import JobSpec, parse_jobspec, request_size
from .matcher import match_allocate
from .provider import MockProvider

__version__ = "0.1.0"

__all__ = [
    "GrowResult",
    "Hierarchy",
    "JobSpec",
    "MockProvider",
    "ResourceGraph",
    "SchedulerInstance",
    "Subgraph",
    "VertexRecord",
    "add_subgraph",
    "build_ladder",
    "build_synthetic_cluster",
    "check_inclusion",
    "deserialize_jgf",
    "match_allocate",
    "match_grow",
    "match_shrink",
    "parse_jobspec",
    "request_size",
    "serialize_jgf",
    "spawn_child",
    "update_metadata",
]
