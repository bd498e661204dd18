"""Workload generation, replay, verification and reporting."""

from .replay import FaultInjection, ReplayConfig, VerifyResult, replay, replay_to, verify
from .stats import StatsReport, collect, predicted_bytes
from .workload import Block, Op, WorkloadSpec, generate, parse_workload, read_workload, write_workload

__all__ = [
    "Block",
    "FaultInjection",
    "Op",
    "ReplayConfig",
    "StatsReport",
    "VerifyResult",
    "WorkloadSpec",
    "collect",
    "generate",
    "parse_workload",
    "predicted_bytes",
    "read_workload",
    "replay",
    "replay_to",
    "verify",
    "write_workload",
]
