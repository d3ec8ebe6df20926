"""Memory-efficient multi-stage personalized PageRank and its baselines."""

from .blocked import BlockState, blocked_ppr, inner_loop, redistribute
from .diffusion import DiffusionState, diffuse, exact_ppr, precision, top_k
from .errors import (
    DanglingSeedError,
    GraphFormatError,
    InvariantViolation,
    MelopprError,
    OracleCapError,
    PreconditionError,
    ScheduleExhausted,
)
from .graph import Graph, SubGraph, extract_ego, load_edge_list, read_binary, write_binary
from .hwmodel import MemoryReport, bram_bytes, fx_config, fx_diffuse, memory_report
from .multistage import GlobalScoreTable, MultistageResult, StagePlan, run_multistage, select_next_stage
from .push import GammaSchedule, PushState, parallel_push, sequential_push

__all__ = [
    "blocked_ppr",
    "BlockState",
    "bram_bytes",
    "DanglingSeedError",
    "diffuse",
    "DiffusionState",
    "exact_ppr",
    "extract_ego",
    "fx_config",
    "fx_diffuse",
    "GammaSchedule",
    "GlobalScoreTable",
    "Graph",
    "GraphFormatError",
    "inner_loop",
    "InvariantViolation",
    "load_edge_list",
    "MelopprError",
    "memory_report",
    "MemoryReport",
    "MultistageResult",
    "OracleCapError",
    "parallel_push",
    "precision",
    "PreconditionError",
    "PushState",
    "read_binary",
    "redistribute",
    "run_multistage",
    "ScheduleExhausted",
    "select_next_stage",
    "sequential_push",
    "StagePlan",
    "SubGraph",
    "top_k",
    "write_binary",
]
__version__ = "0.1.0"
