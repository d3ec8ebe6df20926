"""Software model of the accelerator's integer datapath and on-chip memory."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diffusion import check_alpha, top_k_arrays
from .errors import PreconditionError
from .graph import SubGraph

UINT32_MAX = 2**32 - 1


@dataclass(frozen=True)
class FixedPointConfig:
    alpha: float
    d: int
    subgraph_size: int
    q: int
    alpha_p: int
    max_value: int

    @property
    def alpha_q(self) -> int:
        return 1 << self.q


def fx_config(alpha: float, d: int, subgraph_size: int, q: int = 10) -> FixedPointConfig:
    """Seed value Max = d * subgraph_size and alpha ~= alpha_p / 2**q."""
    check_alpha(alpha)
    if d < 1:
        raise PreconditionError("scale degree d must be >= 1")
    if q < 0:
        raise PreconditionError("shift amount q must be >= 0")
    alpha_p = math.floor(alpha * (1 << q) + 0.5)
    if not 1 <= alpha_p < 1 << 16:
        raise PreconditionError(f"alpha_p={alpha_p} is outside [1, 2**16); adjust q")
    max_value = d * subgraph_size
    if max_value > UINT32_MAX:
        raise PreconditionError(
            f"Max = {d} * {subgraph_size} overflows 32 bits; reduce the scale degree d"
        )
    return FixedPointConfig(alpha, int(d), int(subgraph_size), q, alpha_p, max_value)


def default_scale_degree(sub: SubGraph) -> int:
    """Half the largest degree, rounded up."""
    return max(1, math.ceil(int(sub.global_degree.max()) / 2))


def fx_mul_alpha(x, cfg: FixedPointConfig):
    """(x * alpha_p) >> q with truncation; accepts ints or int64 arrays."""
    return (x * cfg.alpha_p) >> cfg.q


@dataclass
class FxDiffusionState:
    """Integer diffusion result; ``res`` already carries the alpha^l factor,
    so ``acc + res`` is the integer counterpart of S_l."""

    node_ids: np.ndarray
    acc: np.ndarray
    res: np.ndarray
    steps_done: int

    def total(self) -> np.ndarray:
        return self.acc + self.res

    def top_k(self, k: int):
        return top_k_arrays(self.node_ids, self.total().astype(np.float64), k)


def fx_diffuse(sub: SubGraph, seed_local: int, l: int, cfg: FixedPointConfig) -> FxDiffusionState:
    """Integer GD^(l) on ``sub`` starting from Max at ``seed_local``.

    Per step and node: a = (x * alpha_p) >> q, the accumulator keeps x - a,
    and each neighbor receives a // d(v).  Division remainders are dropped.
    """
    if not 0 <= seed_local < sub.node_count:
        raise PreconditionError("seed_local out of range")
    if l < 0:
        raise PreconditionError("diffusion length must be >= 0")
    n = sub.node_count
    A = sub.adjacency
    deg = sub.global_degree.astype(np.int64)
    if deg[seed_local] == 0:
        raise PreconditionError("dangling seed")
    res = np.zeros(n, dtype=np.int64)
    res[seed_local] = cfg.max_value
    acc = np.zeros(n, dtype=np.int64)
    safe = np.maximum(deg, 1)
    for _ in range(l):
        moved = fx_mul_alpha(res, cfg)
        acc += res - moved
        res = A @ (moved // safe)
    return FxDiffusionState(sub.global_ids, acc, np.asarray(res, dtype=np.int64), l)


@dataclass(frozen=True)
class MemoryReport:
    fpga_bytes: int
    cpu_bytes: int | None = None


def bram_bytes(nodes: int, edges: int) -> int:
    """On-chip bytes for one loaded sub-graph, 32-bit words throughout."""
    return 4 * (2 * nodes + 2 * edges + 2 * nodes + nodes)


def memory_report(sub: SubGraph, cpu_bytes: int | None = None) -> MemoryReport:
    return MemoryReport(bram_bytes(sub.node_count, sub.edge_count), cpu_bytes)
