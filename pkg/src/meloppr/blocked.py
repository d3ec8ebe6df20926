"""Sub-graph-at-a-time push for memory-limited parallel hardware.

The outer loop (host side) picks a node whose residual is too large, loads
its ego graph, and hands all residual mass on that block to a synchronized
inner loop.  Mass the inner loop pushes across the block boundary is parked
in ``z`` and handed to the outside neighbors afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .diffusion import check_alpha
from .errors import InvariantViolation, PreconditionError
from .graph import Graph, SubGraph, extract_ego, gather_neighbors
from .push import PushState, check_seed


@dataclass
class BlockState:
    """Local vectors after ``inner_steps`` synchronized iterations.

    ``x``: solution gained on the block; ``y``: residual still on the block;
    ``z``: per-boundary-node mass that left through outside edges, in units
    such that the outflow of u is z(u) * d_out(u) / d(u).
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    inner_steps: int
    ops: int = 0

    def leaked(self, sub: SubGraph) -> float:
        return float(np.sum(self.z * sub.out_degree / sub.global_degree))


def inner_loop(
    sub: SubGraph,
    y0: np.ndarray | Mapping[int, float],
    alpha: float,
    K1: int,
    tol: float | None = None,
) -> BlockState:
    """``K1`` rounds of x += (1-a) y; z += a w_out * y; y = a W_block y.

    ``y0`` is indexed by local id.  With ``tol`` set the loop stops early
    once ||y||_1 < tol * ||y0||_1.
    """
    check_alpha(alpha)
    if K1 < 1:
        raise PreconditionError("K1 must be >= 1")
    n = sub.node_count
    if isinstance(y0, Mapping):
        y = np.zeros(n)
        for u, mass in y0.items():
            y[u] += mass
    else:
        y = np.array(y0, dtype=np.float64)
        if y.shape != (n,):
            raise PreconditionError("y0 must have one entry per sub-graph node")
    W = sub.transition
    w_out = sub.boundary_flag.astype(np.float64)
    x = np.zeros(n)
    z = np.zeros(n)
    start = np.abs(y).sum()
    steps = 0
    for _ in range(K1):
        x += (1.0 - alpha) * y
        z += alpha * w_out * y
        y = alpha * (W @ y)
        steps += 1
        if tol is not None and np.abs(y).sum() < tol * start:
            break
    return BlockState(x, y, z, steps, ops=steps * (W.nnz + 3 * n))


def redistribute(g: Graph, sub: SubGraph, block: BlockState, state: PushState) -> PushState:
    """Write a block result back into the global state, in place.

    p(block) += x, r(block) = y, and every outside neighbor q of a node u
    with z(u) > 0 gains z(u) / d(u).
    """
    leaking = np.flatnonzero(block.z > 0)
    if np.any(~sub.boundary_flag[leaking]):
        raise InvariantViolation("z is positive on a node with no outside edges")
    ids = sub.global_ids
    state.p[ids] += block.x
    state.r[ids] = block.y
    if leaking.size:
        src = ids[leaking]
        flat, counts = gather_neighbors(g.offsets, g.neighbors, src)
        share = np.repeat(block.z[leaking] / sub.global_degree[leaking], counts)
        outside = ~sub.contains(flat)
        np.add.at(state.r, flat[outside], share[outside])
    return state


def blocked_ppr(
    g: Graph,
    seed: int,
    alpha: float,
    epsilon: float,
    hops: int = 2,
    K1: int = 8,
    *,
    tol: float | None = 1e-3,
    max_rounds: int | None = None,
    callback: Callable[[PushState, int, SubGraph], None] | None = None,
) -> PushState:
    """Push until every r(v)/d(v) < epsilon, one ego block per outer round.

    Each round takes the node with the largest r(v)/d(v) (lowest id on
    ties), loads its ``hops``-hop ego graph and runs :func:`inner_loop` on
    all residual mass found there.
    """
    check_alpha(alpha)
    if not epsilon > 0:
        raise PreconditionError("epsilon must be > 0")
    if hops < 1:
        raise PreconditionError("hops must be >= 1")
    if K1 < 1:
        raise PreconditionError("K1 must be >= 1")
    check_seed(g, seed)
    state = PushState.start(g, seed, alpha, epsilon)
    deg = np.maximum(g.degrees, 1)
    while max_rounds is None or state.rounds < max_rounds:
        ratio = state.r / deg
        v = int(np.argmax(ratio))
        if ratio[v] < epsilon:
            break
        sub = extract_ego(g, v, hops)
        block = inner_loop(sub, state.r[sub.global_ids], alpha, K1, tol)
        redistribute(g, sub, block, state)
        state.rounds += 1
        state.push_count += block.inner_steps * sub.node_count
        state.ops += block.ops
        if callback is not None:
            callback(state, v, sub)
    return state
