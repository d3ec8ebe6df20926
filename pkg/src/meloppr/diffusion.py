"""Graph diffusion GD^(l), the exact PPR oracle, top-k and precision.

Score vectors cross module boundaries as ``dict[int, float]`` keyed by
global node id with zeros omitted.  Inside one diffusion the work is done on
dense scratch arrays sized to the (sub-)graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import DanglingSeedError, OracleCapError, PreconditionError
from .graph import Graph, SubGraph

ScoreVector = dict  # node id -> score, zeros absent
TopKSet = list  # [(node id, score), ...] score-descending, id-ascending ties

DENSE_SOLVE_LIMIT = 2_000
ORACLE_CAP = 50_000


def check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise PreconditionError(f"alpha must lie in (0, 1), got {alpha}")


def sparse_from_dense(ids: np.ndarray, values: np.ndarray) -> ScoreVector:
    nz = np.flatnonzero(values)
    return dict(zip(ids[nz].tolist(), values[nz].tolist()))


@dataclass
class DiffusionState:
    """Accumulated and residual vectors after ``steps_done`` diffusion steps.

    ``acc`` is (1-a) sum_{k<l} a^k W^k S0 and ``res`` is W^l S0, both aligned
    with ``node_ids``.
    """

    node_ids: np.ndarray
    acc: np.ndarray
    res: np.ndarray
    steps_done: int
    alpha: float
    ops: int = 0

    @property
    def accumulated(self) -> ScoreVector:
        return sparse_from_dense(self.node_ids, self.acc)

    @property
    def residual(self) -> ScoreVector:
        return sparse_from_dense(self.node_ids, self.res)

    def total(self) -> np.ndarray:
        """S_l = accumulated + alpha^l * residual, aligned with ``node_ids``."""
        return self.acc + self.alpha**self.steps_done * self.res

    def scores(self) -> ScoreVector:
        return sparse_from_dense(self.node_ids, self.total())


def _operator(g: Union[Graph, SubGraph], nodes: np.ndarray):
    """Transition operator, position ids and degrees of ``nodes`` in ``g``."""
    if isinstance(g, SubGraph):
        try:
            local = g.to_local(nodes)
        except KeyError:
            raise PreconditionError("initial vector has mass outside the sub-graph") from None
        return g.transition, g.global_ids, local, g.global_degree[local]
    if nodes.size and (nodes.min() < 0 or nodes.max() >= g.node_count):
        raise PreconditionError("initial vector references a node outside the graph")
    return g.transition, None, nodes, g.degrees[nodes]


def diffuse(g: Union[Graph, SubGraph], s0: Mapping[int, float], l: int, alpha: float) -> DiffusionState:
    """Run ``l`` steps of S_{k+1} = (1-a) S0 + a W S_k, tracking both parts.

    On a :class:`SubGraph`, ``s0`` is keyed by global id and W uses global
    degrees, so mass that crosses the boundary silently leaves the residual.
    """
    check_alpha(alpha)
    if l < 0:
        raise PreconditionError("diffusion length must be >= 0")
    nodes = np.fromiter(s0.keys(), dtype=np.int64, count=len(s0))
    values = np.fromiter(s0.values(), dtype=np.float64, count=len(s0))
    W, ids, pos, deg = _operator(g, nodes)
    if np.any(deg[values != 0] == 0):
        raise DanglingSeedError("dangling seed: initial vector has mass on a degree-0 node")
    n = W.shape[0]
    if ids is None:
        ids = np.arange(n, dtype=np.int64)
    x = np.zeros(n)
    np.add.at(x, pos, values)
    acc = np.zeros(n)
    coef = 1.0 - alpha
    for _ in range(l):
        acc += coef * x
        coef *= alpha
        x = W @ x
    return DiffusionState(ids, acc, x, l, alpha, ops=l * (W.nnz + n))


def exact_ppr(g: Graph, seed: int, alpha: float, cap: int = ORACLE_CAP) -> ScoreVector:
    """p0 = (1-a)(I - aW)^-1 e_seed.

    Dense LU below ``DENSE_SOLVE_LIMIT`` nodes, fixed-point iteration to an
    l1 step of 1e-12 up to ``cap`` nodes.
    """
    check_alpha(alpha)
    if not 0 <= seed < g.node_count:
        raise PreconditionError(f"seed {seed} out of range")
    if g.degree(seed) == 0:
        raise DanglingSeedError(f"dangling seed {seed}")
    n = g.node_count
    if n > cap:
        raise OracleCapError(
            f"graph has {n} nodes, above the oracle cap of {cap}; "
            "use a truncated diffusion (e.g. 200 steps) as ground truth instead"
        )
    rhs = np.zeros(n)
    rhs[seed] = 1.0 - alpha
    W = g.transition
    if n < DENSE_SOLVE_LIMIT:
        p = np.linalg.solve(np.eye(n) - alpha * W.toarray(), rhs)
    else:
        p = rhs.copy()
        while True:
            nxt = rhs + alpha * (W @ p)
            step = np.abs(nxt - p).sum()
            p = nxt
            if step < 1e-12:
                break
    p[np.abs(p) < 1e-300] = 0.0
    return sparse_from_dense(np.arange(n, dtype=np.int64), p)


def top_k(scores: Mapping[int, float], k: int) -> TopKSet:
    """The ``k`` largest entries, score-descending, ties by ascending id."""
    if k < 1:
        raise PreconditionError("k must be >= 1")
    if not scores:
        return []
    ids = np.fromiter(scores.keys(), dtype=np.int64, count=len(scores))
    vals = np.fromiter(scores.values(), dtype=np.float64, count=len(scores))
    return top_k_arrays(ids, vals, k)


def top_k_arrays(ids: np.ndarray, vals: np.ndarray, k: int) -> TopKSet:
    nz = vals != 0
    ids, vals = ids[nz], vals[nz]
    order = np.lexsort((ids, -vals))[:k]
    return list(zip(ids[order].tolist(), vals[order].tolist()))


def precision(approx: Sequence, truth: Sequence, k: int) -> float:
    """|nodes(approx) & nodes(truth)| / k; accepts TopKSets or bare id lists."""
    if len(truth) < k:
        raise PreconditionError(f"ground truth has {len(truth)} entries, fewer than k={k}")
    a = {_node(e) for e in approx[:k]}
    t = {_node(e) for e in truth[:k]}
    return len(a & t) / k


def _node(entry) -> int:
    return int(entry[0]) if isinstance(entry, tuple) else int(entry)
