"""Multi-stage PPR: stage + linear decomposition with a bounded score table.

An L-step diffusion from the seed is split into stages ``l1 + l2 + ...``.
Stage one diffuses ``l1`` steps on the seed's ``l1``-hop ego graph; every
selected node ``v`` of its residual then seeds an independent ``l2``-step
diffusion on ``v``'s own ``l2``-hop ego graph, scaled by ``alpha**l1``:

    GD^(l1+l2)(S0) = GD^(l1)(S0) - a^l1 S^r + a^l1 * sum_v GD^(l2)(S^r_v)

With every residual node selected and an unbounded table the result equals
the single-stage diffusion up to floating-point summation order.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .diffusion import TopKSet, check_alpha, diffuse, top_k_arrays
from .errors import DanglingSeedError, PreconditionError
from .graph import Graph, extract_ego

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StagePlan:
    """Stage depths plus the next-stage selection rule.

    Exactly one of ``fraction`` (share of the nonzero-residual support) or
    ``budget`` (absolute node count) is set.
    """

    stage_depths: tuple
    alpha: float = 0.85
    fraction: float | None = 1.0
    budget: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "stage_depths", tuple(int(d) for d in self.stage_depths))
        if not self.stage_depths or any(d < 1 for d in self.stage_depths):
            raise PreconditionError("every stage depth must be >= 1")
        check_alpha(self.alpha)
        if (self.fraction is None) == (self.budget is None):
            raise PreconditionError("set exactly one of fraction or budget")
        if self.fraction is not None and not 0.0 < self.fraction <= 1.0:
            raise PreconditionError("selection fraction must lie in (0, 1]")
        if self.budget is not None and self.budget < 0:
            raise PreconditionError("selection budget must be >= 0")

    @classmethod
    def two_stage(cls, total_depth=6, first=3, alpha=0.85, fraction=1.0, budget=None):
        if budget is not None:
            fraction = None
        if not 1 <= first < total_depth:
            raise PreconditionError("need 1 <= l1 < L for a two-stage plan")
        return cls((first, total_depth - first), alpha, fraction, budget)

    @property
    def total_depth(self) -> int:
        return sum(self.stage_depths)


class GlobalScoreTable:
    """Score aggregation table holding at most ``capacity`` nodes.

    When full, a new node displaces the current minimum (lowest score, then
    lowest id) only if its incoming delta is larger; the evicted node's mass
    is lost.  Bounded tables keep scores in fixed numpy slots plus a
    node -> slot map.  ``capacity=None`` means unbounded, backed by a dense
    array that grows with the largest node id seen.
    """

    def __init__(self, capacity: int | None = None):
        if capacity is not None and capacity < 1:
            raise PreconditionError("table capacity must be >= 1")
        self.capacity = capacity
        self._slot: dict = {}
        self._ids = np.zeros(capacity or 0, dtype=np.int64)
        self._vals = np.zeros(capacity or 0)
        self._min = -1  # slot of the current minimum once full; -1 = unknown
        self._dense = np.zeros(0)
        self._present = np.zeros(0, dtype=bool)
        self.evictions = 0
        self.dropped = 0

    @classmethod
    def bounded(cls, c: int, k: int) -> "GlobalScoreTable":
        return cls(c * k)

    @property
    def unbounded(self) -> bool:
        return self.capacity is None

    def __len__(self):
        if self.unbounded:
            return int(self._present.sum())
        return len(self._slot)

    def __contains__(self, node):
        if self.unbounded:
            return 0 <= node < self._present.size and bool(self._present[node])
        return node in self._slot

    def get(self, node, default=None):
        if self.unbounded:
            return float(self._dense[node]) if node in self else default
        slot = self._slot.get(node)
        return default if slot is None else float(self._vals[slot])

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(node ids, scores) of every stored entry, ids ascending."""
        if self.unbounded:
            ids = np.flatnonzero(self._present)
            return ids, self._dense[ids]
        n = len(self._slot)
        order = np.argsort(self._ids[:n], kind="stable")
        return self._ids[:n][order], self._vals[:n][order]

    def to_dict(self) -> dict:
        if self.unbounded:
            ids, vals = self.arrays()
            return dict(zip(ids.tolist(), vals.tolist()))
        n = len(self._slot)
        pairs = sorted(zip(self._ids[:n].tolist(), self._vals[:n].tolist()))
        return dict(pairs)

    def _min_slot(self) -> int:
        if self._min < 0:
            vals = self._vals
            low = vals.min()
            tied = np.flatnonzero(vals == low)
            self._min = int(tied[np.argmin(self._ids[tied])])
        return self._min

    def minimum(self) -> tuple | None:
        """Current (node, score) eviction candidate: lowest score, then lowest id."""
        if len(self) == 0:
            return None
        if self.unbounded:
            ids, vals = self.arrays()
            i = np.lexsort((ids, vals))[0]
            return int(ids[i]), float(vals[i])
        if len(self._slot) < self.capacity:
            n = len(self._slot)
            score, node = min(zip(self._vals[:n].tolist(), self._ids[:n].tolist()))
            return node, score
        slot = self._min_slot()
        return int(self._ids[slot]), float(self._vals[slot])

    def aggregate(self, node: int, delta: float) -> None:
        if self.unbounded:
            self.aggregate_many(np.array([node]), np.array([delta], dtype=np.float64))
            return
        slot = self._slot.get(node)
        vals = self._vals
        if slot is not None:
            vals[slot] += delta
            m = self._min
            if m >= 0:
                if slot == m:
                    if delta > 0:
                        self._min = -1
                elif delta < 0 and (vals[slot], node) < (vals[m], self._ids[m]):
                    self._min = slot
            return
        n = len(self._slot)
        if n < self.capacity:
            self._slot[node] = n
            self._ids[n] = node
            vals[n] = delta
            return
        m = self._min_slot()
        if not delta > vals[m]:
            self.dropped += 1
            return
        del self._slot[int(self._ids[m])]
        self._slot[node] = m
        self._ids[m] = node
        vals[m] = delta
        self._min = -1
        self.evictions += 1

    def aggregate_many(self, nodes, deltas) -> None:
        """Apply updates in the given order."""
        if not self.unbounded:
            self._bounded_many(np.asarray(nodes, dtype=np.int64), np.asarray(deltas, dtype=np.float64))
            return
        nodes = np.asarray(nodes, dtype=np.int64)
        if nodes.size == 0:
            return
        top = int(nodes.max()) + 1
        if top > self._dense.size:
            grow = max(top, 2 * self._dense.size)
            self._dense = np.concatenate([self._dense, np.zeros(grow - self._dense.size)])
            self._present = np.concatenate(
                [self._present, np.zeros(grow - self._present.size, dtype=bool)]
            )
        np.add.at(self._dense, nodes, np.asarray(deltas, dtype=np.float64))
        self._present[nodes] = True

    def _bounded_many(self, nodes: np.ndarray, deltas: np.ndarray) -> None:
        n = len(self._slot)
        if n == self.capacity and nodes.size > 1 and deltas.min() >= 0:
            # With distinct nodes and no negative delta the floor never drops
            # within the batch, so absent nodes at or below it are dropped
            # whatever happens before their turn.
            if np.unique(nodes).size == nodes.size:
                floor = self._vals[self._min_slot()]
                keep = (deltas > floor) | np.isin(nodes, self._ids)
                self.dropped += int(nodes.size - keep.sum())
                nodes, deltas = nodes[keep], deltas[keep]
        aggregate = self.aggregate
        for node, delta in zip(nodes.tolist(), deltas.tolist()):
            aggregate(node, delta)

    def copy(self) -> "GlobalScoreTable":
        other = GlobalScoreTable(self.capacity)
        other._slot = dict(self._slot)
        other._ids = self._ids.copy()
        other._vals = self._vals.copy()
        other._min = self._min
        other._dense = self._dense.copy()
        other._present = self._present.copy()
        other.evictions, other.dropped = self.evictions, self.dropped
        return other

    def top_k(self, k: int) -> TopKSet:
        """Top-k over strictly positive entries."""
        ids, vals = self.arrays()
        keep = vals > 0
        return top_k_arrays(ids[keep], vals[keep], k)


def select_next_stage(
    residual: Mapping[int, float] | tuple,
    fraction: float | None = None,
    budget: int | None = None,
) -> list[int]:
    """Nonzero-residual nodes by descending residual (ties: ascending id),
    truncated to ``ceil(fraction * support)`` or to ``budget``."""
    if isinstance(residual, tuple):
        ids, vals = residual
    else:
        ids = np.fromiter(residual.keys(), dtype=np.int64, count=len(residual))
        vals = np.fromiter(residual.values(), dtype=np.float64, count=len(residual))
    nz = vals != 0
    ids, vals = ids[nz], vals[nz]
    if budget is not None:
        count = min(int(budget), ids.size)
    elif fraction is not None:
        count = min(ids.size, math.ceil(fraction * ids.size - 1e-9))
    else:
        count = ids.size
    order = np.lexsort((ids, -vals))[:count]
    return ids[order].tolist()


@dataclass
class MultistageResult:
    top: TopKSet
    table: GlobalScoreTable
    selected: list = field(default_factory=list)
    stage_one_support: int = 0
    subgraph_sizes: list = field(default_factory=list)  # (|V|, |E|) per loaded sub-graph
    ops: int = 0
    empty_selection: bool = False


@dataclass
class _Leaf:
    ids: np.ndarray
    values: np.ndarray
    size: tuple
    ops: int


def _leaf(g: Graph, node: int, mass: float, depth: int, alpha: float, scale: float) -> _Leaf:
    sub = extract_ego(g, node, depth)
    st = diffuse(sub, {node: mass}, depth, alpha)
    vals = scale * st.total()
    nz = np.flatnonzero(vals)
    return _Leaf(st.node_ids[nz], vals[nz], (sub.node_count, sub.edge_count), st.ops)


class _Run:
    """Mutable bookkeeping for one query; aggregates in canonical order."""

    def __init__(self, g, plan, table, workers, checkpoints):
        self.g, self.plan, self.table = g, plan, table
        self.workers = workers
        self.checkpoints = sorted(set(checkpoints or ()))
        self.snapshots: dict[int, tuple] = {}
        self.sizes: list = []
        self.ops = 0
        self.selected: list = []
        self.support = 0

    def emit(self, ids, values):
        self.table.aggregate_many(ids, values)

    def stage(self, node: int, mass: float, depths: Sequence[int], scale: float, top: bool):
        alpha = self.plan.alpha
        depth = depths[0]
        if len(depths) == 1:
            leaf = _leaf(self.g, node, mass, depth, alpha, scale)
            self._absorb(leaf)
            return
        sub = extract_ego(self.g, node, depth)
        st = diffuse(sub, {node: mass}, depth, alpha)
        self.sizes.append((sub.node_count, sub.edge_count))
        self.ops += st.ops
        del sub
        tail = alpha**depth
        order = np.argsort(st.node_ids, kind="stable")
        ids, acc, res = st.node_ids[order], st.acc[order], st.res[order]
        total = scale * (acc + tail * res)
        nz = np.flatnonzero(total)
        self.emit(ids[nz], total[nz])
        nz = np.flatnonzero(res)
        self.emit(ids[nz], -scale * tail * res[nz])
        chosen = select_next_stage((ids, res), self.plan.fraction, self.plan.budget)
        lookup = dict(zip(ids[nz].tolist(), res[nz].tolist()))
        if top:
            self.selected = chosen
            self.support = int(nz.size)
        child_scale = scale * tail
        rest = depths[1:]
        if len(rest) == 1 and top:
            self._leaves(chosen, lookup, rest[0], child_scale)
        else:
            for v in chosen:
                self.stage(v, lookup[v], rest, child_scale, top=False)

    def _leaves(self, chosen, lookup, depth, scale):
        alpha, g = self.plan.alpha, self.g

        def work(v):
            return _leaf(g, v, lookup[v], depth, alpha, scale)

        self._snapshot(0)
        if self.workers > 1 and len(chosen) > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                leaves = pool.map(work, chosen)
                for i, leaf in enumerate(leaves, start=1):
                    self._absorb(leaf)
                    self._snapshot(i)
        else:
            for i, v in enumerate(chosen, start=1):
                self._absorb(work(v))
                self._snapshot(i)

    def _absorb(self, leaf: _Leaf):
        self.sizes.append(leaf.size)
        self.ops += leaf.ops
        order = np.argsort(leaf.ids, kind="stable")
        self.emit(leaf.ids[order], leaf.values[order])

    def _snapshot(self, done: int):
        if done in self.checkpoints:
            self.snapshots[done] = (self.table.copy(), len(self.sizes), self.ops)


def _start(g: Graph, seed: int, plan: StagePlan):
    if not 0 <= seed < g.node_count:
        raise PreconditionError(f"seed {seed} out of range")
    if g.degree(seed) == 0:
        raise DanglingSeedError(f"dangling seed {seed}")


def default_workers() -> int:
    return max(1, int(os.environ.get("MELOPPR_THREADS", "1")))


def run_multistage(
    g: Graph,
    seed: int,
    plan: StagePlan,
    table: GlobalScoreTable | None = None,
    k: int = 200,
    workers: int | None = None,
) -> MultistageResult:
    """Approximate top-k PPR of ``seed`` via the multi-stage decomposition.

    Aggregation order is fixed (stage-one scores, the subtraction term, then
    stage-two results in selection order) so a bounded table gives the same
    answer whatever ``workers`` is.
    """
    _start(g, seed, plan)
    table = GlobalScoreTable() if table is None else table
    run = _Run(g, plan, table, workers or default_workers(), None)
    run.stage(seed, 1.0, plan.stage_depths, 1.0, top=True)
    empty = len(plan.stage_depths) > 1 and not run.selected
    if empty:
        log.warning("no next-stage nodes selected for seed %d; returning stage-one ranking", seed)
    return MultistageResult(
        table.top_k(k), table, run.selected, run.support, run.sizes, run.ops, empty
    )


def multistage_sweep(
    g: Graph,
    seed: int,
    plan: StagePlan,
    fractions: Sequence[float],
    k: int = 200,
    capacity: int | None = None,
) -> dict[float, MultistageResult]:
    """Results for several selection fractions from one pass.

    Selection is a prefix of one residual ranking, so the table after the
    first ``m`` stage-two aggregations is exactly the table a run selecting
    ``m`` nodes would end with.  Only two-stage plans are supported.
    """
    if len(plan.stage_depths) != 2:
        raise PreconditionError("sweeps need a two-stage plan")
    _start(g, seed, plan)
    widest = StagePlan(plan.stage_depths, plan.alpha, max(fractions), None)
    probe = GlobalScoreTable(capacity)
    # selection counts depend only on the stage-one support
    st = diffuse(extract_ego(g, seed, plan.stage_depths[0]), {seed: 1.0}, plan.stage_depths[0], plan.alpha)
    support = int(np.count_nonzero(st.res))
    counts = {f: min(support, math.ceil(f * support - 1e-9)) for f in fractions}
    run = _Run(g, widest, probe, 1, counts.values())
    run.stage(seed, 1.0, plan.stage_depths, 1.0, top=True)
    out = {}
    for f, m in counts.items():
        table, nsub, ops = run.snapshots[m]
        out[f] = MultistageResult(
            table.top_k(k), table, run.selected[:m], support, run.sizes[:nsub], ops, m == 0
        )
    return out
