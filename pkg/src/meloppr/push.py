"""Push solvers for p0 = sum_k gamma_k W^k s.

Two flavours: the synchronized round (vector add + sparse matvec over the
whole residual) for an arbitrary coefficient schedule, and the classic
one-node-at-a-time local push for standard PPR, gamma_k = (1-a) a^k.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .diffusion import ScoreVector, TopKSet, check_alpha, sparse_from_dense, top_k_arrays
from .errors import DanglingSeedError, PreconditionError, ScheduleExhausted
from .graph import Graph


class GammaSchedule:
    """Diffusion coefficients gamma_0, gamma_1, ... summing to one.

    Geometric schedules are closed-form; explicit lists are normalized and
    padded with zeros.
    """

    def __init__(self, coefficients: Sequence[float] | None = None, alpha: float | None = None):
        if (coefficients is None) == (alpha is None):
            raise PreconditionError("give either explicit coefficients or a geometric alpha")
        self.alpha = alpha
        if alpha is not None:
            check_alpha(alpha)
            self.coefficients = None
            self._suffix = None
            return
        c = np.asarray(coefficients, dtype=np.float64)
        if c.ndim != 1 or c.size == 0 or np.any(c < 0) or not np.all(np.isfinite(c)):
            raise PreconditionError("coefficients must be a non-empty list of finite values >= 0")
        if c.sum() <= 0:
            raise PreconditionError("coefficients sum to zero")
        self.coefficients = c / c.sum()
        # exact tail sums; the trailing zero marks exhaustion
        self._suffix = np.append(np.cumsum(self.coefficients[::-1])[::-1], 0.0)

    @classmethod
    def geometric(cls, alpha: float) -> "GammaSchedule":
        return cls(alpha=alpha)

    @classmethod
    def explicit(cls, coefficients: Sequence[float]) -> "GammaSchedule":
        return cls(coefficients=coefficients)

    def gamma(self, k: int) -> float:
        if self.alpha is not None:
            return (1 - self.alpha) * self.alpha**k
        return float(self.coefficients[k]) if k < self.coefficients.size else 0.0

    def suffix(self, k: int) -> float:
        """sum_{i >= k} gamma_i"""
        if self.alpha is not None:
            return self.alpha**k
        return float(self._suffix[min(k, self._suffix.size - 1)])


def gamma_step(schedule: GammaSchedule, k: int) -> float:
    """gamma^(k) = gamma_k / sum_{i>=k} gamma_i, from the stored tail sums."""
    if schedule.alpha is not None:
        return 1.0 - schedule.alpha
    tail = schedule.suffix(k)
    if tail <= 0:
        raise ScheduleExhausted(f"schedule exhausted at k={k}")
    return min(1.0, schedule.gamma(k) / tail)


def gamma_recurrence(schedule: GammaSchedule, k: int, previous: float) -> float:
    """The multiplicative update gamma^(k) from gamma^(k-1); for cross-checks only."""
    return schedule.gamma(k) * previous / (schedule.gamma(k - 1) * (1.0 - previous))


@dataclass
class PushState:
    """Solution ``p`` and residual ``r`` as dense arrays over the graph."""

    p: np.ndarray
    r: np.ndarray
    alpha: float | None = None
    epsilon: float | None = None
    push_count: int = 0
    rounds: int = 0
    ops: int = 0

    @classmethod
    def start(cls, g: Graph, seed: int | dict, alpha=None, epsilon=None) -> "PushState":
        r = np.zeros(g.node_count)
        if isinstance(seed, dict):
            for v, mass in seed.items():
                r[v] += mass
        else:
            r[seed] = 1.0
        return cls(np.zeros(g.node_count), r, alpha, epsilon)

    def copy(self) -> "PushState":
        return PushState(self.p.copy(), self.r.copy(), self.alpha, self.epsilon,
                         self.push_count, self.rounds, self.ops)

    @property
    def solution(self) -> ScoreVector:
        return sparse_from_dense(np.arange(self.p.size), self.p)

    @property
    def residual(self) -> ScoreVector:
        return sparse_from_dense(np.arange(self.r.size), self.r)

    def sparse_answer(self) -> ScoreVector:
        return self.solution

    def dense_vector(self) -> np.ndarray:
        return self.p + (1.0 - self.alpha) * self.r

    def dense_answer(self) -> ScoreVector:
        """p + (1-a) r: denser, and closer to p0 than p alone."""
        return sparse_from_dense(np.arange(self.p.size), self.dense_vector())

    def top_k(self, k: int, dense: bool = True) -> TopKSet:
        vec = self.dense_vector() if dense else self.p
        return top_k_arrays(np.arange(vec.size), vec, k)


def parallel_push_round(g: Graph, state: PushState, schedule: GammaSchedule, k: int) -> PushState:
    """Round ``k >= 1``: p += gamma^(k-1) r, then r = (1 - gamma^(k-1)) W r."""
    if k < 1:
        raise PreconditionError("rounds are numbered from 1")
    gam = gamma_step(schedule, k - 1)
    W = g.transition
    p = state.p + gam * state.r
    r = (1.0 - gam) * (W @ state.r) if gam < 1.0 else np.zeros_like(state.r)
    return PushState(p, r, state.alpha, state.epsilon, state.push_count,
                     state.rounds + 1, state.ops + W.nnz + 2 * g.node_count)


def parallel_push(g: Graph, seed, schedule: GammaSchedule, rounds: int) -> PushState:
    state = PushState.start(g, seed, schedule.alpha)
    for k in range(1, rounds + 1):
        if schedule.suffix(k - 1) <= 0:
            break
        state = parallel_push_round(g, state, schedule, k)
    return state


def check_seed(g: Graph, seed: int) -> None:
    if not 0 <= seed < g.node_count:
        raise PreconditionError(f"seed {seed} out of range")
    if g.degree(seed) == 0:
        raise DanglingSeedError(f"dangling seed {seed}")


def sequential_push(
    g: Graph,
    seed: int,
    alpha: float,
    epsilon: float,
    *,
    policy: str = "fifo",
    max_pushes: int | None = None,
    callback: Callable[[PushState, int], None] | None = None,
) -> PushState:
    """Local push until every r(v)/d(v) < epsilon.

    A push at v moves (1-a) r(v) into p(v) and a r(v)/d(v) into each
    neighbor's residual.  ``policy`` picks the next node: ``"fifo"``
    (default; a node sits in the queue at most once) or ``"priority"``
    (largest r(v)/d(v) first, lowest id on ties).  ``callback(state, v)``
    runs after each push; ``max_pushes`` interrupts early.
    """
    check_alpha(alpha)
    if not epsilon > 0:
        raise PreconditionError("epsilon must be > 0")
    if policy not in ("fifo", "priority"):
        raise PreconditionError(f"unknown policy {policy!r}")
    check_seed(g, seed)
    state = PushState.start(g, seed, alpha, epsilon)
    p, r = state.p, state.r
    deg = g.degrees
    threshold = epsilon * deg
    offsets, neighbors = g.offsets, g.neighbors
    if policy == "fifo":
        queued = np.zeros(g.node_count, dtype=bool)
        work = deque()

        def offer(nodes):
            hot = nodes[(r[nodes] >= threshold[nodes]) & ~queued[nodes]]
            queued[hot] = True
            work.extend(hot.tolist())

        def take():
            v = work.popleft()
            queued[v] = False
            return v
    else:
        heap: list = []

        def offer(nodes):
            for u in nodes[r[nodes] >= threshold[nodes]].tolist():
                heapq.heappush(heap, (-r[u] / deg[u], u))

        def take():
            while heap:
                key, v = heapq.heappop(heap)
                if -key == r[v] / deg[v] and r[v] >= threshold[v]:
                    return v
            return None

    offer(np.array([seed]))
    while max_pushes is None or state.push_count < max_pushes:
        if policy == "fifo" and not work:
            break
        v = take()
        if v is None:
            break
        rv = r[v]
        p[v] += (1.0 - alpha) * rv
        r[v] = 0.0
        nbrs = neighbors[offsets[v] : offsets[v + 1]]
        r[nbrs] += alpha * rv / deg[v]
        state.push_count += 1
        state.ops += nbrs.size + 1
        offer(nbrs)
        if callback is not None:
            callback(state, v)
    return state
