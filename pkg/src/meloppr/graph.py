"""CSR storage for simple undirected graphs and BFS ego sub-graphs."""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np
from scipy import sparse

from .errors import GraphFormatError, PreconditionError

MAGIC = b"MELOPPR1"
_U64 = np.dtype("<u8")


def gather_neighbors(offsets: np.ndarray, neighbors: np.ndarray, nodes: np.ndarray):
    """Concatenate the adjacency rows of ``nodes``.

    Returns ``(flat, counts)`` where ``flat`` holds the neighbor ids row by row
    and ``counts[i]`` is the length of the row belonging to ``nodes[i]``.
    """
    starts = offsets[nodes]
    counts = offsets[nodes + 1] - starts
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=neighbors.dtype), counts
    row_first = np.cumsum(counts) - counts
    idx = np.arange(total, dtype=np.int64) + np.repeat(starts - row_first, counts)
    return neighbors[idx], counts


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable simple undirected graph in CSR form.

    ``labels`` maps compact ids back to the ids of the source file and is not
    part of the binary cache.
    """

    node_count: int
    offsets: np.ndarray
    neighbors: np.ndarray
    labels: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_edges(cls, n: int, src, dst, labels=None) -> "Graph":
        """Build from an undirected edge list; normalizes loops and duplicates."""
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        keep = src != dst
        lo = np.minimum(src[keep], dst[keep])
        hi = np.maximum(src[keep], dst[keep])
        pairs = np.unique(np.stack([lo, hi], axis=1), axis=0) if lo.size else np.empty((0, 2), np.int64)
        rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
        cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
        order = np.lexsort((cols, rows))
        rows, cols = rows[order], cols[order]
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=offsets[1:])
        return cls(int(n), offsets, cols.astype(np.int64), labels)

    @classmethod
    def from_csr(cls, offsets, neighbors, labels=None, check: bool = True) -> "Graph":
        offsets = np.ascontiguousarray(offsets, dtype=np.int64)
        neighbors = np.ascontiguousarray(neighbors, dtype=np.int64)
        g = cls(len(offsets) - 1, offsets, neighbors, labels)
        if check:
            g.validate()
        return g

    def validate(self) -> None:
        """Raise :class:`GraphFormatError` unless every CSR invariant holds."""
        off, nb, n = self.offsets, self.neighbors, self.node_count
        if n < 0 or off.shape != (n + 1,):
            raise GraphFormatError("offsets length must be node_count + 1")
        if off[0] != 0 or off[-1] != nb.size:
            raise GraphFormatError("offsets must start at 0 and end at the edge-array length")
        if np.any(np.diff(off) < 0):
            raise GraphFormatError("offsets must be non-decreasing")
        if nb.size and (nb.min() < 0 or nb.max() >= n):
            raise GraphFormatError("neighbor id out of range")
        rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(off))
        if np.any(rows == nb):
            raise GraphFormatError("self-loop present")
        key = rows * max(n, 1) + nb
        if np.unique(key).size != key.size:
            raise GraphFormatError("duplicate edge present")
        if not np.array_equal(np.sort(key), np.sort(nb * max(n, 1) + rows)):
            raise GraphFormatError("adjacency is not symmetric")

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.node_count == other.node_count
            and np.array_equal(self.offsets, other.offsets)
            and np.array_equal(self.neighbors, other.neighbors)
        )

    __hash__ = object.__hash__

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def edge_count(self) -> int:
        return self.neighbors.size // 2

    def degree(self, v: int) -> int:
        return int(self.offsets[v + 1] - self.offsets[v])

    def neighbors_of(self, v: int) -> np.ndarray:
        return self.neighbors[self.offsets[v] : self.offsets[v + 1]]

    def label(self, v: int) -> int:
        return int(self.labels[v]) if self.labels is not None else int(v)

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        data = np.ones(self.neighbors.size)
        return sparse.csr_matrix((data, self.neighbors, self.offsets), shape=(self.node_count,) * 2)

    @cached_property
    def transition(self) -> sparse.csr_matrix:
        """W = A D^-1 (columns of degree-0 nodes are left empty)."""
        deg = self.degrees[self.neighbors]
        return sparse.csr_matrix((1.0 / deg, self.neighbors, self.offsets), shape=(self.node_count,) * 2)

    @cached_property
    def _scratch(self) -> threading.local:
        return threading.local()

    def _local_ids(self) -> np.ndarray:
        """Per-thread global->local map used by BFS; all -1 between calls."""
        slot = self._scratch
        if not hasattr(slot, "ids"):
            slot.ids = np.full(self.node_count, -1, dtype=np.int64)
        return slot.ids

    def connected_component(self, v: int) -> np.ndarray:
        return extract_ego(self, v, self.node_count).global_ids


@dataclass(frozen=True, eq=False)
class SubGraph:
    """Induced sub-graph with global-degree and boundary metadata.

    Local id 0 is the BFS root. ``offsets``/``neighbors`` are in local ids and
    only contain edges with both endpoints inside the node set; each row keeps
    the order of the parent graph's row.
    """

    global_ids: np.ndarray
    offsets: np.ndarray
    neighbors: np.ndarray
    global_degree: np.ndarray
    out_degree: np.ndarray

    @property
    def node_count(self) -> int:
        return self.global_ids.size

    @property
    def edge_count(self) -> int:
        return self.neighbors.size // 2

    @property
    def local_degree(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def boundary_flag(self) -> np.ndarray:
        return self.out_degree > 0

    @cached_property
    def _sorted_ids(self):
        order = np.argsort(self.global_ids, kind="stable")
        return self.global_ids[order], order

    def to_local(self, ids) -> np.ndarray:
        """Map global ids to local ids; raises ``KeyError`` for outsiders."""
        ids = np.asarray(ids, dtype=np.int64)
        keys, order = self._sorted_ids
        pos = np.searchsorted(keys, ids)
        pos = np.minimum(pos, keys.size - 1)
        if keys.size == 0 or np.any(keys[pos] != ids):
            raise KeyError("node not in sub-graph")
        return order[pos]

    def contains(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        keys, _ = self._sorted_ids
        pos = np.minimum(np.searchsorted(keys, ids), keys.size - 1)
        return keys[pos] == ids

    @cached_property
    def transition(self) -> sparse.csr_matrix:
        """Local block of W, columns scaled by the *global* degree."""
        n = self.node_count
        data = 1.0 / self.global_degree[self.neighbors]
        return sparse.csr_matrix((data, self.neighbors, self.offsets), shape=(n, n))

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        n = self.node_count
        data = np.ones(self.neighbors.size, dtype=np.int64)
        return sparse.csr_matrix((data, self.neighbors, self.offsets), shape=(n, n))


def load_edge_list(lines: Iterable[str]) -> Graph:
    """Parse a SNAP-style edge list.

    Ids are compacted to ``0..n-1`` in order of first appearance; the original
    ids are kept in ``Graph.labels``.
    """
    ids: dict[int, int] = {}
    src: list[int] = []
    dst: list[int] = []
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        tokens = text.split()
        if len(tokens) != 2:
            raise GraphFormatError(f"expected 2 node ids, found {len(tokens)} tokens", lineno)
        try:
            u, v = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise GraphFormatError(f"non-integer node id in {text!r}", lineno) from None
        src.append(ids.setdefault(u, len(ids)))
        dst.append(ids.setdefault(v, len(ids)))
    if not ids:
        raise GraphFormatError("edge list contains no edges")
    labels = np.fromiter(ids.keys(), dtype=np.int64, count=len(ids))
    return Graph.from_edges(len(ids), src, dst, labels)


def write_binary(g: Graph) -> bytes:
    header = MAGIC + struct.pack("<QQ", g.node_count, g.neighbors.size)
    return header + g.offsets.astype(_U64).tobytes() + g.neighbors.astype(_U64).tobytes()


def read_binary(data: bytes) -> Graph:
    if len(data) < 24:
        raise GraphFormatError("truncated header")
    if data[:8] != MAGIC:
        raise GraphFormatError(f"bad magic {data[:8]!r}")
    n, m = struct.unpack_from("<QQ", data, 8)
    expected = 24 + 8 * (n + 1) + 8 * m
    if len(data) != expected:
        raise GraphFormatError(f"payload is {len(data)} bytes, layout requires {expected}")
    offsets = np.frombuffer(data, dtype=_U64, count=n + 1, offset=24)
    neighbors = np.frombuffer(data, dtype=_U64, count=m, offset=24 + 8 * (n + 1))
    if (n and offsets.max() > np.iinfo(np.int64).max) or (m and neighbors.max() >= n):
        raise GraphFormatError("id out of range")
    return Graph.from_csr(offsets.astype(np.int64), neighbors.astype(np.int64))


def extract_ego(g: Graph, seed: int, depth: int) -> SubGraph:
    """All nodes within ``depth`` hops of ``seed``, in BFS level order.

    Each level is sorted by ascending global id, so the layout is deterministic.
    Per-call work and allocations scale with the sub-graph; the only
    graph-sized buffer is a per-thread id map reused across calls.
    """
    if not 0 <= seed < g.node_count:
        raise PreconditionError(f"seed {seed} out of range [0, {g.node_count})")
    if depth < 0:
        raise PreconditionError("depth must be >= 0")
    local = g._local_ids()
    frontier = np.array([seed], dtype=np.int64)
    levels = [frontier]
    local[seed] = 0
    count = 1
    try:
        for _ in range(depth):
            reached, _ = gather_neighbors(g.offsets, g.neighbors, frontier)
            reached = np.unique(reached)
            frontier = reached[local[reached] < 0]
            if frontier.size == 0:
                break
            local[frontier] = np.arange(count, count + frontier.size)
            count += frontier.size
            levels.append(frontier)
        nodes = np.concatenate(levels)
        flat, counts = gather_neighbors(g.offsets, g.neighbors, nodes)
        mapped = local[flat]
    finally:
        local[np.concatenate(levels)] = -1
    inside = mapped >= 0
    rows = np.repeat(np.arange(nodes.size, dtype=np.int64), counts)[inside]
    cols = mapped[inside]
    local_deg = np.bincount(rows, minlength=nodes.size)
    offsets = np.zeros(nodes.size + 1, dtype=np.int64)
    np.cumsum(local_deg, out=offsets[1:])
    gdeg = counts.astype(np.int64)
    return SubGraph(nodes, offsets, cols, gdeg, gdeg - local_deg)
