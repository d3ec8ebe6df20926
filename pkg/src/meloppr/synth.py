"""Seeded synthetic graphs sized like the citation benchmarks.

These are stand-ins for exercising the harness when the real edge lists
are not on disk; they do not reproduce the real graphs' structure.
"""

from __future__ import annotations

import numpy as np

from .graph import Graph

# name -> (|V|, |E|) of the graph being imitated
PRESETS = {
    "citeseer-like": (3327, 4676),
    "cora-like": (2708, 5278),
    "pubmed-like": (19717, 44327),
}


def clustered_powerlaw(n: int, m: int, triangle_prob: float = 0.5, seed: int = 0) -> Graph:
    """Growth model with preferential attachment and triadic closure.

    Node t joins with roughly ``m / n`` edges on average; each edge either
    closes a triangle through the previous target (``triangle_prob``) or
    attaches preferentially by degree.
    """
    rng = np.random.default_rng(seed)
    mean_new = m / n
    src: list[int] = []
    dst: list[int] = []
    adj: list[list[int]] = [[] for _ in range(n)]
    ends: list[int] = []  # every edge endpoint once: sampling it is degree-proportional
    adj[0].append(1)
    adj[1].append(0)
    src.append(0)
    dst.append(1)
    ends += [0, 1]
    for t in range(2, n):
        want = max(1, rng.poisson(mean_new - 1) + 1) if mean_new > 1 else 1
        want = min(want, t)
        chosen: list[int] = []
        last = None
        tries = 0
        while len(chosen) < want and tries < 50 * want:
            tries += 1
            if last is not None and rng.random() < triangle_prob and adj[last]:
                cand = adj[last][rng.integers(len(adj[last]))]
            else:
                cand = ends[rng.integers(len(ends))]
            if cand != t and cand not in chosen:
                chosen.append(cand)
                last = cand
        for u in chosen:
            adj[t].append(u)
            adj[u].append(t)
            src.append(t)
            dst.append(u)
            ends += [t, u]
    return Graph.from_edges(n, src, dst)


def preset(name: str, seed: int = 0) -> Graph:
    n, m = PRESETS[name]
    return clustered_powerlaw(n, m, seed=seed)


def random_connected(n: int, extra_edges: int, rng: np.random.Generator) -> Graph:
    """Random spanning tree plus ``extra_edges`` uniform chords."""
    if n == 1:
        raise ValueError("need at least two nodes")
    perm = rng.permutation(n)
    parents = [int(perm[rng.integers(i)]) for i in range(1, n)]
    src = list(perm[1:]) + list(rng.integers(0, n, extra_edges))
    dst = parents + list(rng.integers(0, n, extra_edges))
    return Graph.from_edges(n, src, dst)
