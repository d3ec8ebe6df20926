"""Experiment harness: configured queries, ground truth, sweeps, memory."""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import time
import tracemalloc
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .blocked import blocked_ppr
from .diffusion import TopKSet, diffuse, exact_ppr, precision, top_k, top_k_arrays
from .errors import OracleCapError, PreconditionError
from .graph import Graph, extract_ego
from .hwmodel import bram_bytes, default_scale_degree, fx_config, fx_diffuse
from .multistage import GlobalScoreTable, StagePlan, multistage_sweep, run_multistage
from .push import GammaSchedule, parallel_push, sequential_push

log = logging.getLogger(__name__)

METHODS = ("single-stage", "multistage", "sequential-push", "parallel-push", "blocked-push", "exact")
TRUTHS = ("diffusion", "exact")
CSV_HEADER = ["graph", "seed", "method", "param", "precision", "time_ns", "ops", "cpu_bytes", "fpga_bytes"]
FALLBACK_STEPS = 200


@dataclass
class QueryConfig:
    method: str = "multistage"
    alpha: float = 0.85
    k: int = 200
    L: int = 6
    l1: int = 3
    fraction: float | None = 0.2
    budget: int | None = None
    epsilon: float = 1e-6
    K1: int = 8
    hops: int = 2
    c: int | None = None
    fixed_point: bool = False
    d: int | None = None
    q: int = 10
    rounds: int = 50
    seeds: tuple | None = None
    seed_count: int = 10
    rng_seed: int = 0
    truth: str = "diffusion"
    threads: int = 1

    def validate(self) -> "QueryConfig":
        if self.method not in METHODS:
            raise PreconditionError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.truth not in TRUTHS:
            raise PreconditionError(f"unknown ground truth {self.truth!r}")
        if not 0 < self.alpha < 1:
            raise PreconditionError("alpha must lie in (0, 1)")
        if self.k < 1 or self.L < 1 or self.seed_count < 1:
            raise PreconditionError("k, L and seed_count must be >= 1")
        if self.method == "multistage":
            self.plan()
        if self.fixed_point and self.method != "single-stage":
            raise PreconditionError("fixed-point mode is only modelled for the single-stage method")
        if self.method in ("sequential-push", "blocked-push") and not self.epsilon > 0:
            raise PreconditionError("epsilon must be > 0")
        if self.c is not None and self.c < 1:
            raise PreconditionError("table factor c must be >= 1")
        return self

    def plan(self) -> StagePlan:
        fraction = None if self.budget is not None else self.fraction
        if self.l1 == self.L:
            # degenerate split: one stage covering the whole depth
            return StagePlan((self.L,), self.alpha, fraction, self.budget)
        return StagePlan.two_stage(self.L, self.l1, self.alpha, fraction, self.budget)

    def replace(self, **changes) -> "QueryConfig":
        return dataclasses.replace(self, **changes)


def coerce(name: str, raw):
    """Parse a textual value for QueryConfig field ``name``."""
    fld = {f.name: f for f in dataclasses.fields(QueryConfig)}.get(name)
    if fld is None:
        raise PreconditionError(f"unknown config key {name!r}")
    if isinstance(raw, str):
        text = raw.strip()
        if text.lower() in ("none", "inf", ""):
            return None
        typ = str(fld.type)
        if name == "seeds":
            return tuple(int(t) for t in text.replace(",", " ").split())
        if name == "fixed_point":
            return text.lower() in ("1", "true", "yes", "on")
        try:
            if typ.startswith("int"):
                return int(text)
            if typ.startswith("float"):
                return float(text)
        except ValueError:
            raise PreconditionError(f"bad value {raw!r} for {name}") from None
        return text
    return raw


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise PreconditionError(f"{path}:{lineno}: expected key = value")
            key, value = (t.strip() for t in text.split("=", 1))
            key = key.replace("-", "_")
            out[key] = coerce(key, value)
    return out


def sample_seeds(g: Graph, count: int, rng_seed: int) -> list[int]:
    """Uniform sample without replacement among nodes of degree >= 1."""
    candidates = np.flatnonzero(g.degrees > 0)
    if candidates.size == 0:
        raise PreconditionError("graph has no node with an edge")
    rng = np.random.default_rng(rng_seed)
    count = min(count, candidates.size)
    return sorted(rng.choice(candidates, size=count, replace=False).tolist())


def resolve_seeds(g: Graph, cfg: QueryConfig) -> list[int]:
    if cfg.seeds:
        for s in cfg.seeds:
            if not 0 <= s < g.node_count:
                raise PreconditionError(f"seed {s} out of range")
        return list(cfg.seeds)
    return sample_seeds(g, cfg.seed_count, cfg.rng_seed)


@dataclass
class Outcome:
    top: TopKSet
    ops: int = 0
    subgraph_sizes: list = field(default_factory=list)

    @property
    def fpga_bytes(self) -> int:
        """The accelerator holds one sub-graph at a time: the largest counts."""
        return max((bram_bytes(v, e) for v, e in self.subgraph_sizes), default=0)


def run_query(g: Graph, seed: int, cfg: QueryConfig) -> Outcome:
    m = cfg.method
    if m == "exact":
        return Outcome(top_k(exact_ppr(g, seed, cfg.alpha), cfg.k))
    if m == "single-stage":
        sub = extract_ego(g, seed, cfg.L)
        size = [(sub.node_count, sub.edge_count)]
        if cfg.fixed_point:
            d = cfg.d or default_scale_degree(sub)
            fx = fx_diffuse(sub, 0, cfg.L, fx_config(cfg.alpha, d, sub.node_count, cfg.q))
            return Outcome(fx.top_k(cfg.k), cfg.L * sub.neighbors.size, size)
        st = diffuse(sub, {seed: 1.0}, cfg.L, cfg.alpha)
        return Outcome(top_k_arrays(st.node_ids, st.total(), cfg.k), st.ops, size)
    if m == "multistage":
        table = GlobalScoreTable.bounded(cfg.c, cfg.k) if cfg.c else None
        res = run_multistage(g, seed, cfg.plan(), table, cfg.k, workers=cfg.threads)
        return Outcome(res.top, res.ops, res.subgraph_sizes)
    if m == "sequential-push":
        st = sequential_push(g, seed, cfg.alpha, cfg.epsilon)
        return Outcome(st.top_k(cfg.k), st.ops)
    if m == "parallel-push":
        st = parallel_push(g, seed, GammaSchedule.geometric(cfg.alpha), cfg.rounds)
        return Outcome(st.top_k(cfg.k), st.ops)
    if m == "blocked-push":
        sizes = []
        st = blocked_ppr(g, seed, cfg.alpha, cfg.epsilon, cfg.hops, cfg.K1,
                         callback=lambda _s, _v, sub: sizes.append((sub.node_count, sub.edge_count)))
        return Outcome(st.top_k(cfg.k), st.ops, sizes)
    raise PreconditionError(f"unknown method {m!r}")


def ground_truth(g: Graph, seed: int, cfg: QueryConfig) -> tuple[TopKSet, bool]:
    """Reference top-k and whether the truncated-diffusion fallback was used.

    ``diffusion``: top-k of the single-stage L-step diffusion on the whole
    graph.  ``exact``: the converged PPR vector.
    """
    if cfg.truth == "diffusion":
        return top_k(diffuse(g, {seed: 1.0}, cfg.L, cfg.alpha).scores(), cfg.k), False
    try:
        return top_k(exact_ppr(g, seed, cfg.alpha), cfg.k), False
    except OracleCapError:
        log.warning("oracle cap exceeded; seed %d ranked by %d-step diffusion", seed, FALLBACK_STEPS)
        st = diffuse(g, {seed: 1.0}, FALLBACK_STEPS, cfg.alpha)
        return top_k(st.scores(), cfg.k), True


def score(top: TopKSet, truth: TopKSet, k: int) -> float:
    """Precision; when the reference has fewer than k nodes, against all of them."""
    if len(truth) >= k:
        return precision(top, truth, k)
    if not truth:
        return 1.0
    return precision(top, truth, len(truth))


@dataclass
class SweepRow:
    graph: str
    seed: int
    method: str
    param: str
    precision: float
    time_ns: int
    ops: int
    cpu_bytes: int
    fpga_bytes: int

    def as_list(self, full_precision: bool = False) -> list:
        prec = repr(self.precision) if full_precision else f"{self.precision:.6g}"
        return [self.graph, self.seed, self.method, self.param, prec,
                self.time_ns, self.ops, self.cpu_bytes, self.fpga_bytes]


def format_param(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def traced(fn: Callable, *args, trace: bool = False, **kwargs):
    """Call ``fn`` and return ``(result, elapsed_ns, peak_bytes)``.

    The peak comes from tracemalloc when ``trace`` is set, else it is 0.
    """
    if trace:
        tracemalloc.start()
        tracemalloc.reset_peak()
    t0 = time.perf_counter_ns()
    try:
        out = fn(*args, **kwargs)
        elapsed = time.perf_counter_ns() - t0
        peak = tracemalloc.get_traced_memory()[1] if trace else 0
    finally:
        if trace:
            tracemalloc.stop()
    return out, elapsed, peak


def _warm(g: Graph, seed: int) -> None:
    # per-thread BFS scratch is allocated once; keep it out of traced peaks
    extract_ego(g, seed, 0)


def sweep(
    g: Graph,
    graph_name: str,
    cfg: QueryConfig,
    axis: str,
    values: Sequence,
    *,
    timing: bool = True,
    trace_memory: bool = False,
    threads: int = 1,
) -> list[SweepRow]:
    """One row per (seed, axis value), in that order."""
    cfg.validate()
    if axis not in {f.name for f in dataclasses.fields(QueryConfig)}:
        raise PreconditionError(f"unknown sweep axis {axis!r}")
    points = [cfg.replace(**{axis: v}).validate() for v in values]
    seeds = resolve_seeds(g, cfg)
    shortcut = (
        axis == "fraction" and cfg.method == "multistage" and cfg.budget is None
        and not timing and not trace_memory
    )

    def per_seed(seed: int) -> list[SweepRow]:
        _warm(g, seed)
        truth, _ = ground_truth(g, seed, cfg)
        rows = []
        if shortcut:
            capacity = cfg.c * cfg.k if cfg.c else None
            results = multistage_sweep(g, seed, cfg.plan(), list(values), cfg.k, capacity)
            for v in values:
                res = results[v]
                fb = max((bram_bytes(a, b) for a, b in res.subgraph_sizes), default=0)
                rows.append(SweepRow(graph_name, seed, cfg.method, format_param(v),
                                     score(res.top, truth, cfg.k), 0, res.ops, 0, fb))
            return rows
        for v, point in zip(values, points):
            out, ns, peak = traced(run_query, g, seed, point, trace=trace_memory)
            rows.append(SweepRow(graph_name, seed, point.method, format_param(v),
                                 score(out.top, truth, cfg.k), ns if timing else 0,
                                 out.ops, peak, out.fpga_bytes))
        return rows

    if threads > 1 and not trace_memory:
        with ThreadPoolExecutor(threads) as pool:
            chunks = list(pool.map(per_seed, seeds))
    else:
        chunks = [per_seed(s) for s in seeds]
    return [row for chunk in chunks for row in chunk]


def write_rows(rows: Iterable[SweepRow], fh, full_precision: bool = False) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(row.as_list(full_precision))


def read_rows(fh) -> list[SweepRow]:
    reader = csv.reader(fh)
    header = next(reader)
    if header != CSV_HEADER:
        raise PreconditionError(f"unexpected CSV header {header}")
    rows = []
    for rec in reader:
        g, seed, method, param, prec, t, ops, cpu, fpga = rec
        rows.append(SweepRow(g, int(seed), method, param, float(prec), int(t), int(ops), int(cpu), int(fpga)))
    return rows


def rows_to_csv(rows, full_precision: bool = False) -> str:
    buf = io.StringIO()
    write_rows(rows, buf, full_precision)
    return buf.getvalue()


def mean_by_param(rows: Iterable[SweepRow]) -> dict[str, float]:
    acc: dict[str, list] = {}
    for r in rows:
        acc.setdefault(r.param, []).append(r.precision)
    return {p: float(np.mean(v)) for p, v in acc.items()}


@dataclass
class MemoryRow:
    seed: int
    cpu_single: int
    cpu_multi: int
    fpga_multi: int
    fpga_single: int


def memory_rows(g: Graph, cfg: QueryConfig) -> list[MemoryRow]:
    """Traced peak bytes of single-stage vs multistage for each seed.

    The multistage run uses a ``c * k`` table (``c`` defaults to 10 here) so
    that no structure scales with the full graph.
    """
    cfg = cfg.replace(c=cfg.c or 10).validate()
    single = cfg.replace(method="single-stage", fixed_point=False)
    multi = cfg.replace(method="multistage", threads=1)
    rows = []
    for seed in resolve_seeds(g, cfg):
        _warm(g, seed)
        out_s, _, peak_s = traced(run_query, g, seed, single, trace=True)
        out_m, _, peak_m = traced(run_query, g, seed, multi, trace=True)
        rows.append(MemoryRow(seed, peak_s, peak_m, out_m.fpga_bytes, out_s.fpga_bytes))
    return rows


def summarize_memory(rows: Sequence[MemoryRow]) -> dict:
    """Memory ranges plus the mean of per-seed reduction ratios."""
    single = np.array([r.cpu_single for r in rows], dtype=float)
    multi = np.array([r.cpu_multi for r in rows], dtype=float)
    fpga = np.array([r.fpga_multi for r in rows], dtype=float)
    cpu_red = single / multi
    fpga_red = single / np.maximum(fpga, 1)
    return {
        "seeds": len(rows),
        "single_cpu_mb": (single.min() / 1e6, single.max() / 1e6),
        "multi_cpu_mb": (multi.min() / 1e6, multi.max() / 1e6),
        "cpu_reduction": (cpu_red.min(), cpu_red.max()),
        "cpu_avg_reduction": float(cpu_red.mean()),
        "fpga_mb": (fpga.min() / 1e6, fpga.max() / 1e6),
        "fpga_reduction": (fpga_red.min(), fpga_red.max()),
        "fpga_avg_reduction": float(fpga_red.mean()),
    }


def format_memory_table(name: str, summary: dict) -> str:
    s = summary

    def mb(pair):
        return f"{pair[0]:.3f} ~ {pair[1]:.3f}"

    def ratio(pair):
        return f"{pair[0]:.2f}x ~ {pair[1]:.2f}x"

    cols = [
        ("graph", name),
        ("LocalPPR-CPU MB", mb(s["single_cpu_mb"])),
        ("MeLoPPR-CPU MB", mb(s["multi_cpu_mb"])),
        ("CPU reduction", ratio(s["cpu_reduction"])),
        ("avg", f"{s['cpu_avg_reduction']:.2f}x"),
        ("MeLoPPR-FPGA MB", mb(s["fpga_mb"])),
        ("FPGA reduction", ratio(s["fpga_reduction"])),
        ("avg", f"{s['fpga_avg_reduction']:.2f}x"),
    ]
    widths = [max(len(h), len(v)) for h, v in cols]
    head = "  ".join(h.ljust(w) for (h, _), w in zip(cols, widths))
    body = "  ".join(v.ljust(w) for (_, v), w in zip(cols, widths))
    return f"{head.rstrip()}\n{body.rstrip()}\nseeds: {s['seeds']}"
