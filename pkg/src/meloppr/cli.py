"""``meloppr`` command line: convert, query, oracle, sweep, memreport, synth.

Exit codes: 0 ok, 1 usage, 2 data or format problem, 3 precondition.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import bench
from .bench import QueryConfig
from .diffusion import exact_ppr, top_k
from .errors import GraphFormatError, PreconditionError
from .graph import MAGIC, Graph, load_edge_list, read_binary, write_binary

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PRECONDITION = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def labels_path(path) -> Path:
    return Path(str(path) + ".labels")


def load_graph(path) -> Graph:
    """Binary cache (detected by its magic) or a text edge list.

    A binary cache may have a ``<path>.labels`` sidecar listing the original
    node ids, one per line, written by ``convert``.
    """
    p = Path(path)
    data = p.read_bytes()
    if data[: len(MAGIC)] == MAGIC:
        g = read_binary(data)
        side = labels_path(p)
        if side.exists():
            labels = np.loadtxt(side, dtype=np.int64, ndmin=1)
            if labels.shape != (g.node_count,):
                raise GraphFormatError(f"{side}: expected {g.node_count} labels, found {labels.size}")
            g = Graph(g.node_count, g.offsets, g.neighbors, labels)
        return g
    try:
        return load_edge_list(data.decode().splitlines())
    except GraphFormatError as exc:
        raise GraphFormatError(f"{p}: {exc}") from None
    except UnicodeDecodeError:
        raise GraphFormatError(f"{p}: neither a binary graph nor a text edge list") from None


class Ids:
    """Translate between compact ids and the ids used in the input file."""

    def __init__(self, g: Graph):
        self.labels = g.labels
        self.lookup = None if g.labels is None else {int(v): i for i, v in enumerate(g.labels)}

    def to_compact(self, node: int) -> int:
        if self.lookup is None:
            return node
        if node not in self.lookup:
            raise PreconditionError(f"node {node} is not in the graph")
        return self.lookup[node]

    def to_label(self, node: int) -> int:
        return node if self.labels is None else int(self.labels[node])


_BOOL = {"fixed_point"}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="file of key = value lines overriding defaults")
    for f in dataclasses.fields(QueryConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name in _BOOL:
            p.add_argument(flag, dest=f.name, action="store_true", default=None)
        elif f.name == "method":
            p.add_argument(flag, dest=f.name, choices=bench.METHODS, default=None)
        elif f.name == "truth":
            p.add_argument(flag, dest=f.name, choices=bench.TRUTHS, default=None)
        else:
            p.add_argument(flag, dest=f.name, default=None, metavar=f.name.upper())
    p.add_argument("--seed", dest="seed_single", type=int, help="shorthand for --seeds with one node")


def build_config(args, **overrides) -> QueryConfig:
    values = dict(overrides)
    if args.config:
        values.update(bench.read_config_file(args.config))
    for f in dataclasses.fields(QueryConfig):
        raw = getattr(args, f.name, None)
        if raw is not None:
            values[f.name] = bench.coerce(f.name, raw) if isinstance(raw, str) else raw
    if getattr(args, "seed_single", None) is not None:
        values["seeds"] = (args.seed_single,)
    cap = os.environ.get("MELOPPR_THREADS")
    if cap:
        cap_n = max(1, int(cap))
        values["threads"] = min(values.get("threads") or cap_n, cap_n)
    return QueryConfig(**values).validate()


def _translate_seeds(cfg: QueryConfig, ids: Ids) -> QueryConfig:
    if cfg.seeds:
        return cfg.replace(seeds=tuple(ids.to_compact(s) for s in cfg.seeds))
    return cfg


def _print_listing(top, ids: Ids, out) -> None:
    for rank, (node, val) in enumerate(top, start=1):
        out.write(f"{rank} {ids.to_label(node)} {val:.6g}\n")


def cmd_convert(args) -> int:
    g = load_graph(args.input)
    Path(args.output).write_bytes(write_binary(g))
    if g.labels is not None:
        labels_path(args.output).write_text("".join(f"{v}\n" for v in g.labels.tolist()))
    print(f"{args.output}: {g.node_count} nodes, {g.edge_count} edges", file=sys.stderr)
    return EXIT_OK


def _single_seed(cfg: QueryConfig) -> int:
    if not cfg.seeds or len(cfg.seeds) != 1:
        raise UsageError("query needs exactly one seed (--seed N)")
    return cfg.seeds[0]


def cmd_query(args) -> int:
    g = load_graph(args.graph)
    ids = Ids(g)
    cfg = _translate_seeds(build_config(args), ids)
    out = bench.run_query(g, _single_seed(cfg), cfg)
    _print_listing(out.top, ids, sys.stdout)
    return EXIT_OK


def cmd_oracle(args) -> int:
    g = load_graph(args.graph)
    ids = Ids(g)
    cfg = _translate_seeds(build_config(args), ids)
    _print_listing(top_k(exact_ppr(g, _single_seed(cfg), cfg.alpha), cfg.k), ids, sys.stdout)
    return EXIT_OK


def cmd_sweep(args) -> int:
    g = load_graph(args.graph)
    ids = Ids(g)
    cfg = _translate_seeds(build_config(args), ids)
    values = [bench.coerce(args.axis, v) for v in args.values.split(",")]
    name = args.name or Path(args.graph).stem
    rows = bench.sweep(
        g, name, cfg, args.axis, values,
        timing=not args.no_timing, trace_memory=args.trace_memory, threads=cfg.threads,
    )
    for row in rows:
        row.seed = ids.to_label(row.seed)
    text = bench.rows_to_csv(rows, args.full_precision)
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
        means = bench.mean_by_param(rows)
        for param, mean in means.items():
            print(f"{args.axis}={param}: mean precision {mean:.4f}", file=sys.stderr)
    return EXIT_OK


def cmd_memreport(args) -> int:
    g = load_graph(args.graph)
    ids = Ids(g)
    cfg = _translate_seeds(build_config(args), ids)
    rows = bench.memory_rows(g, cfg)
    name = args.name or Path(args.graph).stem
    if args.per_seed:
        print("seed,cpu_single,cpu_multi,fpga_single,fpga_multi")
        for r in rows:
            print(f"{ids.to_label(r.seed)},{r.cpu_single},{r.cpu_multi},{r.fpga_single},{r.fpga_multi}")
    print(bench.format_memory_table(name, bench.summarize_memory(rows)))
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synth import preset

    g = preset(args.preset, args.rng_seed)
    with open(args.output, "w") as fh:
        rows = np.repeat(np.arange(g.node_count), g.degrees)
        for u, v in zip(rows.tolist(), g.neighbors.tolist()):
            if u < v:
                fh.write(f"{u} {v}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="meloppr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("convert", help="edge list to binary cache")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_convert)

    for name, func, text in (
        ("query", cmd_query, "top-k listing for one seed"),
        ("oracle", cmd_oracle, "exact PPR top-k for one seed"),
        ("memreport", cmd_memreport, "single-stage vs multistage memory"),
        ("sweep", cmd_sweep, "precision sweep over one config field, CSV out"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("graph")
        _add_config_flags(p)
        p.set_defaults(func=func)
        if name in ("sweep", "memreport"):
            p.add_argument("--name", help="graph name in the output (default: file stem)")
        if name == "memreport":
            p.add_argument("--per-seed", action="store_true")
        if name == "sweep":
            p.add_argument("--axis", required=True, help="QueryConfig field to vary")
            p.add_argument("--values", required=True, help="comma-separated values")
            p.add_argument("--out", help="CSV path (default stdout)")
            p.add_argument("--no-timing", action="store_true", help="write time_ns as 0 for byte-stable output")
            p.add_argument("--trace-memory", action="store_true", help="fill cpu_bytes from tracemalloc")
            p.add_argument("--full-precision", action="store_true")

    p = sub.add_parser("synth", help="write a seeded synthetic edge list")
    p.add_argument("preset", choices=["citeseer-like", "cora-like", "pubmed-like"])
    p.add_argument("output")
    p.add_argument("--rng-seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"meloppr: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GraphFormatError, OSError) as exc:
        print(f"meloppr: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PreconditionError as exc:
        print(f"meloppr: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
