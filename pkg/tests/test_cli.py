import io

import numpy as np
import pytest

from meloppr import bench
from meloppr.bench import QueryConfig
from meloppr.cli import main
from meloppr.errors import OracleCapError, PreconditionError
from meloppr.graph import load_edge_list, read_binary
from meloppr.synth import preset


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def p2_file(tmp_path):
    path = tmp_path / "p2.txt"
    path.write_text("0 1\n")
    return path


@pytest.fixture
def small_file(tmp_path):
    g = preset("cora-like", 4)
    rows = np.repeat(np.arange(g.node_count), g.degrees)
    path = tmp_path / "small.txt"
    path.write_text("".join(f"{u} {v}\n" for u, v in zip(rows.tolist(), g.neighbors.tolist()) if u < v))
    return path


class TestConfig:
    def test_defaults(self):
        cfg = QueryConfig().validate()
        assert (cfg.k, cfg.L, cfg.l1, cfg.alpha) == (200, 6, 3, 0.85)
        assert cfg.plan().stage_depths == (3, 3)

    @pytest.mark.parametrize("changes", [
        dict(method="nope"), dict(alpha=1.0), dict(k=0), dict(l1=0), dict(l1=7),
        dict(fraction=0.0), dict(fixed_point=True), dict(c=0), dict(truth="x"),
        dict(method="sequential-push", epsilon=0.0),
    ])
    def test_invalid(self, changes):
        with pytest.raises(PreconditionError):
            QueryConfig(**changes).validate()

    def test_config_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\nalpha = 0.5\nk=7\nseeds = 1, 2\nbudget = none\nfixed-point = yes\n")
        values = bench.read_config_file(path)
        assert values == {"alpha": 0.5, "k": 7, "seeds": (1, 2), "budget": None, "fixed_point": True}

    def test_config_file_errors(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("alpha\n")
        with pytest.raises(PreconditionError, match="bad.cfg:1"):
            bench.read_config_file(path)
        path.write_text("colour = red\n")
        with pytest.raises(PreconditionError, match="unknown config key"):
            bench.read_config_file(path)


class TestHarness:
    def test_seed_sampling(self):
        g = load_edge_list(["0 1", "1 2", "5 5"])
        seeds = bench.sample_seeds(g, 10, 0)
        assert seeds == [0, 1, 2]
        big = preset("cora-like", 0)
        assert bench.sample_seeds(big, 20, 3) == bench.sample_seeds(big, 20, 3)
        assert bench.sample_seeds(big, 20, 3) != bench.sample_seeds(big, 20, 4)

    @pytest.mark.parametrize("method", bench.METHODS)
    def test_every_method_runs(self, method):
        g = preset("cora-like", 0)
        cfg = QueryConfig(method=method, k=20, epsilon=1e-5).validate()
        out = bench.run_query(g, 5, cfg)
        assert 0 < len(out.top) <= 20 and out.ops >= 0 and out.fpga_bytes >= 0

    def test_fixed_point_query(self):
        g = preset("cora-like", 0)
        out = bench.run_query(g, 5, QueryConfig(method="single-stage", fixed_point=True, k=20).validate())
        assert len(out.top) == 20 and all(float(v).is_integer() for _, v in out.top)

    def test_ground_truth_fallback(self, monkeypatch):
        g = load_edge_list(["0 1", "1 2"])

        def capped(*_a, **_k):
            raise OracleCapError("too big")

        monkeypatch.setattr(bench, "exact_ppr", capped)
        top, flagged = bench.ground_truth(g, 0, QueryConfig(truth="exact", k=3, alpha=0.5))
        assert flagged and [v for v, _ in top] == [0, 1, 2]

    def test_score_short_truth(self):
        assert bench.score([(1, 0.5)], [(1, 0.9)], 200) == 1.0
        assert bench.score([(2, 0.5)], [(1, 0.9), (2, 0.1)], 1) == 0.0

    def test_sweep_rows_and_shortcut(self):
        g = preset("citeseer-like", 0)
        cfg = QueryConfig(seed_count=3, k=50)
        values = [0.05, 0.2, 1.0]
        fast = bench.sweep(g, "g", cfg, "fraction", values, timing=False)
        slow = bench.sweep(g, "g", cfg, "fraction", values, timing=True)
        assert [(r.seed, r.param) for r in fast] == [(r.seed, r.param) for r in slow]
        for a, b in zip(fast, slow):
            assert (a.precision, a.ops, a.fpga_bytes) == (b.precision, b.ops, b.fpga_bytes)
            assert 0 <= a.precision <= 1 and b.time_ns > 0
        assert all(r.precision == 1.0 for r in fast if r.param == "1")

    def test_sweep_threads_same_rows(self):
        g = preset("citeseer-like", 0)
        cfg = QueryConfig(seed_count=4, k=30, method="blocked-push", epsilon=1e-4)
        one = bench.sweep(g, "g", cfg, "K1", [2, 8], timing=False)
        four = bench.sweep(g, "g", cfg, "K1", [2, 8], timing=False, threads=4)
        assert bench.rows_to_csv(one) == bench.rows_to_csv(four)

    def test_csv_round_trip(self):
        rows = [bench.SweepRow("g", 3, "multistage", "0.2", 0.123456789, 10, 20, 30, 40)]
        text = bench.rows_to_csv(rows, full_precision=True)
        assert bench.read_rows(io.StringIO(text)) == rows
        assert bench.rows_to_csv(rows).splitlines()[1] == "g,3,multistage,0.2,0.123457,10,20,30,40"

    def test_sweep_bad_axis(self):
        with pytest.raises(PreconditionError):
            bench.sweep(preset("cora-like", 0), "g", QueryConfig(seed_count=1), "colour", [1])


class TestCommands:
    def test_query_p2_oracle(self, p2_file, capsys):
        code, out, _ = run(["query", p2_file, "--method", "exact", "--alpha", "0.5", "--k", "2", "--seed", "0"], capsys)
        assert code == 0 and out == "1 0 0.666667\n2 1 0.333333\n"
        code, out2, _ = run(["oracle", p2_file, "--alpha", "0.5", "--k", "2", "--seed", "0"], capsys)
        assert out2 == out

    def test_short_listing(self, p2_file, capsys):
        code, out, _ = run(["query", p2_file, "--method", "exact", "--k", "10", "--seed", "1"], capsys)
        assert code == 0 and len(out.splitlines()) == 2

    def test_multistage_full_equals_single(self, small_file, capsys):
        base = ["query", small_file, "--seed", "7", "--k", "50"]
        _, single, _ = run(base + ["--method", "single-stage"], capsys)
        _, multi, _ = run(base + ["--method", "multistage", "--fraction", "1"], capsys)
        assert single == multi and len(single.splitlines()) == 50

    def test_original_ids(self, tmp_path, capsys):
        path = tmp_path / "g.txt"
        path.write_text("100 200\n200 300\n")
        code, out, _ = run(["oracle", path, "--seed", "300", "--k", "1", "--alpha", "0.3"], capsys)
        assert code == 0 and out.startswith("1 300 ")
        code, _, err = run(["oracle", path, "--seed", "5"], capsys)
        assert code == 3 and "not in the graph" in err

    def test_convert_round_trip(self, small_file, tmp_path, capsys):
        out = tmp_path / "g.bin"
        code, _, _ = run(["convert", small_file, out], capsys)
        assert code == 0
        g = read_binary(out.read_bytes())
        assert g == load_edge_list(small_file.read_text().splitlines())
        _, a, _ = run(["query", small_file, "--seed", "3", "--k", "5"], capsys)
        _, b, _ = run(["query", out, "--seed", "3", "--k", "5"], capsys)
        assert a == b

    def test_convert_errors(self, tmp_path, capsys):
        code, _, err = run(["convert", tmp_path / "missing.txt", tmp_path / "o.bin"], capsys)
        assert code == 2 and "missing.txt" in err
        bad = tmp_path / "bad.txt"
        bad.write_text("0 1\n" * 16 + "0 one\n")
        code, _, err = run(["convert", bad, tmp_path / "o.bin"], capsys)
        assert code == 2 and "line 17" in err
        junk = tmp_path / "junk.bin"
        junk.write_bytes(b"\xff\xfe\x00binary")
        code, _, _ = run(["query", junk, "--seed", "0"], capsys)
        assert code == 2

    @pytest.mark.parametrize("argv, code", [
        ([], 1),
        (["frobnicate"], 1),
        (["query"], 1),
        (["query", "{g}", "--k", "2"], 1),
        (["query", "{g}", "--method", "psychic", "--seed", "0"], 1),
        (["query", "{g}", "--seed", "0", "--alpha", "2"], 3),
        (["query", "{g}", "--seed", "9"], 3),
        (["query", "{g}", "--seed", "0", "--k", "many"], 3),
        (["query", "{g}", "--seed", "0", "--config", "{missing}"], 2),
    ])
    def test_exit_codes(self, argv, code, p2_file, tmp_path, capsys):
        argv = [a.format(g=p2_file, missing=tmp_path / "nope.cfg") for a in argv]
        got, _, err = run(argv, capsys)
        assert got == code and err

    def test_dangling_seed_is_precondition(self, tmp_path, capsys):
        path = tmp_path / "g.txt"
        path.write_text("0 1\n2 2\n")
        code, _, err = run(["query", path, "--seed", "2"], capsys)
        assert code == 3 and "dangling" in err

    def test_config_file_layering(self, p2_file, tmp_path, capsys):
        cfg = tmp_path / "q.cfg"
        cfg.write_text("method = exact\nalpha = 0.5\nk = 1\n")
        _, out, _ = run(["query", p2_file, "--config", cfg, "--seed", "0"], capsys)
        assert out == "1 0 0.666667\n"
        _, out, _ = run(["query", p2_file, "--config", cfg, "--seed", "0", "--k", "2"], capsys)
        assert len(out.splitlines()) == 2

    def test_sweep_csv(self, small_file, tmp_path, capsys):
        out = tmp_path / "s.csv"
        argv = ["sweep", small_file, "--axis", "fraction", "--values", "0.05,1", "--seed-count", "1",
                "--k", "20", "--no-timing", "--out", out]
        code, _, err = run(argv, capsys)
        lines = out.read_text().splitlines()
        assert code == 0 and "mean precision" in err
        assert lines[0] == "graph,seed,method,param,precision,time_ns,ops,cpu_bytes,fpga_bytes"
        assert len(lines) == 3 and lines[2].split(",")[4] == "1"
        first = out.read_text()
        run(argv, capsys)
        assert out.read_text() == first

    def test_sweep_single_row(self, small_file, capsys):
        code, out, _ = run(["sweep", small_file, "--axis", "c", "--values", "10", "--seeds", "4",
                            "--k", "20", "--trace-memory"], capsys)
        lines = out.splitlines()
        assert code == 0 and len(lines) == 2
        row = bench.read_rows(io.StringIO(out))[0]
        assert row.param == "10" and row.cpu_bytes > 0 and row.time_ns > 0

    def test_threads_env(self, small_file, tmp_path, capsys, monkeypatch):
        argv = ["sweep", small_file, "--axis", "fraction", "--values", "0.1,0.3", "--seed-count", "3",
                "--k", "20", "--no-timing"]
        _, serial, _ = run(argv, capsys)
        monkeypatch.setenv("MELOPPR_THREADS", "3")
        _, threaded, _ = run(argv, capsys)
        assert serial == threaded

    def test_memreport(self, small_file, capsys):
        code, out, _ = run(["memreport", small_file, "--seed-count", "3", "--per-seed", "--k", "20"], capsys)
        assert code == 0
        assert "LocalPPR-CPU MB" in out and "FPGA reduction" in out
        assert out.splitlines()[0] == "seed,cpu_single,cpu_multi,fpga_single,fpga_multi"

    def test_memreport_fpga_is_formula(self):
        g = preset("cora-like", 0)
        from meloppr.graph import extract_ego
        from meloppr.hwmodel import bram_bytes

        rows = bench.memory_rows(g, QueryConfig(seeds=(9,), k=20))
        sub = extract_ego(g, 9, 6)
        assert rows[0].fpga_single == bram_bytes(sub.node_count, sub.edge_count)

    def test_synth(self, tmp_path, capsys):
        path = tmp_path / "s.txt"
        assert run(["synth", "citeseer-like", path], capsys)[0] == 0
        assert load_edge_list(path.read_text().splitlines()).node_count == 3327
