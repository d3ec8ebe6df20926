import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import connected_graphs, make_graph
from meloppr.errors import GraphFormatError, PreconditionError
from meloppr.graph import Graph, extract_ego, load_edge_list, read_binary, write_binary


def adjacency_sets(g):
    return {v: set(g.neighbors_of(v).tolist()) for v in range(g.node_count)}


class TestLoad:
    def test_single_edge(self, p2):
        assert p2.node_count == 2 and p2.edge_count == 1
        assert p2.degrees.tolist() == [1, 1]

    def test_duplicates_and_self_loops_dropped(self):
        g = load_edge_list(["0 1", "1 0", "0 0"])
        assert g == load_edge_list(["0 1"])

    def test_comments_and_blank_lines(self):
        g = load_edge_list(["# header", "", "5 7", "  # indented comment", "7 9"])
        assert g.node_count == 3
        assert g.labels.tolist() == [5, 7, 9]

    def test_compaction_keeps_first_appearance(self):
        g = load_edge_list(["10 3", "3 99"])
        assert g.labels.tolist() == [10, 3, 99]
        assert adjacency_sets(g) == {0: {1}, 1: {0, 2}, 2: {1}}

    @pytest.mark.parametrize("line", ["0 x", "1.5 2", "0 1 2", "7"])
    def test_malformed_line_reports_line_number(self, line):
        lines = ["0 1"] * 16 + [line]
        with pytest.raises(GraphFormatError, match="line 17") as info:
            load_edge_list(lines)
        assert info.value.line == 17

    def test_empty_input(self):
        with pytest.raises(GraphFormatError):
            load_edge_list(["# nothing here", ""])

    def test_self_loop_only_node_is_isolated(self):
        g = load_edge_list(["0 1", "2 2"])
        assert g.node_count == 3 and g.degree(2) == 0


@given(connected_graphs(max_nodes=40))
def test_loaded_graph_invariants(case):
    n, edges = case
    g = make_graph(n, edges)
    g.validate()
    adj = adjacency_sets(g)
    assert all(u in adj[v] for u in adj for v in adj[u])
    assert int(g.degrees.sum()) == 2 * g.edge_count
    expected = {frozenset(e) for e in edges if e[0] != e[1]}
    assert g.edge_count == len(expected)


class TestValidate:
    def test_asymmetric(self):
        with pytest.raises(GraphFormatError, match="symmetric"):
            Graph.from_csr([0, 1, 1], [1])

    def test_self_loop(self):
        with pytest.raises(GraphFormatError, match="self-loop"):
            Graph.from_csr([0, 1], [0])

    def test_duplicate(self):
        with pytest.raises(GraphFormatError, match="duplicate"):
            Graph.from_csr([0, 2, 4], [1, 1, 0, 0])

    def test_offsets(self):
        with pytest.raises(GraphFormatError):
            Graph.from_csr([0, 2, 1], [1, 0])

    def test_range(self):
        with pytest.raises(GraphFormatError, match="range"):
            Graph.from_csr([0, 1, 2], [1, 5])


class TestBinary:
    def test_p2_layout(self, p2):
        data = write_binary(p2)
        # magic, two counts, 3 offsets, 2 neighbor entries
        assert len(data) == 8 + 8 + 8 + 3 * 8 + 2 * 8 == 64
        assert data[:8] == b"MELOPPR1"
        assert np.frombuffer(data[8:24], "<u8").tolist() == [2, 2]
        assert read_binary(data) == p2

    def test_bad_magic(self, p2):
        with pytest.raises(GraphFormatError, match="magic"):
            read_binary(b"XXXXXXXX" + write_binary(p2)[8:])

    def test_truncated(self, p2):
        with pytest.raises(GraphFormatError):
            read_binary(write_binary(p2)[:-3])
        with pytest.raises(GraphFormatError):
            read_binary(b"MELO")

    def test_corrupt_offsets(self, path3):
        data = bytearray(write_binary(path3))
        data[24 + 8 : 24 + 16] = (9).to_bytes(8, "little")
        with pytest.raises(GraphFormatError):
            read_binary(bytes(data))

    @given(connected_graphs(max_nodes=40))
    def test_round_trip(self, case):
        g = make_graph(*case)
        assert read_binary(write_binary(g)) == g


class TestEgo:
    def test_path_end_one_hop(self, path3):
        sub = extract_ego(path3, 0, 1)
        assert sub.global_ids.tolist() == [0, 1]
        assert sub.out_degree.tolist() == [0, 1]
        assert sub.global_degree.tolist() == [1, 2]
        assert sub.boundary_flag.tolist() == [False, True]

    def test_path_whole(self, path3):
        sub = extract_ego(path3, 0, 2)
        assert sub.node_count == 3 and not sub.out_degree.any()

    def test_triangle(self, t3):
        assert extract_ego(t3, 0, 1).node_count == 3

    def test_depth_zero(self, path3):
        sub = extract_ego(path3, 1, 0)
        assert sub.global_ids.tolist() == [1]
        assert sub.out_degree.tolist() == [2] and sub.edge_count == 0

    def test_levels_ascending(self):
        g = make_graph(6, [(0, 5), (0, 3), (0, 4), (3, 1), (5, 2)])
        assert extract_ego(g, 0, 2).global_ids.tolist() == [0, 3, 4, 5, 1, 2]

    def test_seed_out_of_range(self, path3):
        with pytest.raises(PreconditionError):
            extract_ego(path3, 3, 1)
        with pytest.raises(PreconditionError):
            extract_ego(path3, 0, -1)

    def test_to_local(self, path3):
        sub = extract_ego(path3, 2, 1)
        assert sub.to_local([1, 2]).tolist() == [1, 0]
        with pytest.raises(KeyError):
            sub.to_local([0])
        assert sub.contains([0, 1, 2]).tolist() == [False, True, True]

    @given(connected_graphs(max_nodes=40), st.data())
    def test_against_bfs(self, case, data):
        n, edges = case
        g = make_graph(n, edges)
        seed = data.draw(st.integers(0, n - 1))
        depth = data.draw(st.integers(0, 5))
        adj = adjacency_sets(g)
        dist = {seed: 0}
        frontier = [seed]
        while frontier:
            nxt = []
            for u in frontier:
                for v in adj[u]:
                    if v not in dist:
                        dist[v] = dist[u] + 1
                        nxt.append(v)
            frontier = nxt
        want = {v for v, d in dist.items() if d <= depth}
        sub = extract_ego(g, seed, depth)
        ids = sub.global_ids.tolist()
        assert ids[0] == seed and len(set(ids)) == len(ids) and set(ids) == want
        assert [dist[v] for v in ids] == sorted(dist[v] for v in ids)
        assert np.array_equal(sub.local_degree + sub.out_degree, sub.global_degree)
        assert np.array_equal(sub.global_degree, g.degrees[sub.global_ids])
        local_edges = {frozenset((ids[u], ids[v])) for u in range(sub.node_count)
                       for v in sub.neighbors[sub.offsets[u]:sub.offsets[u + 1]].tolist()}
        assert local_edges == {frozenset((u, v)) for u in want for v in adj[u] if v in want}
        assert np.array_equal(sub.boundary_flag, sub.out_degree > 0)

    @given(connected_graphs(max_nodes=30))
    def test_deep_ego_is_component(self, case):
        g = make_graph(*case)
        assert sorted(extract_ego(g, 0, g.node_count).global_ids.tolist()) == list(range(g.node_count))

    def test_disconnected_component(self):
        g = make_graph(5, [(0, 1), (2, 3), (3, 4)])
        assert sorted(g.connected_component(3).tolist()) == [2, 3, 4]
