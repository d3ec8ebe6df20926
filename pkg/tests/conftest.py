import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from meloppr.graph import Graph, load_edge_list

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_graph(n, edges):
    src = [u for u, _ in edges]
    dst = [v for _, v in edges]
    return Graph.from_edges(n, src, dst)


@pytest.fixture
def p2():
    return load_edge_list(["0 1"])


@pytest.fixture
def path3():
    return load_edge_list(["0 1", "1 2"])


@pytest.fixture
def t3():
    return load_edge_list(["0 1", "1 2", "0 2"])


@pytest.fixture
def star():
    """Center 0 with five spokes."""
    return make_graph(6, [(0, i) for i in range(1, 6)])


@st.composite
def connected_graphs(draw, min_nodes=2, max_nodes=30, max_extra=None):
    """(n, edges) of a connected simple graph: random tree plus chords."""
    n = draw(st.integers(min_nodes, max_nodes))
    parents = [draw(st.integers(0, i - 1)) for i in range(1, n)]
    perm = draw(st.permutations(range(n)))
    edges = [(perm[i], perm[p]) for i, p in zip(range(1, n), parents)]
    extra = draw(st.integers(0, max_extra if max_extra is not None else 2 * n))
    for _ in range(extra):
        u, v = draw(st.integers(0, n - 1)), draw(st.integers(0, n - 1))
        if u != v:
            edges.append((u, v))
    return n, edges


def random_connected_edges(rng, n, extra):
    """Seeded (non-hypothesis) variant for bulk loops."""
    perm = rng.permutation(n)
    edges = [(int(perm[i]), int(perm[rng.integers(i)])) for i in range(1, n)]
    for _ in range(extra):
        u, v = (int(t) for t in rng.integers(0, n, 2))
        if u != v:
            edges.append((u, v))
    return edges


def pytest_terminal_summary(terminalreporter):
    import _report

    if _report.LINES:
        terminalreporter.section("acceptance criteria")
        for line in _report.LINES:
            terminalreporter.write_line(line)
