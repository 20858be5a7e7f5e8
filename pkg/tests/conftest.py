import numpy as np
import pytest

from rigsim.sampler import BipartiteGraph

# community -> members of the small hand-built example used across the suite
EXAMPLE_COMMUNITIES = {0: [0, 1, 2], 1: [0, 3], 2: [1, 3, 4, 5], 3: [6, 7], 4: [7, 8], 5: [7, 8, 9]}


def graph_from_communities(n, communities, m=None):
    vs, us = [], []
    for u, members in communities.items():
        for v in members:
            vs.append(v)
            us.append(u)
    return BipartiteGraph.from_edges(n, m if m is not None else max(communities) + 1, vs, us)


@pytest.fixture
def example_graph():
    return graph_from_communities(10, EXAMPLE_COMMUNITIES)


def random_bipartite(rng, n, m, p):
    mask = rng.random((n, m)) < p
    vs, us = np.nonzero(mask)
    return BipartiteGraph.from_edges(n, m, vs, us)


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_line():
    """Record one PASS/FAIL line for the acceptance summary."""

    def record(number, passed, message):
        _ACCEPTANCE_LINES.append((number, "PASS" if passed else "FAIL", message))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, tag, message in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(f"{tag} criterion {number:>2}: {message}")
