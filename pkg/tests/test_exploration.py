from collections import defaultdict, deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rigsim.exploration import (
    RootRule,
    active_counts,
    audit_trace,
    component_sizes,
    components,
    explore,
    forest_height,
    height_from_walk,
    height_literal,
)
from rigsim.regimes import build_config
from rigsim.sampler import BipartiteGraph, replicate_seed, sample_bipartite

from conftest import random_bipartite

EXAMPLE_ORDER = [0, 1, 4, 5, 2, 3, 6, 7, 8, 9]
EXAMPLE_N = [3, 2, 0, 0, 0, 0, 1, 2, 0, 0]
EXAMPLE_M = [2, 1, 0, 0, 0, 0, 1, 2, 0, 0]
EXAMPLE_A = [2, 3, 2, 1, 0, 0, 0, 1, 0, 0]
EXAMPLE_S = [0, 2, 3, 2, 1, 0, -1, -1, 0, -1, -2]


@pytest.fixture
def example_trace(example_graph):
    return explore(example_graph, RootRule.smallest())


def test_example_sequences(example_trace):
    t = example_trace
    assert t.order.tolist() == EXAMPLE_ORDER
    assert t.N_counts.tolist() == EXAMPLE_N
    assert t.X.tolist() == EXAMPLE_M
    assert t.S.tolist() == EXAMPLE_S
    assert active_counts(t.S)[1:].tolist() == EXAMPLE_A
    assert t.active_before[2:].tolist() == EXAMPLE_A[:-1]
    assert t.Nsizes == [(2, 1), (2,), (), (), (), (), (1,), (1, 1), (), ()]


def test_example_height_and_forest(example_trace):
    # direct evaluation of the weak-running-minimum count on this walk
    assert example_trace.H[1:].tolist() == [1, 2, 3, 3, 2, 2, 1, 2, 3, 3]
    assert forest_height(example_trace, 3) == 4
    assert [forest_height(example_trace, k) for k in range(1, 11)] == [0, 2, 4, 4, 2, 2, 0, 2, 4, 4]


def test_example_components(example_trace):
    comps = components(example_trace)
    assert [(c.v_size, c.u_size) for c in comps] == [(6, 3), (4, 3)]
    assert example_trace.comp_bounds == [(1, 6), (7, 10)]
    assert sorted(example_trace.members(comps[1]).tolist()) == [6, 7, 8, 9]


def test_empty_graph():
    t = explore(BipartiteGraph.from_edges(5, 3, [], []))
    assert t.X.tolist() == [0] * 5
    assert t.S.tolist() == [0, -1, -2, -3, -4, -5]
    assert t.H[1:].tolist() == [1] * 5
    assert active_counts(t.S).tolist() == [0] * 6
    assert component_sizes(t).tolist() == [1] * 5
    assert t.unreached_communities == 3


def test_height_of_decreasing_walk():
    S = -np.arange(50)
    assert height_from_walk(S)[1:].tolist() == [1] * 49


def test_height_literal_on_example_walk():
    assert height_literal(EXAMPLE_S).tolist() == height_from_walk(EXAMPLE_S).tolist()


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-1, 4), max_size=120))
def test_height_stack_matches_literal(steps):
    S = np.concatenate([[0], np.cumsum(steps)]).astype(np.int64)
    assert np.array_equal(height_from_walk(S), height_literal(S))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.integers(0, 30), st.floats(0.0, 0.3), st.integers(0, 2**32), st.booleans())
def test_trace_identities_on_random_graphs(n, m, p, seed, uniform):
    B = random_bipartite(np.random.default_rng(seed), n, m, p)
    rule = RootRule.uniform(seed) if uniform else RootRule.smallest()
    t = explore(B, rule)
    assert t.steps == n and t.complete
    assert all(v == 0 for v in audit_trace(t).values())
    assert np.array_equal(np.diff(t.R), t.X)
    assert np.array_equal(height_from_walk(t.S), t.H)
    assert int(t.R[-1]) == int(np.count_nonzero(t.u_step > 0))
    assert sorted(t.order.tolist()) == list(range(n))
    # the blocks revealed in one step are disjoint
    assert sum(t.n_sizes.tolist()) == int(np.count_nonzero(t.v_parent >= 0))


def _union_find_sizes(B):
    parent = list(range(B.n + B.m))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    vs, us = B.edges()
    for v, u in zip(vs.tolist(), us.tolist()):
        a, b = find(v), find(B.n + u)
        if a != b:
            parent[a] = b
    sizes = defaultdict(int)
    for v in range(B.n):
        sizes[find(v)] += 1
    return sorted(sizes.values(), reverse=True)


@pytest.mark.parametrize("seed", range(5))
def test_components_match_union_find(seed):
    B = sample_bipartite(build_config("moderate", 1.0, 2000, theta=1), seed)
    t = explore(B, RootRule.uniform(seed))
    assert component_sizes(t).tolist() == _union_find_sizes(B)
    ranked = components(t)
    assert [c.v_size for c in ranked] == _union_find_sizes(B)
    assert all(a.v_size >= b.v_size for a, b in zip(ranked, ranked[1:]))


def _bfs_depths(t):
    children = defaultdict(list)
    for parent, child in t.forest_edges().tolist():
        children[parent].append(child)
    depth = {}
    for first, _ in t.comp_bounds:
        root = int(t.order[first - 1])
        depth[root] = 0
        queue = deque([root])
        while queue:
            x = queue.popleft()
            for y in children[x]:
                assert y not in depth  # a cycle would revisit
                depth[y] = depth[x] + 1
                queue.append(y)
    return depth


@pytest.mark.parametrize("regime,kw", [("moderate", {"theta": 1}), ("light", {"m": 20_000}),
                                       ("heavy", {"m": 300})])
def test_forest_is_a_spanning_forest_with_matching_heights(regime, kw):
    cfg = build_config(regime, 0.5, 3000 if regime == "heavy" else 1500, **kw)
    B = sample_bipartite(cfg, 3)
    if cfg.swapped:
        B = B.transpose()
    t = explore(B, RootRule.uniform(3))
    depth = _bfs_depths(t)
    non_isolated = set(range(B.n)) | {B.n + int(u) for u in B.u_labels}
    assert set(depth) == non_isolated
    edges = t.forest_edges()
    # a forest has (vertices - trees) edges
    assert edges.shape[0] == len(non_isolated) - len(t.comp_bounds)
    for k in range(1, t.steps + 1):
        assert depth[int(t.order[k - 1])] == 2 * t.H[k] - 2 == forest_height(t, k)


def test_replay_is_identical():
    B = sample_bipartite(build_config("moderate", 0, 3000, theta=1), 7)
    a = explore(B, RootRule.uniform(5))
    b = explore(B, RootRule.uniform(5))
    assert np.array_equal(a.order, b.order) and np.array_equal(a.S, b.S)
    c = explore(B, RootRule.uniform(6))
    assert not np.array_equal(a.order, c.order)


def test_uniform_root_is_uniform():
    # with no edges every root choice is visible in the order
    B = BipartiteGraph.from_edges(4, 1, [], [])
    firsts = np.array([explore(B, RootRule.uniform(replicate_seed(0, r))).order[0] for r in range(4000)])
    counts = np.bincount(firsts, minlength=4)
    assert np.all(np.abs(counts - 1000) < 4 * np.sqrt(4000 * 0.25 * 0.75))


def test_truncated_exploration_is_a_prefix():
    B = sample_bipartite(build_config("moderate", 0, 5000, theta=1), 1)
    full = explore(B, RootRule.uniform(1))
    part = explore(B, RootRule.uniform(1), max_steps=300)
    assert part.steps == 300 and not part.complete
    assert np.array_equal(part.S, full.S[:301])
    assert np.array_equal(part.order, full.order[:300])
    assert all(v == 0 for v in audit_trace(part).values())


def test_forest_height_out_of_range(example_trace):
    with pytest.raises(IndexError):
        forest_height(example_trace, 0)
    with pytest.raises(IndexError):
        forest_height(example_trace, 11)


def test_relabelling_communities_keeps_walk(example_graph):
    # reversing community labels permutes communities but keeps the walk of the smallest-label rule
    vs, us = example_graph.edges()
    B = BipartiteGraph.from_edges(10, 6, vs, 5 - us)
    t0 = explore(example_graph, RootRule.smallest())
    t1 = explore(B, RootRule.smallest())
    assert np.array_equal(t0.X, t1.X)


def test_trace_csv(example_trace, tmp_path):
    path = tmp_path / "trace.csv"
    example_trace.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "k,X_k,dS_k,S_k,H_k,comp_id"
    assert lines[1] == "1,2,2,2,1,1"
    assert lines[-1] == "10,0,-1,-2,3,2"
