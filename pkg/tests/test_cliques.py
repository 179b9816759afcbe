import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cliqueanneal.cliques import (
    CliqueBudgetExceeded,
    CliqueIndex,
    OpCounter,
    degeneracy_order,
    enumerate_maximal_cliques,
    load_clique_cache,
    merged_clique,
    save_clique_cache,
    top_cliques,
)
from cliqueanneal.graph import Graph
from oracles import brute_force_maximal_cliques, er_graph


def clique_edges(nodes):
    return list(itertools.combinations(nodes, 2))


def test_k4_minus_edge_gives_two_triangles():
    g = Graph.from_edges(4, [e for e in clique_edges(range(4)) if e != (2, 3)])
    assert set(enumerate_maximal_cliques(g).cliques) == {frozenset({0, 1, 2}), frozenset({0, 1, 3})}


def test_pendant_edge_is_not_a_clique():
    g = Graph.from_edges(4, clique_edges(range(3)) + [(2, 3)])
    assert enumerate_maximal_cliques(g).cliques == (frozenset({0, 1, 2}),)


def test_matches_brute_force_on_er_graphs():
    rng = np.random.default_rng(7)
    for i in range(40):
        n = int(rng.integers(1, 11))
        g = er_graph(n, [0.2, 0.5, 0.8][i % 3], rng)
        assert set(enumerate_maximal_cliques(g).cliques) == brute_force_maximal_cliques(g, 3)


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.3, 0.6]), st.integers(4, 10))
def test_restriction_keeps_exactly_meeting_cliques(seed, p, n):
    r = np.random.default_rng(seed)
    g = er_graph(n, p, r)
    restrict = set(r.choice(n, size=int(r.integers(1, n)), replace=False).tolist())
    full = brute_force_maximal_cliques(g, 3)
    got = set(enumerate_maximal_cliques(g, restrict).cliques)
    assert got == {c for c in full if c & restrict}


@given(st.integers(0, 2**32 - 1), st.integers(3, 12))
def test_index_invariants(seed, n):
    g = er_graph(n, 0.6, np.random.default_rng(seed))
    idx = enumerate_maximal_cliques(g)
    for cid, c in enumerate(idx.cliques):
        assert len(c) >= 3
        assert all(g.has_edge(u, v) for u, v in itertools.combinations(c, 2))
        assert all(cid in idx.cliques_of(v) for v in c)
        assert not any(c < d for d in idx.cliques)
    for v, ids in idx.by_node.items():
        assert all(v in idx.cliques[i] for i in ids)
        assert all(idx.cliques[i] <= merged_clique(idx, v) for i in ids)
    sizes = [len(c) for c in idx.cliques]
    assert sizes == sorted(sizes, reverse=True)


def test_degeneracy_order_is_permutation():
    g = er_graph(15, 0.4, np.random.default_rng(1))
    assert sorted(degeneracy_order(g)) == list(range(15))
    assert sorted(degeneracy_order(g, [3, 1, 7])) == [1, 3, 7]


def test_op_counter_within_seed_budget():
    rng = np.random.default_rng(11)
    for p, const in [(0.1, 1), (0.3, 1), (0.5, 1), (0.8, 4)]:
        for _ in range(30):
            n = int(rng.integers(5, 40))
            g = er_graph(n, p, rng)
            m = int(rng.integers(1, n + 1))
            counter = OpCounter()
            enumerate_maximal_cliques(g, rng.choice(n, size=m, replace=False).tolist(), counter=counter)
            assert counter.ops <= const * m * n * n


def test_budget_exceeded():
    g = er_graph(12, 0.5, np.random.default_rng(0))
    with pytest.raises(CliqueBudgetExceeded):
        enumerate_maximal_cliques(g, max_cliques=2)


def test_merged_clique_fixtures():
    # triangles {0,1,2} and {0,3,4} share node 0
    idx = CliqueIndex.from_cliques([{0, 1, 2}, {0, 3, 4}])
    assert merged_clique(idx, 0) == {0, 1, 2, 3, 4}
    assert merged_clique(idx, 0, exclude={1, 3}) == {0, 2, 4}
    assert merged_clique(idx, 0, exclude=range(5)) == frozenset()
    assert merged_clique(idx, 1, exclude={7}) == {0, 1, 2}
    assert merged_clique(idx, 9) == frozenset()


def test_top_cliques_fixtures():
    idx = CliqueIndex.from_cliques([{0, 1, 2, 3, 4}, {5, 6, 7, 8}, {9, 10, 11}, {20, 21, 22, 23}])
    comm = set(range(12))
    assert [len(c) for c in top_cliques(idx, comm, 2)] == [5, 4]
    assert len(top_cliques(idx, comm, 10)) == 3
    tied = CliqueIndex.from_cliques([{5, 6, 7, 8}, {1, 9, 10, 11}])
    assert top_cliques(tied, range(12), 1) == [frozenset({1, 9, 10, 11})]
    with pytest.raises(ValueError):
        top_cliques(idx, comm, 0)


def test_cache_round_trip_and_stale_rejection(tmp_path):
    g = er_graph(12, 0.5, np.random.default_rng(2))
    idx = enumerate_maximal_cliques(g)
    path = tmp_path / "cliques.txt"
    save_clique_cache(idx, g, path)
    assert load_clique_cache(g, path).cliques == idx.cliques
    other = er_graph(12, 0.5, np.random.default_rng(3))
    with pytest.raises(ValueError, match="does not match"):
        load_clique_cache(other, path)
