import itertools
import random
from collections import deque

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quartetclust.search import MutationKind, simple_mutation
from quartetclust.tree import (
    InvalidTree,
    LabelSetMismatch,
    Pairing,
    QuartetTopology,
    TernaryTree,
    TooFewLabels,
    UnknownLabel,
    caterpillar,
    consistent_topology,
    is_isomorphic,
    path_length,
    random_tree,
)

LABELS6 = list("abcdef")


def oracle_path(t, a, b):
    # plain BFS over the edge list, independent of the tree's own routines
    adj = {}
    for x, y in t.edges():
        adj.setdefault(x, []).append(y)
        adj.setdefault(y, []).append(x)
    prev = {a: None}
    q = deque([a])
    while q:
        v = q.popleft()
        for w in adj[v]:
            if w not in prev:
                prev[w] = v
                q.append(w)
    out = [b]
    while out[-1] != a:
        out.append(prev[out[-1]])
    return out


def oracle_topology(t, four):
    """The pairing whose two leaf-to-leaf paths share no vertex."""
    ids = [t.leaf(x) for x in four]
    hits = []
    for p in Pairing:
        (a, b), (c, d) = p.pairs(ids)
        if not set(oracle_path(t, a, b)) & set(oracle_path(t, c, d)):
            hits.append(p)
    assert len(hits) == 1
    return hits[0]


@pytest.mark.parametrize("n,nodes,internal", [(4, 6, 2), (18, 34, 16), (5, 8, 3)])
def test_counts(n, nodes, internal):
    t = random_tree([f"x{i}" for i in range(n)], seed=1)
    assert len(t.nodes) == nodes
    assert len(t.internal_nodes) == internal
    assert len(t.edges()) == nodes - 1
    t.validate()


def test_four_leaves_three_topologies():
    seen = {random_tree("abcd", seed=s).splits() for s in range(200)}
    assert len(seen) == 3


def test_uniform_topologies_n5():
    counts = {}
    for s in range(3000):
        key = random_tree("abcde", seed=s).splits()
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 15
    assert min(counts.values()) > 120 and max(counts.values()) < 280


def test_seed_determinism():
    labels = [f"x{i}" for i in range(12)]
    assert random_tree(labels, 7).edges() == random_tree(labels, 7).edges()
    assert random_tree(labels, random.Random(7)) == random_tree(labels, 7)


def test_too_few_labels():
    with pytest.raises(TooFewLabels):
        random_tree("abc", 0)


def test_invalid_trees_rejected():
    with pytest.raises(InvalidTree):
        TernaryTree("abcd", [(0, 4), (1, 4), (2, 4), (3, 4)])  # degree 4 hub, node 5 detached
    with pytest.raises(InvalidTree):
        TernaryTree("abcd", [(0, 4), (1, 4), (2, 5), (3, 5)])  # two components
    with pytest.raises(InvalidTree):
        TernaryTree("abcd", [(0, 9)])
    with pytest.raises(InvalidTree):
        TernaryTree("aacd", [(0, 4), (1, 4), (4, 5), (2, 5), (3, 5)])


def test_unknown_label():
    with pytest.raises(UnknownLabel):
        caterpillar("abcd").leaf("z")


def test_example_tree_uv_wx():
    # u, v hang together on one side; w, x on the other with more leaves between
    labels = ["u", "v", "w", "x", "p", "q"]
    #  u,v - n0 - n1(p) - n2(q) - n3 - w,x
    n0, n1, n2, n3 = 6, 7, 8, 9
    t = TernaryTree(labels, [(0, n0), (1, n0), (n0, n1), (4, n1), (n1, n2), (5, n2), (n2, n3), (2, n3), (3, n3)])
    top = consistent_topology(t, "uvwx")
    assert top == QuartetTopology(tuple("uvwx"), Pairing.UV_WX)
    assert str(top) == "uv|wx"
    assert top != QuartetTopology(tuple("uvwx"), Pairing.UW_VX)
    assert top == QuartetTopology(tuple("wxvu"), Pairing.UV_WX)


def test_caterpillar_abcd():
    t = caterpillar("abcd")
    assert consistent_topology(t, "abcd").pairing == Pairing.UV_WX
    assert consistent_topology(t, "acbd").pairing == Pairing.UW_VX


@pytest.mark.parametrize("n", [4, 5, 7, 10])
def test_four_point_matches_disjoint_paths(n):
    labels = [f"x{i}" for i in range(n)]
    for seed in range(3):
        t = random_tree(labels, seed)
        for four in itertools.combinations(labels, 4):
            assert t.consistent_topology(four).pairing == oracle_topology(t, four)


def test_path_lengths():
    t = caterpillar("abcdef")
    assert path_length(t, "a", "b") == 2
    assert path_length(t, "a", "a") == 0
    cat18 = caterpillar([f"x{i:02d}" for i in range(18)])
    assert path_length(cat18, "x00", "x17") == 17


def test_path_length_matches_bfs():
    t = random_tree([f"x{i}" for i in range(11)], 3)
    for a, b in itertools.combinations(range(11), 2):
        assert t.path_length(t.labels[a], t.labels[b]) == len(oracle_path(t, a, b)) - 1
        assert t.path(a, b) == list(reversed(oracle_path(t, a, b)))


def test_isomorphism():
    t = random_tree([f"x{i}" for i in range(9)], 4)
    assert is_isomorphic(t, t)
    perm = list(range(7))
    random.Random(1).shuffle(perm)
    renamed = t.relabel_internal(perm)
    assert renamed != t or perm == sorted(perm)
    assert is_isomorphic(t, renamed)


def test_swap_non_siblings_breaks_isomorphism():
    t = caterpillar("abcdef")
    # a and f sit at opposite ends
    swapped = TernaryTree(t.labels, [({0: 5, 5: 0}.get(a, a), {0: 5, 5: 0}.get(b, b)) for a, b in t.edges()])
    assert not is_isomorphic(t, swapped)


def test_isomorphism_label_mismatch():
    with pytest.raises(LabelSetMismatch):
        is_isomorphic(caterpillar("abcd"), caterpillar("abce"))


def test_orphans_caterpillar6():
    assert caterpillar(LABELS6).orphan_count() == 2


def test_dict_round_trip_and_formats():
    t = random_tree(["a b", "c", "d'e", "f", "g"], 2)
    assert TernaryTree.from_dict(t.to_dict()) == t
    nwk = t.to_newick()
    assert nwk.endswith(";") and "'a b'" in nwk and "'d''e'" in nwk
    dot = t.to_dot()
    assert dot.startswith("graph tree {") and dot.count("shape=box") == 5 and dot.count(" -- ") == 7


@settings(max_examples=40, deadline=None)
@given(n=st.integers(4, 10), seed=st.integers(0, 10**6))
def test_exactly_one_topology_consistent(n, seed):
    labels = [f"x{i}" for i in range(n)]
    t = random_tree(labels, seed)
    for four in itertools.combinations(labels, 4):
        tops = [QuartetTopology(four, p) for p in Pairing]
        assert sum(top == t.consistent_topology(four) for top in tops) == 1


@settings(max_examples=40, deadline=None)
@given(n=st.integers(4, 14), seed=st.integers(0, 10**6), kind=st.sampled_from(list(MutationKind)))
def test_mutations_keep_invariants(n, seed, kind):
    t = random_tree([f"x{i}" for i in range(n)], seed)
    for step in range(5):
        t = simple_mutation(t, kind, seed + step)
        t.validate()
        assert len(t.nodes) == 2 * n - 2
