import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse.csgraph import minimum_spanning_tree

from quartetclust.distance import DistanceMatrix
from quartetclust.scoring import (
    MatrixTooSmall,
    agreement_fraction,
    consistent_quartets,
    cost_bounds,
    mst_baseline,
    quartet_cost,
    quartet_indices,
    score,
    score_incremental,
)
from quartetclust.search import KINDS, simple_mutation
from quartetclust.synthgen import planted_matrix
from quartetclust.tree import Pairing, QuartetTopology, TernaryTree, caterpillar, random_tree


def brute_bounds(m):
    lo = hi = 0.0
    los, his = [], []
    for a, b, c, e in itertools.combinations(range(m.n), 4):
        sums = [m.d[a, b] + m.d[c, e], m.d[a, c] + m.d[b, e], m.d[a, e] + m.d[b, c]]
        los.append(min(sums))
        his.append(max(sums))
    lo, hi = math.fsum(los), math.fsum(his)
    return lo, hi


def brute_raw(t, m):
    # consistent pairing from the tree's own path lengths, one 4-set at a time
    total = []
    for four in itertools.combinations(m.labels, 4):
        u, v, w, x = four
        L = t.path_length
        sums = [L(u, v) + L(w, x), L(u, w) + L(v, x), L(u, x) + L(v, w)]
        p = Pairing(sums.index(min(sums)))
        total.append(quartet_cost(m, QuartetTopology(four, p)))
    return math.fsum(total)


def test_quartet_cost_example():
    m = DistanceMatrix("uvwx", [[0, 0.1, 0.5, 0.5], [0.1, 0, 0.5, 0.5], [0.5, 0.5, 0, 0.2], [0.5, 0.5, 0.2, 0]])
    assert quartet_cost(m, QuartetTopology(tuple("uvwx"), Pairing.UV_WX)) == pytest.approx(0.3)


def test_equal_distances_degenerate():
    c = 0.7
    m = DistanceMatrix("abcdef", np.full((6, 6), c) - np.eye(6) * c)
    table = cost_bounds(m)
    assert np.allclose(table.costs, 2 * c)
    assert table.degenerate and table.best_total == table.worst_total
    sc = score(caterpillar("abcdef"), m, table, apply_penalty=False)
    assert sc.s == 1.0


def test_sibling_path_metric_costs():
    # cherries (a,b) and (c,d) joined through one more internal node, so
    # siblings sit at L=2 and cross pairs at L=4; distance (L+1)/18
    t = TernaryTree("abcdef", [(0, 6), (1, 6), (6, 7), (7, 8), (2, 8), (3, 8), (7, 9), (4, 9), (5, 9)])
    assert t.path_length("a", "b") == 2 and t.path_length("a", "c") == 4
    m = planted_matrix(t, 18)
    costs = cost_bounds(m).costs[0]  # quartet (a, b, c, d)
    assert costs[0] == pytest.approx(1 / 3)
    assert costs[1] == pytest.approx(5 / 9) and costs[2] == pytest.approx(5 / 9)


def test_bounds_brute_force(make_random_matrix):
    m = make_random_matrix(6, seed=11)
    table = cost_bounds(m)
    assert len(table.quads) == 15
    lo, hi = brute_bounds(m)
    assert table.best_total == pytest.approx(lo, abs=1e-12)
    assert table.worst_total == pytest.approx(hi, abs=1e-12)
    assert np.all(table.lo <= table.costs.T) and np.all(table.costs.T <= table.hi)


def test_quartet_table_covers_once():
    q = quartet_indices(9)
    assert len(q) == math.comb(9, 4)
    assert len({tuple(r) for r in q}) == len(q)
    assert np.all(np.diff(q, axis=1) > 0)


def test_too_small():
    with pytest.raises(MatrixTooSmall):
        cost_bounds(DistanceMatrix("abc", np.zeros((3, 3))))


@pytest.mark.parametrize("seed", range(5))
def test_n4_min_tree_scores_one(make_random_matrix, seed):
    m = make_random_matrix(4, seed)
    table = cost_bounds(m)
    best = int(table.best_pairing()[0])
    (a, b), (c, e) = Pairing(best).pairs(range(4))
    t = TernaryTree(m.labels, [(a, 4), (b, 4), (4, 5), (c, 5), (e, 5)])
    assert score(t, m, table).s == 1.0


@pytest.mark.parametrize("n,seed", [(5, 0), (7, 1), (9, 2)])
def test_score_matches_brute_force(make_random_matrix, n, seed):
    m = make_random_matrix(n, seed)
    lo, hi = brute_bounds(m)
    for k in range(4):
        t = random_tree(m.labels, seed * 10 + k)
        sc = score(t, m, apply_penalty=False)
        raw = brute_raw(t, m)
        assert sc.raw_cost == pytest.approx(raw, abs=1e-12)
        assert sc.s == pytest.approx((hi - raw) / (hi - lo), abs=1e-12)
        assert lo - 1e-12 <= sc.raw_cost <= hi + 1e-12
        assert sc.penalty == 0.0 and sc.s_effective == sc.s


def test_penalty_caterpillar6():
    t = caterpillar("abcdef")
    m = planted_matrix(t)
    sc = score(t, m)
    assert sc.penalty == pytest.approx(0.01)
    assert sc.s == 1.0
    assert sc.s_effective == pytest.approx(0.99)
    assert score(t, m, penalty_weight=0.1).penalty == pytest.approx(0.2)


def test_consistent_quartets_listing(make_random_matrix):
    m = make_random_matrix(6, 3)
    t = random_tree(m.labels, 3)
    tops = list(consistent_quartets(t, m))
    assert len(tops) == 15
    assert all(t.consistent_topology(q.four) == q for q in tops)


def test_random_tree_agreement_near_third(make_random_matrix):
    m = make_random_matrix(10, 5)
    table = cost_bounds(m)
    fr = [agreement_fraction(random_tree(m.labels, s), m, table) for s in range(200)]
    assert 0.28 <= float(np.mean(fr)) <= 0.38


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), shift=st.floats(0.0, 3.0), scale=st.floats(0.1, 10.0))
def test_s_invariant_under_affine_rescale(seed, shift, scale):
    rng = np.random.default_rng(seed)
    a = np.triu(rng.random((7, 7)), 1)
    base = a + a.T
    labels = [f"x{i}" for i in range(7)]
    m1 = DistanceMatrix(labels, base)
    off = (base * scale + shift) * (1 - np.eye(7))
    # rescaled distances can leave [0, 1.5]; build the array without the range check
    m2 = DistanceMatrix.__new__(DistanceMatrix)
    object.__setattr__(m2, "labels", tuple(labels))
    object.__setattr__(m2, "d", off)
    t = random_tree(labels, seed)
    assert score(t, m1).s == pytest.approx(score(t, m2).s, abs=1e-9)


def test_incremental_equals_full(make_random_matrix):
    rng = random.Random(0)
    trials = 0
    for n in range(5, 13):
        m = make_random_matrix(n, n)
        table = cost_bounds(m)
        t = random_tree(m.labels, n)
        prior = score(t, m, table)
        for _ in range(125):
            t = simple_mutation(t, rng.choice(KINDS), rng)
            inc = score_incremental(t, m, table, prior)
            full = score(t, m, table)
            assert inc == full
            assert inc.raw_cost == full.raw_cost
            prior = inc
            trials += 1
    assert trials == 1000


def test_swap_and_swap_back(make_random_matrix):
    m = make_random_matrix(8, 2)
    table = cost_bounds(m)
    t = random_tree(m.labels, 2)
    s0 = score(t, m, table)
    perm = {0: 3, 3: 0}
    swapped = TernaryTree(t.labels, [(perm.get(a, a), perm.get(b, b)) for a, b in t.edges()])
    s1 = score_incremental(swapped, m, table, s0)
    back = TernaryTree(t.labels, [(perm.get(a, a), perm.get(b, b)) for a, b in swapped.edges()])
    assert back == t
    assert score_incremental(back, m, table, s1) == s0


def test_sibling_swap_unchanged(make_random_matrix):
    m = make_random_matrix(6, 4)
    table = cost_bounds(m)
    t = caterpillar(m.labels)  # leaves 0 and 1 share an internal node
    s0 = score(t, m, table)
    perm = {0: 1, 1: 0}
    swapped = TernaryTree(t.labels, [(perm.get(a, a), perm.get(b, b)) for a, b in t.edges()])
    assert score_incremental(swapped, m, table, s0) == s0


def test_mst_three_points():
    m = DistanceMatrix("abc", [[0, 0.1, 0.3], [0.1, 0, 0.1], [0.3, 0.1, 0]])
    r = mst_baseline(m)
    assert set(r.edges) == {("a", "b"), ("b", "c")}
    assert r.weight == pytest.approx(0.2)
    assert r.to_dot().count(" -- ") == 2


def test_mst_equal_weights():
    m = DistanceMatrix("abcde", np.full((5, 5), 0.4) * (1 - np.eye(5)))
    r = mst_baseline(m)
    assert len(r.edges) == 4 and r.weight == pytest.approx(1.6)


@pytest.mark.parametrize("seed", range(5))
def test_mst_matches_scipy(make_random_matrix, seed):
    m = make_random_matrix(8, seed)
    r = mst_baseline(m)
    ref = minimum_spanning_tree(m.d).toarray()
    assert r.weight == pytest.approx(ref.sum(), abs=1e-12)
    # spanning: n-1 edges connecting every label
    seen = {m.labels[0]}
    edges = set(r.edges)
    while True:
        grow = {b for a, b in edges if a in seen} | {a for a, b in edges if b in seen}
        if grow <= seen:
            break
        seen |= grow
    assert len(edges) == 7 and seen == set(m.labels)
    # no random spanning tree beats it
    rng = random.Random(seed)
    for _ in range(200):
        order = list(range(8))
        rng.shuffle(order)
        w = sum(m.d[order[k], order[rng.randrange(k)]] for k in range(1, 8))
        assert w >= r.weight - 1e-12
