import itertools
import json
import random
from collections import Counter

import numpy as np
import pytest

from quartetclust.distance import DistanceMatrix
from quartetclust.scoring import cost_bounds, score
from quartetclust.search import (
    KINDS,
    MAX_SIMPLE_MUTATIONS,
    MutationKind,
    ProgressTrace,
    SearchConfig,
    apply_mutations,
    default_plateau,
    full_mutation,
    hill_climb,
    mutation_plan,
    parallel_search,
    simple_mutation,
)
from quartetclust.synthgen import make_planted_instance
from quartetclust.tree import TernaryTree, TooFewLabels, caterpillar, random_tree


def cherries(t):
    """Pairs of leaves sharing an internal node."""
    out = set()
    for v in t.internal_nodes:
        leaves = [w for w in t.neighbors(v) if t.is_leaf(w)]
        out |= {frozenset(p) for p in itertools.combinations(leaves, 2)}
    return frozenset(out)


def all_five_leaf_topologies():
    # a 5-leaf tree is fixed by its two disjoint cherries: 10 * 3 / 2 = 15
    out = set()
    for p in itertools.combinations(range(5), 2):
        rest = [x for x in range(5) if x not in p]
        for q in itertools.combinations(rest, 2):
            out.add(frozenset({frozenset(p), frozenset(q)}))
    return out


def test_leaf_swap_exchanges_positions():
    t = random_tree([f"x{i}" for i in range(9)], 3)
    rng = random.Random(5)
    probe = random.Random(5)
    a, b = probe.sample(range(9), 2)
    u = simple_mutation(t, MutationKind.LEAF_SWAP, rng)
    assert u.neighbors(a) == t.neighbors(b) and u.neighbors(b) == t.neighbors(a)
    swap = {a: b, b: a}
    assert {frozenset(swap.get(x, x) for x in e) for e in t.edges()} == {frozenset(e) for e in u.edges()}


def test_transfer_on_caterpillar_valid():
    t = caterpillar("abcdef")
    for seed in range(50):
        simple_mutation(t, MutationKind.SUBTREE_TRANSFER, seed).validate()


@pytest.mark.parametrize("kind", list(MutationKind))
@pytest.mark.parametrize("n", [4, 5, 6, 18])
def test_every_mutation_valid(kind, n):
    t = random_tree([f"x{i}" for i in range(n)], n)
    rng = random.Random(n)
    for _ in range(200):
        t = simple_mutation(t, kind, rng)
        t.validate()


def test_transfer_ergodic_n5():
    target = all_five_leaf_topologies()
    assert len(target) == 15
    for start in range(3):
        t = random_tree("abcde", start)
        rng = random.Random(start)
        seen = {cherries(t)}
        for _ in range(10_000):
            t = simple_mutation(t, MutationKind.SUBTREE_TRANSFER, rng)
            seen.add(cherries(t))
            if len(seen) == 15:
                break
        assert seen == target


def test_mutation_law():
    rng = random.Random(2024)
    plans = [mutation_plan(rng) for _ in range(100_000)]
    ks = [len(p) for p in plans]
    assert abs(ks.count(1) / len(ks) - 0.5) <= 0.01
    assert 1.97 <= sum(ks) / len(ks) <= 2.03
    assert max(ks) <= MAX_SIMPLE_MUTATIONS
    kinds = Counter(k for p in plans for k in p)
    total = sum(kinds.values())
    for kind in KINDS:
        assert abs(kinds[kind] / total - 1 / 3) <= 0.01


def test_full_mutation_is_plan_then_apply():
    t = random_tree([f"x{i}" for i in range(10)], 0)
    r1, r2 = random.Random(9), random.Random(9)
    assert full_mutation(t, r1) == apply_mutations(t, mutation_plan(r2), r2)


def test_default_plateau():
    assert default_plateau(18) == 50_000 and default_plateau(40) == 200_000
    with pytest.raises(ValueError):
        SearchConfig(plateau_limit=0)


@pytest.mark.parametrize("seed", range(5))
def test_n4_reaches_one(make_random_matrix, seed):
    res = hill_climb(make_random_matrix(4, seed), SearchConfig(seed=seed, penalty_enabled=False))
    assert res.score.s == 1.0
    assert res.stop_reason == "optimal"
    assert res.evals <= 60


def test_too_few():
    with pytest.raises(TooFewLabels):
        hill_climb(DistanceMatrix("abc", np.zeros((3, 3))))


def test_degenerate_halts():
    m = DistanceMatrix("abcdefg", np.full((7, 7), 0.5) * (1 - np.eye(7)))
    res = hill_climb(m)
    assert res.stop_reason == "degenerate" and res.score.s == 1.0 and res.evals == 1


def test_deterministic_and_monotone(make_random_matrix):
    m = make_random_matrix(10, 1)
    cfg = SearchConfig(seed=3, max_evals=3000)
    a, b = hill_climb(m, cfg), hill_climb(m, cfg)
    assert a.tree == b.tree and a.score == b.score and a.trace.same_path(b.trace)
    best = [p.best_s for p in a.trace]
    assert best == sorted(best) and len(set(best)) == len(best)
    assert a.evals == 3000 and a.stop_reason == "max_evals"
    # the recorded best equals a fresh full score exactly
    assert score(a.tree, m, cost_bounds(m)) == a.score
    assert best[-1] == a.score.s_effective


def test_plateau_stop(make_random_matrix):
    res = hill_climb(make_random_matrix(8, 0), SearchConfig(seed=0, plateau_limit=200))
    assert res.stop_reason in ("plateau", "optimal")
    if res.stop_reason == "plateau":
        assert res.evals - res.trace.points[-1].evals == 200


def test_time_stop(make_random_matrix):
    res = hill_climb(make_random_matrix(14, 0), SearchConfig(seed=0, max_seconds=0.2, plateau_limit=10**9))
    assert res.stop_reason == "time"


def test_report_sees_every_eval(make_random_matrix):
    seen = []
    res = hill_climb(make_random_matrix(7, 2), SearchConfig(max_evals=300), lambda e, sc: seen.append(e))
    assert seen == list(range(1, res.evals + 1))


def test_checkpoint(make_random_matrix, tmp_path):
    path = tmp_path / "ck.json"
    m = make_random_matrix(9, 4)
    res = hill_climb(m, SearchConfig(max_evals=1000, checkpoint_path=str(path), checkpoint_interval=100))
    data = json.loads(path.read_text())
    assert data["evals"] == res.evals
    assert TernaryTree.from_dict(data["tree"]) == res.tree
    assert data["s_effective"] == res.score.s_effective


def test_trace_csv():
    tr = ProgressTrace()
    tr.add(1, 0.5, 0.01)
    tr.add(7, 0.75, 0.02)
    assert tr.to_csv() == "eval_count,best_s,seconds\n1,0.500000,0.010\n7,0.750000,0.020\n"


def test_parallel_one_worker_is_hill_climb(make_random_matrix):
    m = make_random_matrix(9, 7)
    cfg = SearchConfig(seed=5, max_evals=2000, workers=1)
    a, b = parallel_search(m, cfg), hill_climb(m, cfg)
    assert a.tree == b.tree and a.score == b.score and a.trace.same_path(b.trace)


def test_parallel_planted_reaches_one():
    inst = make_planted_instance(12, 1)
    res = parallel_search(inst.matrix, SearchConfig(seed=1, workers=3, penalty_enabled=False, max_seconds=120))
    assert res.score.s == 1.0
    best = [p.best_s for p in res.trace]
    assert best == sorted(best)
    assert score(res.tree, inst.matrix, apply_penalty=False) == res.score
