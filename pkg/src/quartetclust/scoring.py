"""Quartet costs and the normalized tree benefit score.

All quartets are handled as numpy arrays over the ``C(n, 4)`` index
4-tuples ``i < j < k < l`` of the matrix order. Pairing 0 is ``ij|kl``,
1 is ``ik|jl`` and 2 is ``il|jk``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np

from .distance import DistanceMatrix
from .tree import LabelSetMismatch, Pairing, QuartetTopology, TernaryTree

log = logging.getLogger(__name__)

__all__ = [
    "PENALTY_WEIGHT",
    "MatrixTooSmall",
    "QuartetCostTable",
    "TreeScore",
    "MSTResult",
    "quartet_indices",
    "quartet_cost",
    "cost_bounds",
    "score",
    "score_incremental",
    "agreement_fraction",
    "mst_baseline",
]

PENALTY_WEIGHT = 0.005


class MatrixTooSmall(ValueError):
    pass


@lru_cache(maxsize=16)
def quartet_indices(n: int) -> np.ndarray:
    """All index 4-tuples ``i < j < k < l`` of ``range(n)``, shape (C(n,4), 4)."""
    if n < 4:
        return np.zeros((0, 4), dtype=np.intp)
    q = np.fromiter(
        (x for quad in combinations(range(n), 4) for x in quad), dtype=np.intp
    ).reshape(-1, 4)
    q.setflags(write=False)
    return q


def _pair_sums(m, q):
    """The three pairing sums of ``m`` for every quartet row of ``q``."""
    i, j, k, l = q.T
    return np.stack([m[i, j] + m[k, l], m[i, k] + m[j, l], m[i, l] + m[j, k]], axis=1)


def _total(values):
    # numpy's pairwise summation: error grows with log(m), and the result
    # depends only on the array contents, so full and incremental scoring
    # of the same tree agree bit for bit
    return float(np.sum(values))


def quartet_cost(d: DistanceMatrix, topology: QuartetTopology) -> float:
    """Sum of the two within-pair distances."""
    (a, b), (c, e) = topology.pairs
    return d[a, b] + d[c, e]


@dataclass(frozen=True, eq=False)
class QuartetCostTable:
    labels: tuple[str, ...]
    quads: np.ndarray
    costs: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    best_total: float
    worst_total: float

    @property
    def degenerate(self):
        return not self.worst_total > self.best_total

    def best_pairing(self):
        """Index of the cheapest pairing of each quartet."""
        return np.argmin(self.costs, axis=1)


def cost_bounds(d: DistanceMatrix) -> QuartetCostTable:
    """Per-quartet costs and the sums of per-quartet minima and maxima."""
    if d.n < 4:
        raise MatrixTooSmall(f"need at least 4 items, got {d.n}")
    q = quartet_indices(d.n)
    costs = _pair_sums(d.d, q)
    lo = costs.min(axis=1)
    hi = costs.max(axis=1)
    return QuartetCostTable(d.labels, q, costs, lo, hi, _total(lo), _total(hi))


@dataclass(frozen=True)
class TreeScore:
    raw_cost: float
    s: float
    penalty: float
    s_effective: float
    # per-quartet chosen pairing and leaf distances in matrix order, kept so
    # score_incremental can reuse them
    choice: np.ndarray | None = field(default=None, repr=False, compare=False)
    leaf_dist: np.ndarray | None = field(default=None, repr=False, compare=False)

    def as_row(self, tree_id=""):
        return f"{tree_id}\t{self.raw_cost:.6f}\t{self.s:.6f}\t{self.penalty:.6f}\t{self.s_effective:.6f}"


def _matrix_order_dist(t: TernaryTree, labels):
    if set(t.labels) != set(labels) or len(t.labels) != len(labels):
        raise LabelSetMismatch("tree leaves and matrix labels differ")
    dist = t.leaf_distances()
    if t.labels == tuple(labels):
        return dist
    perm = [t.leaf(label) for label in labels]
    return dist[np.ix_(perm, perm)]


def _finish(t, bounds, choice, dist, apply_penalty, penalty_weight):
    chosen = bounds.costs[np.arange(len(choice)), choice]
    raw = _total(chosen)
    if bounds.degenerate:
        log.info("all trees score equally (worst total == best total); s is defined as 1")
        s = 1.0
    else:
        s = (bounds.worst_total - raw) / (bounds.worst_total - bounds.best_total)
    penalty = penalty_weight * t.orphan_count() if apply_penalty else 0.0
    return TreeScore(raw, s, penalty, s - penalty, choice, dist)


def score(t: TernaryTree, d: DistanceMatrix, bounds: QuartetCostTable | None = None, apply_penalty: bool = True,
          penalty_weight: float = PENALTY_WEIGHT) -> TreeScore:
    """Score a tree against a distance matrix.

    ``raw_cost`` sums, over every quartet, the cost of the pairing the tree
    is consistent with; ``s`` rescales it so the sum of per-quartet worst
    costs maps to 0 and the sum of per-quartet best costs maps to 1. With
    ``apply_penalty`` each internal node carrying exactly one leaf costs
    ``penalty_weight``.
    """
    if bounds is None:
        bounds = cost_bounds(d)
    dist = _matrix_order_dist(t, d.labels)
    choice = np.argmin(_pair_sums(dist, bounds.quads), axis=1)
    return _finish(t, bounds, choice, dist, apply_penalty, penalty_weight)


def score_incremental(t: TernaryTree, d: DistanceMatrix, bounds: QuartetCostTable, prior: TreeScore,
                      apply_penalty: bool = True, penalty_weight: float = PENALTY_WEIGHT) -> TreeScore:
    """Score ``t`` by updating ``prior``, the score of the tree it was mutated from.

    Only quartets with at least one changed leaf-pair distance are
    re-derived. The result equals :func:`score` bit for bit; when ``prior``
    carries no reusable state this simply calls :func:`score`.
    """
    if prior.choice is None or prior.leaf_dist is None or len(prior.choice) != len(bounds.quads):
        return score(t, d, bounds, apply_penalty, penalty_weight)
    dist = _matrix_order_dist(t, d.labels)
    changed = dist != prior.leaf_dist
    if not changed.any():
        choice = prior.choice
    else:
        q = bounds.quads
        i, j, k, l = q.T
        hit = changed[i, j] | changed[k, l] | changed[i, k] | changed[j, l] | changed[i, l] | changed[j, k]
        idx = np.flatnonzero(hit)
        choice = prior.choice.copy()
        choice[idx] = np.argmin(_pair_sums(dist, q[idx]), axis=1)
    return _finish(t, bounds, choice, dist, apply_penalty, penalty_weight)


def agreement_fraction(t: TernaryTree, d: DistanceMatrix, bounds: QuartetCostTable | None = None) -> float:
    """Fraction of quartets whose tree-consistent pairing is the cheapest one."""
    if bounds is None:
        bounds = cost_bounds(d)
    dist = _matrix_order_dist(t, d.labels)
    choice = np.argmin(_pair_sums(dist, bounds.quads), axis=1)
    return float(np.mean(choice == bounds.best_pairing()))


def consistent_quartets(t: TernaryTree, d: DistanceMatrix):
    """Yield the tree-consistent :class:`QuartetTopology` of every quartet."""
    q = quartet_indices(d.n)
    dist = _matrix_order_dist(t, d.labels)
    for row, c in zip(q, np.argmin(_pair_sums(dist, q), axis=1)):
        yield QuartetTopology(tuple(d.labels[x] for x in row), Pairing(int(c)))


@dataclass(frozen=True)
class MSTResult:
    labels: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    weight: float

    def to_dot(self, name="mst"):
        lines = [f"graph {name} {{"]
        for label in self.labels:
            lines.append(f'  "{label}" [shape=box];')
        for a, b in self.edges:
            lines.append(f'  "{a}" -- "{b}";')
        lines.append("}")
        return "\n".join(lines) + "\n"


def mst_baseline(d: DistanceMatrix) -> MSTResult:
    """Minimum spanning tree of the complete distance graph (Prim, O(n^2)).

    Ties go to the lowest index, so the result is deterministic.
    """
    n = d.n
    if n < 2:
        raise MatrixTooSmall("need at least 2 items")
    w = d.d
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = w[0].copy()
    via = np.zeros(n, dtype=np.intp)
    edges = []
    total = []
    for _ in range(n - 1):
        cand = np.where(in_tree, np.inf, best)
        v = int(np.argmin(cand))
        u = int(via[v])
        edges.append((d.labels[min(u, v)], d.labels[max(u, v)]))
        total.append(w[u, v])
        in_tree[v] = True
        closer = ~in_tree & (w[v] < best)
        best[closer] = w[v][closer]
        via[closer] = v
    return MSTResult(d.labels, tuple(edges), math.fsum(total))
