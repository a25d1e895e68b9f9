"""Unrooted ternary trees with labelled leaves, and quartet topologies.

Node ids ``0 .. n-1`` are the leaves, in label order; ids ``n .. 2n-3`` are
internal nodes, displayed as ``n0 .. n{n-3}``. Trees are treated as immutable
values: mutation helpers return new trees.
"""

from __future__ import annotations

import enum
import random
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "TreeError",
    "TooFewLabels",
    "UnknownLabel",
    "LabelSetMismatch",
    "InvalidTree",
    "Pairing",
    "QuartetTopology",
    "TernaryTree",
    "as_rng",
    "random_tree",
    "caterpillar",
    "consistent_topology",
    "path_length",
    "is_isomorphic",
]


class TreeError(Exception):
    pass


class TooFewLabels(TreeError, ValueError):
    pass


class UnknownLabel(TreeError, KeyError):
    pass


class LabelSetMismatch(TreeError, ValueError):
    pass


class InvalidTree(TreeError, ValueError):
    pass


def as_rng(seed) -> random.Random:
    """Accept an int seed, ``None`` or an existing ``random.Random``."""
    if isinstance(seed, random.Random):
        return seed
    return random.Random(seed)


class Pairing(enum.IntEnum):
    """The three ways to split an ordered 4-tuple (u, v, w, x) into two pairs."""

    UV_WX = 0
    UW_VX = 1
    UX_VW = 2

    def pairs(self, four):
        u, v, w, x = four
        return [((u, v), (w, x)), ((u, w), (v, x)), ((u, x), (v, w))][self]


@dataclass(frozen=True)
class QuartetTopology:
    four: tuple[str, str, str, str]
    pairing: Pairing

    @property
    def pairs(self):
        return self.pairing.pairs(self.four)

    def split(self):
        """Order-free form: frozenset of the two leaf pairs."""
        return frozenset(frozenset(p) for p in self.pairs)

    def __eq__(self, other):
        if not isinstance(other, QuartetTopology):
            return NotImplemented
        return self.split() == other.split()

    def __hash__(self):
        return hash(self.split())

    def __str__(self):
        (a, b), (c, d) = self.pairs
        return f"{a}{b}|{c}{d}" if all(len(s) == 1 for s in self.four) else f"{a} {b} | {c} {d}"


class TernaryTree:
    """Unrooted tree whose leaves carry labels and whose internal nodes have degree 3.

    Parameters
    ----------
    labels : sequence of str
        Leaf labels; leaf ``i`` is node id ``i``.
    edges : iterable of (int, int)
        Undirected edges over node ids ``0 .. 2n-3``.
    validate : bool
        Check all structural invariants (default). Internal callers that
        already guarantee them may skip the check.
    """

    __slots__ = ("labels", "_adj", "_index", "_dist")

    def __init__(self, labels: Sequence[str], edges: Iterable[tuple[int, int]], validate: bool = True):
        self.labels = tuple(labels)
        adj: dict[int, list[int]] = {v: [] for v in range(max(2 * len(self.labels) - 2, 0))}
        for a, b in edges:
            if a not in adj or b not in adj:
                raise InvalidTree(f"edge ({a}, {b}) references a node outside 0..{len(adj) - 1}")
            adj[a].append(b)
            adj[b].append(a)
        self._adj = {v: tuple(sorted(nb)) for v, nb in adj.items()}
        self._index = {label: i for i, label in enumerate(self.labels)}
        self._dist = None
        if validate:
            self.validate()

    @classmethod
    def _from_adj(cls, labels, adj, index=None):
        t = cls.__new__(cls)
        t.labels = labels
        t._adj = {v: tuple(sorted(nb)) for v, nb in adj.items()}
        t._index = index if index is not None else {label: i for i, label in enumerate(labels)}
        t._dist = None
        return t

    # -- structure -------------------------------------------------------

    @property
    def n(self):
        return len(self.labels)

    @property
    def nodes(self):
        return range(2 * self.n - 2)

    @property
    def internal_nodes(self):
        return range(self.n, 2 * self.n - 2)

    def is_leaf(self, node):
        return node < self.n

    def neighbors(self, node):
        return self._adj[node]

    def edges(self):
        return sorted((a, b) for a, nb in self._adj.items() for b in nb if a < b)

    def node_name(self, node):
        return self.labels[node] if node < self.n else f"n{node - self.n}"

    def leaf(self, label):
        try:
            return self._index[label]
        except KeyError:
            raise UnknownLabel(f"no leaf labelled {label!r}") from None

    def adjacency(self):
        """Mutable copy of the adjacency as ``{node: set(neighbors)}``."""
        return {v: set(nb) for v, nb in self._adj.items()}

    def validate(self):
        n = self.n
        if n < 3:
            raise InvalidTree("a ternary tree needs at least 3 leaves")
        if len(set(self.labels)) != n:
            raise InvalidTree("leaf labels must be unique")
        if len(self._adj) != 2 * n - 2:
            raise InvalidTree(f"expected {2 * n - 2} nodes, found {len(self._adj)}")
        for v, nb in self._adj.items():
            if len(set(nb)) != len(nb) or v in nb:
                raise InvalidTree(f"node {self.node_name(v)} has a loop or parallel edge")
            want = 1 if v < n else 3
            if len(nb) != want:
                raise InvalidTree(f"node {self.node_name(v)} has degree {len(nb)}, expected {want}")
        n_edges = sum(len(nb) for nb in self._adj.values()) // 2
        if n_edges != 2 * n - 3:
            raise InvalidTree(f"expected {2 * n - 3} edges, found {n_edges}")
        seen = {0}
        stack = [0]
        while stack:
            for w in self._adj[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        if len(seen) != len(self._adj):
            raise InvalidTree("tree is not connected")
        return True

    # -- distances -------------------------------------------------------

    def leaf_distances(self) -> np.ndarray:
        """All-pairs leaf path lengths (edges), shape (n, n), cached."""
        if self._dist is None:
            n = self.n
            adj = self._adj
            dist = np.zeros((n, n), dtype=np.int64)
            for src in range(n):
                depth = {src: 0}
                queue = deque([src])
                row = dist[src]
                while queue:
                    v = queue.popleft()
                    dv = depth[v] + 1
                    for w in adj[v]:
                        if w not in depth:
                            depth[w] = dv
                            if w < n:
                                row[w] = dv
                            else:
                                queue.append(w)
            dist.setflags(write=False)
            self._dist = dist
        return self._dist

    def path_length(self, a, b) -> int:
        return int(self.leaf_distances()[self.leaf(a), self.leaf(b)])

    def path(self, a: int, b: int) -> list[int]:
        """Node ids on the unique path between nodes ``a`` and ``b``."""
        parent = {a: None}
        queue = deque([a])
        while queue:
            v = queue.popleft()
            if v == b:
                break
            for w in self._adj[v]:
                if w not in parent:
                    parent[w] = v
                    queue.append(w)
        out = [b]
        while out[-1] != a:
            out.append(parent[out[-1]])
        return out[::-1]

    def consistent_topology(self, four) -> QuartetTopology:
        four = tuple(four)
        if len(set(four)) != 4:
            raise ValueError("need four distinct labels")
        u, v, w, x = (self.leaf(s) for s in four)
        dist = self.leaf_distances()
        sums = (dist[u, v] + dist[w, x], dist[u, w] + dist[v, x], dist[u, x] + dist[v, w])
        return QuartetTopology(four, Pairing(int(np.argmin(sums))))

    def orphan_count(self) -> int:
        """Internal nodes with exactly one adjacent leaf."""
        n = self.n
        return sum(1 for v in self.internal_nodes if sum(1 for w in self._adj[v] if w < n) == 1)

    def splits(self) -> frozenset[frozenset[str]]:
        """Leaf bipartitions induced by the edges, each as the side without leaf 0."""
        n = self.n
        root = 0
        order, parent = [], {root: None}
        stack = [root]
        while stack:
            v = stack.pop()
            order.append(v)
            for w in self._adj[v]:
                if w not in parent:
                    parent[w] = v
                    stack.append(w)
        below: dict[int, frozenset[int]] = {}
        for v in reversed(order):
            acc = {v} if v < n else set()
            for w in self._adj[v]:
                if parent.get(w) == v:
                    acc |= below[w]
            below[v] = frozenset(acc)
        return frozenset(
            frozenset(self.labels[i] for i in below[v]) for v in order if v != root
        )

    def relabel_internal(self, perm: Sequence[int]) -> "TernaryTree":
        """Same tree with internal node ``n + k`` renamed to ``n + perm[k]``."""
        n = self.n
        m = {v: v for v in range(n)}
        m.update({n + k: n + p for k, p in enumerate(perm)})
        return TernaryTree(self.labels, [(m[a], m[b]) for a, b in self.edges()])

    # -- comparison and serialization -----------------------------------

    def __eq__(self, other):
        if not isinstance(other, TernaryTree):
            return NotImplemented
        return self.labels == other.labels and self._adj == other._adj

    def __hash__(self):
        return hash((self.labels, tuple(self.edges())))

    def __repr__(self):
        return f"TernaryTree(n={self.n}, newick={self.to_newick()!r})"

    def to_dict(self):
        return {"labels": list(self.labels), "edges": [list(e) for e in self.edges()]}

    @classmethod
    def from_dict(cls, data):
        return cls(data["labels"], [tuple(e) for e in data["edges"]])

    def to_newick(self) -> str:
        """Newick string rooted at internal node ``n0``. The tree itself is unrooted."""
        root = self.n

        def quote(name):
            if any(c in name for c in " ()[]':;,"):
                return "'" + name.replace("'", "''") + "'"
            return name

        def emit(v, parent):
            kids = [w for w in self._adj[v] if w != parent]
            if not kids:
                return quote(self.node_name(v))
            return "(" + ",".join(emit(w, v) for w in kids) + ")" + self.node_name(v)

        return emit(root, None) + ";"

    def to_dot(self, name="tree") -> str:
        """Graphviz source: leaves as labelled boxes, internal nodes as points."""
        lines = [f"graph {name} {{"]
        for v in self.nodes:
            label = self.node_name(v).replace("\\", "\\\\").replace('"', '\\"')
            if self.is_leaf(v):
                lines.append(f'  "{v}" [shape=box, label="{label}"];')
            else:
                lines.append(f'  "{v}" [shape=point, xlabel="{label}"];')
        for a, b in self.edges():
            lines.append(f'  "{a}" -- "{b}";')
        lines.append("}")
        return "\n".join(lines) + "\n"


def random_tree(labels: Sequence[str], seed=None) -> TernaryTree:
    """Uniformly random leaf-labelled ternary tree.

    Starts from one internal node with three leaves, then inserts each
    further leaf on a uniformly chosen existing edge. Every labelled
    topology is reached with the same probability.
    """
    labels = tuple(labels)
    n = len(labels)
    if n < 4:
        raise TooFewLabels(f"need at least 4 labels, got {n}")
    rng = as_rng(seed)
    first = n
    edges = [(0, first), (1, first), (2, first)]
    for leaf in range(3, n):
        k = rng.randrange(len(edges))
        a, b = edges[k]
        mid = n + leaf - 2
        edges[k] = (a, mid)
        edges.append((mid, b))
        edges.append((leaf, mid))
    return TernaryTree(labels, edges)


def caterpillar(labels: Sequence[str]) -> TernaryTree:
    """Tree whose internal nodes form a path, leaves attached in label order."""
    labels = tuple(labels)
    n = len(labels)
    if n < 3:
        raise TooFewLabels(f"need at least 3 labels, got {n}")
    spine = list(range(n, 2 * n - 2))
    edges = [(0, spine[0]), (1, spine[0])]
    for k in range(1, len(spine)):
        edges.append((spine[k - 1], spine[k]))
        edges.append((k + 1, spine[k]))
    edges.append((n - 1, spine[-1]))
    return TernaryTree(labels, edges)


def consistent_topology(t: TernaryTree, four) -> QuartetTopology:
    return t.consistent_topology(four)


def path_length(t: TernaryTree, a, b) -> int:
    return t.path_length(a, b)


def is_isomorphic(t1: TernaryTree, t2: TernaryTree) -> bool:
    """Leaf-label preserving isomorphism, ignoring internal node ids."""
    if set(t1.labels) != set(t2.labels):
        raise LabelSetMismatch("trees have different leaf label sets")
    return t1.splits() == t2.splits()
