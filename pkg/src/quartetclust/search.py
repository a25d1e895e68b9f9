"""Randomized hill climbing over ternary tree topologies."""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
import multiprocessing as mp
import os
import queue as queue_mod
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .distance import DistanceMatrix
from .scoring import PENALTY_WEIGHT, TreeScore, cost_bounds, score, score_incremental
from .tree import TernaryTree, TooFewLabels, as_rng, random_tree

log = logging.getLogger(__name__)

__all__ = [
    "MutationKind",
    "SearchConfig",
    "TracePoint",
    "ProgressTrace",
    "SearchResult",
    "MAX_SIMPLE_MUTATIONS",
    "default_plateau",
    "simple_mutation",
    "mutation_plan",
    "apply_mutations",
    "full_mutation",
    "hill_climb",
    "parallel_search",
    "derive_seed",
]

MAX_SIMPLE_MUTATIONS = 32


class MutationKind(enum.Enum):
    LEAF_SWAP = "leaf_swap"
    SUBTREE_SWAP = "subtree_swap"
    SUBTREE_TRANSFER = "subtree_transfer"


KINDS = (MutationKind.LEAF_SWAP, MutationKind.SUBTREE_SWAP, MutationKind.SUBTREE_TRANSFER)


def default_plateau(n: int) -> int:
    return 50_000 if n <= 20 else 200_000


def derive_seed(seed, *path) -> int:
    """Child seed for a named component; stable across runs and platforms."""
    ss = np.random.SeedSequence([0 if seed is None else int(seed), *(int(p) for p in path)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class SearchConfig:
    """Hill-climbing settings.

    ``plateau_limit`` counts consecutive rejected full mutations; ``None``
    picks :func:`default_plateau` for the matrix size.
    """

    seed: int | None = 0
    plateau_limit: int | None = None
    max_evals: int | None = None
    penalty_enabled: bool = True
    penalty_weight: float = PENALTY_WEIGHT
    workers: int = 1
    max_seconds: float | None = None
    checkpoint_path: str | None = None
    checkpoint_interval: int = 10_000
    sync_interval: int = 500

    def __post_init__(self):
        if self.plateau_limit is not None and self.plateau_limit < 1:
            raise ValueError("plateau_limit must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.max_evals is not None and self.max_evals < 1:
            raise ValueError("max_evals must be >= 1")


@dataclass(frozen=True)
class TracePoint:
    evals: int
    best_s: float
    seconds: float


@dataclass
class ProgressTrace:
    """Improvements of the accepted score over the course of a search."""

    points: list[TracePoint] = field(default_factory=list)

    def add(self, evals, best_s, seconds):
        self.points.append(TracePoint(evals, best_s, seconds))

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eval_count", "best_s", "seconds"])
        for p in self.points:
            w.writerow([p.evals, f"{p.best_s:.6f}", f"{p.seconds:.3f}"])
        return buf.getvalue()

    def same_path(self, other: "ProgressTrace") -> bool:
        """Equal evaluation counts and scores, ignoring wall time."""
        return [(p.evals, p.best_s) for p in self] == [(p.evals, p.best_s) for p in other]


@dataclass
class SearchResult:
    tree: TernaryTree
    score: TreeScore
    trace: ProgressTrace
    evals: int
    stop_reason: str
    seconds: float

    def __iter__(self):
        return iter((self.tree, self.score, self.trace))


# -- mutations -------------------------------------------------------------


def _relink(adj, a, old, new):
    adj[a].discard(old)
    adj[old].discard(a)
    adj[a].add(new)
    adj[new].add(a)


def _leaf_swap(adj, n, rng):
    a, b = rng.sample(range(n), 2)
    (pa,), (pb,) = adj[a], adj[b]
    if pa != pb:
        _relink(adj, a, pa, pb)
        _relink(adj, b, pb, pa)


def _path(adj, a, b):
    parent = {a: None}
    stack = [a]
    while stack:
        v = stack.pop()
        if v == b:
            break
        for w in adj[v]:
            if w not in parent:
                parent[w] = v
                stack.append(w)
    out = [b]
    while out[-1] != a:
        out.append(parent[out[-1]])
    return out[::-1]


def _subtree_swap(adj, n, rng):
    internal = range(n, 2 * n - 2)
    if n < 5:
        # two internal nodes, always adjacent: nothing to swap
        return _leaf_swap(adj, n, rng)
    while True:
        u, v = rng.sample(internal, 2)
        p = _path(adj, u, v)
        if len(p) > 2:
            break
    pu, pv = p[1], p[-2]
    if pu != pv:
        _relink(adj, u, pu, pv)
        _relink(adj, v, pv, pu)


def _component(adj, start, blocked):
    seen = {start, blocked}
    stack = [start]
    while stack:
        for w in adj[stack.pop()]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    seen.discard(blocked)
    return seen


def _subtree_transfer(adj, n, rng):
    s = rng.randrange(2 * n - 2)
    p = rng.choice(sorted(w for w in adj[s] if w >= n))
    moved = _component(adj, s, p)
    a, b = sorted(adj[p] - {s})
    # take p out and join its other two neighbours
    adj[p] -= {a, b}
    adj[a].discard(p)
    adj[b].discard(p)
    adj[a].add(b)
    adj[b].add(a)
    targets = sorted(
        (x, y) for x in adj if x not in moved and x != p for y in adj[x] if y > x and y not in moved and y != p
    )
    c, e = targets[rng.randrange(len(targets))]
    adj[c].discard(e)
    adj[e].discard(c)
    for x in (c, e):
        adj[x].add(p)
        adj[p].add(x)


_APPLY = {
    MutationKind.LEAF_SWAP: _leaf_swap,
    MutationKind.SUBTREE_SWAP: _subtree_swap,
    MutationKind.SUBTREE_TRANSFER: _subtree_transfer,
}


def simple_mutation(t: TernaryTree, kind: MutationKind, seed=None) -> TernaryTree:
    """One leaf swap, subtree swap or subtree transfer, as a new tree.

    Subtree swap picks two internal nodes at least two edges apart and
    exchanges the subtrees hanging from them away from each other. Subtree
    transfer cuts a random subtree off, smooths the degree-2 node left
    behind, and regrafts it onto a uniformly chosen remaining edge. On a
    4-leaf tree a subtree swap degenerates to a leaf swap.
    """
    rng = as_rng(seed)
    adj = t.adjacency()
    _APPLY[kind](adj, t.n, rng)
    return TernaryTree._from_adj(t.labels, adj, t._index)


def mutation_plan(seed=None) -> list[MutationKind]:
    """Kinds for one full mutation: ``k`` has probability ``2**-k``, kinds uniform."""
    rng = as_rng(seed)
    k = 1
    while k < MAX_SIMPLE_MUTATIONS and rng.random() < 0.5:
        k += 1
    return [KINDS[rng.randrange(3)] for _ in range(k)]


def apply_mutations(t: TernaryTree, kinds, seed=None) -> TernaryTree:
    rng = as_rng(seed)
    adj = t.adjacency()
    for kind in kinds:
        _APPLY[kind](adj, t.n, rng)
    return TernaryTree._from_adj(t.labels, adj, t._index)


def full_mutation(t: TernaryTree, seed=None) -> TernaryTree:
    rng = as_rng(seed)
    return apply_mutations(t, mutation_plan(rng), rng)


# -- hill climbing ---------------------------------------------------------


def _write_checkpoint(path, evals, tree, sc):
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps({
        "evals": evals,
        "raw_cost": sc.raw_cost,
        "s": sc.s,
        "penalty": sc.penalty,
        "s_effective": sc.s_effective,
        "tree": tree.to_dict(),
    }, indent=1))
    os.replace(tmp, path)


def _climb(d: DistanceMatrix, cfg: SearchConfig, seed, hook: Callable | None = None, t0=None,
           report: Callable | None = None) -> SearchResult:
    if d.n < 4:
        raise TooFewLabels(f"tree search needs at least 4 items, got {d.n}")
    t0 = time.perf_counter() if t0 is None else t0
    rng = random.Random(seed)
    bounds = cost_bounds(d)
    plateau = cfg.plateau_limit or default_plateau(d.n)
    pen = cfg.penalty_enabled

    def full(tree):
        return score(tree, d, bounds, pen, cfg.penalty_weight)

    best = random_tree(d.labels, rng)
    best_score = full(best)
    evals = 1
    if report is not None:
        report(evals, best_score)
    trace = ProgressTrace()
    trace.add(evals, best_score.s_effective, time.perf_counter() - t0)
    if bounds.degenerate:
        log.warning("degenerate distance matrix: every tree has s = 1")
        return SearchResult(best, best_score, trace, evals, "degenerate", time.perf_counter() - t0)

    stale = 0
    reason = None
    while reason is None:
        if best_score.s >= 1.0:
            reason = "optimal"
            break
        cand = full_mutation(best, rng)
        cand_score = score_incremental(cand, d, bounds, best_score, pen, cfg.penalty_weight)
        evals += 1
        if report is not None:
            report(evals, cand_score)
        if cand_score.s_effective > best_score.s_effective:
            best, best_score = cand, cand_score
            stale = 0
            trace.add(evals, best_score.s_effective, time.perf_counter() - t0)
        else:
            stale += 1
        if cfg.checkpoint_path and evals % cfg.checkpoint_interval == 0:
            _write_checkpoint(cfg.checkpoint_path, evals, best, best_score)
        if hook is not None and evals % cfg.sync_interval == 0:
            adopted = hook(best, best_score, evals)
            if adopted == "stop":
                reason = "stopped"
            elif adopted is not None:
                best = adopted
                best_score = full(best)
                stale = 0
        if stale >= plateau:
            reason = "plateau"
        elif cfg.max_evals is not None and evals >= cfg.max_evals:
            reason = "max_evals"
        elif cfg.max_seconds is not None and time.perf_counter() - t0 >= cfg.max_seconds:
            reason = "time"
    if cfg.checkpoint_path:
        _write_checkpoint(cfg.checkpoint_path, evals, best, best_score)
    return SearchResult(best, best_score, trace, evals, reason, time.perf_counter() - t0)


def hill_climb(d: DistanceMatrix, cfg: SearchConfig = SearchConfig(), report: Callable | None = None) -> SearchResult:
    """Single-trajectory hill climber.

    Starts from a random tree and repeatedly applies a full mutation,
    keeping the result only when it strictly raises ``s_effective``
    (``s`` when the penalty is off). Stops when ``s`` reaches 1, after
    ``plateau_limit`` consecutive rejections, or at ``max_evals`` /
    ``max_seconds``. Deterministic for a fixed ``cfg.seed``.

    ``report(evals, score)``, if given, sees every evaluated tree.
    """
    return _climb(d, cfg, cfg.seed, report=report)


# -- parallel search ---------------------------------------------------------


class _SharedBest:
    """Monotone (score, tree) record shared between worker processes."""

    def __init__(self, ctx, n):
        self.lock = ctx.Lock()
        self.value = ctx.Value("d", -math.inf, lock=False)
        self.edges = ctx.Array("i", 2 * (2 * n - 3), lock=False)
        self.stop = ctx.Event()

    def offer(self, s, tree):
        with self.lock:
            if s > self.value.value:
                self.value.value = s
                flat = [x for e in tree.edges() for x in e]
                self.edges[:] = flat
                return True
        return False

    def read(self):
        with self.lock:
            return self.value.value, list(self.edges)


def _worker(wid, d, cfg, seed, shared, out, t0_wall):
    t0 = time.perf_counter() - (time.time() - t0_wall)
    published = []

    def hook(tree, sc, evals):
        if shared.stop.is_set():
            return "stop"
        if shared.offer(sc.s_effective, tree):
            published.append(TracePoint(evals, sc.s_effective, time.perf_counter() - t0))
            if sc.s >= 1.0:
                shared.stop.set()
            return None
        value, flat = shared.read()
        if value > sc.s_effective:
            edges = list(zip(flat[0::2], flat[1::2]))
            return TernaryTree(d.labels, edges, validate=False)
        return None

    res = _climb(d, cfg, seed, hook, t0)
    if shared.offer(res.score.s_effective, res.tree):
        published.append(TracePoint(res.evals, res.score.s_effective, res.seconds))
    if res.score.s >= 1.0:
        shared.stop.set()
    out.put((wid, res.tree.to_dict(), res.evals, res.stop_reason, res.seconds,
             [(p.evals, p.best_s, p.seconds) for p in res.trace] + [(p.evals, p.best_s, p.seconds) for p in published]))


def parallel_search(d: DistanceMatrix, cfg: SearchConfig = SearchConfig()) -> SearchResult:
    """Run ``cfg.workers`` independent climbers sharing one best record.

    Worker 0 uses ``cfg.seed``, the others derived seeds. Every
    ``sync_interval`` evaluations a worker publishes its best tree if it
    beats the record, or adopts the record if that beats its own. The first
    climber to reach ``s = 1`` stops the rest. With one worker this is
    exactly :func:`hill_climb`.
    """
    if cfg.workers == 1:
        return hill_climb(d, cfg)
    ctx = mp.get_context("fork" if "fork" in mp.get_all_start_methods() else "spawn")
    shared = _SharedBest(ctx, d.n)
    out = ctx.Queue()
    t0_wall = time.time()
    t0 = time.perf_counter()
    seeds = [cfg.seed] + [derive_seed(cfg.seed, 1, w) for w in range(1, cfg.workers)]
    procs = [ctx.Process(target=_worker, args=(w, d, cfg, seeds[w], shared, out, t0_wall), daemon=True)
             for w in range(cfg.workers)]
    for p in procs:
        p.start()
    results = []
    try:
        while len(results) < len(procs):
            try:
                results.append(out.get(timeout=1.0))
            except queue_mod.Empty:
                if not any(p.is_alive() for p in procs) and out.empty():
                    raise RuntimeError("search workers exited without reporting") from None
    finally:
        for p in procs:
            p.join(timeout=5)
            if p.is_alive():
                p.terminate()

    bounds = cost_bounds(d)
    scored = []
    for wid, tree_dict, evals, reason, secs, points in results:
        tree = TernaryTree.from_dict(tree_dict)
        scored.append((score(tree, d, bounds, cfg.penalty_enabled, cfg.penalty_weight), wid, tree, reason))
    best_score, _, best_tree, reason = max(scored, key=lambda r: (r[0].s_effective, -r[1]))

    # merge all improvement events into one monotone trace
    events = sorted((p for r in results for p in r[5]), key=lambda p: (p[2], p[0]))
    trace = ProgressTrace()
    for evals, s, secs in events:
        if not trace.points or s > trace.points[-1].best_s:
            trace.add(evals, s, secs)
    total = sum(r[2] for r in results)
    return SearchResult(best_tree, best_score, trace, total, reason, time.perf_counter() - t0)
