"""End-to-end runs of the three controlled experiments and their checks."""

from __future__ import annotations

from dataclasses import dataclass, field

from .compressor import DEFAULT_COMPRESSOR
from .distance import DistanceMatrix, build_matrix
from .search import SearchConfig, SearchResult, parallel_search
from .synthgen import (
    TaggedFileSpec,
    default_tag_specs,
    filetype_of,
    make_filetype_corpus,
    make_planted_instance,
    make_tag_corpus,
)
from .tree import TernaryTree, is_isomorphic

__all__ = [
    "Check",
    "ExperimentReport",
    "siblings",
    "tag_sibling_fraction",
    "nearest_tree_neighbors",
    "same_type_neighbor_count",
    "run_planted",
    "run_tags",
    "run_filetypes",
    "EXPERIMENTS",
]


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


@dataclass
class ExperimentReport:
    name: str
    matrix: DistanceMatrix
    result: SearchResult
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def lines(self):
        sc = self.result.score
        yield f"experiment {self.name}: s = {sc.s:.6f}, penalty = {sc.penalty:.6f}, " \
              f"s_effective = {sc.s_effective:.6f}, evaluations = {self.result.evals}, " \
              f"{self.result.seconds:.1f} s"
        for c in self.checks:
            yield c.line()
        yield "PASS" if self.passed else "FAIL"


def siblings(tree: TernaryTree, label: str) -> list[str]:
    """Other leaves hanging off the same internal node as ``label``."""
    leaf = tree.leaf(label)
    (parent,) = tree.neighbors(leaf)
    return [tree.labels[w] for w in tree.neighbors(parent) if tree.is_leaf(w) and w != leaf]


def tag_sibling_fraction(tree: TernaryTree, specs) -> tuple[int, int]:
    """Files sharing >= 2 tags with another file, and how many of them have a
    tree sibling sharing >= 1 tag. Returns ``(hits, eligible)``."""
    tags = {s.name: set(s.tags) for s in specs}
    eligible = [a for a in tags if any(b != a and len(tags[a] & tags[b]) >= 2 for b in tags)]
    hits = sum(1 for a in eligible if any(tags[a] & tags[b] for b in siblings(tree, a)))
    return hits, len(eligible)


def nearest_tree_neighbors(tree: TernaryTree, d: DistanceMatrix) -> dict[str, str]:
    """For each leaf, the other leaf with the fewest edges between them;
    ties go to the smaller distance, then the label."""
    out = {}
    for a in tree.labels:
        out[a] = min(
            (b for b in tree.labels if b != a),
            key=lambda b: (tree.path_length(a, b), d[a, b], b),
        )
    return out


def same_type_neighbor_count(tree: TernaryTree, d: DistanceMatrix) -> int:
    nn = nearest_tree_neighbors(tree, d)
    return sum(1 for a, b in nn.items() if filetype_of(a) == filetype_of(b))


def run_planted(seed: int = 0, n: int = 18, cfg: SearchConfig | None = None) -> ExperimentReport:
    inst = make_planted_instance(n, seed)
    # exact tree metric: the orphan penalty would pull the search off the source tree
    cfg = cfg or SearchConfig(seed=seed, penalty_enabled=False)
    res = parallel_search(inst.matrix, cfg)
    iso = is_isomorphic(inst.tree, res.tree)
    rep = ExperimentReport("planted", inst.matrix, res)
    rep.checks.append(Check("s = 1", res.score.s == 1.0, f"s = {res.score.s:.6f}"))
    rep.checks.append(Check("isomorphic to source tree", iso, str(iso)))
    return rep


def run_tags(seed: int = 0, specs: list[TaggedFileSpec] | None = None, compressor=DEFAULT_COMPRESSOR,
             cfg: SearchConfig | None = None, min_s: float = 0.85, min_fraction: float = 0.75) -> ExperimentReport:
    specs = default_tag_specs() if specs is None else specs
    m = build_matrix(make_tag_corpus(specs, seed=seed), compressor, workers=4)
    res = parallel_search(m, cfg or SearchConfig(seed=seed))
    hits, eligible = tag_sibling_fraction(res.tree, specs)
    rep = ExperimentReport("tags", m, res)
    rep.checks.append(Check(f"s >= {min_s}", res.score.s >= min_s, f"s = {res.score.s:.6f}"))
    frac = hits / eligible if eligible else 1.0
    rep.checks.append(Check(f"tag-sharing sibling fraction >= {min_fraction}", frac >= min_fraction,
                            f"{hits}/{eligible} = {frac:.3f}"))
    return rep


def run_filetypes(seed: int = 0, compressor=DEFAULT_COMPRESSOR, cfg: SearchConfig | None = None,
                  min_same: int = 14) -> ExperimentReport:
    corpus = make_filetype_corpus(seed)
    m = build_matrix(corpus, compressor, workers=4)
    res = parallel_search(m, cfg or SearchConfig(seed=seed))
    same = same_type_neighbor_count(res.tree, m)
    rep = ExperimentReport("filetypes", m, res)
    rep.checks.append(Check(f"nearest tree neighbour of same type for >= {min_same}/{len(corpus)}",
                            same >= min_same, f"{same}/{len(corpus)}"))
    return rep


EXPERIMENTS = {"planted": run_planted, "tags": run_tags, "filetypes": run_filetypes}
