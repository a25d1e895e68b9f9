"""Clustering arbitrary files by compression distance and quartet-tree search."""

__version__ = "0.1.0"

from .compressor import DEFAULT_COMPRESSOR, CompressorId, SizeCache, compressed_size, concat_size
from .distance import CorpusItem, DistanceMatrix, build_matrix, ncd, read_matrix, write_matrix
from .scoring import TreeScore, cost_bounds, mst_baseline, score, score_incremental
from .search import SearchConfig, full_mutation, hill_climb, parallel_search, simple_mutation
from .tree import TernaryTree, consistent_topology, is_isomorphic, path_length, random_tree

__all__ = [
    "DEFAULT_COMPRESSOR", "CompressorId", "SizeCache", "compressed_size", "concat_size",
    "CorpusItem", "DistanceMatrix", "build_matrix", "ncd", "read_matrix", "write_matrix",
    "TreeScore", "cost_bounds", "mst_baseline", "score", "score_incremental",
    "SearchConfig", "full_mutation", "hill_climb", "parallel_search", "simple_mutation",
    "TernaryTree", "consistent_topology", "is_isomorphic", "path_length", "random_tree",
]
