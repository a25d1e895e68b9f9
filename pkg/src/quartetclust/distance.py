"""Pairwise normalized compression distances and the matrix text format."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .compressor import DEFAULT_COMPRESSOR, SizeCache, compressed_size

log = logging.getLogger(__name__)

__all__ = [
    "DistanceError",
    "DuplicateLabel",
    "DegenerateDenominator",
    "MalformedMatrix",
    "CorpusItem",
    "DistanceMatrix",
    "ncd",
    "build_matrix",
    "format_matrix",
    "parse_matrix",
    "write_matrix",
    "read_matrix",
]

MAX_DISTANCE = 1.5
ANOMALY_THRESHOLD = 1.1


class DistanceError(Exception):
    pass


class DuplicateLabel(DistanceError, ValueError):
    pass


class DegenerateDenominator(DistanceError, ZeroDivisionError):
    pass


class MalformedMatrix(DistanceError, ValueError):
    pass


@dataclass(frozen=True)
class CorpusItem:
    label: str
    data: bytes = field(repr=False)

    def __post_init__(self):
        if not self.label:
            raise ValueError("corpus labels must be non-empty")
        if not self.data:
            raise ValueError(f"corpus item {self.label!r} has no data")

    @classmethod
    def from_path(cls, path, label=None):
        path = Path(path)
        return cls(label or path.name, path.read_bytes())


class DistanceMatrix:
    """Labelled symmetric distance matrix with a zero diagonal.

    Parameters
    ----------
    labels : sequence of str
        Row/column names in matrix order.
    d : array_like, shape (n, n)
        Distances. Validated on construction.
    """

    def __init__(self, labels: Sequence[str], d):
        self.labels = tuple(labels)
        self.d = np.array(d, dtype=float)
        self.d.setflags(write=False)
        self.validate()
        self._index = {label: i for i, label in enumerate(self.labels)}

    @property
    def n(self):
        return len(self.labels)

    def index(self, label):
        try:
            return self._index[label]
        except KeyError:
            raise KeyError(f"unknown label {label!r}") from None

    def __getitem__(self, pair):
        a, b = pair
        return float(self.d[self.index(a), self.index(b)])

    def validate(self):
        n = len(self.labels)
        if len(set(self.labels)) != n:
            raise DuplicateLabel("matrix labels must be unique")
        if self.d.shape != (n, n):
            raise MalformedMatrix(f"expected a {n}x{n} matrix, got shape {self.d.shape}")
        if not np.all(np.isfinite(self.d)):
            raise MalformedMatrix("matrix has non-finite entries")
        if np.any(np.diag(self.d) != 0):
            raise MalformedMatrix("diagonal must be exactly zero")
        if not np.array_equal(self.d, self.d.T):
            raise MalformedMatrix("matrix is not exactly symmetric")
        if np.any(self.d < 0) or np.any(self.d > MAX_DISTANCE):
            raise MalformedMatrix(f"entries must lie in [0, {MAX_DISTANCE}]")

    def permuted(self, order: Sequence[str]) -> "DistanceMatrix":
        idx = [self.index(label) for label in order]
        return DistanceMatrix(order, self.d[np.ix_(idx, idx)])

    def __eq__(self, other):
        if not isinstance(other, DistanceMatrix):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(self.d, other.d)

    def __repr__(self):
        return f"DistanceMatrix(n={self.n}, labels={list(self.labels)!r})"


def ncd(x: CorpusItem, y: CorpusItem, compressor=DEFAULT_COMPRESSOR, cache: SizeCache | None = None) -> float:
    """Normalized compression distance between two items.

    Uses both concatenation orders so that ``ncd(x, y) == ncd(y, x)``
    exactly::

        max(Z(yx) - Z(y), Z(xy) - Z(x)) / max(Z(x), Z(y))

    Negative numerators (codec overhead) are clamped to zero.
    """
    zx = compressed_size(x.data, compressor, cache)
    zy = compressed_size(y.data, compressor, cache)
    zxy = compressed_size(x.data + y.data, compressor, cache)
    zyx = compressed_size(y.data + x.data, compressor, cache)
    denom = max(zx, zy)
    if denom <= 0:
        raise DegenerateDenominator(f"zero compressed size for {x.label!r} and {y.label!r}")
    # integer numerator, so swapping x and y cannot change the result
    return max(0, zyx - zy, zxy - zx) / denom


def build_matrix(corpus: Iterable[CorpusItem], compressor=DEFAULT_COMPRESSOR, cache: SizeCache | None = None,
                 workers: int = 1) -> DistanceMatrix:
    """Distance matrix over ``corpus``, each unordered pair computed once.

    ``workers > 1`` evaluates pairs on a thread pool (the stdlib codecs
    release the GIL); the result is identical to the sequential one.
    """
    corpus = list(corpus)
    labels = [item.label for item in corpus]
    if len(corpus) < 2:
        raise ValueError("need at least two corpus items")
    seen = set()
    for label in labels:
        if label in seen:
            raise DuplicateLabel(f"duplicate label {label!r}")
        seen.add(label)
    if cache is None:
        cache = SizeCache()

    pairs = list(combinations(range(len(corpus)), 2))

    def one(pair):
        i, j = pair
        try:
            return ncd(corpus[i], corpus[j], compressor, cache)
        except Exception as exc:
            raise DistanceError(f"failed on pair ({labels[i]!r}, {labels[j]!r}): {exc}") from exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(one, pairs))
    else:
        values = [one(p) for p in pairs]

    n = len(corpus)
    d = np.zeros((n, n))
    for (i, j), v in zip(pairs, values):
        if v > ANOMALY_THRESHOLD:
            log.warning("compressor anomaly: d(%s, %s) = %.4f", labels[i], labels[j], v)
        d[i, j] = d[j, i] = min(v, MAX_DISTANCE)
    return DistanceMatrix(labels, d)


def format_matrix(m: DistanceMatrix) -> str:
    """Serialize: n, then n labels, then the strict lower triangle.

    Row ``i`` (for i = 1..n-1) holds ``d[i][0] .. d[i][i-1]`` with six
    fractional digits, space separated.
    """
    lines = [str(m.n)]
    for label in m.labels:
        if "\n" in label or "\r" in label or label != label.strip():
            raise MalformedMatrix(f"label {label!r} cannot be written to the text format")
        lines.append(label)
    for i in range(1, m.n):
        lines.append(" ".join(f"{m.d[i, j]:.6f}" for j in range(i)))
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> DistanceMatrix:
    lines = text.splitlines()
    try:
        n = int(lines[0])
    except (IndexError, ValueError):
        raise MalformedMatrix("first line must be the integer n") from None
    if n < 1 or len(lines) < 1 + n + (n - 1):
        raise MalformedMatrix("matrix file is truncated")
    labels = lines[1:1 + n]
    d = np.zeros((n, n))
    for i in range(1, n):
        fields = lines[n + i].split()
        if len(fields) != i:
            raise MalformedMatrix(f"row {i} should have {i} entries, found {len(fields)}")
        try:
            d[i, :i] = [float(f) for f in fields]
        except ValueError as exc:
            raise MalformedMatrix(f"row {i}: {exc}") from None
    if any(line.strip() for line in lines[2 * n:]):
        raise MalformedMatrix("trailing content after the matrix")
    d = d + d.T
    return DistanceMatrix(labels, d)


def write_matrix(m: DistanceMatrix, path) -> None:
    Path(path).write_text(format_matrix(m))


def read_matrix(path) -> DistanceMatrix:
    return parse_matrix(Path(path).read_text())
