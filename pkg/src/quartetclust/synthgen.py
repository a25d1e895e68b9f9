"""Synthetic corpora with known ground truth.

* tagged files: random 80 KB files with 1 KB "tags" stamped in;
* planted tree metric: distances ``(L(a, b) + 1) / 18`` read off a random tree;
* file types: four kinds of synthetic data, four files each.
"""

from __future__ import annotations

import hashlib
import random
import string
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .distance import CorpusItem, DistanceMatrix
from .midi import encode_midi, preprocess
from .tree import TernaryTree, TooFewLabels, random_tree

__all__ = [
    "TAG_NAMES",
    "TAG_SIZE",
    "FILE_SIZE",
    "PLACEMENTS",
    "DEFAULT_TAG_PATTERN",
    "FILE_TYPES",
    "UnknownTag",
    "TagLibrary",
    "TaggedFileSpec",
    "PlantedTreeInstance",
    "random_bytes",
    "make_tag_library",
    "tag_placements",
    "make_tag_corpus",
    "default_tag_specs",
    "planted_matrix",
    "make_planted_instance",
    "make_filetype_corpus",
    "filetype_of",
]

TAG_NAMES = string.ascii_lowercase[:22]
TAG_SIZE = 1024
FILE_SIZE = 80 * 1024
PLACEMENTS = 10

# A reconstruction, not the original figure's exact list: single tags plus
# overlapping families of growing tag sets.
DEFAULT_TAG_PATTERN = (
    "a", "ab", "abc", "abcd",
    "e", "ef", "efg", "efgh",
    "i", "ij", "ijk", "ijkl",
    "m", "mn", "mno", "mnop",
)


class UnknownTag(KeyError):
    pass


def random_bytes(seed, purpose: str, size: int) -> bytes:
    """``size`` uniform bytes from SHAKE-256 keyed by ``(seed, purpose)``."""
    return hashlib.shake_256(f"{seed}/{purpose}".encode()).digest(size)


@dataclass(frozen=True)
class TagLibrary:
    seed: int
    tags: dict[str, bytes] = field(repr=False)

    def __getitem__(self, name):
        try:
            return self.tags[name]
        except KeyError:
            raise UnknownTag(f"no tag named {name!r}") from None


def make_tag_library(seed: int = 0, names: str = TAG_NAMES, size: int = TAG_SIZE) -> TagLibrary:
    return TagLibrary(seed, {name: random_bytes(seed, f"tag/{name}", size) for name in names})


@dataclass(frozen=True)
class TaggedFileSpec:
    tags: str
    size: int = FILE_SIZE
    placements: int = PLACEMENTS
    label: str | None = None

    def __post_init__(self):
        if not 1 <= len(self.tags) <= 4 or len(set(self.tags)) != len(self.tags):
            raise ValueError(f"a file takes 1 to 4 distinct tags, got {self.tags!r}")

    @property
    def name(self):
        return self.label or self.tags


def default_tag_specs() -> list[TaggedFileSpec]:
    return [TaggedFileSpec(tags) for tags in DEFAULT_TAG_PATTERN]


def tag_placements(spec: TaggedFileSpec, seed, tag_size: int = TAG_SIZE) -> list[tuple[str, int]]:
    """``(tag, offset)`` writes in the order applied: all of the first tag, then the next."""
    rng = random.Random(f"{seed}/place/{spec.name}")
    return [(tag, rng.randint(0, spec.size - tag_size)) for tag in spec.tags for _ in range(spec.placements)]


def make_tag_corpus(specs: Sequence[TaggedFileSpec] | None = None, library: TagLibrary | None = None,
                    seed: int = 0) -> list[CorpusItem]:
    """Random files with tags stamped over them, one per spec.

    Each tag is written ``spec.placements`` times at uniform offsets where
    it fits entirely; later writes may cover earlier ones.
    """
    specs = default_tag_specs() if specs is None else list(specs)
    library = make_tag_library(seed) if library is None else library
    items = []
    for spec in specs:
        tag_bytes = {t: library[t] for t in spec.tags}
        buf = bytearray(random_bytes(seed, f"file/{spec.name}", spec.size))
        for tag, off in tag_placements(spec, seed, len(next(iter(tag_bytes.values())))):
            block = tag_bytes[tag]
            buf[off:off + len(block)] = block
        items.append(CorpusItem(spec.name, bytes(buf)))
    return items


@dataclass(frozen=True)
class PlantedTreeInstance:
    tree: TernaryTree
    matrix: DistanceMatrix


def planted_matrix(tree: TernaryTree, divisor: float | None = None) -> DistanceMatrix:
    """``d(a, b) = (L(a, b) + 1) / divisor`` off the diagonal; divisor defaults to n."""
    divisor = tree.n if divisor is None else divisor
    d = (tree.leaf_distances() + 1) / float(divisor)
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(tree.labels, d)


def make_planted_instance(n: int = 18, seed: int = 0) -> PlantedTreeInstance:
    if n < 4:
        raise TooFewLabels(f"need at least 4 leaves, got {n}")
    width = len(str(n - 1))
    labels = [f"s{i:0{width}d}" for i in range(n)]
    tree = random_tree(labels, random.Random(f"{seed}/planted"))
    return PlantedTreeInstance(tree, planted_matrix(tree))


# -- file-type corpus -----------------------------------------------------------

FILE_TYPES = ("dna", "text", "music", "binary")

_WORDS = """
the of and to a in that it was he for his with as had you not be her on at by
which have or from this him but all she they were my are me one their so an
said them we who would been will no when there if more out up into do any your
what has man could other than our some very time upon about may its only now
like little then can should made did us such great before must two these see
know over much down after first mr good men own never most old shall day where
those came come himself way work life without go make well through being long
say how am too even under while last again house place same
hand eyes thought night still left nothing head face great found saw took young
ship light air sea morning voice letter door window road town friend country
""".split()


def _dna(seed, k, size=12_000):
    rng = random.Random(f"{seed}/dna/ancestor")
    ancestor = [rng.choice("ACGT") for _ in range(size)]
    rng = random.Random(f"{seed}/dna/{k}")
    seq = list(ancestor)
    for i in range(size):
        if rng.random() < 0.06:
            seq[i] = rng.choice("ACGT")
    return "".join(seq).encode()


def _text(seed, k, size=10_000):
    rng = random.Random(f"{seed}/text/{k}")
    weights = [1.0 / (r + 1) for r in range(len(_WORDS))]
    out = []
    length = 0
    while length < size:
        words = rng.choices(_WORDS, weights, k=rng.randint(6, 18))
        sentence = " ".join(words).capitalize() + rng.choice([".", ".", ".", ",", ";", "?"]) + " "
        if rng.random() < 0.08:
            sentence += "\n\n"
        out.append(sentence)
        length += len(sentence)
    return "".join(out)[:size].encode()


def _music(seed, k, bars=128):
    rng = random.Random(f"{seed}/music/{k}")
    scale = [0, 2, 4, 5, 7, 9, 11]
    key = 60 + rng.randint(-5, 5)
    melody, bass = [], []
    degree = 0
    tick = 0
    motif = [rng.choice([240, 240, 480, 120]) for _ in range(4)]
    for bar in range(bars):
        for dur in motif:
            degree = max(-7, min(10, degree + rng.choice([-2, -1, -1, 0, 1, 1, 2])))
            pitch = key + 12 * (degree // 7) + scale[degree % 7]
            vel = 90 + rng.randint(-8, 8)
            melody += [(tick, bytes([0x90, pitch, vel])), (tick + dur - 10, bytes([0x80, pitch, 0]))]
            tick += dur
        root = key - 24 + scale[rng.choice([0, 3, 4, 5])]
        start = tick - sum(motif)
        bass += [(start, bytes([0x91, root, 60])), (tick - 10, bytes([0x81, root, 0]))]
    return preprocess(encode_midi([melody, bass], division=480))


_OPCODES = [
    b"\x55", b"\x48\x89\xe5", b"\x48\x83\xec", b"\xe8", b"\x48\x8b\x45", b"\x89\x45", b"\x8b\x45",
    b"\xc9", b"\xc3", b"\x0f\x1f\x44\x00\x00", b"\x48\x8d\x3d", b"\x31\xc0", b"\x74", b"\x75",
    b"\xeb", b"\x48\x85\xc0", b"\x41\x54", b"\x41\x5c", b"\x5d", b"\x90",
]
_SYMBOLS = [
    b"main", b"malloc", b"free", b"memcpy", b"strlen", b"printf", b"fopen", b"fclose", b"read",
    b"write", b"exit", b"__libc_start_main", b"getopt_long", b"strcmp", b"error", b"stat",
]


def _binary(seed, k, size=12_000):
    rng = random.Random(f"{seed}/binary/{k}")
    out = bytearray(b"\x7fELF\x02\x01\x01\x00" + bytes(8) + b"\x02\x00\x3e\x00\x01\x00\x00\x00")
    out += bytes(40)
    while len(out) < size * 3 // 4:
        op = rng.choice(_OPCODES)
        out += op
        if op in (b"\xe8", b"\x48\x8d\x3d"):
            out += rng.randrange(0x400000, 0x404000).to_bytes(4, "little")
        elif op in (b"\x48\x83\xec", b"\x48\x8b\x45", b"\x89\x45", b"\x8b\x45", b"\x74", b"\x75", b"\xeb"):
            out.append(rng.choice([0x08, 0x10, 0x18, 0x20, 0xf8, 0xf0, 0xe8]))
    while len(out) < size:
        out += rng.choice(_SYMBOLS) + b"\x00"
        out += bytes(rng.choice([0, 0, 4, 8]))
    return bytes(out[:size])


_GENERATORS = {"dna": _dna, "text": _text, "music": _music, "binary": _binary}


def filetype_of(label: str) -> str:
    return label.rstrip(string.digits)


def make_filetype_corpus(seed: int = 0, per_type: int = 4) -> list[CorpusItem]:
    """``per_type`` files of each kind in :data:`FILE_TYPES`, labelled ``dna1``, ``text3`` ..."""
    return [
        CorpusItem(f"{kind}{k + 1}", _GENERATORS[kind](seed, k))
        for kind in FILE_TYPES
        for k in range(per_type)
    ]
