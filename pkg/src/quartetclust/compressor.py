"""Compressed-length estimates of information content.

Every codec sits behind :func:`compressed_size`; the compressed length of a
byte string (container header included) is the working stand-in for its
Kolmogorov complexity.
"""

from __future__ import annotations

import bz2
import hashlib
import lzma
import shutil
import struct
import subprocess
import threading
import warnings
import zlib
from dataclasses import dataclass
from typing import Callable, Mapping

__all__ = [
    "CompressorError",
    "UnknownCompressor",
    "InputTooLarge",
    "BlockWindowWarning",
    "CompressorId",
    "SizeCache",
    "DEFAULT_COMPRESSOR",
    "register",
    "available",
    "resolve",
    "canonical",
    "compressed_size",
    "concat_size",
]

MAX_INPUT_BYTES = 256 * 1024 * 1024
STORE_HEADER = b"QCST"


class CompressorError(Exception):
    pass


class UnknownCompressor(CompressorError, KeyError):
    pass


class InputTooLarge(CompressorError, ValueError):
    pass


class BlockWindowWarning(UserWarning):
    """Input longer than the codec can exploit redundancy across."""


@dataclass(frozen=True)
class CompressorId:
    """Codec name plus its fixed parameters.

    ``params`` is stored as a sorted tuple of pairs so the id is hashable and
    usable as a cache key.
    """

    name: str
    params: tuple[tuple[str, int | str], ...] = ()

    def __post_init__(self):
        if not self.name:
            raise ValueError("compressor name must be non-empty")
        object.__setattr__(self, "params", tuple(sorted(dict(self.params).items())))

    @classmethod
    def parse(cls, text: str) -> "CompressorId":
        """Parse ``name`` or ``name:key=value,key=value``."""
        name, _, rest = text.partition(":")
        params = {}
        for item in filter(None, rest.split(",")):
            key, _, value = item.partition("=")
            params[key.strip()] = int(value) if value.strip().lstrip("-").isdigit() else value.strip()
        return cls(name.strip(), tuple(params.items()))

    def __str__(self):
        if not self.params:
            return self.name
        return self.name + ":" + ",".join(f"{k}={v}" for k, v in self.params)


@dataclass(frozen=True)
class _Backend:
    compress: Callable[[bytes, Mapping], bytes]
    defaults: Mapping[str, int | str]
    # bytes of input the codec can relate to each other; None means unbounded
    window: Callable[[Mapping], int | None] = lambda p: None


def _bzip2(data, p):
    return bz2.compress(data, compresslevel=int(p["level"]))


def _zlib(data, p):
    return zlib.compress(data, int(p["level"]))


def _lzma(data, p):
    return lzma.compress(data, format=lzma.FORMAT_XZ, preset=int(p["preset"]))


def _store(data, p):
    return STORE_HEADER + struct.pack(">Q", len(data)) + data


def _external(data, p):
    exe = shutil.which(str(p["program"]))
    if exe is None:
        raise UnknownCompressor(f"external program {p['program']!r} not found")
    args = [exe, *str(p["args"]).split()]
    out = subprocess.run(args, input=data, stdout=subprocess.PIPE, check=True)
    return out.stdout


_REGISTRY: dict[str, _Backend] = {}
_ALIASES = {"bzip2-class": "bzip2", "lz-class": "zlib", "gzip": "zlib"}


def register(name, compress, defaults=None, window=None):
    """Add a codec under ``name``. ``compress(data, params) -> bytes``."""
    _REGISTRY[name] = _Backend(compress, dict(defaults or {}), window or (lambda p: None))


register("bzip2", _bzip2, {"level": 9}, window=lambda p: 100_000 * int(p["level"]))
register("zlib", _zlib, {"level": 9}, window=lambda p: 32_768)
register("lzma", _lzma, {"preset": 6})
register("store", _store)
register("bzip2-exe", _external, {"program": "bzip2", "args": "-9 -c"}, window=lambda p: 900_000)
register("gzip-exe", _external, {"program": "gzip", "args": "-9 -n -c"}, window=lambda p: 32_768)

DEFAULT_COMPRESSOR = CompressorId("bzip2", (("level", 9),))


def available():
    return sorted(_REGISTRY) + sorted(_ALIASES)


def resolve(compressor):
    """Return ``(backend, params)`` for a compressor id or name."""
    if isinstance(compressor, str):
        compressor = CompressorId.parse(compressor)
    name = _ALIASES.get(compressor.name, compressor.name)
    try:
        backend = _REGISTRY[name]
    except KeyError:
        raise UnknownCompressor(f"no compressor registered as {compressor.name!r}") from None
    params = dict(backend.defaults)
    params.update(dict(compressor.params))
    return backend, params


def canonical(compressor) -> CompressorId:
    """The id with aliases resolved and every default parameter spelled out."""
    if isinstance(compressor, str):
        compressor = CompressorId.parse(compressor)
    _, params = resolve(compressor)
    return CompressorId(_ALIASES.get(compressor.name, compressor.name), tuple(params.items()))


class SizeCache:
    """Thread-safe memo of compressed sizes keyed by (codec, sha256 of input).

    Pass the same instance to many calls (or threads) to avoid recompressing
    an item once per pair.
    """

    def __init__(self):
        self._sizes: dict[tuple[str, bytes], int] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(compressor, data):
        return str(compressor), hashlib.sha256(data).digest()

    def get(self, key):
        with self._lock:
            size = self._sizes.get(key)
            if size is None:
                self.misses += 1
            else:
                self.hits += 1
            return size

    def put(self, key, size):
        with self._lock:
            self._sizes[key] = size

    def __len__(self):
        return len(self._sizes)


def compressed_size(data: bytes, compressor=DEFAULT_COMPRESSOR, cache: SizeCache | None = None,
                    max_input: int = MAX_INPUT_BYTES) -> int:
    """Length in bytes of ``data`` compressed with ``compressor``.

    Parameters
    ----------
    data : bytes
        Input bytes.
    compressor : CompressorId or str
        Registered codec; names such as ``"bzip2"`` or ``"zlib:level=6"``
        are accepted.
    cache : SizeCache, optional
        Shared size cache. Never changes the returned value.
    max_input : int
        Hard limit on input length.

    Raises
    ------
    UnknownCompressor
        If the codec is not registered.
    InputTooLarge
        If ``len(data) > max_input``.
    """
    if isinstance(compressor, str):
        compressor = CompressorId.parse(compressor)
    backend, params = resolve(compressor)
    data = bytes(data)
    if len(data) > max_input:
        raise InputTooLarge(f"{len(data)} bytes exceeds the {max_input} byte limit")
    window = backend.window(params)
    if window is not None and len(data) > window:
        warnings.warn(
            f"{len(data)} byte input exceeds the {window} byte window of {compressor}; "
            "distances involving it are less reliable",
            BlockWindowWarning,
            stacklevel=2,
        )
    if cache is not None:
        key = SizeCache.key(compressor, data)
        size = cache.get(key)
        if size is not None:
            return size
    size = len(backend.compress(data, params))
    if cache is not None:
        cache.put(key, size)
    return size


def concat_size(a: bytes, b: bytes, compressor=DEFAULT_COMPRESSOR, cache: SizeCache | None = None,
                max_input: int = MAX_INPUT_BYTES) -> int:
    """Compressed length of ``a`` followed by ``b``."""
    return compressed_size(bytes(a) + bytes(b), compressor, cache=cache, max_input=max_input)
