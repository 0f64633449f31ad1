"""Sentence embeddings: hashed n-gram encoder, cosine, and a binary cache.

The built-in encoder is a deterministic stand-in for a frozen neural
encoder: character n-grams (n = 1, 2, 3) are counted into ``dim`` buckets
via FNV-1a and the count vector is L2-normalized.  Real encoders can be
used out-of-band by precomputing vectors and injecting them through the
cache; everything downstream only needs ``dim`` and ``encode``.

Cache file layout (little-endian):
    magic ``CECE`` (4 bytes) | u32 version = 1 | u32 dim | u64 count |
    count * (u64 sentence hash, dim * f32)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .hashing import fnv1a64
from .textcore import normalize

CACHE_MAGIC = b"CECE"
CACHE_VERSION = 1


class CacheError(Exception):
    """Base class for embedding-cache decode failures."""


class BadMagicError(CacheError):
    pass


class TruncatedCacheError(CacheError):
    pass


class DimMismatchError(CacheError):
    pass


def sentence_hash(s: str) -> int:
    """Stable 64-bit cache key: FNV-1a of the whitespace-normalized sentence."""
    return fnv1a64(normalize(s))


class NgramEncoder:
    """Hashed character n-gram encoder, n in {1, 2, 3}.

    Each n-gram is hashed with FNV-1a to one of ``dim`` buckets; bucket
    counts are L2-normalized.  The empty sentence maps to the zero vector.
    Distinct n-grams may collide into one bucket (hashing trick), so only
    sentences whose bucket sets are disjoint are guaranteed cosine 0.
    """

    def __init__(self, dim: int = 256):
        if dim <= 0:
            raise ValueError(f"dim must be positive, got {dim}")
        self.dim = dim

    def encode(self, s: str) -> np.ndarray:
        v = np.zeros(self.dim, dtype=np.float64)
        n = len(s)
        for order in (1, 2, 3):
            for i in range(n - order + 1):
                v[fnv1a64(s[i : i + order]) % self.dim] += 1.0
        norm = np.linalg.norm(v)
        if norm > 0.0:
            v /= norm
        return v


class CachedEncoder:
    """Encoder wrapper that consults an :class:`EmbeddingCache` first.

    Lookups key on ``sentence_hash``; misses fall through to the wrapped
    encoder (and are not written back -- the cache stays immutable).
    """

    def __init__(self, cache: "EmbeddingCache", fallback: NgramEncoder):
        if cache.dim != fallback.dim:
            raise DimMismatchError(
                f"cache dim {cache.dim} != encoder dim {fallback.dim}"
            )
        self.dim = cache.dim
        self._cache = cache
        self._fallback = fallback

    def encode(self, s: str) -> np.ndarray:
        hit = self._cache.entries.get(sentence_hash(s))
        if hit is not None:
            return hit
        return self._fallback.encode(s)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; 0.0 when either vector has zero norm."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    # Rounding can push the quotient past +/-1; keep it in range.
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


@dataclass
class EmbeddingCache:
    """In-memory map from 64-bit sentence hash to embedding vector."""

    dim: int
    entries: dict[int, np.ndarray] = field(default_factory=dict)

    def add(self, sentence: str, vector: np.ndarray) -> None:
        vector = np.asarray(vector, dtype=np.float32)
        if vector.shape != (self.dim,):
            raise DimMismatchError(
                f"vector shape {vector.shape} incompatible with dim {self.dim}"
            )
        self.entries[sentence_hash(sentence)] = vector.astype(np.float64)

    def __len__(self) -> int:
        return len(self.entries)


def cache_write(path: str, cache: EmbeddingCache) -> None:
    """Serialize the cache; vectors are quantized to 32-bit floats."""
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<IIQ", CACHE_VERSION, cache.dim, len(cache.entries)))
        for key in sorted(cache.entries):
            fh.write(struct.pack("<Q", key))
            fh.write(np.asarray(cache.entries[key], dtype="<f4").tobytes())


def cache_read(path: str, expect_dim: int | None = None) -> EmbeddingCache:
    """Load a cache file, validating magic, version, length, and dim."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[:4] != CACHE_MAGIC:
        raise BadMagicError(f"{path}: bad magic")
    header_end = 4 + struct.calcsize("<IIQ")
    if len(raw) < header_end:
        raise TruncatedCacheError(f"{path}: truncated header")
    version, dim, count = struct.unpack("<IIQ", raw[4:header_end])
    if version != CACHE_VERSION:
        raise CacheError(f"{path}: unsupported version {version}")
    if expect_dim is not None and dim != expect_dim:
        raise DimMismatchError(f"{path}: dim {dim}, expected {expect_dim}")
    record = 8 + 4 * dim
    if len(raw) != header_end + count * record:
        raise TruncatedCacheError(
            f"{path}: expected {count} records of {record} bytes, "
            f"got {len(raw) - header_end} payload bytes"
        )
    cache = EmbeddingCache(dim=dim)
    offset = header_end
    for _ in range(count):
        (key,) = struct.unpack_from("<Q", raw, offset)
        offset += 8
        vec = np.frombuffer(raw, dtype="<f4", count=dim, offset=offset)
        offset += 4 * dim
        cache.entries[key] = vec.astype(np.float64)
    return cache
