"""Stable 64-bit hashing and seed derivation.

Everything that must be reproducible across processes goes through these
helpers instead of Python's salted ``hash()``:

* ``fnv1a64`` -- FNV-1a over UTF-8 bytes; used for feature buckets,
  n-gram buckets, and sentence hashes in the embedding cache.
* ``splitmix64`` / ``mix_seed`` -- the documented per-record seed mix:
  ``mix_seed(master, i, j)`` folds each index into a splitmix64 chain,
  giving independent 64-bit streams per (record, copy) pair.
"""

MASK64 = 0xFFFFFFFFFFFFFFFF

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(text: str) -> int:
    """FNV-1a 64-bit hash of the UTF-8 encoding of ``text``."""
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & MASK64
    return h


def splitmix64(x: int) -> int:
    """One splitmix64 output step for the 64-bit state ``x``."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def mix_seed(master_seed: int, *indices: int) -> int:
    """Derive a 64-bit stream seed from a master seed and integer indices.

    The chain is ``h = splitmix64(master); h = splitmix64(h ^ splitmix64(i))``
    for each index ``i`` in order.  Distinct index tuples give independent
    streams; the same tuple always gives the same seed.
    """
    h = splitmix64(master_seed & MASK64)
    for i in indices:
        h = splitmix64(h ^ splitmix64(i & MASK64))
    return h
