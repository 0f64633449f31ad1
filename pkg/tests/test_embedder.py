import numpy as np
import pytest

from selfcorrect.embedder import (
    BadMagicError,
    CachedEncoder,
    DimMismatchError,
    EmbeddingCache,
    NgramEncoder,
    TruncatedCacheError,
    cache_read,
    cache_write,
    cosine,
    sentence_hash,
)
from selfcorrect.hashing import fnv1a64


@pytest.fixture
def encoder():
    return NgramEncoder(dim=256)


def ngram_buckets(s, dim=256):
    grams = set()
    for n in (1, 2, 3):
        for i in range(len(s) - n + 1):
            grams.add(s[i : i + n])
    return {fnv1a64(g) % dim for g in grams}


def test_empty_sentence_is_zero_vector(encoder):
    assert not encoder.encode("").any()


def test_encode_deterministic(encoder):
    a = encoder.encode("ababcc")
    b = encoder.encode("ababcc")
    assert np.array_equal(a, b)


def test_unit_norm(encoder):
    assert np.linalg.norm(encoder.encode("abab")) == pytest.approx(1.0)
    assert cosine(encoder.encode("abab"), encoder.encode("abab")) == pytest.approx(1.0)


def test_disjoint_ngrams_give_zero_cosine(encoder):
    # Chosen so the hashed bucket sets do not collide; verified explicitly
    # because the hashing trick only guarantees cosine 0 modulo collisions.
    a, b = "aaa", "bbb"
    assert not (ngram_buckets(a) & ngram_buckets(b))
    assert cosine(encoder.encode(a), encoder.encode(b)) == 0.0


def test_cosine_identity_and_orthogonality():
    e1 = np.array([1.0, 0.0, 0.0])
    e2 = np.array([0.0, 1.0, 0.0])
    assert cosine(e1, e1) == pytest.approx(1.0)
    assert cosine(e1, e2) == pytest.approx(0.0)


def test_cosine_closed_form():
    assert cosine(np.array([1.0, 1.0]), np.array([1.0, 0.0])) == pytest.approx(
        1.0 / np.sqrt(2.0), abs=1e-6
    )


def test_cosine_zero_norm_is_zero():
    assert cosine(np.zeros(4), np.ones(4)) == 0.0
    assert cosine(np.zeros(4), np.zeros(4)) == 0.0


def test_cosine_dim_mismatch():
    with pytest.raises(ValueError):
        cosine(np.ones(3), np.ones(4))


def test_cosine_symmetry_and_scale_invariance(encoder):
    rng = np.random.default_rng(0)
    for _ in range(50):
        u = rng.normal(size=8)
        v = rng.normal(size=8)
        c = rng.uniform(0.1, 10.0)
        assert cosine(u, v) == pytest.approx(cosine(v, u))
        assert cosine(c * u, v) == pytest.approx(cosine(u, v))


def test_sentence_hash_normalizes_whitespace():
    assert sentence_hash("a b c") == sentence_hash("abc")
    assert sentence_hash("abc") != sentence_hash("abd")


def test_cache_round_trip(tmp_path, encoder):
    cache = EmbeddingCache(dim=256)
    sentences = ["abc", "defg", "æœ"]
    for s in sentences:
        cache.add(s, encoder.encode(s))
    path = str(tmp_path / "cache.bin")
    cache_write(path, cache)
    loaded = cache_read(path)
    assert loaded.dim == 256
    assert set(loaded.entries) == set(cache.entries)
    for key, vec in cache.entries.items():
        # Lossless at 32-bit precision.
        assert np.array_equal(
            loaded.entries[key], vec.astype(np.float32).astype(np.float64)
        )


def test_cache_empty_round_trip(tmp_path):
    path = str(tmp_path / "empty.bin")
    cache_write(path, EmbeddingCache(dim=16))
    loaded = cache_read(path)
    assert loaded.dim == 16
    assert len(loaded) == 0


def test_cache_bad_magic(tmp_path):
    path = str(tmp_path / "zero.bin")
    open(path, "wb").close()
    with pytest.raises(BadMagicError):
        cache_read(path)
    path2 = str(tmp_path / "junk.bin")
    with open(path2, "wb") as fh:
        fh.write(b"NOPE" + b"\0" * 32)
    with pytest.raises(BadMagicError):
        cache_read(path2)


def test_cache_truncation(tmp_path, encoder):
    cache = EmbeddingCache(dim=8)
    cache.add("abc", np.arange(8, dtype=np.float64))
    path = str(tmp_path / "trunc.bin")
    cache_write(path, cache)
    raw = open(path, "rb").read()
    with open(path, "wb") as fh:
        fh.write(raw[:-5])
    with pytest.raises(TruncatedCacheError):
        cache_read(path)


def test_cache_dim_mismatch(tmp_path):
    path = str(tmp_path / "dim.bin")
    cache_write(path, EmbeddingCache(dim=8))
    with pytest.raises(DimMismatchError):
        cache_read(path, expect_dim=16)
    with pytest.raises(DimMismatchError):
        EmbeddingCache(dim=8).add("abc", np.ones(9))


def test_cached_encoder_prefers_cache_entries(encoder):
    cache = EmbeddingCache(dim=256)
    injected = np.zeros(256)
    injected[0] = 1.0
    cache.add("abc", injected)
    wrapped = CachedEncoder(cache, encoder)
    assert np.array_equal(wrapped.encode("abc"), injected)
    assert np.array_equal(wrapped.encode("xyz"), encoder.encode("xyz"))
