import random

import pytest

from selfcorrect.corruptor import (
    FIRE_PROB,
    GenerationStats,
    OperatorPrior,
    TableFormatError,
    apply_operator,
    estimate_corruption_rate,
    generate_pairs,
    load_tables,
    read_pairs_jsonl,
    sample_operator,
    write_pairs_jsonl,
    write_tables,
)
from selfcorrect.textcore import edit_distance
from selfcorrect.toylang import toy_corpus, toy_tables

HOM, GLYPH, RADICAL, SPLIT, SYMBOL = range(5)


@pytest.fixture
def tables():
    return toy_tables()


def test_symbol_noise_can_append_at_end(tables):
    # Inserting after the last character must be reachable: Table-style
    # example "user" -> "user#".
    seen = set()
    for seed in range(300):
        out = apply_operator(tables, SYMBOL, "user", random.Random(seed))
        assert len(out) == 5
        seen.add(out)
    assert any(out.startswith("user") for out in seen)
    assert any(out[0] in tables.symbols for out in seen)


def test_symbol_noise_always_inserts_one(tables):
    for seed in range(50):
        out = apply_operator(tables, SYMBOL, "abcabc", random.Random(seed))
        assert edit_distance(out, "abcabc") == 1


def test_split_expands_in_place(tables):
    # One composite, deterministic position: expansion replaces it.
    out = apply_operator(tables, SPLIT, "abæcd", random.Random(0))
    assert out == "abąęcd"


def test_homophone_without_table_keys_is_identity(tables):
    rng = random.Random(0)
    assert apply_operator(tables, HOM, "æœæ", rng) == "æœæ"


def test_table_operators_replace_at_most_first_firing(tables):
    for op, table in ((HOM, tables.homophone), (GLYPH, tables.near_glyph)):
        for seed in range(200):
            src = "aakkaa"
            out = apply_operator(tables, op, src, random.Random(seed))
            assert edit_distance(out, src) <= 1


def test_invalid_operator_index(tables):
    with pytest.raises(ValueError):
        apply_operator(tables, 5, "abc", random.Random(0))
    with pytest.raises(ValueError):
        apply_operator(tables, -1, "abc", random.Random(0))


def test_empty_sentence_rejected(tables):
    with pytest.raises(ValueError):
        apply_operator(tables, HOM, "", random.Random(0))


def test_firing_probability_matches_listing_rate(tables):
    # Single eligible position: P(fire) should be FIRE_PROB.
    rng = random.Random(123)
    fires = sum(
        apply_operator(tables, HOM, "aæææ", rng) != "aæææ"
        for _ in range(20000)
    )
    assert fires / 20000 == pytest.approx(FIRE_PROB, abs=0.01)


def test_sample_operator_degenerate_priors():
    rng = random.Random(0)
    first = OperatorPrior(weights=(1.0, 0.0, 0.0, 0.0, 0.0))
    last = OperatorPrior(weights=(0.0, 0.0, 0.0, 0.0, 1.0))
    assert all(sample_operator(first, rng) == 0 for _ in range(100))
    assert all(sample_operator(last, rng) == 4 for _ in range(100))


def test_sample_operator_uniform_frequencies():
    # Chi-square-style bound: each frequency within 0.20 +/- 0.01 over 1e5.
    rng = random.Random(7)
    prior = OperatorPrior()
    counts = [0] * 5
    n = 100_000
    for _ in range(n):
        counts[sample_operator(prior, rng)] += 1
    for c in counts:
        assert abs(c / n - 0.20) < 0.01


def test_prior_validation():
    with pytest.raises(ValueError):
        OperatorPrior(weights=(0.5, 0.5, 0.5, 0.0, 0.0))
    with pytest.raises(ValueError):
        OperatorPrior(weights=(1.0, 0.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        OperatorPrior(weights=(-0.2, 0.4, 0.2, 0.2, 0.4))


def test_corruption_rate_symbol_operator(tables):
    # Symbol noise always inserts exactly one character.
    sentences = ["abcdefghij" * 2] * 50
    rate = estimate_corruption_rate(tables, SYMBOL, sentences, random.Random(0))
    assert rate == pytest.approx(1.0 / 20.0)
    short = ["abcdefghij"] * 50
    assert estimate_corruption_rate(tables, SYMBOL, short, random.Random(0)) == (
        pytest.approx(0.1)
    )


def test_corruption_rate_never_firing_operator(tables):
    # No homophone keys present -> identity -> rate 0.
    rate = estimate_corruption_rate(
        tables, HOM, ["æœ" * 4] * 20, random.Random(0)
    )
    assert rate == 0.0


def test_corruption_rate_monte_carlo_confirms_symbol(tables):
    sentences = ["klmnopqrstklmnopqrst"] * 500
    rate = estimate_corruption_rate(tables, SYMBOL, sentences, random.Random(11))
    assert rate == pytest.approx(0.05, abs=1e-9)


def test_corruption_rate_rejects_empty_sample(tables):
    with pytest.raises(ValueError):
        estimate_corruption_rate(tables, HOM, [], random.Random(0))


def test_corruption_rate_permutation_invariant(tables):
    sentences = toy_corpus(n=30, seed=5)
    shuffled = list(sentences)
    random.Random(1).shuffle(shuffled)
    r1 = estimate_corruption_rate(tables, SYMBOL, sentences, random.Random(3))
    r2 = estimate_corruption_rate(tables, SYMBOL, shuffled, random.Random(3))
    assert r1 == pytest.approx(r2)


def test_generate_pairs_counts_without_filters(tables):
    stats = GenerationStats()
    pairs = list(
        generate_pairs(
            ["abcdefgh"],
            tables,
            OperatorPrior(),
            m=4,
            master_seed=1,
            apply_filters=False,
            stats=stats,
        )
    )
    assert len(pairs) == 4
    assert stats.generated == 4
    assert stats.accepted == 4
    assert all(p.y == "abcdefgh" for p in pairs)


def test_generate_pairs_filters_enforce_invariants(tables):
    corpus = toy_corpus(n=50, seed=3)
    for pair in generate_pairs(corpus, tables, OperatorPrior(), m=4, master_seed=9):
        assert pair.x
        assert edit_distance(pair.x, pair.y) <= 8
        assert 0 <= pair.operator_id < 5


def test_generate_pairs_deterministic_stream(tables):
    corpus = toy_corpus(n=40, seed=2)
    a = list(generate_pairs(corpus, tables, OperatorPrior(), m=4, master_seed=42))
    b = list(generate_pairs(corpus, tables, OperatorPrior(), m=4, master_seed=42))
    assert a == b
    c = list(generate_pairs(corpus, tables, OperatorPrior(), m=4, master_seed=43))
    assert a != c


def test_generate_pairs_degenerate_prior_tags_operator(tables):
    prior = OperatorPrior(weights=(0.0, 0.0, 0.0, 0.0, 1.0))
    for pair in generate_pairs(
        toy_corpus(n=10, seed=4), tables, prior, m=3, master_seed=5
    ):
        assert pair.operator_id == 4


def test_pairs_jsonl_round_trip(tables, tmp_path):
    pairs = list(
        generate_pairs(toy_corpus(n=10, seed=6), tables, OperatorPrior(), m=2, master_seed=8)
    )
    path = str(tmp_path / "pairs.jsonl")
    assert write_pairs_jsonl(path, pairs) == len(pairs)
    assert read_pairs_jsonl(path) == pairs


def test_tables_file_round_trip(tables, tmp_path):
    path = str(tmp_path / "tables.tsv")
    write_tables(path, tables)
    loaded = load_tables(path)
    assert loaded.homophone == tables.homophone
    assert loaded.near_glyph == tables.near_glyph
    assert loaded.radical == tables.radical
    assert loaded.split == tables.split
    assert loaded.symbols == tables.symbols


def test_tables_parse_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("hom\ta\tb\nbogus line without tabs\n", encoding="utf-8")
    with pytest.raises(TableFormatError) as err:
        load_tables(str(path))
    assert err.value.lineno == 2

    path.write_text("hom\ta\ta\nsymbol\t#\n", encoding="utf-8")
    with pytest.raises(TableFormatError):
        load_tables(str(path))
