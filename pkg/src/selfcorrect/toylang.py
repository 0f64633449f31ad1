"""Bundled synthetic toy language for hermetic end-to-end runs.

A 30-character clean alphabet with confusion tables designed so every
corruption is invertible by a lattice action and unambiguous: corrupted
forms come from a disjoint character set (Greek for homophones, Cyrillic
capitals for near-glyphs, Cyrillic smalls for radical edits, accented
Latin pairs for split expansions), so a corrupted character never occurs
in clean text.  Tables are bidirectional where that keeps them
self-inverse, which is what lets the policy undo each operator.
"""

from __future__ import annotations

import os
import random

from .corruptor import ConfusionTables, write_tables

# Clean alphabet: 10 homophone-prone, 10 glyph-prone, 5 radical-prone,
# and 5 composite (splittable) characters.
HOM_CHARS = "abcdefghij"
GLYPH_CHARS = "klmnopqrst"
RADICAL_CHARS = "uvwxy"
COMPOSITE_CHARS = "æœßðþ"  # æ œ ß ð þ
CLEAN_ALPHABET = HOM_CHARS + GLYPH_CHARS + RADICAL_CHARS + COMPOSITE_CHARS

# Corrupted-only counterparts.
HOM_ALTS = "αβγδεζηθικ"  # α..κ
GLYPH_ALTS = "КЛМНПРФГСТ"
RADICAL_ALTS = "цчшщю"  # ц ч ш щ ю
SPLIT_EXPANSIONS = (
    "ąę",  # ą ę
    "ǫė",  # ǫ ė
    "śź",  # ś ź
    "đď",  # đ ď
    "ťħ",  # ť ħ
)
SYMBOLS = ["#", "$", "%", "&", "@"]

CORPUS_SIZE = 200
MIN_LEN = 8
MAX_LEN = 16
CORPUS_SEED = 7


def toy_tables() -> ConfusionTables:
    tables = ConfusionTables()
    for src, alt in zip(HOM_CHARS, HOM_ALTS):
        tables.homophone[src] = [alt]
        tables.homophone[alt] = [src]
    for src, alt in zip(GLYPH_CHARS, GLYPH_ALTS):
        tables.near_glyph[src] = [alt]
        tables.near_glyph[alt] = [src]
    for src, alt in zip(RADICAL_CHARS, RADICAL_ALTS):
        tables.radical[src] = alt
        tables.radical[alt] = src
    for src, expansion in zip(COMPOSITE_CHARS, SPLIT_EXPANSIONS):
        tables.split[src] = expansion
    tables.symbols = list(SYMBOLS)
    tables.validate()
    return tables


def toy_corpus(
    n: int = CORPUS_SIZE,
    seed: int = CORPUS_SEED,
    min_len: int = MIN_LEN,
    max_len: int = MAX_LEN,
) -> list[str]:
    rng = random.Random(seed)
    return [
        "".join(
            rng.choice(CLEAN_ALPHABET) for _ in range(rng.randint(min_len, max_len))
        )
        for _ in range(n)
    ]


def write_toy_files(directory: str) -> tuple[str, str]:
    """Write corpus.txt and tables.tsv into ``directory``; returns the paths."""
    os.makedirs(directory, exist_ok=True)
    corpus_path = os.path.join(directory, "corpus.txt")
    tables_path = os.path.join(directory, "tables.tsv")
    with open(corpus_path, "w", encoding="utf-8") as fh:
        for sentence in toy_corpus():
            fh.write(sentence + "\n")
    write_tables(tables_path, toy_tables())
    return corpus_path, tables_path
