"""Stochastic corruption operators and pseudo-pair generation.

Five operator families turn a clean sentence into a plausibly-errorful
one: homophone swap, near-glyph replacement, radical edit, character
split, and random symbol noise.  Operators are indexed 0..4 in that
order.  A pseudo-labelled pair stores the corrupted sentence, the clean
reference, the operator id, and the 64-bit seed of the RNG stream that
produced it, so any single pair can be regenerated in isolation.

Table file format (UTF-8, one rule per line, TAB-separated):
    hom     <char>  <alt1>[,<alt2>,...]
    glyph   <char>  <alt1>[,<alt2>,...]
    radical <char>  <single char>
    split   <char>  <expansion of length >= 2>
    symbol  <sym1>[,<sym2>,...]
Blank lines and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from .embedder import NgramEncoder, cosine
from .hashing import mix_seed
from .textcore import edit_distance, normalize

N_OPERATORS = 5
OPERATOR_NAMES = ("hom", "glyph", "radical", "split", "symbol")

# Per-character firing probability for the table-driven operators.
FIRE_PROB = 0.1

DEFAULT_MAX_EDIT_DISTANCE = 8
DEFAULT_MIN_COSINE = 0.65


class TableFormatError(ValueError):
    """Raised on malformed confusion-table files; carries the line number."""

    def __init__(self, path: str, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


@dataclass
class ConfusionTables:
    """Character confusion tables backing the five operators."""

    homophone: dict[str, list[str]] = field(default_factory=dict)
    near_glyph: dict[str, list[str]] = field(default_factory=dict)
    radical: dict[str, str] = field(default_factory=dict)
    split: dict[str, str] = field(default_factory=dict)
    symbols: list[str] = field(default_factory=list)

    def validate(self) -> None:
        for name, table in (("hom", self.homophone), ("glyph", self.near_glyph)):
            for src, alts in table.items():
                if not alts:
                    raise ValueError(f"{name} table: empty alternatives for {src!r}")
                if src in alts:
                    raise ValueError(f"{name} table: {src!r} maps to itself")
        for src, dst in self.radical.items():
            if len(dst) != 1:
                raise ValueError(f"radical table: target for {src!r} must be 1 char")
            if src == dst:
                raise ValueError(f"radical table: {src!r} maps to itself")
        for src, expansion in self.split.items():
            if len(expansion) < 2:
                raise ValueError(f"split table: expansion for {src!r} shorter than 2")
        if not self.symbols:
            raise ValueError("symbols table must be non-empty")

    def alternatives(self, ch: str) -> list[str]:
        """Single-character replacements of ``ch`` in table order, deduped."""
        alts: list[str] = []
        for a in self.homophone.get(ch, []):
            if a not in alts:
                alts.append(a)
        for a in self.near_glyph.get(ch, []):
            if a not in alts:
                alts.append(a)
        r = self.radical.get(ch)
        if r is not None and r not in alts:
            alts.append(r)
        return alts


@dataclass(frozen=True)
class OperatorPrior:
    """Sampling weights over the five operators; must sum to 1."""

    weights: tuple[float, ...] = (0.2, 0.2, 0.2, 0.2, 0.2)

    def __post_init__(self):
        if len(self.weights) != N_OPERATORS:
            raise ValueError(f"prior needs {N_OPERATORS} weights")
        if any(w < 0 for w in self.weights):
            raise ValueError("prior weights must be non-negative")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError(f"prior weights sum to {sum(self.weights)}, not 1")


@dataclass(frozen=True)
class PseudoPair:
    x: str
    y: str
    operator_id: int
    seed: int


def _swap_first_firing(
    table_hit: dict[str, object], y: str, rng: random.Random, pick
) -> str:
    # Scan positions left to right; each table hit fires with FIRE_PROB and
    # only the first firing occurrence is replaced.
    for i, ch in enumerate(y):
        entry = table_hit.get(ch)
        if entry is None:
            continue
        if rng.random() < FIRE_PROB:
            return y[:i] + pick(entry, rng) + y[i + 1 :]
    return y


def apply_operator(tables: ConfusionTables, k: int, y: str, rng: random.Random) -> str:
    """Apply operator ``k`` to a non-empty sentence; output is normalized.

    Returns ``y`` unchanged when no rule fires (callers decide whether an
    identity pair is acceptable).
    """
    if not 0 <= k < N_OPERATORS:
        raise ValueError(f"operator index {k} out of range [0, {N_OPERATORS})")
    if not y:
        raise ValueError("cannot corrupt an empty sentence")
    if k == 0:
        out = _swap_first_firing(tables.homophone, y, rng, lambda alts, r: r.choice(alts))
    elif k == 1:
        out = _swap_first_firing(tables.near_glyph, y, rng, lambda alts, r: r.choice(alts))
    elif k == 2:
        out = _swap_first_firing(tables.radical, y, rng, lambda dst, r: dst)
    elif k == 3:
        eligible = [i for i, ch in enumerate(y) if ch in tables.split]
        if not eligible:
            out = y
        else:
            i = eligible[rng.randrange(len(eligible))]
            out = y[:i] + tables.split[y[i]] + y[i + 1 :]
    else:
        idx = rng.randrange(len(y) + 1)
        out = y[:idx] + rng.choice(tables.symbols) + y[idx:]
    return normalize(out)


def sample_operator(prior: OperatorPrior, rng: random.Random) -> int:
    """Draw an operator index with probability ``prior.weights[k]``."""
    u = rng.random()
    acc = 0.0
    for k, w in enumerate(prior.weights):
        acc += w
        if u < acc:
            return k
    return N_OPERATORS - 1


def estimate_corruption_rate(
    tables: ConfusionTables, k: int, sample: Sequence[str], rng: random.Random
) -> float:
    """Mean normalized edit distance ED(g_k(y), y) / len(y) over ``sample``."""
    if not sample:
        raise ValueError("sample must be non-empty")
    total = 0.0
    for y in sample:
        if not y:
            raise ValueError("sample sentences must be non-empty")
        total += edit_distance(apply_operator(tables, k, y, rng), y) / len(y)
    return total / len(sample)


@dataclass
class GenerationStats:
    generated: int = 0
    accepted: int = 0
    identity: int = 0
    rejected_empty: int = 0
    rejected_edit_distance: int = 0
    rejected_cosine: int = 0
    # Summed normalized edit distance and attempt count per operator, for
    # empirical corruption-rate reporting over all generated attempts.
    rate_sum: list[float] = field(default_factory=lambda: [0.0] * N_OPERATORS)
    rate_count: list[int] = field(default_factory=lambda: [0] * N_OPERATORS)

    def corruption_rates(self) -> dict[str, float]:
        return {
            OPERATOR_NAMES[k]: (self.rate_sum[k] / self.rate_count[k])
            if self.rate_count[k]
            else 0.0
            for k in range(N_OPERATORS)
        }


def generate_pairs(
    corpus: Sequence[str],
    tables: ConfusionTables,
    prior: OperatorPrior,
    m: int,
    master_seed: int,
    apply_filters: bool = True,
    encoder: NgramEncoder | None = None,
    stats: GenerationStats | None = None,
    max_edit: int = DEFAULT_MAX_EDIT_DISTANCE,
    min_cosine: float = DEFAULT_MIN_COSINE,
) -> Iterator[PseudoPair]:
    """Yield ``m`` corruption attempts per corpus sentence, in corpus order.

    Each attempt runs on its own RNG stream seeded by
    ``mix_seed(master_seed, record_index, copy_index)``, so the emitted
    stream is a pure function of the inputs.  With filters on, a pair is
    kept only if the corrupted string is non-empty, within ``max_edit``
    edit distance of the reference, and within ``min_cosine`` embedding
    cosine of it; rejected pairs are tallied in ``stats``, never raised.
    """
    if not corpus:
        raise ValueError("corpus must be non-empty")
    if m < 1:
        raise ValueError("copies per sentence must be >= 1")
    if encoder is None:
        encoder = NgramEncoder()
    if stats is None:
        stats = GenerationStats()
    for record_index, raw in enumerate(corpus):
        y = normalize(raw)
        ref_vec = None
        for copy_index in range(m):
            seed = mix_seed(master_seed, record_index, copy_index)
            rng = random.Random(seed)
            k = sample_operator(prior, rng)
            x = apply_operator(tables, k, y, rng)
            stats.generated += 1
            ed = edit_distance(x, y)
            stats.rate_sum[k] += ed / len(y)
            stats.rate_count[k] += 1
            if x == y:
                stats.identity += 1
            if apply_filters:
                if not x:
                    stats.rejected_empty += 1
                    continue
                if ed > max_edit:
                    stats.rejected_edit_distance += 1
                    continue
                if ref_vec is None:
                    ref_vec = encoder.encode(y)
                if cosine(encoder.encode(x), ref_vec) < min_cosine:
                    stats.rejected_cosine += 1
                    continue
            stats.accepted += 1
            yield PseudoPair(x=x, y=y, operator_id=k, seed=seed)


def load_tables(path: str) -> ConfusionTables:
    """Parse a confusion-table file; malformed lines raise with line numbers."""
    tables = ConfusionTables()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            kind = parts[0]
            if kind == "symbol":
                if len(parts) != 2 or not parts[1]:
                    raise TableFormatError(path, lineno, "symbol line needs targets")
                tables.symbols.extend(s for s in parts[1].split(",") if s)
                continue
            if len(parts) != 3:
                raise TableFormatError(
                    path, lineno, f"expected 3 tab-separated fields, got {len(parts)}"
                )
            _, src, target = parts
            if len(src) != 1:
                raise TableFormatError(path, lineno, "source must be a single char")
            if kind == "hom":
                tables.homophone.setdefault(src, []).extend(
                    t for t in target.split(",") if t
                )
            elif kind == "glyph":
                tables.near_glyph.setdefault(src, []).extend(
                    t for t in target.split(",") if t
                )
            elif kind == "radical":
                tables.radical[src] = target
            elif kind == "split":
                tables.split[src] = target
            else:
                raise TableFormatError(path, lineno, f"unknown kind {kind!r}")
    try:
        tables.validate()
    except ValueError as exc:
        raise TableFormatError(path, 0, str(exc)) from exc
    return tables


def write_tables(path: str, tables: ConfusionTables) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for src, alts in tables.homophone.items():
            fh.write(f"hom\t{src}\t{','.join(alts)}\n")
        for src, alts in tables.near_glyph.items():
            fh.write(f"glyph\t{src}\t{','.join(alts)}\n")
        for src, dst in tables.radical.items():
            fh.write(f"radical\t{src}\t{dst}\n")
        for src, expansion in tables.split.items():
            fh.write(f"split\t{src}\t{expansion}\n")
        if tables.symbols:
            fh.write(f"symbol\t{','.join(tables.symbols)}\n")


def write_pairs_jsonl(path: str, pairs: Iterable[PseudoPair]) -> int:
    """Write pairs as JSON-lines records {x, y, op, seed}; returns the count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(
                json.dumps(
                    {"x": p.x, "y": p.y, "op": p.operator_id, "seed": p.seed},
                    ensure_ascii=False,
                )
                + "\n"
            )
            n += 1
    return n


def read_pairs_jsonl(path: str) -> list[PseudoPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            pairs.append(
                PseudoPair(
                    x=rec["x"], y=rec["y"], operator_id=rec["op"], seed=rec["seed"]
                )
            )
    return pairs
