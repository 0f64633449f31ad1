"""Sentence primitives shared by every other module.

A sentence is a plain ``str`` treated as a sequence of Unicode scalar
values; lengths count code points, not bytes and not grapheme clusters.
"""

import re

_WHITESPACE = re.compile(r"\s+")


def normalize(s: str) -> str:
    """Remove all Unicode whitespace, preserving every other character.

    Idempotent: ``normalize(normalize(s)) == normalize(s)``.
    """
    return _WHITESPACE.sub("", s)


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance with unit insert/delete/substitute costs.

    Symmetric, satisfies the triangle inequality, and is zero iff the
    inputs are equal.  Runs in O(len(a) * len(b)) time and O(min) space.
    """
    if len(a) > len(b):
        a, b = b, a
    if not a:
        return len(b)
    prev = list(range(len(a) + 1))
    for i, cb in enumerate(b, start=1):
        cur = [i] + [0] * len(a)
        for j, ca in enumerate(a, start=1):
            cost = 0 if ca == cb else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev = cur
    return prev[len(a)]
