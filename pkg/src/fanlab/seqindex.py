"""Finite sequences of naturals and their enumeration order.

A sequence s addresses one branch point of the Cantor-set construction.  The
enumeration `rank` is a bijection between finite sequences and naturals that
is strictly monotone under extension: whenever t properly extends s,
rank(s) < rank(t).  We get this by ordering sequences by the key
(weight, length, lexicographic) with weight(s) = len(s) + sum(s); extending a
sequence always increases its weight.

Ranks are computed combinatorially (stars and bars), never by enumerating
prefixes of the order, so indices with ranks in the millions stay cheap.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from itertools import product
from math import comb

SeqIndex = tuple[int, ...]

EMPTY: SeqIndex = ()

_INDEX_RE = re.compile(r"\[\s*(?:\d+\s*(?:,\s*\d+\s*)*)?\]")


def weight(s: SeqIndex) -> int:
    return len(s) + sum(s)


def extends(s1: SeqIndex, s2: SeqIndex) -> bool:
    """True iff s2 properly extends s1 (strict prefix relation)."""
    return len(s2) > len(s1) and s2[: len(s1)] == s1


def _compositions(total: int, parts: int) -> int:
    """Number of ways to write `total` as an ordered sum of `parts` naturals."""
    if total < 0:
        return 0
    if parts == 0:
        return 1 if total == 0 else 0
    return comb(total + parts - 1, parts - 1)


def rank(s: SeqIndex) -> int:
    """Position of s in the (weight, length, lex) enumeration, starting at 0."""
    w = weight(s)
    if w == 0:
        return 0
    r = 1 << (w - 1)  # count of all sequences of smaller weight
    length = len(s)
    for l in range(1, length):
        r += _compositions(w - l, l)
    rem = w - length
    for i, e in enumerate(s):
        parts = length - i - 1
        for v in range(e):
            r += _compositions(rem - v, parts)
        rem -= e
    return r


def unrank(n: int) -> SeqIndex:
    """Inverse of rank."""
    if n < 0:
        raise ValueError("rank values are naturals")
    if n == 0:
        return EMPTY
    w = n.bit_length()  # 2^(w-1) <= n < 2^w
    r = n - (1 << (w - 1))
    length = 1
    while True:
        c = _compositions(w - length, length)
        if r < c:
            break
        r -= c
        length += 1
    entries = []
    rem = w - length
    for i in range(length):
        parts = length - i - 1
        v = 0
        while True:
            c = _compositions(rem - v, parts)
            if r < c:
                break
            r -= c
            v += 1
        entries.append(v)
        rem -= v
    return tuple(entries)


def rank_lower_bound(s: SeqIndex) -> int:
    """Cheap lower bound on rank(s): every lighter sequence ranks earlier."""
    w = weight(s)
    return 0 if w == 0 else 1 << (w - 1)


@dataclass(frozen=True)
class WindowBounds:
    """Finite approximation window: indices with len(s) <= depth, entries < breadth."""

    depth: int
    breadth: int

    def __post_init__(self) -> None:
        if self.depth < 0 or self.breadth < 1:
            raise ValueError("window needs depth >= 0 and breadth >= 1")

    def contains(self, s: SeqIndex) -> bool:
        return len(s) <= self.depth and all(e < self.breadth for e in s)

    def size(self) -> int:
        return sum(self.breadth**d for d in range(self.depth + 1))


def window_indices(bounds: WindowBounds) -> list[SeqIndex]:
    """All window indices in rank order. Deterministic."""
    out: list[SeqIndex] = []
    for d in range(bounds.depth + 1):
        out.extend(product(range(bounds.breadth), repeat=d))
    out.sort(key=rank)
    return out


def format_index(s: SeqIndex) -> str:
    return "[" + ",".join(str(e) for e in s) + "]"


def parse_index(text: str) -> SeqIndex:
    text = text.strip()
    if not _INDEX_RE.fullmatch(text):
        raise ValueError(f"not an index literal: {text!r}")
    inner = text[1:-1].strip()
    if not inner:
        return EMPTY
    return tuple(int(part) for part in inner.split(","))
