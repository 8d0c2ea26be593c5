"""Exact geometry of the index-addressed Cantor set in [0, 1].

Every finite index s gets a point x(s) and a closed interval I(s) with x(s)
as left endpoint.  The recursion: I(empty) = [0, 1]; inside I(s) = [x, x + w]
the child points descend geometrically, x(s + (i,)) = x + w * 2**-(i+1), and
the child intervals reach halfway toward the next sibling point:

    I(s + (0,)) = [x + w/2,        x + 3w/4]
    I(s + (i,)) = [x + w*2^-(i+1), x + 3w*2^-(i+2)]   for i >= 1

Child intervals are pairwise disjoint, sit in the interior of I(s), and
accumulate at x(s) from the right; all coordinates are dyadic rationals.

The set C consists of the points x(s) together with the limits of strictly
increasing chains.  Within I(s) the largest element of C is x(s) + 2w/3 (the
limit of the all-zeros chain), so C never reaches the right endpoint of I(s).

A TailPiece (root, skip) is the clopen subset {x(root)} plus all of C inside
the child intervals of index >= skip.  skip = 0 is the plain basic piece
C ∩ I(root); larger skips give arbitrarily small clopen neighborhoods of
x(root), which single basic pieces cannot provide since x(root) lies in no
deeper basic interval.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .seqindex import EMPTY, SeqIndex, extends

F0 = Fraction(0)
F1 = Fraction(1)


def format_rat(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def parse_rat(text: str) -> Fraction:
    return Fraction(text.strip())


@dataclass(frozen=True)
class Interval:
    """Closed non-degenerate interval with rational endpoints."""

    lo: Fraction
    hi: Fraction

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise ValueError("interval endpoints must satisfy lo < hi")

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    def contains(self, x: Fraction) -> bool:
        return self.lo <= x <= self.hi

    def contains_interval(self, other: "Interval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def intersects(self, other: "Interval") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi

    def __str__(self) -> str:
        return f"[{format_rat(self.lo)}, {format_rat(self.hi)}]"


@lru_cache(maxsize=None)
def _cell(s: SeqIndex) -> tuple[Fraction, Fraction]:
    """(x(s), right endpoint of I(s))."""
    if s == EMPTY:
        return F0, F1
    parent, i = s[:-1], s[-1]
    x, hi = _cell(parent)
    w = hi - x
    child = x + w / (1 << (i + 1))
    if i == 0:
        child_hi = (child + hi) / 2
    else:
        prev_sibling = x + w / (1 << i)
        child_hi = (child + prev_sibling) / 2
    return child, child_hi


def point(s: SeqIndex) -> Fraction:
    """Left endpoint x(s) of the cell of s."""
    return _cell(s)[0]


def interval(s: SeqIndex) -> Interval:
    """The cell I(s)."""
    x, hi = _cell(s)
    return Interval(x, hi)


def branch_enclosure(prefix: SeqIndex) -> Interval:
    """Interval containing the limit point of every branch through `prefix`."""
    return interval(prefix)


def cantor_sup(s: SeqIndex) -> Fraction:
    """Largest element of C inside I(s): the limit of the all-zeros chain."""
    x, hi = _cell(s)
    return x + 2 * (hi - x) / 3


@dataclass(frozen=True)
class TailPiece:
    """Clopen subset of C: {x(root)} plus the child cells of index >= skip."""

    root: SeqIndex
    skip: int = 0

    def __post_init__(self) -> None:
        if self.skip < 0:
            raise ValueError("skip must be a natural")

    def contains_index(self, t: SeqIndex) -> bool:
        if t == self.root:
            return True
        return extends(self.root, t) and t[len(self.root)] >= self.skip

    def subset_of(self, other: "TailPiece") -> bool:
        if self.root == other.root:
            return self.skip >= other.skip
        if extends(other.root, self.root):
            return self.root[len(other.root)] >= other.skip
        return False

    def min_point(self) -> Fraction:
        return point(self.root)

    def max_point(self) -> Fraction:
        if self.skip == 0:
            return cantor_sup(self.root)
        return cantor_sup(self.root + (self.skip,))

    def diameter(self) -> Fraction:
        return self.max_point() - self.min_point()

    def hull(self) -> Interval:
        return Interval(self.min_point(), self.max_point())

    def __str__(self) -> str:
        from .seqindex import format_index

        return f"{format_index(self.root)}+{self.skip}"


def _agreement(s: SeqIndex, f: SeqIndex) -> int:
    d = 0
    for a, b in zip(s, f):
        if a != b:
            break
        d += 1
    return d


def _check_chain(chain: list[SeqIndex]) -> None:
    if not chain:
        raise ValueError("empty prefix chain")
    for a, b in zip(chain, chain[1:]):
        if not extends(a, b):
            raise ValueError("prefixes must form a strictly extending chain")


def converges_to_branch(seq: list[SeqIndex], branch_prefixes: list[SeqIndex]) -> bool:
    """Window test for convergence to the branch described by a prefix chain.

    With f the deepest given prefix, the agreement depths of the terms with f
    must be non-decreasing and reach len(f) at the end of the window.  This is
    the finite shadow of "agreement depth tends to infinity"; a finite window
    cannot certify more.
    """
    _check_chain(branch_prefixes)
    if not seq:
        return False
    f = branch_prefixes[-1]
    depths = [_agreement(s, f) for s in seq]
    if any(b < a for a, b in zip(depths, depths[1:])):
        return False
    return depths[-1] == len(f)


def converges_to_finite(seq: list[SeqIndex], s: SeqIndex) -> bool:
    """Window test for convergence to the point x(s) of a finite index.

    Every term must equal s or extend it, and the first entries beyond s of
    the extending terms must be strictly increasing along the window (the
    finite shadow of "the entry tends to infinity").
    """
    if not seq:
        return False
    last = -1
    for t in seq:
        if t == s:
            continue
        if not extends(s, t):
            return False
        v = t[len(s)]
        if v <= last:
            return False
        last = v
    return True
