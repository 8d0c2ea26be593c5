"""The distinguishing family of finite marker sets.

The canonical family member of index n is the set of n + 2 equally spaced
rationals {(i+1)/(n+3) : i = 0..n+1} in (0, 1).  Members have pairwise
distinct cardinalities, and for finite subsets of an interval an
order-preserving self-homeomorphism of [0, 1] matching one onto another
exists exactly when the cardinalities agree, so the family is pairwise
non-order-isomorphic by construction.

A MarkerSet is a strictly increasing finite set of rationals.  Fan
construction places affine images of family members into target intervals
whose width is min(phi, 2**-rank(s)); at deep indices that width has a
power-of-two part with millions of bits.  Elements are therefore represented
lazily as

    element(i) = off + (lin + base(i) * span) * 2**exp

with moderate off/lin/span and the huge power kept as the integer exp.  Small
sets (the only ones that are serialized or iterated) are materialized into
plain tuples at construction time.
"""
from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction

from .dyadic import F0, F1, dyad_cmp, pow2
from .report import CheckLine, Report

# Materialization thresholds: sets at most this large, with exponents at most
# this many bits, are stored as plain tuples.
_CAP_COUNT = 4096
_CAP_EXP = 8192


@dataclass(frozen=True)
class MarkerSet:
    """Strictly increasing finite set of rationals, possibly lazily scaled."""

    count: int
    elems: tuple[Fraction, ...] | None = None
    base_n: int | None = None
    base_elems: tuple[Fraction, ...] | None = None
    off: Fraction = F0
    lin: Fraction = F0
    span: Fraction = F1
    exp: int = 0

    # -- construction ------------------------------------------------------

    @staticmethod
    def from_elems(elems) -> "MarkerSet":
        tup = tuple(elems)
        if any(a >= b for a, b in zip(tup, tup[1:])):
            raise ValueError("marker sets must be strictly increasing")
        return MarkerSet(count=len(tup), elems=tup)

    @staticmethod
    def empty() -> "MarkerSet":
        return MarkerSet(count=0, elems=())

    @staticmethod
    def scaled(base: "MarkerSet", off: Fraction, lin: Fraction, span: Fraction, exp: int) -> "MarkerSet":
        """Affine image off + (lin + b * span) * 2**exp of a unit base set."""
        if span <= 0:
            raise ValueError("span must be positive")
        if not base.is_unit_base():
            raise ValueError("scaled() expects an unscaled base set")
        ms = MarkerSet(
            count=base.count,
            base_n=base.base_n,
            base_elems=base.elems,
            off=off,
            lin=lin,
            span=span,
            exp=exp,
        )
        if ms.count <= _CAP_COUNT and abs(exp) <= _CAP_EXP:
            return MarkerSet.from_elems(ms.element(i) for i in range(ms.count))
        return ms

    def is_unit_base(self) -> bool:
        return (self.elems is not None or self.base_n is not None) and (
            self.off == 0 and self.lin == 0 and self.span == 1 and self.exp == 0
        )

    # -- element access ----------------------------------------------------

    def _base(self, i: int) -> Fraction:
        if self.base_n is not None:
            return Fraction(i + 1, self.base_n + 3)
        assert self.base_elems is not None
        return self.base_elems[i]

    def element(self, i: int) -> Fraction:
        if not 0 <= i < self.count:
            raise IndexError(i)
        if self.elems is not None:
            return self.elems[i]
        return self.off + (self.lin + self._base(i) * self.span) * pow2(self.exp)

    def __len__(self) -> int:
        return self.count

    def __iter__(self):
        return (self.element(i) for i in range(self.count))

    @property
    def min_el(self) -> Fraction:
        return self.element(0)

    @property
    def max_el(self) -> Fraction:
        return self.element(self.count - 1)

    # -- exact comparisons without materialization --------------------------

    def _cmp_el(self, i: int, v: Fraction) -> int:
        """Sign of element(i) - v, cheap even for huge exponents."""
        if self.elems is not None:
            e = self.elems[i]
            return (e > v) - (e < v)
        return dyad_cmp(self.lin + self._base(i) * self.span, self.exp, v - self.off)

    def cmp_min(self, v: Fraction) -> int:
        return self._cmp_el(0, v)

    def cmp_max(self, v: Fraction) -> int:
        return self._cmp_el(self.count - 1, v)

    def above(self, floor: Fraction, closed: bool = False) -> list[Fraction]:
        """Elements above `floor` (strictly, or weakly when `closed`)."""
        if self.count == 0:
            return []
        elems = self.elems
        if elems is None:
            if self.count > 100_000:
                raise ValueError("refusing to materialize a huge marker set")
            elems = tuple(self)
        if closed:
            return [e for e in elems if e >= floor]
        return [e for e in elems if e > floor]

    def scaled_mantissa(self, i: int) -> Fraction:
        """lin + base(i) * span for lazily scaled sets: element(i) = off + m * 2**exp."""
        if self.elems is not None:
            raise ValueError("materialized sets carry no mantissa")
        return self.lin + self._base(i) * self.span

    def contains(self, v: Fraction) -> bool:
        if self.count == 0:
            return False
        if self.elems is not None:
            i = bisect_right(self.elems, v)
            return i > 0 and self.elems[i - 1] == v
        if abs(self.exp) > 4 * _CAP_EXP:
            # solve for the base value; guarded because it materializes 2**-exp
            raise ValueError("containment test on a set with an extreme exponent")
        b = ((v - self.off) * pow2(-self.exp) - self.lin) / self.span
        if self.base_n is not None:
            num = b * (self.base_n + 3)
            if num.denominator != 1:
                return False
            return 1 <= num <= self.base_n + 2
        assert self.base_elems is not None
        i = bisect_right(self.base_elems, b)
        return i > 0 and self.base_elems[i - 1] == b

    def __str__(self) -> str:
        if self.elems is not None:
            from .cantor import format_rat

            return "[" + ", ".join(format_rat(e) for e in self.elems) + "]"
        return f"<marker set of {self.count} elements, exp={self.exp}>"


def canonical_set(n: int) -> MarkerSet:
    """Family member n: the n + 2 equally spaced rationals (i+1)/(n+3)."""
    if n < 0:
        raise ValueError("family index must be a natural")
    if n + 2 <= _CAP_COUNT:
        return MarkerSet.from_elems(Fraction(i + 1, n + 3) for i in range(n + 2))
    return MarkerSet(count=n + 2, base_n=n)


def order_isomorphic(a: MarkerSet, b: MarkerSet) -> bool:
    """Order isomorphism of finite subsets of an interval: equal cardinality.

    A strictly increasing piecewise-linear self-map of [0, 1] matching the
    sets pointwise exists exactly when the counts agree.
    """
    return a.count == b.count


def embed(ms: MarkerSet, lo: Fraction, hi: Fraction) -> MarkerSet:
    """Affine image of ms inside the open interval (lo, hi).

    Requires the source inside (0, 1); the image is order-isomorphic to ms.
    """
    if lo >= hi:
        raise ValueError("embedding target must satisfy lo < hi")
    if ms.count == 0:
        return ms
    if ms.elems is None:
        raise ValueError("embed() needs a materialized marker set")
    if ms.min_el <= 0 or ms.max_el >= 1:
        raise ValueError("embed() expects a set inside (0, 1)")
    w = hi - lo
    return MarkerSet.from_elems(lo + w * e for e in ms.elems)


class FamilyRangeError(LookupError):
    """An explicit family has no member at the requested index."""


@dataclass(frozen=True)
class Family:
    """The distinguishing family: canonical, or an explicit finite prefix."""

    members: tuple[MarkerSet, ...] | None = None

    @staticmethod
    def canonical() -> "Family":
        return Family(members=None)

    @staticmethod
    def explicit(sets) -> "Family":
        return Family(members=tuple(sets))

    @property
    def is_canonical(self) -> bool:
        return self.members is None

    def get(self, n: int) -> MarkerSet:
        if self.members is None:
            return canonical_set(n)
        if n >= len(self.members):
            raise FamilyRangeError(f"family has {len(self.members)} members, index {n} requested")
        return self.members[n]

    def has_empty_member(self) -> bool:
        if self.members is None:
            return False
        return any(m.count == 0 for m in self.members)

    def __str__(self) -> str:
        if self.members is None:
            return "canonical"
        return f"explicit({len(self.members)})"


def verify_family(family: Family, upto: int) -> Report:
    """Check pairwise non-order-isomorphism of the first `upto` members."""
    lines: list[CheckLine] = []
    if family.is_canonical:
        lines.append(
            CheckLine(
                "family-distinct",
                True,
                f"canonical members 0..{upto - 1} have cardinalities n + 2, pairwise distinct",
            )
        )
        return Report(lines)
    members = family.members or ()
    n = min(upto, len(members))
    if upto > len(members):
        lines.append(CheckLine("family-length", False, f"only {len(members)} members, {upto} requested"))
    seen: dict[int, int] = {}
    ok = True
    for i in range(n):
        c = members[i].count
        if c in seen:
            lines.append(
                CheckLine(
                    "family-distinct",
                    False,
                    f"members {seen[c]} and {i} are order isomorphic (both have {c} elements)",
                )
            )
            ok = False
            break
        seen[c] = i
    if ok and upto <= len(members):
        lines.append(CheckLine("family-distinct", True, f"{n} members pairwise non-order-isomorphic"))
    return Report(lines)
