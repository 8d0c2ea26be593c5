"""Truncated fans as exact height tables over the index window.

A fan approximant stores, for every index s in a finite window, the height
phi(x_s) of the leg at x_s and the marker set Y(s) placed on that leg.  The
root height is 1.  Writing m = min(phi(s), 2**-rank(s)), the three variants
place Y(s) and schedule the child heights as:

    variant 1:  Y(s) inside (0, m);          children cycle through Y(s)
    variant 2:  Y(s) inside (phi(s) - m, phi(s));
                children cycle through Y(s) + {phi(s)}
    variant 3:  Y(s) inside (0, m);          children cycle through
                Y(s) + {phi(s)}

Cycles run in ascending order starting at the smallest element, so every
cycle value recurs in every tail of the child sequence.  Heights are exact
rationals; each variant's decay inequality holds by construction and is
re-verified, not assumed, by the checks in `analysis`.

Heights and marker sets for indices outside the stored window are computed
on demand from the same recursion (the window is a cache, not a boundary),
which is what lets certificates reason about the untruncated object.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction
from typing import Iterable, Union

from .cantor import converges_to_branch, converges_to_finite, format_rat, parse_rat, point
from .dyadic import F0, F1, factor_pow2, lt_pow2, pow2
from .kfamily import Family, FamilyRangeError, MarkerSet
from .report import Report
from .seqindex import (
    EMPTY,
    SeqIndex,
    WindowBounds,
    extends,
    format_index,
    parse_index,
    rank,
    window_indices,
)


class Variant(IntEnum):
    V1 = 1
    V2 = 2
    V3 = 3


class BuildError(ValueError):
    """The fan cannot be built from the given specification."""


@dataclass(frozen=True)
class FanSpec:
    variant: Variant
    family: Family
    bounds: WindowBounds

    def __post_init__(self) -> None:
        if self.bounds.depth < 1 or self.bounds.breadth < 2:
            raise BuildError("fan windows need depth >= 1 and breadth >= 2")
        if self.variant == Variant.V1 and self.family.has_empty_member():
            raise BuildError("variant 1 requires a family without empty sets")


@dataclass(frozen=True)
class FanPoint:
    x: Fraction
    y: Fraction


class FanApprox:
    """Exact truncated fan; immutable once built."""

    __slots__ = ("spec", "phi", "ys", "ranks", "legs", "_window", "_extra_phi", "_extra_ys", "_points")

    def __init__(
        self,
        spec: FanSpec,
        phi: dict[SeqIndex, Fraction],
        ys: dict[SeqIndex, MarkerSet],
        ranks: dict[SeqIndex, int] | None = None,
    ) -> None:
        self.spec = spec
        self.phi = phi
        self.ys = ys
        self.ranks = ranks if ranks is not None else {s: rank(s) for s in phi}
        self.legs = {r: s for s, r in self.ranks.items()}
        self._window: list[SeqIndex] | None = None
        self._extra_phi: dict[SeqIndex, Fraction] = {}
        self._extra_ys: dict[SeqIndex, MarkerSet] = {}
        self._points: dict[Fraction, SeqIndex] | None = None

    # -- window ------------------------------------------------------------

    @property
    def variant(self) -> Variant:
        return self.spec.variant

    @property
    def family(self) -> Family:
        return self.spec.family

    @property
    def bounds(self) -> WindowBounds:
        return self.spec.bounds

    def window(self) -> list[SeqIndex]:
        if self._window is None:
            self._window = sorted(self.phi, key=self.ranks.__getitem__)
        return self._window

    def in_window(self, s: SeqIndex) -> bool:
        return s in self.phi

    # -- on-demand recursion beyond the window ------------------------------

    def rank_of(self, s: SeqIndex) -> int:
        r = self.ranks.get(s)
        return rank(s) if r is None else r

    def phi_of(self, s: SeqIndex) -> Fraction:
        v = self.phi.get(s)
        if v is not None:
            return v
        v = self._extra_phi.get(s)
        if v is not None:
            return v
        if s == EMPTY:
            raise BuildError("fan table lacks the root height")
        v = self.cycle_value(s[:-1], s[-1])
        self._extra_phi[s] = v
        return v

    def ys_of(self, s: SeqIndex) -> MarkerSet:
        ms = self.ys.get(s)
        if ms is not None:
            return ms
        ms = self._extra_ys.get(s)
        if ms is not None:
            return ms
        ms = _place_markers(self.variant, self.family, self.rank_of(s), self.phi_of(s))
        self._extra_ys[s] = ms
        return ms

    def cycle_len(self, s: SeqIndex) -> int:
        n = self.ys_of(s).count
        return n + (1 if self.variant in (Variant.V2, Variant.V3) else 0)

    def cycle_value(self, s: SeqIndex, i: int) -> Fraction:
        """Height scheduled for the child s + (i,); ascending cyclic order."""
        ms = self.ys_of(s)
        length = self.cycle_len(s)
        if length == 0:
            raise BuildError(f"variant 1 leg {format_index(s)} has an empty marker set")
        j = i % length
        if j < ms.count:
            return ms.element(j)
        return self.phi_of(s)

    def cycle_includes_top(self, s: SeqIndex) -> bool:
        return self.variant in (Variant.V2, Variant.V3)

    # -- point lookup --------------------------------------------------------

    def index_of_point(self, x: Fraction) -> SeqIndex:
        if self._points is None:
            self._points = {point(s): s for s in self.phi}
        try:
            return self._points[x]
        except KeyError:
            raise KeyError(f"{format_rat(x)} is not a window coordinate") from None


def _place_markers(variant: Variant, family: Family, rk: int, phi_s: Fraction) -> MarkerSet:
    """Affine image of family member `rk` in the variant's target interval."""
    base = family.get(rk)
    if base.count == 0:
        return base
    if lt_pow2(phi_s, -rk):
        mant, exp = factor_pow2(phi_s)
    else:
        mant, exp = F1, -rk
    if variant in (Variant.V1, Variant.V3):
        return MarkerSet.scaled(base, off=F0, lin=F0, span=mant, exp=exp)
    # variant 2: elements phi_s - (1 - b) * m stay inside (phi_s - m, phi_s)
    return MarkerSet.scaled(base, off=phi_s, lin=-mant, span=mant, exp=exp)


def build_fan(spec: FanSpec) -> FanApprox:
    """Construct the height and marker tables for the whole window."""
    order = window_indices(spec.bounds)
    ranks = {s: rank(s) for s in order}
    if not spec.family.is_canonical:
        top = max(ranks.values())
        size = len(spec.family.members or ())
        if top >= size:
            raise BuildError(f"family too short: window needs member {top}, family has {size}")
    phi: dict[SeqIndex, Fraction] = {}
    ys: dict[SeqIndex, MarkerSet] = {}
    fan = FanApprox(spec, phi, ys, ranks)
    for s in order:
        phi[s] = F1 if s == EMPTY else fan.cycle_value(s[:-1], s[-1])
        ys[s] = _place_markers(spec.variant, spec.family, ranks[s], phi[s])
    return fan


def constant_fan(bounds: WindowBounds, height: Fraction = F1, family_len: int = 512) -> FanApprox:
    """Degenerate flat fan: every leg has the given height, all marker sets empty.

    Not producible by build_fan (a family of several empty sets is never
    pairwise non-order-isomorphic); used as a locator test bed.
    """
    members = [MarkerSet.empty() for _ in range(family_len)]
    spec = FanSpec(Variant.V2, Family.explicit(members), bounds)
    order = window_indices(bounds)
    phi = {s: height for s in order}
    ys = {s: MarkerSet.empty() for s in order}
    return FanApprox(spec, phi, ys)


# -- hypograph and endpoints -------------------------------------------------


def in_hypograph(fan: FanApprox, p: FanPoint) -> bool:
    """Membership of (x, y) in the closed region under the height function."""
    s = fan.index_of_point(p.x)
    return F0 <= p.y <= fan.phi_of(s)


def endpoints(fan: FanApprox) -> list[tuple[SeqIndex, Fraction]]:
    """Window endpoints (s, phi(s)) with positive height, in rank order."""
    return [(s, fan.phi[s]) for s in fan.window() if fan.phi[s] > 0]


# -- branch values ------------------------------------------------------------


@dataclass(frozen=True)
class BranchValue:
    """Height information for the branch continuing a finite chain.

    `exact` is the value along the constant continuation when the window data
    pins it down (always 0 for variant 1; the stabilized value otherwise).
    (`lo`, `hi`) encloses the height of every continuation inside the fan.
    """

    exact: Fraction | None
    lo: Fraction
    hi: Fraction
    stabilized: bool
    note: str


def _check_chain_arg(chain: list[SeqIndex]) -> None:
    if not chain:
        raise ValueError("empty chain")
    for a, b in zip(chain, chain[1:]):
        if not extends(a, b):
            raise ValueError("chain elements must strictly extend their predecessors")


def branch_value(fan: FanApprox, chain: list[SeqIndex]) -> BranchValue:
    """Certified height data for branches through the given prefix chain."""
    _check_chain_arg(chain)
    values = [fan.phi_of(s) for s in chain]
    last = values[-1]
    stabilized = len(values) >= 2 and values[-1] == values[-2]
    if fan.variant == Variant.V1:
        return BranchValue(
            exact=F0,
            lo=F0,
            hi=last,
            stabilized=False,
            note="every continuation decays below each 2^-rank bound, so the branch height is 0",
        )
    if fan.variant == Variant.V2:
        rk = fan.rank_of(chain[-1])
        lo = F0 if lt_pow2(last, 1 - rk) else last - pow2(1 - rk)
        return BranchValue(
            exact=last if stabilized else None,
            lo=lo,
            hi=last,
            stabilized=stabilized,
            note="telescoping decay keeps every continuation within 2^(1-rank) below the last height",
        )
    return BranchValue(
        exact=last if stabilized else None,
        lo=F0,
        hi=last,
        stabilized=stabilized,
        note="each continuation either keeps the last height or decays to 0",
    )


# -- upper semi-continuity witnesses ------------------------------------------


Limit = Union[SeqIndex, list]


@dataclass(frozen=True)
class Witness:
    """A convergent sequence of indices with its limit description.

    `limit` is either a finite index (a tuple) or a prefix chain (a list)
    describing a branch.
    """

    points: tuple[SeqIndex, ...]
    limit: Limit

    @property
    def is_branch(self) -> bool:
        return isinstance(self.limit, list)


def usc_check(fan: FanApprox, witnesses: Iterable[Witness]) -> Report:
    """Verify the limsup inequality on each witness, exactly.

    For a finite limit s every term equals s or extends it, so each term's
    height is at most phi(s) by monotonicity; for a branch limit each term's
    height is at most the height at its agreement prefix.  Each inequality is
    checked as stated; a violation pins down the offending term.
    """
    rep = Report()
    for w_i, w in enumerate(witnesses):
        seq = list(w.points)
        if w.is_branch:
            chain = list(w.limit)
            if not converges_to_branch(seq, chain):
                raise ValueError(f"witness {w_i} does not converge to its branch")
            f = chain[-1]
            bad = None
            for k, s in enumerate(seq):
                d = _agree(s, f)
                if fan.phi_of(s) > fan.phi_of(f[:d]):
                    bad = (k, s, d)
                    break
            if bad is None:
                rep.add(f"usc[witness {w_i}]", True, f"{len(seq)} terms bounded at their agreement prefixes")
            else:
                k, s, d = bad
                rep.add(
                    f"usc[witness {w_i}]",
                    False,
                    f"term {k} = {format_index(s)} exceeds the height at {format_index(f[:d])}",
                )
        else:
            s0 = w.limit
            if not converges_to_finite(seq, s0):
                raise ValueError(f"witness {w_i} does not converge to {format_index(s0)}")
            cap = fan.phi_of(s0)
            bad = next((k for k, s in enumerate(seq) if fan.phi_of(s) > cap), None)
            if bad is None:
                rep.add(f"usc[witness {w_i}]", True, f"{len(seq)} terms below the limit height")
            else:
                rep.add(
                    f"usc[witness {w_i}]",
                    False,
                    f"term {bad} = {format_index(seq[bad])} exceeds the limit height {format_rat(cap)}",
                )
    return rep


def _agree(s: SeqIndex, f: SeqIndex) -> int:
    d = 0
    for a, b in zip(s, f):
        if a != b:
            break
        d += 1
    return d


def generate_witnesses(fan: FanApprox, count: int, seed: int = 0) -> list[Witness]:
    """Deterministic mixed batch of convergent witnesses inside the window."""
    rnd = random.Random(seed)
    depth, breadth = fan.bounds.depth, fan.bounds.breadth
    out: list[Witness] = []
    leaves = [s for s in fan.window() if len(s) == depth]
    interior = [s for s in fan.window() if len(s) <= depth - 1]
    for i in range(count):
        if i % 2 == 0:
            # finite-limit witness: terms equal the limit or extend it with
            # strictly increasing first entries
            s = rnd.choice(interior)
            terms: list[SeqIndex] = []
            entry = 0
            for _ in range(rnd.randint(3, 8)):
                if rnd.random() < 0.3 or entry >= breadth:
                    terms.append(s)
                    continue
                t = s + (entry,)
                entry += rnd.randint(1, 2)
                room = depth - len(t)
                if room > 0 and rnd.random() < 0.5:
                    t = t + tuple(rnd.randrange(breadth) for _ in range(rnd.randint(1, room)))
                terms.append(t)
            out.append(Witness(tuple(terms), s))
        else:
            # branch witness: agreement depth climbs to the full chain depth
            f = rnd.choice(leaves)
            chain = [f[:n] for n in range(1, len(f) + 1)]
            terms = []
            for d in range(len(f) + 1):
                t = f[:d]
                if d < len(f) and rnd.random() < 0.5:
                    wrong = (f[d] + 1 + rnd.randrange(2)) % breadth
                    if wrong != f[d]:
                        t = t + (wrong,)
                terms.append(t)
            terms.append(f)
            out.append(Witness(tuple(terms), chain))
    return out


# -- sums ---------------------------------------------------------------------


@dataclass(frozen=True)
class FanSum:
    """Disjoint union of fans with identified roots, one per clopen slot.

    Slot i occupies [1 - 2**-i, 1 - 3 * 2**-(i+2)]; slots are pairwise
    disjoint and their diameters vanish toward 1, matching a one-point
    compactification when the list is read as a prefix of an infinite sum.
    Heights are kept unchanged, so leg traces are those of the parts.
    """

    parts: tuple[FanApprox, ...]

    def __post_init__(self) -> None:
        if not self.parts:
            raise ValueError("a sum needs at least one part")

    def slot(self, i: int) -> tuple[Fraction, Fraction]:
        lo = 1 - Fraction(1, 1 << (i + 1))
        return lo, 1 - Fraction(3, 1 << (i + 3))

    def endpoints(self) -> list[tuple[int, SeqIndex, Fraction]]:
        out = []
        for i, part in enumerate(self.parts):
            out.extend((i, s, h) for s, h in endpoints(part))
        return out

    def scaled_point(self, i: int, s: SeqIndex) -> Fraction:
        lo, hi = self.slot(i)
        return lo + (hi - lo) * point(s)


def sum_fans(fans: list[FanApprox]) -> FanSum:
    return FanSum(tuple(fans))


# -- serialization -------------------------------------------------------------

_DUMP_ELEM_LIMIT = 2_000_000


class FanFormatError(ValueError):
    """Malformed fan serialization."""


def dump_fan(fan: FanApprox) -> str:
    """Deterministic text form: spec block, then one line per index in rank order."""
    total = sum(ms.count for ms in fan.ys.values())
    if total > _DUMP_ELEM_LIMIT:
        raise BuildError(
            f"window carries {total} marker elements; serialization is capped at {_DUMP_ELEM_LIMIT}"
        )
    lines = ["# fanlab fan v1"]
    lines.append(f"variant = {int(fan.variant)}")
    lines.append(f"depth = {fan.bounds.depth}")
    lines.append(f"breadth = {fan.bounds.breadth}")
    fam = fan.family
    if fam.is_canonical:
        lines.append("family = canonical")
    else:
        members = fam.members or ()
        lines.append(f"family = explicit {len(members)}")
        for n, ms in enumerate(members):
            lines.append(f"K{n} = " + _format_elems(ms))
    lines.append("[table]")
    for s in fan.window():
        lines.append(
            f"s = {format_index(s)} ; phi = {format_rat(fan.phi[s])} ; Y = " + _format_elems(fan.ys[s])
        )
    return "\n".join(lines) + "\n"


def _format_elems(ms: MarkerSet) -> str:
    return "[" + ", ".join(format_rat(e) for e in ms) + "]"


def _parse_elems(text: str) -> MarkerSet:
    text = text.strip()
    if not (text.startswith("[") and text.endswith("]")):
        raise FanFormatError(f"bad marker list: {text!r}")
    inner = text[1:-1].strip()
    if not inner:
        return MarkerSet.empty()
    return MarkerSet.from_elems(parse_rat(p) for p in inner.split(","))


def load_fan(text: str) -> FanApprox:
    """Parse the serialization; syntactic validation only (verify checks semantics)."""
    head: dict[str, str] = {}
    members: dict[int, MarkerSet] = {}
    table: list[tuple[SeqIndex, Fraction, MarkerSet]] = []
    in_table = False
    try:
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line == "[table]":
                in_table = True
                continue
            if in_table:
                parts = [p.strip() for p in line.split(";")]
                if len(parts) != 3:
                    raise FanFormatError(f"bad table line: {line!r}")
                s = parse_index(_expect(parts[0], "s"))
                phi = parse_rat(_expect(parts[1], "phi"))
                ms = _parse_elems(_expect(parts[2], "Y"))
                table.append((s, phi, ms))
            else:
                key, _, value = line.partition("=")
                key, value = key.strip(), value.strip()
                if key.startswith("K") and key[1:].isdigit():
                    members[int(key[1:])] = _parse_elems(value)
                else:
                    head[key] = value
        variant = Variant(int(head["variant"]))
        bounds = WindowBounds(int(head["depth"]), int(head["breadth"]))
        fam_decl = head["family"]
        if fam_decl == "canonical":
            family = Family.canonical()
        else:
            kind, _, n_text = fam_decl.partition(" ")
            if kind != "explicit":
                raise FanFormatError(f"unknown family kind {fam_decl!r}")
            n = int(n_text)
            family = Family.explicit(members[i] for i in range(n))
    except FanFormatError:
        raise
    except (KeyError, ValueError) as exc:
        raise FanFormatError(f"malformed fan file: {exc}") from exc
    if not table:
        raise FanFormatError("fan file has no table")
    spec = FanSpec(variant, family, bounds)
    phi = {s: h for s, h, _ in table}
    ys = {s: ms for s, _, ms in table}
    if len(phi) != len(table):
        raise FanFormatError("duplicate index in fan table")
    return FanApprox(spec, phi, ys)


def _expect(part: str, key: str) -> str:
    k, _, v = part.partition("=")
    if k.strip() != key:
        raise FanFormatError(f"expected {key!r} field, got {part!r}")
    return v.strip()


def dump_sum(fs: FanSum) -> str:
    lines = ["# fanlab sum v1", f"summands = {len(fs.parts)}"]
    for i in range(len(fs.parts)):
        lo, hi = fs.slot(i)
        lines.append(f"slot{i} = [{format_rat(lo)}, {format_rat(hi)}]")
    blocks = [("\n".join(lines)) + "\n"]
    for i, part in enumerate(fs.parts):
        blocks.append(f"[part {i}]\n")
        blocks.append(dump_fan(part))
    return "".join(blocks)


def load_sum(text: str) -> FanSum:
    head, *rest = text.split("[part ")
    if "summands" not in head:
        raise FanFormatError("not a sum file")
    parts = []
    for block in rest:
        _, _, body = block.partition("]\n")
        parts.append(load_fan(body))
    return FanSum(tuple(parts))
