"""Endpoint-set analysis: traces, certificates, classification, free boxes.

The closure of the countable endpoint set meets the open leg above x(s) in
exactly the marker heights Y(s).  `leg_trace` reports that prediction and
re-verifies it on window data with tolerances drawn from the construction's
own decay bounds, never from an ad-hoc epsilon.

Many checks need the set of heights attained on a whole subtree of the
untruncated fan, not just on the window.  `values_above` computes that set
exactly for variants 1 and 3 (and for degenerate all-empty-marker fans): any
height above a positive floor can only be carried by indices whose rank stays
below -log2(floor), and ranks are strictly monotone along and across levels,
so only finitely many nodes tree-wide can contribute.  For variant 2 the
telescoping bound confines each subtree's heights to a short closed interval
below its top instead; `height_clusters` returns those enclosures.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

from .cantor import TailPiece, format_rat, interval, point
from .dyadic import F0, F1, ceil_neg_log2, lt_pow2, pow2
from .fanmodel import (
    BranchValue,
    FanApprox,
    FanSum,
    Variant,
    branch_value,
    endpoints,
    generate_witnesses,
    usc_check,
)
from .kfamily import FamilyRangeError, MarkerSet, order_isomorphic, verify_family
from .report import Report
from .seqindex import SeqIndex, extends, format_index, rank_lower_bound


# -- certified height sets ----------------------------------------------------


@dataclass(frozen=True)
class HeightSet:
    """Heights strictly above a floor attained on a piece of the fan.

    `exact` means the values enumerate every height of the untruncated fan on
    the piece above the floor, branch limits included.  Without exactness the
    values are the window enumeration only.
    """

    floor: Fraction
    values: tuple[Fraction, ...]
    exact: bool


def _engine_exact(fan: FanApprox) -> bool:
    if fan.variant in (Variant.V1, Variant.V3):
        return True
    fam = fan.family
    if fam.members is not None and all(m.count == 0 for m in fam.members):
        return True  # flat fans: every schedule keeps the parent height
    return False


def values_above(fan: FanApprox, piece: TailPiece, floor: Fraction, closed: bool = False) -> HeightSet:
    """Heights above `floor` attained anywhere on `piece` in the full fan.

    Exact for variants 1 and 3: a height above the floor is either the height
    of a node of rank below R = ceil(-log2 floor) or a marker value of such a
    node, because marker sets at rank r live below 2**-r and heights only
    decrease along extensions.  Branch limits add nothing: they are 0 or equal
    to an attained node height.
    """
    if floor <= 0:
        raise ValueError("floor must be positive")
    keep = (lambda v: v >= floor) if closed else (lambda v: v > floor)
    out: set[Fraction] = set()
    if not _engine_exact(fan):
        for s in fan.window():
            if piece.contains_index(s) and keep(fan.phi[s]):
                out.add(fan.phi[s])
        return HeightSet(floor, tuple(sorted(out)), exact=False)
    r_cap = ceil_neg_log2(floor)

    def visit(s: SeqIndex, min_child: int) -> None:
        v = fan.phi_of(s)
        if keep(v):
            out.add(v)
        ms = fan.ys_of(s)
        if ms.count and (ms.cmp_max(floor) > 0 or (closed and ms.cmp_max(floor) == 0)):
            # markers above the floor recur among the children of every tail
            out.update(ms.above(floor, closed))
        i = min_child
        while fan.rank_of(s + (i,)) < r_cap:
            visit(s + (i,), 0)
            i += 1

    try:
        visit(piece.root, piece.skip)
    except FamilyRangeError:
        vals = {fan.phi[s] for s in fan.window() if piece.contains_index(s) and keep(fan.phi[s])}
        return HeightSet(floor, tuple(sorted(vals)), exact=False)
    return HeightSet(floor, tuple(sorted(out)), exact=True)


def height_clusters(fan: FanApprox, s: SeqIndex) -> list[tuple[Fraction, Fraction]]:
    """Closed enclosures covering every subtree height below the top of leg s.

    Variant 2 only: the subtree under a child carrying value v keeps its
    heights inside [v - 2**(1-rank(child)), v], and the first carrier has the
    weakest bound.  Returned intervals are merged and sorted; the gaps between
    them are certified height-free for the untruncated fan.
    """
    if fan.variant != Variant.V2:
        raise ValueError("height clusters are the variant-2 enclosure form")
    ms = fan.ys_of(s)
    tops = list(ms) + [fan.phi_of(s)]
    raw: list[tuple[Fraction, Fraction]] = []
    for pos, v in enumerate(tops):
        child = s + (pos,)
        # sound over-approximation of 2**(1 - rank(child)); cap the exponent
        radius = pow2(max(1 - rank_lower_bound(child), -64))
        lo = v - radius if v - radius > 0 else F0
        raw.append((lo, v))
    raw.sort()
    merged = [raw[0]]
    for lo, hi in raw[1:]:
        plo, phi_ = merged[-1]
        if lo <= phi_:
            merged[-1] = (plo, max(phi_, hi))
        else:
            merged.append((lo, hi))
    return merged


# -- leg and branch traces ------------------------------------------------------


@dataclass(frozen=True)
class LegTrace:
    """Predicted closure trace on the open leg above one index."""

    leg: SeqIndex
    height: Fraction
    predicted: MarkerSet
    includes_top: bool
    includes_bottom: bool
    checks: Report


def leg_trace(fan: FanApprox, s: SeqIndex) -> LegTrace:
    """Trace prediction for the leg at x(s), plus its window verification.

    Prediction: the strictly interior closure heights are exactly Y(s).  The
    window verification bounds every descendant endpoint's distance to
    Y(s) + {0, phi(s)} by the decay bound at its level-(|s|+1) ancestor, and
    checks that each realized marker value recurs along the child schedule.
    """
    if not fan.in_window(s):
        raise KeyError(f"{format_index(s)} is outside the window")
    ms = fan.ys_of(s)
    phi_s = fan.phi_of(s)
    checks = Report()

    # children must follow the ascending cyclic schedule
    breadth = fan.bounds.breadth
    kids = [s + (i,) for i in range(breadth) if fan.in_window(s + (i,))]
    sched_ok = all(fan.phi[t] == fan.cycle_value(s, t[-1]) for t in kids)
    checks.add(f"schedule[s={format_index(s)}]", sched_ok, f"{len(kids)} children match the cycle")

    cyc_len = fan.cycle_len(s)
    if kids and cyc_len and breadth >= cyc_len:
        want = {fan.cycle_value(s, i) for i in range(cyc_len)}
        cover = all(
            {fan.phi[s + (i,)] for i in range(j, j + cyc_len)} == want
            for j in range(0, breadth - cyc_len + 1)
        )
        checks.add(
            f"recurrence[s={format_index(s)}]",
            cover,
            f"every {cyc_len} consecutive children realize all scheduled heights",
        )

    # descendant heights stay within decay distance of Y(s) + {0, phi(s)}
    bad = 0
    seen = 0
    for t in fan.window():
        if not extends(s, t) or len(t) == len(s):
            continue
        seen += 1
        anchor = t[: len(s) + 1]
        if len(t) == len(s) + 1:
            ok = fan.phi[t] == fan.cycle_value(s, t[-1])
        elif fan.variant == Variant.V1:
            ok = lt_pow2(fan.phi[t], -fan.rank_of(anchor))
        elif fan.variant == Variant.V2:
            gap = fan.phi_of(anchor) - fan.phi[t]
            ok = F0 <= gap and lt_pow2(gap, 1 - fan.rank_of(anchor))
        else:
            ok = fan.phi[t] == fan.phi_of(anchor) or lt_pow2(fan.phi[t], -fan.rank_of(anchor))
        bad += not ok
    if seen:
        checks.add(
            f"trace-tolerance[s={format_index(s)}]",
            bad == 0,
            f"{seen} descendants within their level-1 decay bound of the trace",
        )

    includes_top = fan.cycle_includes_top(s)
    includes_bottom = fan.variant in (Variant.V1, Variant.V3) and _droplets_exist(fan, s)
    return LegTrace(s, phi_s, ms, includes_top, includes_bottom, checks)


def _droplets_exist(fan: FanApprox, s: SeqIndex) -> bool:
    """Do endpoints under leg s reach arbitrarily small heights near x(s)?

    For variants 1 and 3 the grandchild markers below each child decay below
    2**-rank(child); any nonempty marker set down the line produces them.
    """
    try:
        for i in range(fan.bounds.breadth):
            if fan.ys_of(s + (i,)).count:
                return True
    except FamilyRangeError:
        return False
    return False


def branch_trace(fan: FanApprox, chain: list[SeqIndex], require_certified: bool = True) -> LegTrace:
    """Trace on the branch continuing the chain with constant schedule choices.

    Variant 1 branches carry no endpoint at all (height 0).  On variants 2 and
    3 the described branch keeps the last chain height; the closure meets the
    closed branch leg only at the top (variant 2) or at top and bottom
    (variant 3).
    """
    bv = branch_value(fan, chain)
    last = chain[-1]
    if fan.variant == Variant.V1:
        checks = Report()
        checks.add(
            f"branch-zero[{format_index(last)}]",
            bv.exact == F0 and lt_pow2(bv.hi, -fan.rank_of(last[:-1])) if len(last) else bv.exact == F0,
            "branch heights decay to 0",
        )
        return LegTrace(last, F0, MarkerSet.empty(), False, False, checks)
    certified = bv.exact is not None or bv.lo > 0
    if require_certified and not certified:
        raise ValueError("chain does not certify a positive branch height")
    height = bv.exact if bv.exact is not None else fan.phi_of(last)
    checks = Report()
    checks.add(f"branch-positive[{format_index(last)}]", height > 0, f"height {format_rat(height)}")
    bottom = fan.variant == Variant.V3 and _droplets_exist(fan, last)
    return LegTrace(last, height, MarkerSet.empty(), True, bottom, checks)


# -- family-condition certificate ------------------------------------------------


def verify_fan_conditions(obj: FanApprox | FanSum) -> Report:
    """Certificate for the three distinguishing-family conditions.

    (leg-order-type)     the strictly interior trace of every window leg is
                         order isomorphic to its own family member;
    (branch-order-type)  traces of certified branches, endpoints removed, are
                         empty, hence not order isomorphic to any member;
    (branch-adherence)   certified branch endpoints are limits of the leg
                         endpoints below them.
    Leg traces across the window must also be pairwise non-order-isomorphic.
    """
    rep = Report()
    if isinstance(obj, FanSum):
        counts: dict[int, tuple[int, int]] = {}
        clash = None
        for i, part in enumerate(obj.parts):
            rep.extend(verify_fan_conditions(part))
            for s in part.window():
                c = part.ys_of(s).count
                key = (i, part.rank_of(s))
                if c in counts and counts[c][0] != i:
                    clash = (counts[c], key, c)
                counts[c] = key
        rep.add(
            "sum-cross-distinct",
            clash is None,
            "leg traces remain pairwise non-order-isomorphic across summands"
            if clash is None
            else f"parts {clash[0][0]} and {clash[1][0]} share a trace of {clash[2]} elements",
        )
        for i in range(len(obj.parts) - 1):
            hi = obj.slot(i)[1]
            lo_next = obj.slot(i + 1)[0]
            rep.add(f"sum-slots[{i}]", hi < lo_next, "slots are disjoint and accumulate at 1")
        return rep

    fan = obj
    fam = fan.family
    bad = None
    seen_counts: dict[int, SeqIndex] = {}
    inj_clash = None
    for s in fan.window():
        ms = fan.ys_of(s)
        try:
            member = fam.get(fan.rank_of(s))
        except FamilyRangeError:
            bad = (s, "family member missing")
            break
        if not order_isomorphic(ms, member):
            bad = (s, f"trace has {ms.count} elements, member needs {member.count}")
            break
        if ms.count in seen_counts and inj_clash is None:
            inj_clash = (seen_counts[ms.count], s)
        seen_counts[ms.count] = s
    rep.add(
        "leg-order-type",
        bad is None,
        f"{len(fan.window())} legs match their family members"
        if bad is None
        else f"s={format_index(bad[0])}: {bad[1]}",
    )
    rep.add(
        "leg-distinct",
        inj_clash is None,
        "window traces pairwise non-order-isomorphic"
        if inj_clash is None
        else f"{format_index(inj_clash[0])} and {format_index(inj_clash[1])} have equal traces",
    )

    nonempty_family = fam.is_canonical or all(m.count for m in (fam.members or ()))
    leaves = [t for t in fan.window() if len(t) == fan.bounds.depth]
    branch_fail = None
    adhere_fail = None
    for t in leaves:
        chain = [t[:n] for n in range(1, len(t) + 1)]
        bv = branch_value(fan, chain)
        if fan.variant == Variant.V1:
            if bv.exact != F0:
                branch_fail = t
                break
            continue
        trace = branch_trace(fan, chain, require_certified=False)
        if trace.predicted.count != 0 or not nonempty_family:
            branch_fail = t
            break
        if not trace.includes_top:
            adhere_fail = t
            break
    label = "branch-order-type"
    if fan.variant == Variant.V1:
        rep.add(
            label,
            branch_fail is None,
            f"{len(leaves)} branches certified endpoint-free (heights decay to 0)",
        )
    else:
        rep.add(
            label,
            branch_fail is None,
            f"{len(leaves)} branch traces empty after removing endpoints; family has no empty member"
            if branch_fail is None
            else f"branch {format_index(branch_fail)}",
        )
        rep.add(
            "branch-adherence",
            adhere_fail is None,
            "branch endpoints are limits of the leg endpoints along their chains"
            if adhere_fail is None
            else f"branch {format_index(adhere_fail)}",
        )
    return rep


# -- full structural verification -------------------------------------------------


def verify_fan(fan: FanApprox, usc_witnesses: int = 200, seed: int = 0) -> Report:
    """Every structural invariant of the construction, re-checked from the tables."""
    rep = Report()
    win = fan.window()

    from .seqindex import rank as rank_fn
    from .seqindex import unrank

    rk_ok = all(fan.rank_of(s) == rank_fn(s) and unrank(rank_fn(s)) == s for s in win)
    mono_ok = all(
        rank_fn(s) < rank_fn(t) for t in win if t for s in (t[:-1],)
    )
    rep.add("rank-bijection", rk_ok, f"{len(win)} indices round-trip")
    rep.add("rank-monotone", mono_ok, "parents always enumerate before children")

    nest_ok = True
    disj_ok = True
    for t in win:
        if not t:
            continue
        parent = t[:-1]
        if not interval(parent).contains_interval(interval(t)):
            nest_ok = False
        if t[-1] + 1 < fan.bounds.breadth:
            sib = parent + (t[-1] + 1,)
            if interval(t).intersects(interval(sib)):
                disj_ok = False
    rep.add("cell-nesting", nest_ok, "child cells sit inside their parents")
    rep.add("cell-disjoint", disj_ok, "sibling cells are pairwise disjoint")

    rep.add("root-height", fan.phi.get(()) == F1, "height 1 at the root")
    mono = all(fan.phi[t] <= fan.phi[t[:-1]] for t in win if t)
    rep.add("height-monotone", mono, "heights never increase along extensions")

    decay_ok = True
    for t in win:
        if not t:
            continue
        parent_rank = fan.rank_of(t[:-1])
        if fan.variant == Variant.V1:
            ok = lt_pow2(fan.phi[t], -parent_rank)
        elif fan.variant == Variant.V2:
            gap = fan.phi[t[:-1]] - fan.phi[t]
            ok = F0 <= gap and lt_pow2(gap, 1 - parent_rank)
        else:
            ok = fan.phi[t] == fan.phi[t[:-1]] or lt_pow2(fan.phi[t], -parent_rank)
        if not ok:
            decay_ok = False
            break
    rep.add(f"decay-bound[v{int(fan.variant)}]", decay_ok, "variant decay inequality at every index")

    place_ok = all(_placement_ok(fan, s) for s in win)
    rep.add("marker-placement", place_ok, "marker sets inside their variant targets")

    sched_ok = all(fan.phi[t] == fan.cycle_value(t[:-1], t[-1]) for t in win if t)
    rep.add("schedule", sched_ok, "child heights follow the ascending cycles")

    rep.extend(verify_family(fan.family, min(16, len(win))))
    rep.extend(verify_fan_conditions(fan))
    if usc_witnesses:
        wit = generate_witnesses(fan, usc_witnesses, seed)
        usc = usc_check(fan, wit)
        rep.add("usc", usc.ok, f"{len(wit)} generated witnesses satisfy the limsup inequality")
    return rep


def _placement_ok(fan: FanApprox, s: SeqIndex) -> bool:
    """Exact check that Y(s) sits inside its variant's open target interval.

    For variants 1 and 3 the target is (0, min(phi, 2^-rank)); for variant 2
    it is (max(0, phi - 2^-rank), phi).  Lazily scaled sets are compared via
    their mantissas so million-bit powers of two are never materialized.
    """
    from .dyadic import cmp_pow2

    ms = fan.ys_of(s)
    if ms.count == 0:
        return True
    phi_s = fan.phi[s]
    rk = fan.rank_of(s)
    if fan.variant in (Variant.V1, Variant.V3):
        if not (ms.cmp_min(F0) > 0 and ms.cmp_max(phi_s) < 0):
            return False
        if ms.elems is not None:
            return cmp_pow2(ms.max_el, -rk) < 0
        # element = m * 2**exp with m = mantissa: compare m * 2^exp < 2^-rk
        m = ms.scaled_mantissa(ms.count - 1)
        return m > 0 and cmp_pow2(m, -rk - ms.exp) < 0
    # variant 2
    if not (ms.cmp_min(F0) > 0 and ms.cmp_max(phi_s) < 0):
        return False
    if ms.elems is not None:
        gap = phi_s - ms.min_el
        return cmp_pow2(gap, -rk) < 0 or lt_pow2(phi_s, -rk)
    # element - phi = m * 2**exp with m < 0; need |m| * 2^exp < 2^-rk
    m = ms.scaled_mantissa(0)
    return m < 0 and (cmp_pow2(-m, -rk - ms.exp) < 0 or lt_pow2(phi_s, -rk))


# -- classification ----------------------------------------------------------------


class EndpointClass(Enum):
    DISCRETE = "Discrete"
    IRRATIONAL_LIKE = "IrrationalLike"
    CANTOR_TIMES_NAT_LIKE = "CantorTimesNatLike"
    UNKNOWN = "Unknown"


def classify_endpoint_space(fan: FanApprox, resolution: int = 8, sample: int = 48) -> EndpointClass:
    """Certified-probe classification of the endpoint space.

    Probes each sampled leg endpoint for three mutually exclusive local
    patterns, certified through the decay bounds rather than window search:

    - isolating box: no other endpoint within a fixed slab under the top;
    - equal-height slice: boxes of every scale whose endpoints all share the
      top height (a compact Cantor-like slice);
    - shrinking mixed boxes: clopen boxes of every scale that always trap
      endpoints strictly below the top (nowhere locally compact).

    Returns Unknown when the sampled legs disagree or no pattern certifies.
    """
    legs = fan.window()[: max(1, sample)]
    verdicts = set()
    for s in legs:
        iso = _certify_isolated(fan, s)
        if iso:
            verdicts.add(EndpointClass.DISCRETE)
            continue
        same = all(_certify_equal_height_box(fan, s, k) for k in range(1, resolution + 1))
        mixed = all(_certify_mixed_box(fan, s, k) for k in range(1, resolution + 1))
        if same and not mixed:
            verdicts.add(EndpointClass.CANTOR_TIMES_NAT_LIKE)
        elif mixed and not same:
            verdicts.add(EndpointClass.IRRATIONAL_LIKE)
        else:
            return EndpointClass.UNKNOWN
    if len(verdicts) == 1:
        return verdicts.pop()
    return EndpointClass.UNKNOWN


def _certify_isolated(fan: FanApprox, s: SeqIndex) -> bool:
    """Box I(s) x (slab under the top) holding no other endpoint of the full fan.

    Valid when the child schedule never repeats the top height: every strict
    descendant height is then at most max Y(s) < phi(s), by monotonicity.
    """
    if fan.cycle_includes_top(s):
        return False
    ms = fan.ys_of(s)
    if ms.count == 0:
        return True
    return ms.cmp_max(fan.phi_of(s)) < 0


def _tail_for_scale(fan: FanApprox, s: SeqIndex, k: int, extra_rank: int) -> TailPiece | None:
    """Tail piece at x(s) with diameter below 2^-k whose pending children all
    have rank at least extra_rank; None only if the skip search diverges."""
    skip = 0
    while skip < 4 * (k + extra_rank + 8):
        piece = TailPiece(s, skip)
        if lt_pow2(piece.diameter(), -k) and rank_lower_bound(s + (skip,)) >= extra_rank:
            return piece
        skip += 1
    return None


def _certify_equal_height_box(fan: FanApprox, s: SeqIndex, k: int) -> bool:
    """A box of scale 2^-k around the top of leg s whose endpoint slice sits
    entirely at the top height.

    Needs drops bounded away from the top: valid for variant 3 (and for flat
    fans), where every dropped height under an index t stays below 2**-rank(t).
    The tail's skip pushes the pending drop bounds below half the top height;
    the slab bottom sits above the sampled leg's own markers.
    """
    if not fan.cycle_includes_top(s) or not _engine_exact(fan):
        return False
    phi_s = fan.phi_of(s)
    ms = fan.ys_of(s)
    if ms.count:
        if ms.elems is None:
            return False
        gap = phi_s - ms.max_el
        if gap <= 0:
            return False
        eps = min(gap / 2, pow2(-(k + 1)))
    else:
        eps = min(phi_s / 2, pow2(-(k + 1)))
    # drops under pending tail children stay below 2^-rank <= phi/2 <= phi - eps
    need = ceil_neg_log2(phi_s) + 1
    piece = _tail_for_scale(fan, s, k, need)
    if piece is None:
        return False
    try:
        for i in (piece.skip, piece.skip + 1):
            sub = fan.ys_of(s + (i,))
            if sub.count and sub.cmp_max(phi_s - eps) >= 0:
                return False
    except FamilyRangeError:
        return False
    return True


def _certify_mixed_box(fan: FanApprox, s: SeqIndex, k: int) -> bool:
    """A clopen box of scale 2^-k at the top of leg s that provably traps
    endpoint heights strictly inside (phi - eps, phi).

    Variant-2 pattern: markers of a deep top-carrying child land within
    2**-rank(child) below the top, inside every slab; the slab boundary sits
    below that cluster in a certified height gap, so the slice is clopen.
    """
    if fan.variant != Variant.V2 or _engine_exact(fan):
        return False
    phi_s = fan.phi_of(s)
    ms = fan.ys_of(s)
    eps = min(pow2(-(k + 1)), phi_s / 4)
    if ms.count:
        if ms.elems is None:
            return False
        if ms.max_el >= phi_s - eps:
            eps = (phi_s - ms.max_el) / 2
            if eps <= 0:
                return False
    # find a top-carrying child deep enough that its markers sit inside the slab
    length = fan.cycle_len(s)
    i = length - 1  # ascending cycle ends at the top height
    need = ceil_neg_log2(eps) + 2
    for _ in range(64):
        child = s + (i,)
        if rank_lower_bound(child) >= need:
            try:
                sub = fan.ys_of(child)
            except FamilyRangeError:
                return False
            if sub.count == 0:
                return False
            # markers of the carrier lie strictly between phi - eps and phi
            return sub.cmp_min(phi_s - eps) > 0 and sub.cmp_max(phi_s) < 0
        i += length
    return False


# -- density and free boxes ----------------------------------------------------------


def is_endpoint_dense(
    fan: FanApprox, resolution: int = 4
) -> tuple[bool, tuple[SeqIndex, Fraction, Fraction] | None]:
    """Window density test over basic boxes at a dyadic height resolution.

    Scans cell x slab boxes in rank-then-height order; a box that meets the
    region under the heights but contains no window endpoint witnesses
    non-density and is returned.
    """
    heights: dict[SeqIndex, list[Fraction]] = {s: [] for s in fan.window()}
    for t in fan.window():
        v = fan.phi[t]
        for n in range(len(t) + 1):
            heights[t[:n]].append(v)
    for hs in heights.values():
        hs.sort()
    step = pow2(-resolution)
    for s in fan.window():
        top = fan.phi[s]
        hs = heights[s]
        for j in range(1 << resolution):
            lo = j * step
            hi = lo + step
            if lo > top:
                break
            if bisect_right(hs, hi) - bisect_left(hs, lo) == 0:
                return False, (s, lo, hi)
    return True, None


@dataclass(frozen=True)
class FreeBox:
    """Endpoint-free box I(s) x [lo, hi] meeting the underlying fan region."""

    leg: SeqIndex
    lo: Fraction
    hi: Fraction
    certified: bool
    detail: str


def free_box(fan: FanApprox, max_legs: int = 64) -> FreeBox | None:
    """A certified endpoint-free box, scanning legs in rank order.

    For exact-engine variants, gaps between the finitely many heights above a
    dyadic floor are certified free for the whole fan; for variant 2 the gaps
    between height clusters are.  The returned box is the middle third of the
    first gap found below the leg's top.
    """
    for s in fan.window()[:max_legs]:
        phi_s = fan.phi[s]
        if fan.variant == Variant.V2 and not _engine_exact(fan):
            if fan.ys_of(s).elems is None:
                continue
            clusters = height_clusters(fan, s)
            gaps = [
                (hi_prev, lo_next)
                for (_, hi_prev), (lo_next, _) in zip(clusters, clusters[1:])
                if hi_prev < lo_next
            ]
            for g_lo, g_hi in gaps:
                if g_hi <= phi_s:
                    w = (g_hi - g_lo) / 3
                    return FreeBox(s, g_lo + w, g_hi - w, True, "gap between variant-2 height clusters")
            continue
        floor = pow2(-fan.rank_of(s + (0,))) if fan.rank_of(s + (0,)) <= 64 else None
        if floor is None or floor >= phi_s:
            continue
        hs = values_above(fan, TailPiece(s), floor)
        if not hs.exact:
            continue
        cuts = [floor] + [v for v in hs.values if v <= phi_s]
        for a, b in zip(cuts, cuts[1:]):
            if a < b:
                w = (b - a) / 3
                return FreeBox(s, a + w, b - w, True, "gap in the exact subtree height set")
    return None


@dataclass(frozen=True)
class NonrigidityWitness:
    """A vertical homeomorphism supported on an endpoint-free box.

    Identity outside I(leg) x [lo, hi]; inside, each vertical fiber is moved
    by the piecewise-linear map fixing lo and hi and sending the midpoint to
    lo/4 + 3*hi/4.  It fixes every endpoint yet moves interior points, so the
    fan is not rigid.
    """

    box: FreeBox

    @property
    def fixed_lo(self) -> Fraction:
        return self.box.lo

    @property
    def fixed_hi(self) -> Fraction:
        return self.box.hi

    @property
    def midpoint(self) -> Fraction:
        return (self.box.lo + self.box.hi) / 2

    @property
    def midpoint_image(self) -> Fraction:
        return (self.box.lo + 3 * self.box.hi) / 4

    def apply_height(self, t: Fraction) -> Fraction:
        lo, hi, mid, img = self.fixed_lo, self.fixed_hi, self.midpoint, self.midpoint_image
        if t <= lo or t >= hi:
            return t
        if t <= mid:
            return lo + (t - lo) * (img - lo) / (mid - lo)
        return img + (t - mid) * (hi - img) / (hi - mid)

    def describe(self) -> str:
        return "\n".join(
            [
                f"support = cell {format_index(self.box.leg)} x [{format_rat(self.box.lo)}, {format_rat(self.box.hi)}]",
                f"fixes = {format_rat(self.fixed_lo)}, {format_rat(self.fixed_hi)}",
                f"midpoint {format_rat(self.midpoint)} -> {format_rat(self.midpoint_image)}",
                "endpoints fixed pointwise: the support box contains no endpoint",
            ]
        )


def nonrigidity_witness(fan: FanApprox) -> NonrigidityWitness:
    box = free_box(fan)
    if box is None:
        raise ValueError("no certified endpoint-free box found at this window")
    return NonrigidityWitness(box)
