"""Exact comparisons between rationals and huge powers of two.

Decay bounds of the form 2**(-rank(s)) show up everywhere in the fan
construction, and ranks grow past a million inside modest index windows.
Comparing a rational against such a bound must not materialize million-bit
integers unless the two values are genuinely that close; bit lengths decide
almost every comparison.
"""
from __future__ import annotations

from fractions import Fraction

F0 = Fraction(0)
F1 = Fraction(1)


def v2(n: int) -> int:
    """2-adic valuation of a nonzero integer."""
    return (n & -n).bit_length() - 1


def factor_pow2(x: Fraction) -> tuple[Fraction, int]:
    """Write x > 0 as mant * 2**exp with an odd/odd mantissa."""
    if x <= 0:
        raise ValueError("factor_pow2 requires a positive rational")
    p, q = x.numerator, x.denominator
    a, b = v2(p), v2(q)
    return Fraction(p >> a, q >> b), a - b


def cmp_pow2(x: Fraction, k: int) -> int:
    """Sign of x - 2**k. Exact; shifts only in the borderline case."""
    p, q = x.numerator, x.denominator
    if p <= 0:
        return -1
    a, b = p.bit_length(), q.bit_length()
    # p in [2^(a-1), 2^a), q*2^k in [2^(b-1+k), 2^(b+k))
    if a <= b + k - 1:
        return -1
    if a - 1 >= b + k:
        return 1
    if k >= 0:
        rhs = q << k
    else:
        p, rhs = p << -k, q
    return -1 if p < rhs else (0 if p == rhs else 1)


def lt_pow2(x: Fraction, k: int) -> bool:
    """x < 2**k."""
    return cmp_pow2(x, k) < 0


def le_pow2(x: Fraction, k: int) -> bool:
    """x <= 2**k."""
    return cmp_pow2(x, k) <= 0


def gt_pow2(x: Fraction, k: int) -> bool:
    """x > 2**k."""
    return cmp_pow2(x, k) > 0


def ge_pow2(x: Fraction, k: int) -> bool:
    """x >= 2**k."""
    return cmp_pow2(x, k) >= 0


def pow2(k: int) -> Fraction:
    """Materialize 2**k. Caller is responsible for keeping |k| sane."""
    return Fraction(1 << k) if k >= 0 else Fraction(1, 1 << -k)


def dyad_cmp(m: Fraction, e: int, t: Fraction) -> int:
    """Sign of m * 2**e - t, avoiding materialization of 2**e."""
    if t == 0:
        return (m > 0) - (m < 0)
    if m == 0:
        return -((t > 0) - (t < 0))
    if m > 0 > t:
        return 1
    if m < 0 < t:
        return -1
    c = cmp_pow2(abs(m) / abs(t), -e)
    return c if m > 0 else -c


def ceil_neg_log2(x: Fraction) -> int:
    """Smallest R with 2**(-R) <= x, for x > 0."""
    if x <= 0:
        raise ValueError("positive rational required")
    r = x.denominator.bit_length() - x.numerator.bit_length() - 2
    while not ge_pow2(x, -r):
        r += 1
    return r
