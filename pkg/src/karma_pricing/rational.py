"""Piecewise-constant rational approximation with small denominators."""

from __future__ import annotations

import math
from fractions import Fraction


def simplest_rational_in(lo, hi) -> Fraction:
    """Smallest-denominator rational in the closed interval ``[lo, hi]``.

    Walks the Stern-Brocot tree, taking whole runs of left/right moves at once
    (one continued-fraction term per step).
    """
    lo, hi = Fraction(lo), Fraction(hi)
    if lo > hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    if lo <= 0 <= hi:
        return Fraction(0)
    if hi < 0:
        return -simplest_rational_in(-hi, -lo)
    # convergent recurrences: h/k accumulates the continued fraction seen so far
    h0, h1, k0, k1 = 0, 1, 1, 0
    a, b = lo, hi
    while True:
        c = math.ceil(a)
        if c <= b:
            return Fraction(c * h1 + h0, c * k1 + k0)
        q = math.floor(a)
        h0, h1 = h1, q * h1 + h0
        k0, k1 = k1, q * k1 + k0
        a, b = 1 / (b - q), 1 / (a - q)


def rat_delta(x, delta) -> Fraction:
    """Rational approximation constant on each interval ``((j-1)delta, j*delta]``.

    Picks the simplest rational in ``[(j-1)delta + delta/4, j*delta]``, so the
    error is at most ``3*delta/4`` on the whole interval. ``rat_delta(0) = 0``.
    """
    delta = Fraction(delta)
    if delta <= 0:
        raise ValueError("delta must be positive")
    x = Fraction(x)
    if x < 0:
        raise ValueError(f"rat_delta is defined for x >= 0, got {x}")
    if x == 0:
        return Fraction(0)
    j = math.ceil(x / delta)
    return simplest_rational_in((j - 1) * delta + delta / 4, j * delta)


def parse_rational(text: str) -> Fraction:
    """Accept ``num/den``, integers, or decimal literals; decimals are taken exactly."""
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not a rational number: {text!r}") from exc


def format_rational(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"
