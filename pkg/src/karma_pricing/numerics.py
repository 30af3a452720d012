"""Scalar root finding, minimisation and quadrature helpers."""

from __future__ import annotations

import math
from typing import Callable, Sequence

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class BracketError(ValueError):
    """Raised when a root is not bracketed by the supplied interval."""


def bisect(f: Callable[[float], float], lo: float, hi: float, *,
           xtol: float = 1e-12, ftol: float = 0.0, max_iter: int = 400) -> float:
    """Root of ``f`` in ``[lo, hi]`` by bisection.

    Stops when the bracket is narrower than ``xtol`` or ``|f| <= ftol``.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise BracketError(f"f({lo})={flo:.6g} and f({hi})={fhi:.6g} share a sign")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if fmid == 0.0 or abs(fmid) <= ftol or hi - lo <= xtol:
            return mid
        if (fmid > 0) == (flo > 0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def golden_section(f: Callable[[float], float], lo: float, hi: float, *,
                   xtol: float = 1e-10) -> float:
    """Minimiser of a unimodal ``f`` on ``[lo, hi]``."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def adaptive_simpson(f: Callable[[float], float], a: float, b: float, *,
                     tol: float = 1e-10, max_depth: int = 50) -> float:
    """Integral of ``f`` over ``[a, b]`` by adaptive Simpson with Richardson correction."""
    if b <= a:
        return 0.0
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0
    return _simpson_step(f, a, b, fa, fm, fb, whole, tol, max_depth)


def _simpson_step(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) * (fa + 4.0 * flm + fm) / 6.0
    right = (b - m) * (fm + 4.0 * frm + fb) / 6.0
    delta = left + right - whole
    if depth <= 0 or abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    return (_simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + _simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1))


def piecewise_simpson(f: Callable[[float], float], a: float, b: float,
                      breakpoints: Sequence[float] = (), *, tol: float = 1e-10) -> float:
    """Adaptive Simpson over ``[a, b]`` split at the interior ``breakpoints``.

    Splitting at kinks keeps the local error estimate honest for piecewise
    smooth integrands.
    """
    cuts = sorted({a, b, *(x for x in breakpoints if a < x < b)})
    pieces = len(cuts) - 1
    return math.fsum(adaptive_simpson(f, lo, hi, tol=tol / pieces)
                     for lo, hi in zip(cuts[:-1], cuts[1:]))
