"""Bracketed scalar root finding and minimisation."""
import math

from .errors import ValidationError

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def bisect(f, lo, hi, xtol=1e-10, ftol=0.0, max_iter=200):
    """Root of ``f`` on ``[lo, hi]`` by bisection.

    ``f(lo)`` and ``f(hi)`` must have opposite signs (or one of them is zero).
    Stops when the bracket is narrower than ``xtol`` or ``|f| <= ftol``.
    """
    flo = f(lo)
    fhi = f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise ValidationError(f"bisect: no sign change on [{lo!r}, {hi!r}] (f={flo!r}, {fhi!r})")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0 or abs(fm) <= ftol or hi - lo <= xtol:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def golden_min(f, lo, hi, xtol=1e-8, max_iter=500):
    """Minimiser of a unimodal ``f`` on ``[lo, hi]`` by golden-section search."""
    if hi < lo:
        lo, hi = hi, lo
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= xtol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    best = min((a, f(a)), (b, f(b)), ((a + b) / 2.0, f((a + b) / 2.0)), key=lambda t: t[1])
    return best[0]
