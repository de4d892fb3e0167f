"""Small numeric primitives: guarded bisection and golden-section search.

Bisection is the root method of record here (guaranteed convergence, no
derivative requirements); callers that need a bracket scan for it first.
"""

from __future__ import annotations

import math
from typing import Callable

from .errors import NoBracketError

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def bisect_root(
    g: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-12,
    max_iter: int = 200,
) -> float:
    """Root of g on [lo, hi] by bisection; g(lo) and g(hi) must differ in sign.

    Iterates until the bracket width and |g(mid)| are both below tol (or
    max_iter halvings, which already exhausts double precision).
    """
    glo, ghi = g(lo), g(hi)
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    if (glo < 0.0) == (ghi < 0.0):
        raise NoBracketError(f"no sign change on [{lo}, {hi}]: g={glo}, {ghi}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        gmid = g(mid)
        if gmid == 0.0:
            return mid
        if (gmid < 0.0) == (glo < 0.0):
            lo, glo = mid, gmid
        else:
            hi = mid
        if hi - lo < tol and abs(gmid) < tol:
            break
    return 0.5 * (lo + hi)


def scan_bracket_below(
    g: Callable[[float], float],
    hi: float,
    start: float,
    grow: float = 2.0,
    limit: int = 200,
) -> float:
    """Find x in (0, hi) with g(x) < 0 by geometric scan upward from start.

    Used to exclude a trivial root at 0: the interesting root sits above the
    first point where g dips negative.
    """
    x = start
    for _ in range(limit):
        if x >= hi:
            break
        if g(x) < 0.0:
            return x
        x *= grow
    raise NoBracketError(f"no negative value of g found scanning up to {hi}")


def golden_min(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    xtol: float = 1e-9,
) -> tuple[float, float]:
    """Minimize a unimodal f on [lo, hi] by golden-section; returns (x, f(x))."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def grid_then_golden(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    coarse: int = 64,
    xtol: float = 1e-9,
) -> tuple[float, float]:
    """Coarse scan to bracket the minimum, then golden-section refinement.

    Safer than golden-section alone when unimodality is only numerical.
    """
    step = (hi - lo) / coarse
    xs = [lo + k * step for k in range(coarse + 1)]
    vals = [f(x) for x in xs]
    k = min(range(len(vals)), key=vals.__getitem__)
    a = xs[max(k - 1, 0)]
    b = xs[min(k + 1, coarse)]
    return golden_min(f, a, b, xtol=xtol)
