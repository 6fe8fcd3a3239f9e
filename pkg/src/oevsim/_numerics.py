"""Small shared numeric helpers: golden-section maximization and bisection."""

from __future__ import annotations

import math
from typing import Callable

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
_INV_PHI_SQ = (3.0 - math.sqrt(5.0)) / 2.0


def golden_max(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-10) -> tuple[float, float]:
    """Golden-section search for a maximum of a unimodal f on [lo, hi].

    Returns (x, f(x)); robust to plateaus, and never returns less than the
    better endpoint.  tol is relative to the interval width.
    """
    a, b = (lo, hi) if lo <= hi else (hi, lo)
    h = b - a
    if h <= 0.0:
        return a, f(a)
    n = max(1, int(math.ceil(math.log(max(tol, 1e-16)) / math.log(_INV_PHI))))
    c = a + _INV_PHI_SQ * h
    d = a + _INV_PHI * h
    yc, yd = f(c), f(d)
    for _ in range(n):
        if yc > yd:
            b, d, yd = d, c, yc
            h *= _INV_PHI
            c = a + _INV_PHI_SQ * h
            yc = f(c)
        else:
            a, c, yc = c, d, yd
            h *= _INV_PHI
            d = a + _INV_PHI * h
            yd = f(d)
    candidates = [(yc, c), (yd, d), (f(lo), lo), (f(hi), hi)]
    best_y, best_x = max(candidates, key=lambda t: t[0])
    return best_x, best_y


def bisect_root(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol_x: float = 1e-12,
    max_iter: int = 200,
) -> float:
    """Plain bisection for a sign change of f on [lo, hi]."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0.0) == (fhi > 0.0):
        raise ValueError(f"no sign change on [{lo}, {hi}]: f(lo)={flo}, f(hi)={fhi}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0.0) == (flo > 0.0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= tol_x * max(1.0, abs(lo), abs(hi)):
            break
    return 0.5 * (lo + hi)


def bisect_predicate(
    pred: Callable[[float], bool],
    lo: float,
    hi: float,
    tol_x: float = 1e-12,
    max_iter: int = 200,
) -> tuple[float, float]:
    """Boundary of a monotone predicate: pred(lo) True, pred(hi) False.

    Returns the final (lo, hi) bracket with pred(lo) True and pred(hi) False.
    """
    if not pred(lo):
        raise ValueError(f"predicate must hold at lo={lo}")
    if pred(hi):
        raise ValueError(f"predicate must fail at hi={hi}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if pred(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol_x * max(1.0, abs(lo), abs(hi)):
            break
    return lo, hi
