"""Adaptive Gauss-Legendre quadrature graded toward singular endpoints.

Integrands are vectorised callables.  An interval with a singular endpoint is
cut into dyadic panels ``[2^-(j+1), 2^-j]`` (scaled) down to ``2^-levels``;
in the variable ``u = -log x`` these are panels of width log 2, so this is the
``x = e^-u`` substitution done panel by panel.  Each panel is refined by
bisection until the 16- and 32-point rules agree.
"""

import math

import numpy as np

_X16, _W16 = np.polynomial.legendre.leggauss(16)
_X32, _W32 = np.polynomial.legendre.leggauss(32)

DEFAULT_LEVELS = 200
_RESOLUTION = 2.0**-45
# relative agreement reachable despite rounding in the rules themselves
_NOISE = 1e-13
_EPS = 2.0**-53


def _rule(f, a, b, nodes, weights):
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    return half * float(np.dot(weights, f(mid + half * nodes)))


def adaptive(f, a, b, tol=1e-13, max_depth=48):
    """Integral of f over [a, b] by bisection on the 16/32-point pair."""
    total = 0.0
    err = 0.0
    stack = [(a, b, 0)]
    while stack:
        lo, hi, depth = stack.pop()
        coarse = _rule(f, lo, hi, _X16, _W16)
        fine = _rule(f, lo, hi, _X32, _W32)
        if not math.isfinite(fine):
            # a node reached a singularity; refining cannot help
            total += fine
            err = math.inf
            continue
        diff = abs(fine - coarse)
        scale = tol * max(1.0, (hi - lo) / max(b - a, 1e-300))
        # abscissae carry absolute error ~ eps |x|, i.e. relative eps |x| / width
        noise = _NOISE + 4.0 * _EPS * max(abs(lo), abs(hi)) / (hi - lo)
        if diff <= max(scale, noise * abs(fine)) or depth >= max_depth:
            total += fine
            err += diff
        else:
            mid = 0.5 * (lo + hi)
            stack.append((mid, hi, depth + 1))
            stack.append((lo, mid, depth + 1))
    return total, err


def graded(f, a, b, singular="left", tol=1e-13, levels=DEFAULT_LEVELS):
    """Integral over [a, b] with a singularity at one endpoint.

    Returns ``(value, error_estimate)``; the neglected innermost piece of
    width ``(b-a) 2^-levels`` is not included in the estimate.
    """
    if b <= a:
        return 0.0, 0.0
    width = b - a
    pieces = []
    err = 0.0
    for j in range(levels):
        outer = width * 2.0 ** (-j)
        inner = width * 2.0 ** (-(j + 1))
        if singular == "left":
            lo, hi = a + inner, a + outer
        else:
            lo, hi = b - outer, b - inner
        if hi - lo <= _RESOLUTION * max(abs(lo), abs(hi)):
            # panels narrower than this lose the offset from the endpoint
            break
        v, e = adaptive(f, lo, hi, tol=tol * 2.0 ** (-min(j, 30)))
        pieces.append(v)
        err += e
    return math.fsum(pieces), err


def integrate_unit(f, singular_points=(0.0,), tol=1e-13, levels=DEFAULT_LEVELS):
    """Integral over [0, 1] graded toward every listed singular point."""
    cuts = sorted({0.0, 1.0, *(float(p) for p in singular_points if 0.0 <= p <= 1.0)})
    sing = {float(p) for p in singular_points}
    pieces = []
    err = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        left, right = lo in sing, hi in sing
        if left and right:
            mid = 0.5 * (lo + hi)
            for part in (graded(f, lo, mid, "left", tol, levels),
                         graded(f, mid, hi, "right", tol, levels)):
                pieces.append(part[0])
                err += part[1]
        elif left or right:
            v, e = graded(f, lo, hi, "left" if left else "right", tol, levels)
            pieces.append(v)
            err += e
        else:
            v, e = adaptive(f, lo, hi, tol)
            pieces.append(v)
            err += e
    return math.fsum(pieces), err
