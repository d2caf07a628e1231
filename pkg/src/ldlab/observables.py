"""Observable families on [0, 1], their truncations and their Lebesgue means.

An :class:`ObservableSpec` is an immutable description.  For the compiled
kernels it lowers to a parameter vector plus a table (see :func:`lower`), and
:func:`evaluate` is the single numba routine every kernel uses, so Monte Carlo,
transfer sums and the dynamic-programming oracle agree on the function.

Truncations act on the raw formula; ``centered`` always subtracts the mean of
the resulting (possibly truncated) function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numba as nb
import numpy as np
from scipy import special

from . import quadrature
from .errors import DomainError, SingularityError

LOGPOW = "logpow"
INVPOW = "invpow"
LOGLOG = "loglog"
CYLINDER = "cylinder"
POLY = "poly"
KINDS = (LOGPOW, INVPOW, LOGLOG, CYLINDER, POLY)
_CODE = {k: i for i, k in enumerate(KINDS)}

# parameter vector layout for the compiled evaluator
P_KIND, P_ALPHA, P_CENTER, P_LEVEL, P_RADIUS, P_SHIFT, P_DEPTH = range(7)
N_PARAMS = 8


@dataclass(frozen=True)
class ObservableSpec:
    """One observable.

    ``level_cut`` (default inf) replaces phi by min(M, phi); ``radius_cut``
    (default 0) sets phi to zero on the closed ball of that radius around the
    centre.  ``values`` holds the 2^depth cell values of a cylinder-coded
    function, ``coeffs`` the ascending coefficients of a polynomial.
    """

    kind: str
    alpha: float = 1.0
    center: float = 0.0
    centered: bool = False
    depth: int = 0
    values: tuple = ()
    coeffs: tuple = ()
    level_cut: float = math.inf
    radius_cut: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown observable kind {self.kind!r}")
        if not 0.0 <= self.center <= 1.0:
            raise DomainError("centre must lie in [0, 1]")
        if self.kind in (LOGPOW, INVPOW) and not self.alpha > 0:
            raise DomainError("alpha must be positive")
        if self.kind == INVPOW and self.center != 0.0:
            raise DomainError("InvPow is singular at 0 only")
        if self.kind == CYLINDER:
            if not 1 <= self.depth <= 24:
                raise DomainError("cylinder depth must be in [1, 24]")
            if len(self.values) != 1 << self.depth:
                raise DomainError(f"need 2^{self.depth} cell values, got {len(self.values)}")
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.kind == POLY:
            if not self.coeffs:
                raise DomainError("polynomial needs at least one coefficient")
            object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if not self.level_cut > 0:
            raise DomainError("level cut must be positive")
        if self.radius_cut < 0:
            raise DomainError("radius cut must be non-negative")

    @property
    def singular(self):
        """True when the function is unbounded near its centre."""
        return self.kind in (LOGPOW, INVPOW, LOGLOG) and math.isinf(self.level_cut) \
            and self.radius_cut == 0.0

    @property
    def raw(self):
        return replace(self, centered=False)

    @cached_property
    def shift(self):
        """Amount subtracted by centring (0 when not centered)."""
        return mean(self.raw) if self.centered else 0.0

    def __call__(self, x):
        return eval(self, x)


def log_pow(alpha=1.0, p=0.0, centered=False):
    return ObservableSpec(LOGPOW, alpha=float(alpha), center=float(p), centered=centered)


def inv_pow(alpha=0.5, centered=False):
    if not 0.0 < alpha < 1.0:
        raise DomainError("InvPow is Lebesgue-integrable only for 0 < alpha < 1")
    return ObservableSpec(INVPOW, alpha=float(alpha), centered=centered)


def log_log(p=0.0, centered=False):
    return ObservableSpec(LOGLOG, center=float(p), centered=centered)


def cylinder_coded(values, centered=False):
    values = tuple(float(v) for v in values)
    depth = int(round(math.log2(len(values)))) if values else 0
    return ObservableSpec(CYLINDER, depth=depth, values=values, centered=centered)


def polynomial(coeffs, centered=False):
    return ObservableSpec(POLY, coeffs=tuple(coeffs), centered=centered)


def parse(text: str) -> ObservableSpec:
    """Parse ``logpow:ALPHA:P``, ``invpow:ALPHA``, ``loglog:P`` or ``poly:c0:c1:...``.

    A trailing ``:c`` requests the centred version.
    """
    parts = [s.strip() for s in text.strip().lower().split(":")]
    centered = parts[-1] in ("c", "centered")
    if centered:
        parts = parts[:-1]
    kind, args = parts[0], [float(a) for a in parts[1:]]
    try:
        if kind == LOGPOW:
            return log_pow(*(args or [1.0]), centered=centered)
        if kind == INVPOW:
            return inv_pow(*(args or [0.5]), centered=centered)
        if kind == LOGLOG:
            return log_log(*(args or [0.0]), centered=centered)
        if kind == POLY:
            return polynomial(args, centered=centered)
    except TypeError as exc:
        raise DomainError(f"bad observable {text!r}: {exc}") from None
    raise DomainError(f"bad observable {text!r}")


# ---------------------------------------------------------------------------
# compiled evaluation

def lower(obs: ObservableSpec, include_shift=True):
    """Parameter vector and table consumed by :func:`evaluate`."""
    params = np.zeros(N_PARAMS)
    params[P_KIND] = _CODE[obs.kind]
    params[P_ALPHA] = obs.alpha
    params[P_CENTER] = obs.center
    params[P_LEVEL] = obs.level_cut
    params[P_RADIUS] = obs.radius_cut
    params[P_SHIFT] = obs.shift if include_shift else 0.0
    params[P_DEPTH] = obs.depth
    if obs.kind == CYLINDER:
        table = np.asarray(obs.values, dtype=np.float64)
    elif obs.kind == POLY:
        table = np.asarray(obs.coeffs, dtype=np.float64)
    else:
        table = np.zeros(1)
    return params, table


@nb.njit(inline="always")
def evaluate(params, table, x):
    """Observable value at x; +inf at the singular point."""
    kind = int(params[0])
    if kind == 3:
        d = int(params[6])
        j = int(x * (1 << d))
        if j >= table.shape[0]:
            j = table.shape[0] - 1
        v = table[j]
    elif kind == 4:
        v = 0.0
        for i in range(table.shape[0] - 1, -1, -1):
            v = v * x + table[i]
    else:
        dist = abs(x - params[2])
        r = params[4]
        if r > 0.0 and dist <= r:
            return 0.0 - params[5]
        if dist == 0.0:
            v = math.inf
        elif kind == 0:
            v = (-math.log(dist)) ** params[1]
        elif kind == 1:
            v = dist ** (-params[1])
        else:
            v = math.log(1.0 - math.log(dist))
    if v > params[3]:
        v = params[3]
    return v - params[5]


@nb.njit(nogil=True, cache=True)
def evaluate_many(params, table, xs, out):
    for i in range(xs.shape[0]):
        out[i] = evaluate(params, table, xs[i])


def eval(obs: ObservableSpec, x):
    """Value of the observable at x (scalar or array)."""
    arr = np.asarray(x, dtype=np.float64)
    if np.any((arr < 0.0) | (arr > 1.0)):
        raise DomainError("x must lie in [0, 1]")
    params, table = lower(obs)
    flat = np.ascontiguousarray(arr.reshape(-1))
    out = np.empty_like(flat)
    evaluate_many(params, table, flat, out)
    if not np.all(np.isfinite(out)):
        raise SingularityError(f"{obs.kind} is infinite at its centre {obs.center}")
    out = out.reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def vectorized(obs: ObservableSpec, include_shift=True):
    """Fast array callable without domain checks (inf at the singularity)."""
    params, table = lower(obs, include_shift)

    def f(xs):
        xs = np.ascontiguousarray(xs, dtype=np.float64)
        out = np.empty_like(xs)
        evaluate_many(params, table, xs, out)
        return out

    return f


# ---------------------------------------------------------------------------
# means

def _one_sided_integral(obs, a):
    """Integral of the raw (uncut) formula over distances t in [0, a]."""
    if a <= 0.0:
        return 0.0
    c = -math.log(a)
    if obs.kind == LOGPOW:
        s = obs.alpha + 1.0
        return float(special.gamma(s) * special.gammaincc(s, c))
    if obs.kind == INVPOW:
        return a ** (1.0 - obs.alpha) / (1.0 - obs.alpha)
    # loglog: e^{-c} log(1+c) + e E1(1+c)
    return math.exp(-c) * math.log1p(c) + math.e * float(special.exp1(1.0 + c))


def level_radius(obs: ObservableSpec, level: float) -> float:
    """Distance below which the raw formula exceeds ``level``."""
    if obs.kind == LOGPOW:
        return math.exp(-level ** (1.0 / obs.alpha)) if level > 0 else 1.0
    if obs.kind == INVPOW:
        return level ** (-1.0 / obs.alpha) if level > 0 else math.inf
    if obs.kind == LOGLOG:
        return math.exp(1.0 - math.exp(level)) if level > 0 else 1.0
    raise DomainError("level radius is defined for the singular families only")


def _closed_form_mean(obs):
    """Raw mean of a singular-family observable with its cuts."""
    p = obs.center
    sides = [p, 1.0 - p] if obs.kind != INVPOW else [1.0]
    M, r = obs.level_cut, obs.radius_cut
    rho = 0.0 if math.isinf(M) else min(level_radius(obs, M), 1.0)
    total = []
    for length in sides:
        if length <= 0.0:
            continue
        start = min(max(r, rho), length)
        total.append(_one_sided_integral(obs, length) - _one_sided_integral(obs, start))
        if not math.isinf(M):
            total.append(M * max(0.0, min(rho, length) - min(r, length)))
    return math.fsum(total)


def quadrature_mean(obs: ObservableSpec, tol=1e-13) -> float:
    """Mean by singularity-graded adaptive quadrature (independent of closed forms)."""
    if obs.kind == CYLINDER:
        return math.fsum(np.minimum(obs.values, obs.level_cut)) / len(obs.values) - obs.shift
    f = vectorized(obs, include_shift=False)
    pts = [obs.center]
    for cut in (obs.radius_cut,):
        if cut > 0:
            pts += [obs.center - cut, obs.center + cut]
    if not math.isinf(obs.level_cut) and obs.kind in (LOGPOW, INVPOW, LOGLOG):
        rho = level_radius(obs, obs.level_cut)
        pts += [obs.center - rho, obs.center + rho]
    v, _ = quadrature.integrate_unit(f, [q for q in pts if 0.0 <= q <= 1.0], tol=tol)
    return v - obs.shift


def mean(obs: ObservableSpec) -> float:
    """Lebesgue integral over [0, 1] (0 for centred observables)."""
    if obs.centered:
        return 0.0
    if obs.kind == INVPOW and obs.alpha >= 1.0:
        raise DomainError("InvPow is not integrable for alpha >= 1")
    if obs.kind == CYLINDER:
        return math.fsum(np.minimum(obs.values, obs.level_cut)) / len(obs.values)
    if obs.kind == POLY:
        if math.isinf(obs.level_cut) and obs.radius_cut == 0.0:
            return math.fsum(c / (i + 1) for i, c in enumerate(obs.coeffs))
        return quadrature_mean(obs)
    return _closed_form_mean(obs)


def raw_mean(obs: ObservableSpec) -> float:
    return mean(obs.raw)


def variance(obs: ObservableSpec) -> float:
    """Lebesgue variance by quadrature."""
    m = raw_mean(obs)
    f = vectorized(obs, include_shift=False)
    v, _ = quadrature.integrate_unit(lambda x: (f(x) - m) ** 2, [obs.center])
    return v


# ---------------------------------------------------------------------------
# truncation

@dataclass(frozen=True)
class TruncationSchedule:
    """``radius`` cut g_n (zero on the ball of radius e^(-n^beta)) or ``level`` cut min(M, phi)."""

    kind: str
    beta: float = 0.5
    M: float = math.inf
    n: int = 1

    def __post_init__(self):
        if self.kind == "radius" and not 0.0 < self.beta < 1.0:
            raise DomainError("beta must lie in (0, 1)")
        if self.kind == "level" and not self.M > 0:
            raise DomainError("level M must be positive")
        if self.kind not in ("radius", "level"):
            raise DomainError(f"unknown truncation {self.kind!r}")

    @classmethod
    def radius(cls, beta, n):
        return cls("radius", beta=float(beta), n=int(n))

    @classmethod
    def level(cls, M):
        return cls("level", M=float(M))

    @property
    def cut_radius(self):
        return math.exp(-self.n ** self.beta)


@dataclass(frozen=True)
class Truncation:
    observable: ObservableSpec
    sup_norm: float
    bv_bound: float


def sup_norm(obs: ObservableSpec) -> float:
    """Supremum of |raw formula| over [0, 1]."""
    if obs.kind == CYLINDER:
        return float(np.max(np.abs(np.minimum(obs.values, obs.level_cut))))
    if obs.kind == POLY:
        x = np.linspace(0.0, 1.0, 1 << 14)
        vals = np.minimum(np.polynomial.polynomial.polyval(x, obs.coeffs), obs.level_cut)
        return float(np.max(np.abs(vals)))
    peak = math.inf
    if obs.radius_cut > 0:
        r = obs.radius_cut
        if obs.kind == LOGPOW:
            peak = (-math.log(r)) ** obs.alpha
        elif obs.kind == INVPOW:
            peak = r ** (-obs.alpha)
        else:
            peak = math.log(1.0 - math.log(r))
    return min(peak, obs.level_cut)


def truncate(obs: ObservableSpec, sched: TruncationSchedule) -> Truncation:
    """Apply a truncation; report the sup-norm and the BV bound 3 sup-norm."""
    if obs.kind not in (LOGPOW, INVPOW, LOGLOG) and sched.kind == "radius":
        raise DomainError("radius cuts apply to the singular families only")
    if sched.kind == "radius":
        out = replace(obs, radius_cut=max(obs.radius_cut, sched.cut_radius))
    else:
        out = replace(obs, level_cut=min(obs.level_cut, sched.M))
    s = sup_norm(out)
    return Truncation(out, s, 3.0 * s)


def total_variation(obs: ObservableSpec) -> float:
    """Total variation of the raw function on [0, 1]."""
    if obs.kind == CYLINDER:
        v = np.minimum(obs.values, obs.level_cut)
        return float(np.sum(np.abs(np.diff(v))))
    if obs.kind == POLY:
        x = np.linspace(0.0, 1.0, (1 << 16) + 1)
        v = np.minimum(np.polynomial.polynomial.polyval(x, obs.coeffs), obs.level_cut)
        return float(np.sum(np.abs(np.diff(v))))
    # the singular families are monotone in the distance to the centre
    top = sup_norm(obs)
    if math.isinf(top):
        return math.inf
    f = vectorized(obs, include_shift=False)
    ends = f(np.array([0.0, 1.0]))
    ends = np.where(np.isfinite(ends), ends, top)
    out = 0.0
    jump = obs.radius_cut > 0
    for e, side in zip(ends, (obs.center, 1.0 - obs.center)):
        if side > 0:
            out += (top - e) + (top if jump and side > obs.radius_cut else 0.0)
    return float(out)


def to_cylinder(obs: ObservableSpec, depth: int) -> ObservableSpec:
    """Midpoint sampling on the 2^depth dyadic cells (a controlled approximation)."""
    mids = (np.arange(1 << depth) + 0.5) / (1 << depth)
    vals = vectorized(obs.raw)(mids)
    return cylinder_coded(vals, centered=obs.centered)
