"""Stretched-exponent fits and the exact lower-bound interval certificate."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy import stats

from .. import observables as O
from ..dynamics import DOUBLING, TENT, MapSpec, iterate
from ..errors import CertificateError, DomainError, InsufficientDataError
from .tail import RELIABLE_COUNT, TailEstimate

MIN_POINTS = 4
MIN_SPAN = 8.0


@dataclass(frozen=True)
class ExponentFit:
    """gamma_hat = slope of log(-log p) against log n."""

    pairs: tuple
    gamma_hat: float
    stderr: float
    intercept: float
    n_range: tuple

    def as_record(self):
        return {"gamma_hat": self.gamma_hat, "stderr": self.stderr,
                "n_min": self.n_range[0], "n_max": self.n_range[1], "points": len(self.pairs)}


def _pair(point):
    if isinstance(point, TailEstimate):
        ok = RELIABLE_COUNT <= point.count < point.N
        return point.query.n, point.p_hat, ok
    n, p = point
    return int(n), float(p), 0.0 < p < 1.0


def fit_exponent(points) -> ExponentFit:
    """Least-squares exponent from tail estimates or (n, p) pairs.

    Only reliable estimates (at least 10 hits, p < 1) enter; at least four
    of them spanning a factor of 8 in n are required.
    """
    used = sorted((n, p) for n, p, ok in map(_pair, points) if ok)
    if len(used) < MIN_POINTS:
        raise InsufficientDataError(f"need {MIN_POINTS} reliable points, have {len(used)}")
    ns = np.array([n for n, _ in used], dtype=float)
    if ns.max() / ns.min() < MIN_SPAN:
        raise InsufficientDataError(f"reliable points span a factor {ns.max() / ns.min():.3g} < 8 in n")
    ps = np.array([p for _, p in used])
    fit = stats.linregress(np.log(ns), np.log(-np.log(ps)))
    return ExponentFit(tuple(used), float(fit.slope), float(fit.stderr), float(fit.intercept),
                       (int(ns.min()), int(ns.max())))


# ---------------------------------------------------------------------------
# lower-bound construction

@dataclass(frozen=True)
class Certificate:
    points: int
    failures: int
    min_margin: float
    bits: int


@dataclass(frozen=True)
class LowerBound:
    """Every point of [p, p + width] has S_n - n mean >= n eps; so p_n >= m * width."""

    n: int
    eps: float
    r: float
    omega: float
    width: float
    log_width: float
    log_prob_lower: float
    certificate: Certificate

    @property
    def interval(self):
        return (0.0, self.width)

    def as_record(self):
        return {"n": self.n, "eps": self.eps, "r": self.r, "omega": self.omega,
                "log_width": self.log_width, "log_prob_lower": self.log_prob_lower,
                "points": self.certificate.points, "failures": self.certificate.failures,
                "min_margin": self.certificate.min_margin}


def _neglog_ratio(y: int, bits: int) -> float:
    """-log(y / 2^bits) for a positive integer y, to double precision."""
    bl = y.bit_length()
    top = y >> (bl - 64) if bl > 64 else y << (64 - bl)
    return (bits - bl) * math.log(2.0) - math.log(top * 2.0**-64)


def _orbit_sum_exact(m: MapSpec, obs, x: int, bits: int, n: int) -> float:
    """Birkhoff sum of LogPow(alpha, p=0) along the exact orbit of x / 2^bits."""
    mask = (1 << bits) - 1
    half = 1 << (bits - 1)
    full = 1 << (bits + 1)
    terms = []
    y = x
    for _ in range(n):
        if y == 0:
            return math.inf
        terms.append(_neglog_ratio(y, bits) ** obs.alpha)
        if m.kind == DOUBLING:
            y = (y << 1) & mask
        else:
            y = y << 1 if y <= half else full - (y << 1)
    return math.fsum(terms)


def _orbit_sum_mp(m: MapSpec, obs, x, n: int) -> float:
    terms = []
    p = mpmath.mpf(obs.center)
    for _ in range(n):
        d = abs(x - p)
        if d == 0:
            return math.inf
        terms.append(float((-mpmath.log(d)) ** obs.alpha))
        x = _iterate_mp(m, x)
    return math.fsum(terms)


def _iterate_mp(m, x):
    edges = [mpmath.mpf(e) for e in m.edges]
    for a, b, s in zip(edges[:-1], edges[1:], m.slopes):
        if x < b or b == edges[-1]:
            return s * (x - a) if s > 0 else -s * (b - x)
    return x


def lower_bound_construction(m: MapSpec, obs, n: int, eps: float, samples: int = 1000,
                             seed: int = 0, slack: float = 0.01,
                             density: float = 1.0) -> LowerBound:
    """Build and certify the interval [p, p + e^(-r n^omega)] for LogPow(alpha, p)."""
    if obs.kind != O.LOGPOW or obs.center != 0.0:
        raise DomainError("the construction needs LogPow centred at the fixed point p = 0")
    if m.periodic_point != 0.0 or m.period != 1:
        raise DomainError("the map's periodic point must be the fixed point 0")
    if abs(iterate(m, 0.0)) > 0.0:
        raise DomainError("0 is not fixed by this map")
    if not eps > 0:
        raise DomainError("eps must be positive")
    lam = abs(m.slopes[m.branch(0.0)])
    mean = O.raw_mean(obs)
    omega = 1.0 / (1.0 + obs.alpha)
    r = (mean + eps) ** (1.0 / obs.alpha) + math.log(lam) + slack
    scale = r * n ** omega
    bits = n + 128 + math.ceil(scale / math.log(2.0))

    with mpmath.workprec(bits + 64):
        width = mpmath.exp(-mpmath.mpf(r) * mpmath.mpf(n) ** omega)
        top = int(mpmath.floor(width * mpmath.mpf(2) ** bits))
    rng = random.Random(seed)
    xs = [rng.randrange(1, top + 1) | 1 for _ in range(samples - 1)] + [top]

    margins = []
    for x in xs:
        if m.kind in (DOUBLING, TENT):
            s = _orbit_sum_exact(m, obs, x, bits, n)
        else:
            with mpmath.workprec(bits + 64):
                s = _orbit_sum_mp(m, obs, mpmath.mpf(x) / mpmath.mpf(2) ** bits, n)
        margins.append(s / n - mean - eps)
    failures = sum(1 for v in margins if not v >= 0.0)
    cert = Certificate(len(xs), failures, float(min(margins)), bits)
    if failures:
        raise CertificateError(f"{failures} of {len(xs)} sampled points fail at n={n}",
                               n=n, failures=failures)
    return LowerBound(n=n, eps=eps, r=r, omega=omega, width=float(width), log_width=-scale,
                      log_prob_lower=math.log(density) - scale, certificate=cert)
