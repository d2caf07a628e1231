"""Closed-form concentration bounds and the pressure diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import observables as O
from .. import quadrature
from ..dynamics import MapSpec
from ..errors import DomainError


def azuma_bound(A: float, M) -> float:
    """exp(-A^2 / (2 sum M_i^2)) for a martingale with increments bounded by M_i."""
    M = np.atleast_1d(np.asarray(M, dtype=float))
    if not A > 0 or np.any(M <= 0):
        raise DomainError("A and every M_i must be positive")
    if math.isinf(A):
        return 0.0
    return math.exp(-A * A / (2.0 * math.fsum(M * M)))


def schindler_bound(E_n: float, f_n: float, xi_n: float) -> float:
    """2 exp(-xi_n E_n / f_n), the deviation bound for a truncated Birkhoff sum."""
    if E_n <= 0 or f_n <= 0 or xi_n < 0:
        raise DomainError("E_n and f_n must be positive and xi_n non-negative")
    return 2.0 * math.exp(-xi_n * E_n / f_n)


@dataclass(frozen=True)
class LevelRow:
    M: float
    radius: float
    slope: float
    finite_n: dict


@dataclass(frozen=True)
class IntegrabilityRow:
    n: int
    exponent: float
    infinite: bool


@dataclass
class PressureReport:
    t: float
    lam: float
    density: float
    levels: list = field(default_factory=list)
    integrability: list = field(default_factory=list)

    def records(self):
        out = []
        for row in self.levels:
            rec = {"kind": "level", "M": row.M, "radius": row.radius, "slope": row.slope}
            rec.update({f"bound_n{n}": v for n, v in row.finite_n.items()})
            out.append(rec)
        for row in self.integrability:
            out.append({"kind": "integrability", "n": row.n, "exponent": row.exponent,
                        "infinite": row.infinite})
        return out


def pressure_diagnostics(m: MapSpec, obs: O.ObservableSpec, t: float, M_list,
                         n_list=(2, 5, 10, 20, 50, 100), density: float = 1.0) -> PressureReport:
    """Lower bounds on liminf (1/n) log int e^(t S_n) and local integrability near p.

    For each level M the orbit of every point within r(M) lambda^-n of p keeps
    phi > M for n steps, giving t M - log lambda + log(c r) / n; the
    n-independent slope is t M - log lambda.  Near p, e^(t S_n) behaves like
    |x - p|^(-n t), so the integral is infinite once n t >= 1.
    """
    if obs.kind != O.LOGPOW or obs.alpha != 1.0:
        raise DomainError("pressure diagnostics are stated for LogPow(1, p)")
    if obs.center != m.periodic_point:
        raise DomainError("observable must be centred on the map's periodic point")
    if not t > 0:
        raise DomainError("t must be positive")
    lam = abs(m.slopes[m.branch(m.periodic_point)]) if m.period == 1 else m.deriv_bound
    report = PressureReport(t, lam, density)
    for M in M_list:
        r = O.level_radius(obs.raw, M + obs.shift)
        slope = t * M - math.log(lam)
        finite = {int(n): slope + math.log(density * r) / n for n in n_list}
        report.levels.append(LevelRow(float(M), r, slope, finite))
    for n in n_list:
        report.integrability.append(IntegrabilityRow(int(n), n * t, n * t >= 1.0))
    return report


def mgf_partial_integral(obs: O.ObservableSpec, n: int, t: float, depth: int) -> float:
    """Integral of e^(t S_n) over [2^-depth, 1] for the doubling map.

    Breakpoints are the dyadic points j 2^-(n-1), the preimages of the
    singularity at 0; quadrature is graded toward each left endpoint.  If the
    full integral diverges at 0 the value grows without bound in ``depth``.
    """
    if obs.kind != O.LOGPOW or obs.center != 0.0:
        raise DomainError("needs LogPow centred at 0")
    if not 1 <= n <= 10:
        raise DomainError("n must lie in [1, 10]")
    f = O.vectorized(obs)

    def integrand(x):
        s = np.zeros_like(x)
        y = x.copy()
        for _ in range(n):
            s += f(y)
            y = np.mod(2.0 * y, 1.0)
        return np.exp(t * s)

    pieces = []
    width = 2.0 ** (-(n - 1))
    first_levels = depth - (n - 1)
    if first_levels > 0:
        pieces.append(quadrature.graded(integrand, 0.0, width, "left", levels=first_levels)[0])
    for j in range(1, 1 << (n - 1)):
        pieces.append(quadrature.graded(integrand, j * width, (j + 1) * width, "left")[0])
    return math.fsum(pieces)
