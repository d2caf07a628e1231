"""Exact transfer-operator iterates for the doubling map and the cylinder DP.

The doubling transfer operator has the closed form

    P^n f(x) = 2^-n * sum_{k < 2^n} f((x + k) / 2^n),

evaluated here by compensated summation.  For an observable singular at 0
only the k = 0 node approaches the singularity, so

    P^n f(x) = 2^-n f(x / 2^n) + R_n(x),

with R_n analytic on [0, 1].  Integrals of P^n f use that split: R_n is
replaced by a Chebyshev interpolant and the singular term is handled by the
dyadic-graded quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numba as nb
import numpy as np
from numpy.polynomial import Chebyshev
from numpy.polynomial import polynomial as npoly
from scipy import stats

from . import observables as O
from . import quadrature
from .errors import BudgetError, DomainError

MAX_TRANSFER_N = 26
_JITTER = 2.0**-60
_CHEB_DEG = 64
DEFAULT_THETA = math.log(2.0)


# ---------------------------------------------------------------------------
# transfer sums

@nb.njit(nogil=True, cache=True)
def _transfer_sums(params, table, xs, n, k_start, out):
    m = 1 << n
    inv = 1.0 / m
    for i in range(xs.shape[0]):
        x = xs[i]
        s = 0.0
        c = 0.0
        for k in range(k_start, m):
            v = O.evaluate(params, table, (x + k) * inv)
            t = s + v
            if abs(s) >= abs(v):
                c += (s - t) + v
            else:
                c += (v - t) + s
            s = t
        out[i] = (s + c) * inv


def _check_n(n):
    if n < 0:
        raise DomainError("n must be non-negative")
    if n > MAX_TRANSFER_N:
        raise BudgetError(f"P^{n} needs 2^{n} terms per point (limit n <= {MAX_TRANSFER_N})",
                          suggestion=MAX_TRANSFER_N)


def _sums(obs, xs, n, k_start=0):
    params, table = O.lower(obs)
    xs = np.ascontiguousarray(np.atleast_1d(np.asarray(xs, dtype=np.float64)))
    out = np.empty_like(xs)
    _transfer_sums(params, table, xs, n, k_start, out)
    bad = ~np.isfinite(out)
    if np.any(bad):
        # a node landed on the singularity: jitter and re-sum
        moved = np.ascontiguousarray(np.minimum(xs[bad] + _JITTER, 1.0 - 2.0**-53))
        fixed = np.empty_like(moved)
        _transfer_sums(params, table, moved, n, k_start, fixed)
        out[bad] = fixed
    return out


def apply_transfer(obs, n: int, x):
    """Exact P^n obs at x (scalar or array) for the doubling map."""
    _check_n(n)
    if isinstance(obs, np.ndarray) or callable(obs) and not isinstance(obs, O.ObservableSpec):
        raise DomainError("apply_transfer expects an ObservableSpec")
    arr = np.asarray(x, dtype=np.float64)
    if np.any((arr < 0.0) | (arr >= 1.0)):
        raise DomainError("x must lie in [0, 1)")
    if obs.kind == O.POLY and n > 0:
        out = npoly.polyval(arr, poly_transfer(obs.coeffs, n)) - obs.shift
    else:
        out = _sums(obs, arr.reshape(-1), n).reshape(arr.shape)
    return float(out) if np.ndim(out) == 0 else out


def poly_transfer(coeffs, n=1):
    """Ascending coefficients of P^n applied to a polynomial."""
    c = np.asarray(coeffs, dtype=np.float64)
    half = npoly.Polynomial([0.5, 0.5])
    for _ in range(n):
        p = npoly.Polynomial(c)
        scaled = c * 0.5 ** np.arange(len(c))
        c = 0.5 * (scaled + p(half).coef[: len(c)])
    return c


@dataclass
class TransferIterate:
    """P^n obs for the doubling map, split as singular term plus analytic remainder."""

    obs: O.ObservableSpec
    n: int
    deg: int = _CHEB_DEG
    regular: Chebyshev = field(init=False, repr=False)

    def __post_init__(self):
        _check_n(self.n)
        if self.n == 0:
            self.regular = Chebyshev([0.0], domain=[0.0, 1.0])
            return
        nodes = 0.5 - 0.5 * np.cos(np.pi * (np.arange(self.deg + 1) + 0.5) / (self.deg + 1))
        vals = _sums(self.obs, nodes, self.n, k_start=1)
        self.regular = Chebyshev.fit(nodes, vals, self.deg, domain=[0.0, 1.0])

    def singular(self, x):
        f = O.vectorized(self.obs)
        scale = 2.0 ** (-self.n)
        return scale * f(np.asarray(x, dtype=np.float64) * scale)

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.singular(x) + self.regular(x)

    def exact(self, x):
        return apply_transfer(self.obs, self.n, x)


# ---------------------------------------------------------------------------
# norms and correlations

def _singular_points(obs):
    pts = [obs.center]
    if obs.kind in (O.LOGPOW, O.INVPOW, O.LOGLOG) and not math.isinf(obs.level_cut):
        pts.append(min(O.level_radius(obs, obs.level_cut), 1.0))
    return pts


def lp_norm(obs, n, p, grid=10_000):
    """||P^n obs||_p for the doubling map; ``p = inf`` uses a uniform grid proxy."""
    if math.isinf(p) and obs.kind == O.POLY:
        x = np.linspace(0.0, 1.0, grid, endpoint=False)
        return float(np.max(np.abs(apply_transfer(obs, n, x))))
    it = TransferIterate(obs, n)
    if math.isinf(p):
        x = np.linspace(0.0, 1.0, grid, endpoint=False)
        vals = it(x[1:]) if obs.singular else it(x)
        return float(np.max(np.abs(vals)))
    if obs.kind == O.INVPOW and p * obs.alpha >= 1.0:
        raise DomainError("||InvPow||_p is infinite for p >= 1/alpha")
    pts = [q * 2.0 ** (-n) for q in _singular_points(obs)]
    v, _ = quadrature.integrate_unit(lambda x: np.abs(it(x)) ** p, pts, tol=1e-14)
    return v ** (1.0 / p)


@dataclass(frozen=True)
class DecayCurve:
    n: np.ndarray
    norm: np.ndarray
    slope: float
    intercept: float
    fit_from: int


def lp_decay_curve(obs, p: float, n_max: int, fit_from: int = 2) -> DecayCurve:
    """n -> ||P^n (obs - mean)||_p for n = 0..n_max with a fitted log-slope."""
    if n_max > 20:
        raise BudgetError("lp_decay_curve is limited to n_max <= 20", suggestion=20)
    if p < 1:
        raise DomainError("p must be at least 1")
    if obs.kind == O.INVPOW and not math.isinf(p) and p * obs.alpha >= 1.0:
        raise DomainError("||InvPow||_p is infinite for p >= 1/alpha")
    c = _centered(obs)
    ns = np.arange(n_max + 1)
    norms = np.array([lp_norm(c, int(k), p) for k in ns])
    sel = ns >= fit_from
    fit = stats.linregress(ns[sel], np.log(norms[sel]))
    return DecayCurve(ns, norms, float(fit.slope), float(fit.intercept), fit_from)


def _centered(obs):
    return obs if obs.centered else replace(obs, centered=True)


def autocorrelation(obs, n: int) -> float:
    """Integral of obs * P^n(obs - mean) over [0, 1], i.e. Cov(obs o T^n, obs)."""
    if n > 20:
        raise BudgetError("autocorrelation is limited to n <= 20", suggestion=20)
    c = _centered(obs)
    f = O.vectorized(c)
    it = TransferIterate(c, n)
    pts = sorted({q for q in _singular_points(c)} | {q * 2.0 ** (-n) for q in _singular_points(c)})
    v, _ = quadrature.integrate_unit(lambda x: f(x) * it(x), pts, tol=1e-14)
    return v


# ---------------------------------------------------------------------------
# martingale decomposition

@dataclass
class MartingaleParts:
    """h - mean(h) = g + w o T - w with P g = P^(C+1)(h - mean(h))."""

    n: int
    M_n: float
    C_n: int
    theta: float
    h: O.ObservableSpec
    h_mean: float
    variation: float
    tail_bound: float
    w_tail_bound: float
    sup_w: float
    residual: float
    telescoping_error: float
    grid: np.ndarray = field(repr=False)
    w_grid: np.ndarray = field(repr=False)
    g_grid: np.ndarray = field(repr=False)
    _w: object = field(repr=False, default=None)

    def w(self, x):
        return self._w(np.asarray(x, dtype=np.float64))

    def g(self, x):
        x = np.asarray(x, dtype=np.float64)
        hb = O.vectorized(self.h)(x) - self.h_mean
        return hb - self.w(np.mod(2.0 * x, 1.0)) + self.w(x)


def _w_function(hbar, C):
    """x -> sum_{k=1}^C P^k hbar (x), exact."""
    if hbar.kind == O.POLY:
        total = np.zeros(len(hbar.coeffs))
        base = np.asarray(hbar.coeffs)
        for k in range(1, C + 1):
            total = total + poly_transfer(base, k)
        # hbar is centred by an explicit constant, so the shift passes through P
        shift = hbar.shift

        def w(x):
            return npoly.polyval(x, total) - C * shift
        return w

    def w(x):
        x = np.ascontiguousarray(np.atleast_1d(x).reshape(-1))
        acc = np.zeros_like(x)
        for k in range(1, C + 1):
            acc += _sums(hbar, x, k)
        return acc
    return w


def martingale_decompose(obs, n: int, alpha: float, theta: float = DEFAULT_THETA,
                         terms: int | None = None, grid_bits: int = 12,
                         residual_bits: int = 10) -> MartingaleParts:
    """Decompose the level-cut observable at M_n = n^((1-alpha)/4).

    ``terms`` overrides C_n = ceil(M_n / theta).  The tail bounds use the
    doubling-map estimate |P^k f|_inf <= e^(-theta k) Var(f) (C_T = 1), which is
    rigorous for theta <= log 2.
    """
    if not 0.0 <= alpha <= 0.2:
        raise DomainError("alpha must lie in [0, 1/5]")
    if theta <= 0:
        raise DomainError("theta must be positive")
    M = n ** ((1.0 - alpha) / 4.0)
    C = int(math.ceil(M / theta)) if terms is None else int(terms)
    if obs.kind != O.POLY and C > 24:
        raise BudgetError(f"C_n = {C} exceeds the exact-evaluation budget of 24; use smaller n",
                          suggestion=24)
    h = O.truncate(obs.raw, O.TruncationSchedule.level(M)).observable
    if obs.kind == O.POLY and O.sup_norm(obs.raw) > M:
        raise DomainError("the polynomial route needs sup|f| <= M_n")
    hbar = replace(h, centered=True)
    h_mean = O.mean(h)
    var = O.total_variation(h)
    q = math.exp(-theta)
    tail = q ** (C + 1) * var
    w_tail = q ** (C + 1) / (1.0 - q) * var
    w = _w_function(hbar, C)

    grid = (np.arange(1 << grid_bits) + 0.5) / (1 << grid_bits)
    w_grid = w(grid)
    w_image = w(np.mod(2.0 * grid, 1.0))
    hb = O.vectorized(h)(grid) - h_mean
    g_grid = hb - w_image + w_grid
    # recompose from the parts with independently evaluated terms
    recomposed = g_grid + w(np.mod(2.0 * grid, 1.0)) - w(grid)
    tele = float(np.max(np.abs(recomposed - (O.vectorized(h)(grid) - h_mean))))

    # P g(x) = P hbar(x) - w(x) + P w(x), since w(T(x/2)) = w(T((x+1)/2)) = w(x)
    rg = (np.arange(1 << residual_bits) + 0.5) / (1 << residual_bits)
    if hbar.kind == O.POLY:
        p_hbar = npoly.polyval(rg, poly_transfer(hbar.coeffs, 1)) - hbar.shift
    else:
        p_hbar = _sums(hbar, rg, 1)
    pw = 0.5 * (w(0.5 * rg) + w(0.5 * (rg + 1.0)))
    residual = float(np.max(np.abs(p_hbar - w(rg) + pw)))
    return MartingaleParts(n=n, M_n=M, C_n=C, theta=theta, h=h, h_mean=h_mean, variation=var,
                           tail_bound=tail, w_tail_bound=w_tail,
                           sup_w=float(np.max(np.abs(w_grid))), residual=residual,
                           telescoping_error=tele, grid=grid, w_grid=w_grid, g_grid=g_grid,
                           _w=w)


# ---------------------------------------------------------------------------
# cylinder dynamic programme

@nb.njit(nogil=True, cache=True)
def _cylinder_counts(idx, d, n, lo, width):
    """Counts of sum-of-indices over all 2^(d-1+n) bit strings (state = last d-1 bits)."""
    nstate = 1 << (d - 1)
    mask = nstate - 1
    vmin = idx.min()
    vmax = idx.max()
    cur = np.zeros((nstate, width), dtype=np.int64)
    nxt = np.zeros((nstate, width), dtype=np.int64)
    for s in range(nstate):
        cur[s, -lo] = 1
    for step in range(n):
        a = step * vmin - lo
        b = step * vmax - lo
        nxt[:, :] = 0
        for s in range(nstate):
            for bit in range(2):
                c = (s << 1) | bit
                v = idx[c]
                t = c & mask
                for j in range(a, b + 1):
                    nxt[t, j + v] += cur[s, j]
        cur, nxt = nxt, cur
    out = np.zeros(width, dtype=np.int64)
    for s in range(nstate):
        for j in range(width):
            out[j] += cur[s, j]
    return out


@nb.njit(nogil=True, cache=True)
def _cylinder_mass(idx, d, n, lo, width):
    """Floating-point version of _cylinder_counts for n + d - 1 > 62."""
    nstate = 1 << (d - 1)
    mask = nstate - 1
    vmin = idx.min()
    vmax = idx.max()
    cur = np.zeros((nstate, width))
    nxt = np.zeros((nstate, width))
    for s in range(nstate):
        cur[s, -lo] = 1.0 / nstate
    for step in range(n):
        a = step * vmin - lo
        b = step * vmax - lo
        nxt[:, :] = 0.0
        for s in range(nstate):
            for bit in range(2):
                c = (s << 1) | bit
                v = idx[c]
                t = c & mask
                for j in range(a, b + 1):
                    nxt[t, j + v] += 0.5 * cur[s, j]
        cur, nxt = nxt, cur
    out = np.zeros(width)
    for s in range(nstate):
        for j in range(width):
            out[j] += cur[s, j]
    return out


@dataclass(frozen=True)
class SumDistribution:
    """Two exact laws bracketing S_n of a cylinder-coded observable.

    ``lower`` is the law of the sum of values rounded down to the grid
    ``delta Z`` and ``upper`` the law of the rounded-up sum, so for every t
    P(S_down >= t) <= P(S_n >= t) <= P(S_up >= t).  ``support`` lists the
    grid values k * delta indexed like both mass vectors.
    """

    n: int
    delta: float
    depth: int
    support: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    exact: bool

    def tail_bounds(self, t):
        """Bounds on P(S_n >= t)."""
        sel = self.support >= t
        return float(np.sum(self.lower[sel])), float(np.sum(self.upper[sel]))

    def lower_tail_bounds(self, t):
        """Bounds on P(S_n <= t)."""
        sel = self.support <= t
        return float(np.sum(self.upper[sel])), float(np.sum(self.lower[sel]))

    def cdf_bounds(self):
        """Pointwise bounds on P(S_n <= support[i]) for every grid point."""
        return np.cumsum(self.upper), np.cumsum(self.lower)


DP_BUDGET_BYTES = 2 * 1024**3


def cylinder_dp(obs, n: int, delta: float, budget_bytes: int = DP_BUDGET_BYTES) -> SumDistribution:
    """Exact bracketing laws of S_n(obs) under Lebesgue for a cylinder observable."""
    if obs.kind != O.CYLINDER:
        raise DomainError("cylinder_dp needs a cylinder-coded observable")
    if not delta > 0:
        raise DomainError("delta must be positive")
    d = obs.depth
    if d > 16:
        raise DomainError("cylinder depth must be at most 16")
    if n < 1:
        raise DomainError("n must be positive")
    params, table = O.lower(obs)
    values = np.array([O.evaluate(params, table, (j + 0.5) / (1 << d)) for j in range(1 << d)])
    nstate = 1 << (d - 1)
    down = np.floor(values / delta).astype(np.int64)
    up = np.ceil(values / delta).astype(np.int64)
    # the quotient may round across an integer; make the rounding directed
    down -= (down * delta > values).astype(np.int64)
    up += (up * delta < values).astype(np.int64)
    lo = n * min(int(down.min()), 0)
    hi = n * max(int(up.max()), 0)
    width = hi - lo + 1
    need = 2 * nstate * width * 8
    if need > budget_bytes:
        spread = float(values.max() - values.min()) or 1.0
        feasible = spread * n * 2 * nstate * 8 / budget_bytes
        raise BudgetError(f"DP needs {need / 2**30:.2f} GiB (budget {budget_bytes / 2**30:.2f} GiB)",
                          suggestion=feasible)
    exact = n + d - 1 <= 62
    out = []
    for idx in (down, up):
        if exact:
            counts = _cylinder_counts(idx, d, n, lo, width)
            out.append(counts / float(2 ** (n + d - 1)))
        else:
            out.append(_cylinder_mass(idx, d, n, lo, width))
    support = (np.arange(width) + lo) * delta
    return SumDistribution(n, float(delta), d, support, out[0], out[1], exact)
