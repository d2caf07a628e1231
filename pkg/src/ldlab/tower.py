"""A Young tower whose coboundary observable has exponential tails but no rate function.

Column k >= 1 has n(k) = 12^k rising levels followed by n(k) falling ones
(height R(k) = 2 n(k)); column 0 is a single level.  From any column top the
chain returns to the base of column k' with probability p_k' proportional to
e^(-n(k')/2) (with n(0) read as 1/2).  The observable f is +1 on rising
levels, -1 on falling ones and 0 on column 0; it is the coboundary
psi o F - psi with psi the height above the nearer column end.

Masses span e^(-n(K)/2), so everything is computed in extended precision
(numpy longdouble, logs where needed) with exact constants from mpmath.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .errors import BudgetError, DomainError

LD = np.longdouble
MAX_K = 4
MAX_DIST_K = 2
MAX_DIST_N = 300
MAX_MGF_N = 10_000


def column_n(k: int) -> int:
    return 12**k if k >= 1 else 0


def column_height(k: int) -> int:
    return 2 * 12**k if k >= 1 else 1


def _lse(x):
    m = np.max(x)
    if not np.isfinite(m):
        return m
    return m + np.log(np.sum(np.exp(x - m)))


@dataclass
class TowerModel:
    K: int
    heights: np.ndarray
    log_C: float
    log_Z: float
    log_p: np.ndarray = field(repr=False)
    col: np.ndarray = field(repr=False)
    level: np.ndarray = field(repr=False)
    f: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)
    nxt: np.ndarray = field(repr=False)
    tops: np.ndarray = field(repr=False)
    bases: np.ndarray = field(repr=False)
    log_nu: np.ndarray = field(repr=False)
    log10_tail: float = 0.0

    @property
    def n_states(self) -> int:
        return int(self.col.shape[0])

    @property
    def p(self):
        return np.exp(self.log_p)

    @property
    def nu(self):
        return np.exp(self.log_nu)

    @property
    def C(self):
        return math.exp(self.log_C)

    @property
    def Z(self):
        return math.exp(self.log_Z)

    def state(self, k: int, j: int) -> int:
        return int(self.bases[k]) + j


def build(K: int = 3) -> TowerModel:
    """Columns 0..K with exact normalising constants."""
    if not 1 <= K <= MAX_K:
        raise DomainError(f"K must lie in [1, {MAX_K}]")
    with mpmath.workdps(60):
        logw = [mpmath.mpf(-1) / 4] + [-mpmath.mpf(column_n(k)) / 2 for k in range(1, K + 1)]
        log_C = -mpmath.log(mpmath.fsum(mpmath.exp(w) for w in logw))
        log_p = [log_C + w for w in logw]
        heights = [column_height(k) for k in range(K + 1)]
        log_Z = mpmath.log(mpmath.fsum(h * mpmath.exp(lp) for h, lp in zip(heights, log_p)))
        tail = mpmath.fsum(column_height(k) * mpmath.exp(-mpmath.mpf(column_n(k)) / 2)
                           for k in range(K + 1, K + 4))
        log10_tail = float(mpmath.log10(tail))
        log_p_ld = np.array([LD(mpmath.nstr(v, 40)) for v in log_p], dtype=LD)
        log_Z_ld = LD(mpmath.nstr(log_Z, 40))

    heights = np.array(heights, dtype=np.int64)
    bases = np.concatenate([[0], np.cumsum(heights)[:-1]]).astype(np.int64)
    col = np.repeat(np.arange(K + 1), heights)
    level = np.concatenate([np.arange(h) for h in heights]).astype(np.int64)
    n_of = np.array([column_n(k) for k in range(K + 1)], dtype=np.int64)[col]
    f = np.where(col == 0, 0, np.where(level < n_of, 1, -1)).astype(np.int64)
    psi = np.where(col == 0, 0, np.where(level <= n_of, level, 2 * n_of - level)).astype(np.int64)
    tops = bases + heights - 1
    nxt = np.arange(col.shape[0], dtype=np.int64) + 1
    nxt[tops] = -1
    log_nu = log_p_ld[col] - log_Z_ld
    return TowerModel(K, heights, float(log_C), float(log_Z), log_p_ld, col, level, f, psi, nxt,
                      tops, bases, log_nu, log10_tail)


# ---------------------------------------------------------------------------
# checks

@dataclass(frozen=True)
class CoboundaryReport:
    states: int
    checks: int
    violations: int
    trajectories: int
    length: int
    trajectory_mismatches: int


def verify_coboundary(model: TowerModel, trajectories: int = 1000, length: int = 1000,
                      seed: int = 0) -> CoboundaryReport:
    """f = psi o F - psi on every state and return branch, plus telescoped random paths.

    Paths start uniformly over states (so every column is exercised) and
    return to column k' with probability p_k'.
    """
    nontop = model.nxt >= 0
    bad = int(np.sum(model.psi[model.nxt[nontop]] - model.psi[nontop] != model.f[nontop]))
    checks = int(np.sum(nontop))
    for s in model.tops:
        diff = model.psi[model.bases] - model.psi[s]
        bad += int(np.sum(diff != model.f[s]))
        checks += len(model.bases)

    rng = np.random.default_rng(seed)
    p = np.asarray(model.p, dtype=np.float64)
    p = p / p.sum()
    start = rng.integers(0, model.n_states, size=trajectories)
    cur = start.copy()
    S = np.zeros(trajectories, dtype=np.int64)
    for _ in range(length):
        S += model.f[cur]
        nx = model.nxt[cur]
        at_top = nx < 0
        if np.any(at_top):
            nx[at_top] = model.bases[rng.choice(model.K + 1, size=int(at_top.sum()), p=p)]
        cur = nx
    mismatches = int(np.sum(S != model.psi[cur] - model.psi[start]))
    return CoboundaryReport(model.n_states, checks, bad, trajectories, length, mismatches)


def stationarity_residual(model: TowerModel) -> float:
    """max |nu K - nu| in extended precision."""
    nu = model.nu
    pushed = np.zeros_like(nu)
    nontop = model.nxt >= 0
    pushed[model.nxt[nontop]] = nu[nontop]
    returning = np.sum(nu[model.tops])
    pushed[model.bases] += model.p * returning
    return float(np.max(np.abs(pushed - nu)))


def mean_f(model: TowerModel) -> float:
    return float(np.sum(model.nu * model.f))


def psi_second_moment(model: TowerModel) -> float:
    return float(np.sum(model.nu * model.psi.astype(LD) ** 2))


# ---------------------------------------------------------------------------
# exact distribution of S_n

@dataclass(frozen=True)
class Pmf:
    n: int
    values: np.ndarray
    mass: np.ndarray

    def prob(self, predicate) -> float:
        return float(np.sum(self.mass[predicate(self.values)]))

    @property
    def mean(self) -> float:
        return float(np.sum(self.mass * self.values))

    @property
    def variance(self) -> float:
        m = np.sum(self.mass * self.values)
        return float(np.sum(self.mass * (self.values - m) ** 2))


def _check_distribution(model, n):
    if model.K > MAX_DIST_K:
        raise BudgetError(f"distribution DP is limited to K <= {MAX_DIST_K}", suggestion=MAX_DIST_K)
    if not 0 <= n <= MAX_DIST_N:
        raise BudgetError(f"distribution DP is limited to n <= {MAX_DIST_N}", suggestion=MAX_DIST_N)


def _forward(model: TowerModel, n_max: int):
    """Yield (n, pmf over -n_max..n_max) for n = 1..n_max."""
    width = 2 * n_max + 1
    mass = np.zeros((model.n_states, width), dtype=LD)
    mass[:, n_max] = model.nu
    up, down, flat = model.f == 1, model.f == -1, model.f == 0
    nontop = model.nxt >= 0
    p = model.p
    for n in range(1, n_max + 1):
        shifted = np.zeros_like(mass)
        shifted[up, 1:] = mass[up, :-1]
        shifted[down, :-1] = mass[down, 1:]
        shifted[flat] = mass[flat]
        new = np.zeros_like(mass)
        new[model.nxt[nontop]] = shifted[nontop]
        returning = shifted[model.tops].sum(axis=0)
        new[model.bases] += p[:, None] * returning[None, :]
        mass = new
        yield n, mass.sum(axis=0)


def sn_distribution(model: TowerModel, n: int) -> Pmf:
    """Exact law of S_n(f) under the stationary measure, on the integers -n..n."""
    _check_distribution(model, n)
    pmf = np.zeros(2 * n + 1, dtype=LD)
    pmf[n] = 1
    for _, pmf in _forward(model, n):
        pass
    return Pmf(n, np.arange(-n, n + 1), pmf)


def variance_curve(model: TowerModel, n_max: int):
    """(n, Var S_n) for n = 1..n_max from the exact laws."""
    _check_distribution(model, n_max)
    vals = np.arange(-n_max, n_max + 1)
    out = []
    for n, pmf in _forward(model, n_max):
        m = np.sum(pmf * vals)
        out.append((n, float(np.sum(pmf * (vals - m) ** 2)), float(m)))
    return out


# ---------------------------------------------------------------------------
# log moment generating function

@dataclass(frozen=True)
class MgfCurve:
    t: float
    n: np.ndarray
    value: np.ndarray
    limsup_proxy: np.ndarray
    liminf_proxy: np.ndarray
    log10_tail: float


def log_mgf_curve(model: TowerModel, t: float, n_max: int) -> MgfCurve:
    """n -> (1/n) log E_nu exp(t S_n) for n = 1..n_max by a backward log-domain DP.

    V_m(s) = log E_s exp(t S_m); V_m(s) = t f(s) + V_{m-1}(F s) off the tops and
    t f(s) + log sum_k' p_k' exp V_{m-1}(base_k') at a top.
    """
    if not 1 <= n_max <= MAX_MGF_N:
        raise BudgetError(f"n_max must lie in [1, {MAX_MGF_N}]", suggestion=MAX_MGF_N)
    tf = LD(t) * model.f.astype(LD)
    nontop = model.nxt >= 0
    nxt = model.nxt[nontop]
    V = np.zeros(model.n_states, dtype=LD)
    out = np.empty(n_max, dtype=np.float64)
    for m in range(1, n_max + 1):
        ret = _lse(model.log_p + V[model.bases])
        W = np.empty_like(V)
        W[nontop] = V[nxt]
        W[model.tops] = ret
        V = tf + W
        out[m - 1] = float(_lse(model.log_nu + V) / m)
    sup = np.maximum.accumulate(out[::-1])[::-1]
    inf = np.minimum.accumulate(out[::-1])[::-1]
    return MgfCurve(float(t), np.arange(1, n_max + 1), out, sup, inf, model.log10_tail)
