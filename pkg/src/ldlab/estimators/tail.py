"""Monte Carlo tail probabilities of Birkhoff sums on exact symbolic orbits.

Sample ``s`` is the orbit of the tape keyed by ``(seed, s)``.  One pass over
a sample accumulates S_k for every k up to the largest requested n, so all
(n, eps) pairs of a grid share the same samples and the events are nested.

Sums are accumulated on the raw formula (no centring) and compared with the
thresholds n (mean +- eps); hit counts are integers, so any partition of the
sample range into chunks gives identical totals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from statsmodels.stats.proportion import proportion_confint

from .. import observables as O
from .. import parallel, tape
from ..dynamics import DOUBLING, TENT, MapSpec
from ..errors import DomainError

U64 = np.uint64
SIDES = ("upper", "lower", "two-sided")
ORBIT = "orbit"
IID = "iid"
MIN_SAMPLES = 10_000
RELIABLE_COUNT = 10


# ---------------------------------------------------------------------------
# tape access with on-demand words past the buffer

@nb.njit(inline="always")
def _word(key, w, j):
    if j < w.shape[0]:
        return w[j]
    return tape.tape_word(key, j)


@nb.njit(inline="always")
def _window_far(key, w, k):
    q = k >> 6
    r = U64(k & 63)
    a = _word(key, w, q)
    if r == U64(0):
        return a
    return (a << r) | (_word(key, w, q + 1) >> (U64(64) - r))


@nb.njit(cache=True)
def _leading_far(key, w, k, flip):
    # a window of 64 equal bits: scan on, generating words past the buffer
    z = np.int64(64)
    h = _window_far(key, w, k + z)
    if flip:
        h = ~h
    while h == U64(0):
        z += 64
        h = _window_far(key, w, k + z)
        if flip:
            h = ~h
    lz = np.int64(tape.clz64(h))
    if lz:
        z += lz
        h = _window_far(key, w, k + z)
        if flip:
            h = ~h
    return z, h


@nb.njit(inline="always")
def _leading(key, w, k, flip):
    """(z, h): z zero bits of the (optionally complemented) tape from offset k,
    then the 64-bit window h at k + z, whose top bit is set."""
    h = tape.window64(w, k)
    if flip:
        h = ~h
    if h == U64(0):
        return _leading_far(key, w, k, flip)
    # the buffer always holds 128 bits past k
    z = np.int64(tape.clz64(h))
    h = tape.window64(w, k + z)
    if flip:
        h = ~h
    return z, h


@nb.njit(inline="always")
def _point(key, w, k, is_tent):
    """Orbit point x_k to full double precision (exact symbolic view)."""
    flip = False
    if is_tent:
        flip = tape.bit_at(w, k) == U64(1)
        k += 1
    z, h = _leading(key, w, k, flip)
    if z > 1000:
        return 0.0
    return math.ldexp(float(h) * 2.0**-64, -z)


@nb.njit(inline="always")
def _cell(w, k, is_tent, depth):
    if is_tent:
        h = tape.window64(w, k + 1)
        if tape.bit_at(w, k) == U64(1):
            h = ~h
    else:
        h = tape.window64(w, k)
    return np.int64(h >> U64(64 - depth))


@nb.njit(inline="always")
def _record(S, c, thr_up, thr_dn, up, dn):
    for e in range(thr_up.shape[1]):
        if S >= thr_up[c, e]:
            up[c, e] += 1
        if S <= thr_dn[c, e]:
            dn[c, e] += 1


@nb.njit(nogil=True, cache=True)
def _generic_chunk(seed, start, count, cps, thr_up, thr_dn, is_tent, params, table):
    nmax = cps[-1]
    ncp = cps.shape[0]
    w = np.empty(nmax // 64 + 5, dtype=np.uint64)
    up = np.zeros(thr_up.shape, dtype=np.int64)
    dn = np.zeros(thr_up.shape, dtype=np.int64)
    cylinder = int(params[0]) == 3
    depth = int(params[6])
    level = params[3]
    for s in range(start, start + count):
        tape.fill_words(seed, U64(s), w, 0)
        key = tape.stream_key(seed, U64(s))
        S = 0.0
        c = 0
        for k in range(nmax):
            if cylinder:
                v = min(table[_cell(w, k, is_tent, depth)], level)
            else:
                v = O.evaluate(params, table, _point(key, w, k, is_tent))
            S += v
            if k + 1 == cps[c]:
                _record(S, c, thr_up, thr_dn, up, dn)
                c += 1
                if c == ncp:
                    break
    return up, dn


@nb.njit(inline="always")
def _psum(c, a, b, alpha):
    """sum_{m=a}^{b} (m log 2 + c)^alpha for alpha in {1, 2}."""
    cnt = b - a + 1
    s1 = (a + b) * cnt * 0.5
    if alpha == 1.0:
        return tape.LN2 * s1 + cnt * c
    s2 = (b * (b + 1) * (2 * b + 1) - (a - 1) * a * (2 * a - 1)) / 6.0
    return tape.LN2 * tape.LN2 * s2 + 2.0 * c * tape.LN2 * s1 + cnt * c * c


@nb.njit(nogil=True, cache=True)
def _logpow_run_chunk(seed, start, count, cps, thr_up, thr_dn, alpha, inv_c, log_c):
    """Doubling map, (-log x)^alpha with alpha in {1, 2}, by runs of zero bits.

    If bits k..i-1 are zero and bit i is one then -log x_j = (i-j) log 2 + c_i
    for k <= j <= i, where c_i = -log x_i, so a whole run is one closed form.
    """
    nmax = cps[-1]
    ncp = cps.shape[0]
    w = np.empty(nmax // 64 + 5, dtype=np.uint64)
    up = np.zeros(thr_up.shape, dtype=np.int64)
    dn = np.zeros(thr_up.shape, dtype=np.int64)
    for s in range(start, start + count):
        tape.fill_words(seed, U64(s), w, 0)
        key = tape.stream_key(seed, U64(s))
        S = 0.0
        c = 0
        k = 0
        while k < nmax:
            h = tape.window64(w, k)
            if h == U64(0):
                z, h = _leading_far(key, w, k, False)
            else:
                z = np.int64(tape.clz64(h))
                h = tape.window64(w, k + z)
            i = k + z
            cval = tape.neglog_top(h, inv_c, log_c)
            last = min(i, nmax - 1)
            while c < ncp and cps[c] - 1 <= last:
                e = cps[c] - 1
                S += _psum(cval, i - e, i - k, alpha)
                _record(S, c, thr_up, thr_dn, up, dn)
                c += 1
                k = e + 1
            if k <= last:
                S += _psum(cval, i - last, i - k, alpha)
            k = last + 1
    return up, dn


@nb.njit(nogil=True, cache=True)
def _iid_chunk(seed, start, count, cps, thr_up, thr_dn, params, table):
    """I.i.d. uniform points x_j fed through the observable (inversion sampling)."""
    nmax = cps[-1]
    ncp = cps.shape[0]
    up = np.zeros(thr_up.shape, dtype=np.int64)
    dn = np.zeros(thr_up.shape, dtype=np.int64)
    for s in range(start, start + count):
        key = tape.stream_key(seed, U64(s))
        S = 0.0
        c = 0
        for k in range(nmax):
            u = (float(tape.tape_word(key, k) >> U64(11)) + 0.5) * 2.0**-53
            S += O.evaluate(params, table, u)
            if k + 1 == cps[c]:
                _record(S, c, thr_up, thr_dn, up, dn)
                c += 1
                if c == ncp:
                    break
    return up, dn


# ---------------------------------------------------------------------------
# public types

@dataclass(frozen=True)
class TailQuery:
    """mu(S_n - n mean >= n eps) (upper), <= -n eps (lower) or |.| >= n eps."""

    map: MapSpec
    obs: O.ObservableSpec
    n: int
    eps: float
    side: str = "upper"
    N: int = 10**6
    seed: int = 0
    source: str = ORBIT

    def __post_init__(self):
        _check(self.eps, self.side, self.N, self.source, self.n)


def _check(eps, side, N, source, n):
    if not eps > 0:
        raise DomainError("eps must be positive")
    if side not in SIDES:
        raise DomainError(f"side must be one of {SIDES}")
    if N < MIN_SAMPLES:
        raise DomainError(f"sample budget must be at least {MIN_SAMPLES}")
    if source not in (ORBIT, IID):
        raise DomainError(f"unknown source {source!r}")
    if n < 1:
        raise DomainError("n must be positive")


def wilson_interval(count: int, N: int):
    lo, hi = proportion_confint(count, N, alpha=0.05, method="wilson")
    p = count / N
    return min(float(lo), p), max(float(hi), p)


@dataclass(frozen=True)
class TailEstimate:
    query: TailQuery
    count: int
    N: int
    p_hat: float
    ci_low: float
    ci_high: float

    @property
    def unreliable(self) -> bool:
        return self.count < RELIABLE_COUNT

    @property
    def se(self) -> float:
        return math.sqrt(max(self.p_hat * (1.0 - self.p_hat), 1.0 / self.N) / self.N)

    def as_record(self):
        rec = {"n": self.query.n, "eps": self.query.eps, "side": self.query.side,
               "count": self.count, "N": self.N, "phat": self.p_hat,
               "ci_lo": self.ci_low, "ci_hi": self.ci_high, "unreliable": self.unreliable}
        return rec


@dataclass
class TailTable:
    """Hit counts for every (n, eps) of a grid, from one shared sample set."""

    map: MapSpec
    obs: O.ObservableSpec
    ns: tuple
    eps: tuple
    N: int
    seed: int
    source: str
    up: np.ndarray = field(repr=False)
    down: np.ndarray = field(repr=False)

    def count(self, n, eps, side="upper"):
        i, j = self.ns.index(n), self.eps.index(eps)
        if side == "upper":
            return int(self.up[i, j])
        if side == "lower":
            return int(self.down[i, j])
        return int(self.up[i, j] + self.down[i, j])

    def estimate(self, n, eps, side="upper") -> TailEstimate:
        k = self.count(n, eps, side)
        lo, hi = wilson_interval(k, self.N)
        q = TailQuery(self.map, self.obs, n, eps, side, self.N, self.seed, self.source)
        return TailEstimate(q, k, self.N, k / self.N, lo, hi)

    def estimates(self, eps, side="upper"):
        return [self.estimate(n, eps, side) for n in self.ns]


def _fast_path(m, obs, source):
    return (source == ORBIT and m.kind == DOUBLING and obs.kind == O.LOGPOW
            and obs.center == 0.0 and obs.alpha in (1.0, 2.0)
            and math.isinf(obs.level_cut) and obs.radius_cut == 0.0)


def tail_counts(m: MapSpec, obs: O.ObservableSpec, ns, eps, N: int, seed: int = 0,
                workers: int | None = None, source: str = ORBIT,
                chunk: int = parallel.CHUNK) -> TailTable:
    """Upper and lower hit counts for every n in ``ns`` and eps in ``eps``."""
    ns = tuple(sorted({int(n) for n in ns}))
    eps = tuple(float(e) for e in eps)
    for e in eps:
        _check(e, "upper", N, source, ns[0])
    if source == ORBIT and m.kind not in (DOUBLING, TENT):
        raise DomainError("exact orbits exist only for the doubling and tent maps")
    mean = O.raw_mean(obs)
    cps = np.asarray(ns, dtype=np.int64)
    eps_arr = np.asarray(eps)
    thr_up = cps[:, None] * (mean + eps_arr[None, :])
    thr_dn = cps[:, None] * (mean - eps_arr[None, :])
    params, table = O.lower(obs, include_shift=False)
    seed64 = U64(tape.as_seed(seed))

    if _fast_path(m, obs, source):
        def kernel(start, count):
            return _logpow_run_chunk(seed64, start, count, cps, thr_up, thr_dn, obs.alpha,
                                     tape.INV_CENTRES, tape.LOG_CENTRES)
    elif source == IID:
        def kernel(start, count):
            return _iid_chunk(seed64, start, count, cps, thr_up, thr_dn, params, table)
    else:
        is_tent = m.kind == TENT

        def kernel(start, count):
            return _generic_chunk(seed64, start, count, cps, thr_up, thr_dn, is_tent,
                                  params, table)

    up, down = parallel.reduce_chunks(kernel, N, workers, chunk)
    return TailTable(m, obs, ns, eps, int(N), int(seed), source, up, down)


def tail_mc(q: TailQuery, workers: int | None = None) -> TailEstimate:
    """Binomial estimate for one query."""
    table = tail_counts(q.map, q.obs, [q.n], [q.eps], q.N, q.seed, workers, q.source)
    est = table.estimate(q.n, q.eps, q.side)
    return TailEstimate(q, est.count, est.N, est.p_hat, est.ci_low, est.ci_high)


# ---------------------------------------------------------------------------
# cross-check against the cylinder DP

@dataclass(frozen=True)
class OracleComparison:
    """A Monte Carlo tail estimate against the exact cylinder-DP sandwich."""

    estimate: TailEstimate
    dp_lower: float
    dp_upper: float
    delta: float
    slack_se: float

    @property
    def within(self) -> bool:
        pad = self.slack_se * self.estimate.se
        return self.dp_lower - pad <= self.estimate.p_hat <= self.dp_upper + pad

    def as_record(self):
        rec = self.estimate.as_record()
        rec.update({"dp_lower": self.dp_lower, "dp_upper": self.dp_upper, "delta": self.delta,
                    "se": self.estimate.se, "within": self.within})
        return rec


def oracle_compare(obs: O.ObservableSpec, n: int, eps: float, N: int, seed: int = 0,
                   delta: float = 2.0**-12, side: str = "upper", workers: int | None = None,
                   slack_se: float = 4.0) -> OracleComparison:
    """tail_mc on the doubling map versus the DP bounds for a cylinder-coded observable."""
    from ..exact_kernels import cylinder_dp

    if obs.kind != O.CYLINDER:
        raise DomainError("the oracle needs a cylinder-coded observable")
    if side == "two-sided":
        raise DomainError("the oracle compares one-sided tails")
    raw = obs.raw
    q = TailQuery(MapSpec.doubling(), raw, n, eps, side, N, seed)
    est = tail_mc(q, workers)
    dist = cylinder_dp(raw, n, delta)
    mean = O.raw_mean(raw)
    if side == "upper":
        lo, hi = dist.tail_bounds(n * (mean + eps))
    else:
        lo, hi = dist.lower_tail_bounds(n * (mean - eps))
    return OracleComparison(est, lo, hi, float(delta), float(slack_se))


def random_cylinder(rng, depth: int, scale: float = 1.0) -> O.ObservableSpec:
    """Cylinder-coded observable with i.i.d. uniform [0, scale) values on 2^depth cells."""
    return O.cylinder_coded(rng.random(1 << depth) * scale)
