"""Maximal window averages and the shrinking-target obstruction check."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .. import observables as O
from .. import parallel, tape
from ..dynamics import DOUBLING, TENT, MapSpec, OrbitStream, expected_hits, hit_times, orbit_values
from ..errors import DomainError
from .tail import _point

U64 = np.uint64
_REFRESH = 1 << 12
_SLACK_BITS = 1024


@dataclass(frozen=True)
class IIDChannel:
    """I.i.d. uniform points keyed by (seed, sample_index), fed through the observable.

    With LogPow(1, 0) the values are exactly exponential(1) draws by inversion.
    """

    seed: int = 0
    sample_index: int = 0


@dataclass(frozen=True)
class WindowStat:
    n: int
    ell: int
    W: float
    argmax: int

    def as_record(self):
        return {"n": self.n, "ell": self.ell, "W": self.W, "argmax": self.argmax}


@nb.njit(nogil=True, cache=True)
def _window_max(mode, key, words, offset, n, ell, params, table):
    """max over j of (sum of values j..j+ell-1) / ell by a running sum with a ring buffer."""
    buf = np.empty(ell)
    S = 0.0
    best = -np.inf
    arg = 0
    for k in range(n):
        if mode == 0:
            u = (float(tape.tape_word(key, k) >> U64(11)) + 0.5) * 2.0**-53
        else:
            u = _point(key, words, offset + k, mode == 2)
        v = O.evaluate(params, table, u)
        slot = k % ell
        if k >= ell:
            S -= buf[slot]
        buf[slot] = v
        S += v
        if k >= ell - 1:
            if (k + 1) % _REFRESH == 0:
                # drop accumulated rounding from the running updates
                S = 0.0
                for i in range(ell):
                    S += buf[(k + 1 + i) % ell]
            if S > best:
                best = S
                arg = k - ell + 1
    return best / ell, arg


def _key(source):
    k = tape.stream_key(U64(tape.as_seed(source.seed)), U64(tape.as_seed(source.sample_index)))
    return U64(int(k) & tape.MASK64)


def window_length(n: int, I_alpha: float) -> int:
    return int(math.floor(math.log(n) / I_alpha))


def erdos_renyi_windows(source, obs: O.ObservableSpec, n: int, I_alpha: float,
                        m: MapSpec | None = None, ell: int | None = None) -> WindowStat:
    """W = max_{0 <= j <= n - ell} S_ell(x_j) / ell with ell = floor(log n / I_alpha).

    ``source`` is an :class:`IIDChannel` or an :class:`OrbitStream` (with the
    map ``m``, default doubling).
    """
    if not I_alpha > 0:
        raise DomainError("I_alpha must be positive")
    if ell is None:
        ell = window_length(n, I_alpha)
    if ell < 1:
        raise DomainError("window length floor(log n / I_alpha) must be at least 1")
    if ell > n:
        raise DomainError("window length exceeds n")
    params, table = O.lower(obs)
    if isinstance(source, IIDChannel):
        key = _key(source)
        W, j = _window_max(0, key, np.zeros(1, dtype=np.uint64), 0, n, ell, params, table)
    elif isinstance(source, OrbitStream):
        m = m or MapSpec.doubling()
        if m.kind not in (DOUBLING, TENT):
            raise DomainError("exact orbits exist only for the doubling and tent maps")
        words = source.words(source.position + n + _SLACK_BITS)
        key = _key(source)
        W, j = _window_max(1 if m.kind == DOUBLING else 2, key, words, source.position, n, ell,
                           params, table)
    else:
        raise DomainError("source must be an IIDChannel or an OrbitStream")
    return WindowStat(n, ell, float(W), int(j))


# ---------------------------------------------------------------------------
# obstruction check

@dataclass(frozen=True)
class Exceedance:
    """Window after the hit time n: its average exceeds alpha when ``verified``."""

    n: int
    length: int
    average: float
    er_length: int
    er_average: float
    verified: bool


@dataclass
class ObstructionReport:
    M: float
    M_min: float
    rho: float
    K: float
    N0: int
    n_max: int
    hits: np.ndarray = field(repr=False)
    exceedances: list = field(default_factory=list)

    @property
    def hits_beyond(self):
        return [int(n) for n in self.hits if n > self.N0]

    @property
    def verified(self):
        return [e for e in self.exceedances if e.verified]

    @property
    def inconclusive(self):
        return len(self.exceedances) == 0

    def expected_hits_beyond(self, gamma=1.0, p=0.0):
        return expected_hits(self.n_max, gamma, self.N0 + 1, p)


def threshold_index(obs: O.ObservableSpec, M: float, gamma: float) -> int:
    """Largest N with N^(-gamma/2) >= radius where obs > M; beyond it every hit ball is inside."""
    radius = O.level_radius(obs.raw, M + obs.shift)
    return int(math.floor(radius ** (-2.0 / gamma)))


def obstruction_check(m: MapSpec, obs: O.ObservableSpec, gamma: float, alpha: float,
                      I_alpha: float, n_max: int, stream: OrbitStream,
                      rho: float | None = None, K: float | None = None,
                      M: float | None = None, slack: float = 0.01) -> ObstructionReport:
    """Verify that hits of shrinking balls force window averages above alpha.

    ``M`` defaults to the smallest admissible level (alpha + rho)/I * 2 log K / gamma
    plus ``slack``.  Windows have length ceil(gamma log n / (2 log K)); the
    Erdos-Renyi window floor(log n / I_alpha) after each hit is reported too.
    """
    if obs.kind not in (O.LOGPOW, O.LOGLOG, O.INVPOW):
        raise DomainError("the obstruction needs an observable unbounded at the periodic point")
    if obs.center != m.periodic_point:
        raise DomainError("observable must be centred on the map's periodic point")
    if gamma <= 0 or I_alpha <= 0:
        raise DomainError("gamma and I_alpha must be positive")
    rho = obs.shift if rho is None else float(rho)
    K = m.deriv_bound if K is None else float(K)
    M_min = (alpha + rho) / I_alpha * 2.0 * math.log(K) / gamma
    if M is None:
        M = M_min + slack
    elif not M > M_min:
        raise DomainError(f"M must exceed {M_min}")
    N0 = threshold_index(obs, M, gamma)
    span = max(math.ceil(gamma * math.log(n_max) / (2.0 * math.log(K))),
               window_length(n_max, I_alpha)) + 1
    words = stream.words(stream.position + n_max + span + _SLACK_BITS)
    hits = hit_times(stream, m, gamma, n_max, words=words)
    report = ObstructionReport(M, M_min, rho, K, N0, n_max, hits)
    f = O.vectorized(obs)
    for n in report.hits_beyond:
        length = math.ceil(gamma * math.log(n) / (2.0 * math.log(K)))
        er = max(window_length(n, I_alpha), 1)
        vals = f(orbit_values(stream, m.kind, n, max(length, er), words=words))
        avg = float(np.mean(vals[:length])) if length else -math.inf
        er_avg = float(np.mean(vals[:er]))
        report.exceedances.append(Exceedance(n, length, avg, er, er_avg, bool(avg > alpha)))
    return report


def erdos_renyi_ensemble(obs: O.ObservableSpec, n: int, I_alpha: float, seeds,
                         workers: int | None = None, m: MapSpec | None = None,
                         source: str = "iid"):
    """W for each seed, from the i.i.d. channel or (``source="orbit"``) exact orbits."""
    def one(seed):
        src = IIDChannel(seed) if source == "iid" else OrbitStream(seed=seed)
        return erdos_renyi_windows(src, obs, n, I_alpha, m=m)
    return parallel.map_ordered(one, seeds, workers)


def obstruction_ensemble(m: MapSpec, obs: O.ObservableSpec, gamma: float, alpha: float,
                         I_alpha: float, n_max: int, seeds, workers: int | None = None,
                         **kw):
    """One :func:`obstruction_check` per seed, in seed order."""
    def one(seed):
        return obstruction_check(m, obs, gamma, alpha, I_alpha, n_max, OrbitStream(seed=seed), **kw)
    return parallel.map_ordered(one, seeds, workers)
