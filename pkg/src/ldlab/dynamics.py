"""Expanding interval maps, exact symbolic orbits and shrinking-ball hits.

Doubling and tent orbits are never produced by floating-point iteration.
An orbit is a bit tape ``b_1 b_2 ...``; the doubling orbit is the sequence of
shifts ``x_n = 0.b_{n+1} b_{n+2} ...`` and the tent orbit is its image under
the factor map ``s(x) = 1 - |2x - 1|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numba as nb
import numpy as np

from . import tape
from .errors import DomainError, PrecisionError

DOUBLING = "doubling"
TENT = "tent"
PIECEWISE_LINEAR = "piecewise_linear"
MAP_KINDS = (DOUBLING, TENT, PIECEWISE_LINEAR)

_BRANCH_TOL = 1e-12


@dataclass(frozen=True)
class MapSpec:
    """An expanding map of [0, 1] with full branches.

    ``breakpoints`` are the interior cut points; ``slopes`` has one entry per
    branch.  ``periodic_point`` is the point the unbounded observables are
    centred on, ``period`` its period and ``deriv_bound`` a bound on |T'|
    along its orbit.
    """

    kind: str
    breakpoints: tuple = ()
    slopes: tuple = ()
    periodic_point: float = 0.0
    period: int = 1
    deriv_bound: float = 2.0

    def __post_init__(self):
        if self.kind not in MAP_KINDS:
            raise DomainError(f"unknown map kind {self.kind!r}")
        if self.kind in (DOUBLING, TENT):
            object.__setattr__(self, "breakpoints", (0.5,))
            object.__setattr__(self, "slopes", (2.0, 2.0 if self.kind == DOUBLING else -2.0))
        if not 0.0 <= self.periodic_point <= 1.0:
            raise DomainError("periodic point must lie in [0, 1]")
        if self.period < 1:
            raise DomainError("period must be a positive integer")
        if self.deriv_bound <= 1.0:
            raise DomainError("deriv_bound must exceed 1")
        if self.kind == PIECEWISE_LINEAR:
            self._check_branches()

    @classmethod
    def doubling(cls):
        return cls(DOUBLING)

    @classmethod
    def tent(cls):
        return cls(TENT)

    @classmethod
    def piecewise_linear(cls, breakpoints, slopes, periodic_point=0.0, period=1,
                         deriv_bound=None):
        breakpoints = tuple(float(b) for b in breakpoints)
        slopes = tuple(float(s) for s in slopes)
        probe = cls(PIECEWISE_LINEAR, breakpoints, slopes, periodic_point, period,
                    max(abs(s) for s in slopes) if slopes else 2.0)
        touching = probe.orbit_branch_slopes()
        if deriv_bound is None:
            deriv_bound = max(abs(s) for s in touching)
        elif deriv_bound < max(abs(s) for s in touching):
            raise DomainError("deriv_bound is below a slope touching the periodic orbit")
        return replace(probe, deriv_bound=float(deriv_bound))

    @property
    def edges(self):
        return (0.0,) + tuple(self.breakpoints) + (1.0,)

    def _check_branches(self):
        edges = self.edges
        if len(self.slopes) != len(edges) - 1:
            raise DomainError("need one slope per branch")
        if any(b >= a for a, b in zip(edges[1:], edges[:-1])):
            raise DomainError("breakpoints must be increasing inside (0, 1)")
        for a, b, s in zip(edges[:-1], edges[1:], self.slopes):
            if abs(s) <= 1.0:
                raise DomainError("every branch must be expanding (|slope| > 1)")
            if abs(abs(s) * (b - a) - 1.0) > _BRANCH_TOL:
                raise DomainError(f"branch [{a}, {b}] with slope {s} is not full")

    def branch(self, x):
        edges = self.edges
        i = int(np.searchsorted(edges, x, side="right")) - 1
        return min(max(i, 0), len(self.slopes) - 1)

    def orbit_branch_slopes(self):
        x = self.periodic_point
        out = []
        for _ in range(self.period):
            out.append(self.slopes[self.branch(x)])
            x = iterate(self, x)
        return out


def iterate(m: MapSpec, x: float) -> float:
    """One application of the branch formula."""
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x={x} outside [0, 1]")
    if m.kind == DOUBLING:
        return 2.0 * x if x < 0.5 else 2.0 * x - 1.0
    if m.kind == TENT:
        return 1.0 - abs(2.0 * x - 1.0)
    i = m.branch(x)
    a, b = m.edges[i], m.edges[i + 1]
    s = m.slopes[i]
    y = s * (x - a) if s > 0 else -s * (b - x)
    return min(max(y, 0.0), 1.0)


@dataclass(frozen=True)
class OrbitStream:
    """An exact symbolic orbit.

    Random tapes are keyed by ``(seed, sample_index)``.  A ``prefix`` of
    explicit bits overrides the start of the tape; a non-empty ``cycle``
    makes the tape deterministic (``prefix`` followed by ``cycle`` forever).
    ``position`` offsets every time index.
    """

    seed: int = 0
    sample_index: int = 0
    window_bits: int = 128
    position: int = 0
    prefix: tuple = field(default=(), repr=False)
    cycle: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.window_bits < 64:
            raise DomainError("window_bits must be at least 64")
        object.__setattr__(self, "prefix", tuple(int(b) & 1 for b in self.prefix))
        object.__setattr__(self, "cycle", tuple(int(b) & 1 for b in self.cycle))

    @classmethod
    def from_bits(cls, prefix=(), cycle=(), **kw):
        return cls(prefix=tuple(prefix), cycle=tuple(cycle), **kw)

    def advanced(self, steps):
        return replace(self, position=self.position + int(steps))

    def words(self, nbits):
        """Tape words covering bit offsets ``[0, nbits)`` (plus slack)."""
        nwords = (int(nbits) + 63) // 64 + 3
        if self.cycle:
            total = nwords * 64
            head = np.asarray(self.prefix, dtype=np.uint8)
            reps = (total - len(head)) // len(self.cycle) + 1
            body = np.tile(np.asarray(self.cycle, dtype=np.uint8), max(reps, 0))
            return tape.bits_to_words(np.concatenate([head, body])[:total])
        words = tape.random_words(self.seed, self.sample_index, nwords)
        if self.prefix:
            bits = tape.words_to_bits(words)
            bits[: len(self.prefix)] = self.prefix
            words = tape.bits_to_words(bits[: nwords * 64])
        return words

    def bit_slice(self, start, count):
        words = self.words(start + count)
        return tape.words_to_bits(words)[start : start + count]


def _exact_view(bits):
    """Double nearest to 0.b_1 b_2 ... b_W for a 0/1 array."""
    width = len(bits)
    if width == 0:
        return 0.0
    pad = (-width) % 8
    value = int.from_bytes(np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes(), "big") >> pad
    s = max(value.bit_length() - 64, 0)
    return math.ldexp(float(value >> s), s - width)


def orbit_point(stream: OrbitStream, map_kind: str, n: int) -> float:
    """Real view of the n-th orbit point, accurate to 2^-window_bits."""
    if n < 0:
        raise DomainError("n must be non-negative")
    k = stream.position + n
    if map_kind == DOUBLING:
        return _exact_view(stream.bit_slice(k, stream.window_bits))
    if map_kind == TENT:
        bits = stream.bit_slice(k, stream.window_bits + 1)
        tail = bits[1:]
        if bits[0]:
            tail = 1 - tail
            # 1 - 0.b... equals the complemented digits plus one ulp of the window
            return min(_exact_view(tail) + 2.0**-stream.window_bits, 1.0)
        return _exact_view(tail)
    raise DomainError("exact orbits exist only for the doubling and tent maps")


@nb.njit(nogil=True, cache=True)
def _fill_orbit_values(words, offset, is_tent, out):
    for i in range(out.shape[0]):
        k = offset + i
        if is_tent:
            if tape.bit_at(words, k):
                out[i] = tape.complement_value(words, k + 1)
            else:
                out[i] = tape.window_value(words, k + 1)
        else:
            out[i] = tape.window_value(words, k)


def orbit_values(stream: OrbitStream, map_kind: str, start: int, count: int,
                 words=None) -> np.ndarray:
    """Vector of real views for times ``start .. start+count-1`` (128-bit windows)."""
    if map_kind not in (DOUBLING, TENT):
        raise DomainError("exact orbits exist only for the doubling and tent maps")
    offset = stream.position + int(start)
    if words is None:
        words = stream.words(offset + count + 192)
    out = np.empty(int(count), dtype=np.float64)
    _fill_orbit_values(words, offset, map_kind == TENT, out)
    return out


def hit_times(stream: OrbitStream, m: MapSpec, gamma: float = 1.0, n_max: int = 10**6,
              words=None) -> np.ndarray:
    """All 1 <= n <= n_max with d(x_n, p) <= n^-gamma, increasing."""
    if gamma <= 0:
        raise DomainError("gamma must be positive")
    if n_max < 1:
        return np.zeros(0, dtype=np.int64)
    if n_max ** (-gamma) < 2.0 ** (-stream.window_bits + 8):
        raise PrecisionError(
            f"window of {stream.window_bits} bits cannot resolve radius {n_max}^-{gamma}")
    if m.kind not in (DOUBLING, TENT):
        raise DomainError("exact orbits exist only for the doubling and tent maps")
    if words is None:
        words = stream.words(stream.position + n_max + 192)
    out = np.empty(n_max, dtype=np.int64)
    count = _scan_hits(words, stream.position, m.kind == TENT, n_max, float(gamma),
                       float(m.periodic_point), out)
    return out[:count].copy()


@nb.njit(nogil=True, cache=True)
def _scan_hits(words, offset, is_tent, n_max, gamma, p, out):
    count = 0
    for n in range(1, n_max + 1):
        k = offset + n
        if is_tent and tape.bit_at(words, k):
            x = tape.complement_value(words, k + 1)
        elif is_tent:
            x = tape.window_value(words, k + 1)
        else:
            x = tape.window_value(words, k)
        d = abs(x - p)
        if d <= (1.0 / n if gamma == 1.0 else n ** (-gamma)):
            out[count] = n
            count += 1
    return count


def expected_hits(n_max: int, gamma: float = 1.0, n_min: int = 1, p: float = 0.0) -> float:
    """Sum of Lebesgue measures of the balls B_{n^-gamma}(p), n_min <= n <= n_max."""
    n = np.arange(max(n_min, 1), n_max + 1, dtype=np.float64)
    r = n ** (-gamma)
    measure = np.minimum(p + r, 1.0) - np.maximum(p - r, 0.0)
    return float(math.fsum(measure))
