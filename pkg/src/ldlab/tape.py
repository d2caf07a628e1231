"""Counter-based bit tapes.

Every random bit in the library comes from a SplitMix64 finalizer applied to
a (stream key, word counter) pair.  The stream key depends only on
``(seed, sample_index)``, so any word of any sample can be produced directly,
in any order, by any worker.

Bit ``i`` (0-based) of a tape is the most-significant-first bit ``i % 64`` of
word ``i // 64``; it is the binary digit ``b_{i+1}`` of the initial point
``x_0 = 0.b_1 b_2 ...``.  The doubling orbit is ``x_k = 0.b_{k+1} b_{k+2} ...``,
so its real view is read off the tape at bit offset ``k``.
"""

import math

import numba as nb
import numpy as np
from llvmlite import ir
from numba.core import types
from numba.extending import intrinsic

U64 = np.uint64
MASK64 = (1 << 64) - 1

_GOLDEN = U64(0x9E3779B97F4A7C15)
_MUL1 = U64(0xBF58476D1CE4E5B9)
_MUL2 = U64(0x94D049BB133111EB)
_TWO_M64 = 2.0**-64
_TWO_M128 = 2.0**-128
LN2 = math.log(2.0)

# table-driven -log on [1/2, 1): 2^10 centres, degree-5 series on |u| < 2^-11
_LOG_BITS = 10
_CENTRES = 1.0 + (np.arange(1 << _LOG_BITS) + 0.5) / (1 << _LOG_BITS)
INV_CENTRES = 1.0 / _CENTRES
LOG_CENTRES = np.log(_CENTRES)


@intrinsic
def clz64(typingctx, x):
    """Count leading zeros of a uint64 (64 for zero)."""
    sig = types.uint64(types.uint64)

    def codegen(context, builder, signature, args):
        return builder.ctlz(args[0], ir.Constant(ir.IntType(1), 0))

    return sig, codegen


@nb.njit(inline="always")
def mix64(z):
    z = (z ^ (z >> U64(30))) * _MUL1
    z = (z ^ (z >> U64(27))) * _MUL2
    return z ^ (z >> U64(31))


@nb.njit(inline="always")
def stream_key(seed, sample_index):
    return mix64(U64(seed) ^ mix64(U64(sample_index) + _GOLDEN))


@nb.njit(inline="always")
def tape_word(key, j):
    return mix64(key + U64(j + 1) * _GOLDEN)


@nb.njit(nogil=True, cache=True)
def fill_words(seed, sample_index, out, start):
    key = stream_key(seed, sample_index)
    for j in range(out.shape[0]):
        out[j] = tape_word(key, start + j)


@nb.njit(inline="always")
def bit_at(words, i):
    return (words[i >> 6] >> U64(63 - (i & 63))) & U64(1)


@nb.njit(inline="always")
def window64(words, k):
    """The 64 tape bits starting at bit offset k."""
    q = k >> 6
    r = U64(k & 63)
    if r == U64(0):
        return words[q]
    return (words[q] << r) | (words[q + 1] >> (U64(64) - r))


@nb.njit(inline="always")
def window_value(words, k):
    """Real view 0.b_{k+1} ... b_{k+128}, rounded to double."""
    return float(window64(words, k)) * _TWO_M64 + float(window64(words, k + 64)) * _TWO_M128


@nb.njit(inline="always")
def complement_value(words, k):
    """1 - 0.b_{k+1}b_{k+2}..., read from the complemented 128-bit window."""
    return (float(~window64(words, k)) * _TWO_M64
            + float(~window64(words, k + 64)) * _TWO_M128 + _TWO_M128)


@nb.njit(inline="always")
def neglog_top(h, inv_centres, log_centres):
    """-log(h * 2^-64) for a word whose top bit is set."""
    idx = np.int64((h >> U64(63 - _LOG_BITS)) & U64((1 << _LOG_BITS) - 1))
    f = float(h << U64(1)) * _TWO_M64
    u = (1.0 + f) * inv_centres[idx] - 1.0
    poly = u * (1.0 + u * (-0.5 + u * (1.0 / 3.0 + u * (-0.25 + u * 0.2))))
    return LN2 - log_centres[idx] - poly


@nb.njit(inline="always")
def uniform53(word):
    return float(word >> U64(11)) * 2.0**-53


@nb.njit(inline="always")
def exponential(word):
    return -math.log1p(-uniform53(word))


def as_seed(value):
    """Reduce an arbitrary Python integer to an unsigned 64-bit seed."""
    return int(value) & MASK64


def random_words(seed, sample_index, count, start=0):
    """Words ``start .. start+count-1`` of the tape of one sample."""
    out = np.empty(int(count), dtype=np.uint64)
    fill_words(U64(as_seed(seed)), U64(as_seed(sample_index)), out, int(start))
    return out


def bits_to_words(bits):
    """Pack a 0/1 sequence (most significant first) into uint64 words."""
    bits = np.asarray(bits, dtype=np.uint8)
    pad = (-len(bits)) % 64
    if pad:
        bits = np.concatenate([bits, np.zeros(pad, dtype=np.uint8)])
    packed = np.packbits(bits)  # big-endian within each byte
    return packed.view(">u8").astype(np.uint64)


def words_to_bits(words, count=None):
    bits = np.unpackbits(np.asarray(words, dtype=np.uint64).astype(">u8").view(np.uint8))
    return bits if count is None else bits[:count]
