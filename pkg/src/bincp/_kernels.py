"""Numba kernels for bit-packed triple scoring.

Rows are stored as little-endian uint64 words; bit d of a row lives in word
d // 64 at position d % 64. Padding bits past the last dimension are zero on
disk, but every kernel masks the final word anyway so garbage there can never
leak into a count.

Two popcount flavours are compiled: the LLVM ``ctpop`` intrinsic (lowered to
the POPCNT instruction where the CPU has one) and a portable SWAR fallback.
"""

import os

import numpy as np
from numba import njit, types
from numba.extending import intrinsic

WORD_BITS = 64
_ALL_ONES = np.uint64(0xFFFFFFFFFFFFFFFF)


@intrinsic
def _ctpop64(typingctx, x):
    sig = types.uint64(types.uint64)

    def codegen(context, builder, signature, args):
        return builder.ctpop(args[0])

    return sig, codegen


@njit(inline="always")
def popcount_native(x):
    return _ctpop64(x)


@njit(inline="always")
def popcount_portable(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return (x * np.uint64(0x0101010101010101)) >> np.uint64(56)


def n_words(dim):
    return (dim + WORD_BITS - 1) // WORD_BITS


def last_word_mask(dim):
    rem = dim % WORD_BITS
    if rem == 0:
        return _ALL_ONES
    return np.uint64((1 << rem) - 1)


class KernelSet:
    """The jitted kernels built around one popcount implementation."""

    def __init__(self, popcount, name):
        self.name = name
        self.popcount = popcount

        @njit(nogil=True)
        def bitc(u, v, w, mask):
            n = u.shape[0]
            total = 0
            for q in range(n):
                x = ~(~(u[q] ^ v[q]) ^ w[q])
                if q == n - 1:
                    x &= mask
                total += popcount(x)
            return total

        @njit(nogil=True)
        def bitc_triples(ab, bb, cb, triples, mask):
            # triples columns: subject, object, relation
            m = triples.shape[0]
            n = ab.shape[1]
            out = np.empty(m, dtype=np.int64)
            for t in range(m):
                i = triples[t, 0]
                j = triples[t, 1]
                k = triples[t, 2]
                total = 0
                for q in range(n):
                    x = ~(~(ab[i, q] ^ bb[j, q]) ^ cb[k, q])
                    if q == n - 1:
                        x &= mask
                    total += popcount(x)
                out[t] = total
            return out

        @njit(nogil=True)
        def bitc_all_objects(ab, bb, cb, subjects, relations, mask, out):
            # out[r, j] = BitC(subjects[r], j, relations[r]) for every entity j
            n = ab.shape[1]
            n_ent = bb.shape[0]
            u = np.empty(n, dtype=np.uint64)
            for r in range(subjects.shape[0]):
                i = subjects[r]
                k = relations[r]
                for q in range(n):
                    u[q] = ~(ab[i, q] ^ cb[k, q])
                for j in range(n_ent):
                    total = 0
                    for q in range(n):
                        x = ~(u[q] ^ bb[j, q])
                        if q == n - 1:
                            x &= mask
                        total += popcount(x)
                    out[r, j] = total

        @njit(nogil=True)
        def bench_packed(ab, bb, cb, triples, mask):
            acc = 0
            n = ab.shape[1]
            for t in range(triples.shape[0]):
                i = triples[t, 0]
                j = triples[t, 1]
                k = triples[t, 2]
                total = 0
                for q in range(n):
                    x = ~(~(ab[i, q] ^ bb[j, q]) ^ cb[k, q])
                    if q == n - 1:
                        x &= mask
                    total += popcount(x)
                acc += total
            return acc

        self.bitc = bitc
        self.bitc_triples = bitc_triples
        self.bitc_all_objects = bitc_all_objects
        self.bench_packed = bench_packed


# fastmath lets the float reduction vectorize, so the baseline is not handicapped
@njit(nogil=True, fastmath=True)
def bench_float(a, b, c, triples):
    acc = 0.0
    dim = a.shape[1]
    for t in range(triples.shape[0]):
        i = triples[t, 0]
        j = triples[t, 1]
        k = triples[t, 2]
        s = 0.0
        for d in range(dim):
            s += a[i, d] * b[j, d] * c[k, d]
        acc += s
    return acc


@njit(nogil=True)
def bench_empty(triples):
    acc = 0
    for t in range(triples.shape[0]):
        acc += triples[t, 0] ^ triples[t, 1] ^ triples[t, 2]
    return acc


NATIVE = KernelSet(popcount_native, "native")
PORTABLE = KernelSet(popcount_portable, "portable")


def default_kernels():
    if os.environ.get("BINCP_PORTABLE_POPCOUNT", "") not in ("", "0"):
        return PORTABLE
    return NATIVE
