"""Compiled inner loops for packing, nearest-codeword search and voting."""

import numpy as np
from numba import njit, types
from numba.extending import intrinsic


@intrinsic
def popcount64(typingctx, x):
    def codegen(context, builder, signature, args):
        return builder.ctpop(args[0])

    return types.uint64(types.uint64), codegen


@njit(nogil=True, cache=True)
def pack_rows(bits, W):
    N, T = bits.shape
    out = np.zeros((N, W), np.uint64)
    for i in range(N):
        for w in range(W):
            acc = np.uint64(0)
            for t in range(w * 64, min(T, w * 64 + 64)):
                acc |= np.uint64(bits[i, t]) << np.uint64(t - w * 64)
            out[i, w] = acc
    return out


@njit(nogil=True, cache=True)
def rows_to_int(bits, L, out):
    """First L bits of each row as an MSB-first integer."""
    for i in range(bits.shape[0]):
        m = 0
        for j in range(L):
            m = (m << 1) | bits[i, j]
        out[i] = m


@njit(nogil=True, cache=True)
def corrupt(out, u, codeword, thresh):
    """out[j, t] = codeword[t] xor (u[j, t] < thresh[t])."""
    n, T = u.shape
    for j in range(n):
        for t in range(T):
            out[j, t] = codeword[t] ^ np.uint8(np.uint64(u[j, t]) < thresh[t])


@njit(nogil=True, cache=True)
def _distance(q, i, words, c):
    d = np.uint64(0)
    for w in range(q.shape[1]):
        d += popcount64(q[i, w] ^ words[c, w])
    return np.int64(d)


@njit(nogil=True, cache=True)
def mdd(queries, words, words_t, radius, out_idx, out_dist):
    """Exact nearest codeword, lowest index on ties.

    The previous query's answer is tried first: if it lies within the unique
    decoding radius no other codeword can be as close, so the scan is skipped.
    ``words_t`` is the (W, C) transpose used for the vectorized full scan.
    """
    N, W = queries.shape
    C = words.shape[0]
    dist = np.empty(C, np.uint16)
    prev = 0
    for i in range(N):
        d0 = _distance(queries, i, words, prev)
        if d0 <= radius:
            out_idx[i] = prev
            out_dist[i] = d0
            continue
        for c in range(C):
            dist[c] = 0
        for w in range(W):
            qw = queries[i, w]
            row = words_t[w]
            for c in range(C):
                dist[c] += np.uint16(popcount64(qw ^ row[c]))
        j = np.argmin(dist)
        out_idx[i] = j
        out_dist[i] = dist[j]
        prev = j


@njit(nogil=True, cache=True)
def min_pairwise(words):
    C, W = words.shape
    best = W * 64 + 1
    for a in range(C):
        for b in range(a + 1, C):
            d = np.uint64(0)
            for w in range(W):
                d += popcount64(words[a, w] ^ words[b, w])
            if np.int64(d) < best:
                best = np.int64(d)
    return best


@njit(nogil=True, cache=True)
def vote(received, L, r, out_msg, out_tied):
    """Majority vote per bit, message as MSB-first int; ties flagged per bit."""
    N = received.shape[0]
    for i in range(N):
        m = 0
        tie = 0
        for j in range(L):
            ones = 0
            for b in range(r):
                ones += received[i, b * L + j]
            m <<= 1
            tie <<= 1
            if 2 * ones > r:
                m |= 1
            elif 2 * ones == r:
                tie |= 1
        out_msg[i] = m
        out_tied[i] = tie


@njit(nogil=True, cache=True)
def matched_filter(seqs, half, offsets, out):
    """argmax over v in [0, half) of the +/-1 burst correlation at phase offset+v."""
    N, P = seqs.shape
    for i in range(N):
        ph = offsets[i]
        s = 0
        for k in range(half):
            s += 2 * np.int64(seqs[i, (ph + k) % P]) - 1
        best = s
        bv = 0
        # Slide the window one frame: drop its first bit, take the next one.
        for v in range(1, half):
            s -= 2 * np.int64(seqs[i, (ph + v - 1) % P]) - 1
            s += 2 * np.int64(seqs[i, (ph + v - 1 + half) % P]) - 1
            if s > best:
                best = s
                bv = v
        out[i] = bv
