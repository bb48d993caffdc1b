# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tree grower, bit-compatible with ``krf._tree_py.build_tree``."""

import numpy as np

from libc.stdint cimport int64_t, uint64_t
from libc.stdlib cimport malloc, free
from libc.string cimport memcpy

cdef extern from *:
    """
    #include <stdint.h>
    static inline uint64_t krf_splitmix64(uint64_t *state) {
        uint64_t z;
        *state += 0x9E3779B97F4A7C15ULL;
        z = *state;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
    """
    uint64_t krf_splitmix64(uint64_t *state) nogil


ctypedef struct Pair:
    double v
    int64_t i


cdef inline bint pair_lt(Pair a, Pair b) noexcept nogil:
    return a.v < b.v or (a.v == b.v and a.i < b.i)


cdef void sort_pairs(Pair* a, Pair* tmp, int64_t n) noexcept nogil:
    """Bottom-up merge sort; insertion sort on runs of 16 first."""
    cdef int64_t lo, hi, mid, i, j, k, width
    cdef Pair key
    lo = 0
    while lo < n:
        hi = lo + 16
        if hi > n:
            hi = n
        for i in range(lo + 1, hi):
            key = a[i]
            j = i - 1
            while j >= lo and pair_lt(key, a[j]):
                a[j + 1] = a[j]
                j -= 1
            a[j + 1] = key
        lo = hi
    width = 16
    while width < n:
        lo = 0
        while lo < n:
            mid = lo + width
            if mid > n:
                mid = n
            hi = lo + 2 * width
            if hi > n:
                hi = n
            i = lo
            j = mid
            k = lo
            while i < mid and j < hi:
                if pair_lt(a[j], a[i]):
                    tmp[k] = a[j]
                    j += 1
                else:
                    tmp[k] = a[i]
                    i += 1
                k += 1
            while i < mid:
                tmp[k] = a[i]
                i += 1
                k += 1
            while j < hi:
                tmp[k] = a[j]
                j += 1
                k += 1
            lo = hi
        memcpy(a, tmp, n * sizeof(Pair))
        width *= 2


def build_tree(X, Y, samples, int max_depth, int min_split, int min_leaf,
               int mtry, seed):
    """Grow one multi-output CART regression tree (see ``krf._tree_py``).

    Each feature is sorted once per tree; splits stable-partition the sorted
    lists, so every node segment stays ordered by ``(value, row id)``.
    """
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] Yv = np.ascontiguousarray(Y, dtype=np.float64)
    idx_arr = np.array(samples, dtype=np.int64, copy=True)
    cdef int64_t[::1] idx = idx_arr
    cdef int64_t m = idx.shape[0]
    cdef int64_t n_rows = Xv.shape[0]
    cdef int64_t n_features = Xv.shape[1]
    cdef int64_t n_outputs = Yv.shape[1]
    cdef int64_t cap = 2 * m - 1 if m > 0 else 1

    feature_a = np.full(cap, -1, dtype=np.int64)
    threshold_a = np.zeros(cap, dtype=np.float64)
    left_a = np.full(cap, -1, dtype=np.int64)
    right_a = np.full(cap, -1, dtype=np.int64)
    value_a = np.zeros((cap, n_outputs), dtype=np.float64)
    n_node_a = np.zeros(cap, dtype=np.int64)
    cdef int64_t[::1] feature = feature_a
    cdef double[::1] threshold = threshold_a
    cdef int64_t[::1] left = left_a
    cdef int64_t[::1] right = right_a
    cdef double[:, ::1] value = value_a
    cdef int64_t[::1] n_node = n_node_a

    st_a = np.empty((5, cap), dtype=np.int64)
    cdef int64_t[:, ::1] st = st_a  # start, end, depth, parent, is_left

    feats_a = np.empty(n_features, dtype=np.int64)
    cdef int64_t[::1] feats = feats_a
    work_a = np.empty((3, n_outputs), dtype=np.float64)
    cdef double[:, ::1] work = work_a
    sorted_a = np.empty((n_features, max(m, 1)), dtype=np.int64)
    cdef int64_t[:, ::1] S = sorted_a
    spill_a = np.empty(max(m, 1), dtype=np.int64)
    cdef int64_t[::1] spill = spill_a
    goes_left_a = np.zeros(max(n_rows, 1), dtype=np.uint8)
    cdef unsigned char[::1] goes_left = goes_left_a

    cdef uint64_t state = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef Pair* pairs = <Pair*>malloc(max(m, 1) * sizeof(Pair))
    cdef Pair* tmp = <Pair*>malloc(max(m, 1) * sizeof(Pair))
    if pairs == NULL or tmp == NULL:
        free(pairs)
        free(tmp)
        raise MemoryError()

    cdef int64_t sp = 0, count = 0, node, start, end, depth, parent, n
    cdef int64_t i, j, k, f, fi, t, nl, best_f, best_nl, row, lpos, rpos
    cdef double proxy, best_proxy, a, b, thr, sr, nlf, nrf
    cdef bint pure
    cdef uint64_t rnd

    with nogil:
        for f in range(n_features):
            for i in range(m):
                pairs[i].v = Xv[idx[i], f]
                pairs[i].i = idx[i]
            sort_pairs(pairs, tmp, m)
            for i in range(m):
                S[f, i] = pairs[i].i

        st[0, 0] = 0
        st[1, 0] = m
        st[2, 0] = 0
        st[3, 0] = -1
        st[4, 0] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            start = st[0, sp]
            end = st[1, sp]
            depth = st[2, sp]
            parent = st[3, sp]
            node = count
            count += 1
            if parent >= 0:
                if st[4, sp]:
                    left[parent] = node
                else:
                    right[parent] = node

            n = end - start
            n_node[node] = n
            for k in range(n_outputs):
                work[0, k] = Yv[idx[start], k]
            for i in range(start + 1, end):
                for k in range(n_outputs):
                    work[0, k] = work[0, k] + Yv[idx[i], k]
            for k in range(n_outputs):
                value[node, k] = work[0, k] / n

            if depth >= max_depth or n < min_split or n < 2 * min_leaf:
                continue
            pure = True
            for i in range(start + 1, end):
                for k in range(n_outputs):
                    if Yv[idx[i], k] != Yv[idx[start], k]:
                        pure = False
                        break
                if not pure:
                    break
            if pure:
                continue

            for i in range(n_features):
                feats[i] = i
            for i in range(mtry):
                rnd = krf_splitmix64(&state)
                j = i + <int64_t>(rnd % <uint64_t>(n_features - i))
                t = feats[i]
                feats[i] = feats[j]
                feats[j] = t

            best_proxy = -1.0 / 0.0
            best_f = -1
            best_nl = 0
            for fi in range(mtry):
                f = feats[fi]
                # work[1] = total, work[2] = running left sum, in sorted order
                row = S[f, start]
                for k in range(n_outputs):
                    work[1, k] = Yv[row, k]
                    work[2, k] = Yv[row, k]
                for i in range(start + 1, end):
                    row = S[f, i]
                    for k in range(n_outputs):
                        work[1, k] = work[1, k] + Yv[row, k]
                for i in range(start + 1, start + min_leaf):
                    row = S[f, i]
                    for k in range(n_outputs):
                        work[2, k] = work[2, k] + Yv[row, k]
                nl = min_leaf
                while nl <= n - min_leaf:
                    if Xv[S[f, start + nl - 1], f] < Xv[S[f, start + nl], f]:
                        nlf = <double>nl
                        nrf = <double>(n - nl)
                        sr = work[1, 0] - work[2, 0]
                        proxy = work[2, 0] * work[2, 0] / nlf + sr * sr / nrf
                        for k in range(1, n_outputs):
                            sr = work[1, k] - work[2, k]
                            proxy = proxy + (work[2, k] * work[2, k] / nlf + sr * sr / nrf)
                        if proxy > best_proxy:
                            best_proxy = proxy
                            best_f = f
                            best_nl = nl
                    if nl < n:
                        row = S[f, start + nl]
                        for k in range(n_outputs):
                            work[2, k] = work[2, k] + Yv[row, k]
                    nl += 1

            if best_f < 0:
                continue

            a = Xv[S[best_f, start + best_nl - 1], best_f]
            b = Xv[S[best_f, start + best_nl], best_f]
            thr = 0.5 * (a + b)
            if thr >= b:
                thr = a
            feature[node] = best_f
            threshold[node] = thr

            for i in range(start, end):
                goes_left[S[best_f, i]] = 0
            for i in range(start, start + best_nl):
                goes_left[S[best_f, i]] = 1
            for f in range(n_features):
                lpos = start
                rpos = 0
                for i in range(start, end):
                    row = S[f, i]
                    if goes_left[row]:
                        S[f, lpos] = row
                        lpos += 1
                    else:
                        spill[rpos] = row
                        rpos += 1
                for i in range(rpos):
                    S[f, lpos + i] = spill[i]
            for i in range(start, end):
                idx[i] = S[best_f, i]

            st[0, sp] = start + best_nl
            st[1, sp] = end
            st[2, sp] = depth + 1
            st[3, sp] = node
            st[4, sp] = 0
            sp += 1
            st[0, sp] = start
            st[1, sp] = start + best_nl
            st[2, sp] = depth + 1
            st[3, sp] = node
            st[4, sp] = 1
            sp += 1

    free(pairs)
    free(tmp)
    return (feature_a[:count].copy(), threshold_a[:count].copy(), left_a[:count].copy(),
            right_a[:count].copy(), value_a[:count].copy(), n_node_a[:count].copy())
