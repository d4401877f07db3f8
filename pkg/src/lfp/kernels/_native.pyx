# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: exact squared Euclidean distance transform and
binary erosion with a square structuring element (reflect-101 border).

The pure-NumPy twins live in ``lfp.kernels.fallback`` and must produce
bit-identical results; ``tests/test_kernels.py`` enforces that.
"""

import numpy as np


cdef inline Py_ssize_t _mirror(Py_ssize_t i, Py_ssize_t n) noexcept nogil:
    # reflect-101 fold: ... 2 1 | 0 1 ... n-1 | n-2 n-3 ...
    cdef Py_ssize_t period
    if n == 1:
        return 0
    period = 2 * n - 2
    i = i % period
    if i < 0:
        i += period
    if i >= n:
        i = period - i
    return i


def edt_sq(mask):
    """Exact squared Euclidean distance to the nearest nonzero pixel.

    Returns float64 H x W; +inf where the mask has no nonzero pixel.
    """
    cdef const unsigned char[:, :] m = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t h = m.shape[0]
    cdef Py_ssize_t w = m.shape[1]
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, :] out = out_arr
    cdef double inf = float("inf")

    # Pass 1: per-column squared distance to the nearest nonzero row.
    cdef Py_ssize_t x, y, last, q, k
    cdef double d
    with nogil:
        for x in range(w):
            last = -1
            for y in range(h):
                if m[y, x]:
                    last = y
                    out[y, x] = 0.0
                elif last >= 0:
                    d = <double> (y - last)
                    out[y, x] = d * d
                else:
                    out[y, x] = inf
            last = -1
            for y in range(h - 1, -1, -1):
                if m[y, x]:
                    last = y
                elif last >= 0:
                    d = <double> (last - y)
                    if d * d < out[y, x]:
                        out[y, x] = d * d

    # Pass 2: 1-D lower envelope of parabolas along each row.
    v_arr = np.empty(w, dtype=np.intp)
    z_arr = np.empty(w + 1, dtype=np.float64)
    f_arr = np.empty(w, dtype=np.float64)
    cdef Py_ssize_t[:] v = v_arr
    cdef double[:] z = z_arr
    cdef double[:] f = f_arr
    cdef Py_ssize_t nv
    cdef double s
    with nogil:
        for y in range(h):
            for x in range(w):
                f[x] = out[y, x]
            nv = 0
            for q in range(w):
                if f[q] == inf:
                    continue
                if nv == 0:
                    v[0] = q
                    z[0] = -inf
                    z[1] = inf
                    nv = 1
                    continue
                while True:
                    k = v[nv - 1]
                    s = ((f[q] + q * q) - (f[k] + k * k)) / (2.0 * q - 2.0 * k)
                    if s <= z[nv - 1]:
                        nv -= 1
                        if nv == 0:
                            v[0] = q
                            z[0] = -inf
                            z[1] = inf
                            nv = 1
                            break
                    else:
                        v[nv] = q
                        z[nv] = s
                        z[nv + 1] = inf
                        nv += 1
                        break
            if nv == 0:
                continue  # whole row stays +inf
            k = 0
            for x in range(w):
                while z[k + 1] < x:
                    k += 1
                q = v[k]
                d = <double> (x - q)
                out[y, x] = d * d + f[q]
    return out_arr


def _erode_rows(const unsigned char[:, :] m, Py_ssize_t r):
    """Row-wise window-min (all-ones test) via zero prefix sums."""
    cdef Py_ssize_t h = m.shape[0]
    cdef Py_ssize_t w = m.shape[1]
    out_arr = np.empty((h, w), dtype=np.uint8)
    cdef unsigned char[:, :] out = out_arr
    prefix_arr = np.empty(w + 1, dtype=np.intp)
    cdef Py_ssize_t[:] prefix = prefix_arr
    cdef Py_ssize_t y, x, d, lo, hi
    cdef unsigned char keep
    with nogil:
        for y in range(h):
            prefix[0] = 0
            for x in range(w):
                prefix[x + 1] = prefix[x] + (m[y, x] == 0)
            if prefix[w] == 0:
                for x in range(w):
                    out[y, x] = 1
                continue
            for x in range(w):
                lo = x - r
                hi = x + r
                if lo >= 0 and hi < w:
                    out[y, x] = prefix[hi + 1] == prefix[lo]
                else:
                    keep = 1
                    for d in range(lo, hi + 1):
                        if not m[y, _mirror(d, w)]:
                            keep = 0
                            break
                    out[y, x] = keep
    return out_arr


def erode_binary(mask, Py_ssize_t ksize):
    """Binary erosion with a ksize x ksize square element, reflect-101 border."""
    if ksize < 1 or ksize % 2 == 0:
        raise ValueError("kernel size must be odd and >= 1")
    m = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t r = ksize // 2
    tmp = _erode_rows(m, r)
    return np.ascontiguousarray(_erode_rows(np.ascontiguousarray(tmp.T), r).T)
