"""Pure-NumPy implementations of the hot kernels.

Used when the compiled extension is unavailable (or forced via
``LFP_KERNEL_BACKEND=python``). Results are bit-identical to the
compiled versions.
"""

from __future__ import annotations

import numpy as np


def mirror_indices(start: int, stop: int, n: int) -> np.ndarray:
    """Reflect-101 index fold of range(start, stop) into [0, n)."""
    idx = np.arange(start, stop, dtype=np.int64)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * n - 2
    idx = np.mod(idx, period)
    return np.where(idx >= n, period - idx, idx)


def edt_sq(mask: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distance to the nearest nonzero pixel."""
    m = np.ascontiguousarray(mask, dtype=np.uint8)
    h, w = m.shape
    out = np.full((h, w), np.inf, dtype=np.float64)

    # Pass 1: per-column distance to the nearest nonzero row, vectorized
    # with running nearest-row indices in both scan directions.
    rows = np.arange(h, dtype=np.float64)[:, None]
    hit = m.astype(bool)
    idx = np.where(hit, rows, -np.inf)
    down = np.maximum.accumulate(idx, axis=0)  # nearest hit at or above
    idx = np.where(hit, rows, np.inf)
    up = np.minimum.accumulate(idx[::-1], axis=0)[::-1]  # at or below
    d_down = np.where(np.isfinite(down), (rows - down) ** 2, np.inf)
    d_up = np.where(np.isfinite(up), (up - rows) ** 2, np.inf)
    out = np.minimum(d_down, d_up)

    # Pass 2: 1-D lower envelope of parabolas along each row.
    inf = np.inf
    for y in range(h):
        f = out[y]
        v = np.empty(w, dtype=np.intp)
        z = np.empty(w + 1, dtype=np.float64)
        nv = 0
        for q in range(w):
            fq = f[q]
            if fq == inf:
                continue
            if nv == 0:
                v[0] = q
                z[0] = -inf
                z[1] = inf
                nv = 1
                continue
            while True:
                k = v[nv - 1]
                s = ((fq + q * q) - (f[k] + k * k)) / (2.0 * q - 2.0 * k)
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
            continue
        k = 0
        res = np.empty(w, dtype=np.float64)
        for x in range(w):
            while z[k + 1] < x:
                k += 1
            q = v[k]
            res[x] = float(x - q) ** 2 + f[q]
        out[y] = res
    return out


def erode_binary(mask: np.ndarray, ksize: int) -> np.ndarray:
    """Binary erosion with a ksize x ksize square element, reflect-101 border."""
    if ksize < 1 or ksize % 2 == 0:
        raise ValueError("kernel size must be odd and >= 1")
    m = np.ascontiguousarray(mask, dtype=np.uint8)
    h, w = m.shape
    r = ksize // 2
    cols = mirror_indices(-r, w + r, w)
    padded = m[:, cols]
    tmp = np.ones((h, w), dtype=np.uint8)
    for d in range(ksize):
        np.minimum(tmp, padded[:, d:d + w], out=tmp)
    rows = mirror_indices(-r, h + r, h)
    padded = tmp[rows, :]
    out = np.ones((h, w), dtype=np.uint8)
    for d in range(ksize):
        np.minimum(out, padded[d:d + h, :], out=out)
    return out
