"""Independent brute-force oracles shared by the test modules.

Everything here is deliberately naive (nested loops, explicit index
folding) and never calls into the implementation paths it checks.
"""

import numpy as np


def fold101(i: int, n: int) -> int:
    """Reflect-101 fold of one index, by stepping."""
    if n == 1:
        return 0
    while i < 0 or i >= n:
        if i < 0:
            i = -i
        if i >= n:
            i = 2 * (n - 1) - i
    return i


def mirror_window(arr: np.ndarray, y0: int, x0: int, side_y: int, side_x: int) -> np.ndarray:
    """Window [y0, y0+side_y) x [x0, x0+side_x) with reflect-101 borders."""
    h, w = arr.shape[:2]
    out = np.empty((side_y, side_x) + arr.shape[2:], dtype=arr.dtype)
    for i in range(side_y):
        for j in range(side_x):
            out[i, j] = arr[fold101(y0 + i, h), fold101(x0 + j, w)]
    return out


def erode_oracle(mask: np.ndarray, k: int) -> np.ndarray:
    """Square min filter with reflect-101 borders."""
    h, w = mask.shape
    r = k // 2
    out = np.zeros_like(mask)
    for y in range(h):
        for x in range(w):
            val = 1
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    if not mask[fold101(y + dy, h), fold101(x + dx, w)]:
                        val = 0
            out[y, x] = val
    return out


def edt_oracle(mask: np.ndarray) -> np.ndarray:
    """Exact Euclidean distances (not squared) by exhaustive minimization."""
    h, w = mask.shape
    ys, xs = np.nonzero(mask)
    out = np.full((h, w), np.inf)
    if len(ys) == 0:
        return out
    for y in range(h):
        for x in range(w):
            out[y, x] = np.sqrt(np.min((ys - y) ** 2 + (xs - x) ** 2))
    return out


def block_mean_oracle(fmap: np.ndarray, grid: int) -> np.ndarray:
    """Per-block means with round-half-up proportional boundaries."""
    c, h, w = fmap.shape

    def bounds(n):
        return [int(np.floor(k * n / grid + 0.5)) for k in range(grid + 1)]

    by, bx = bounds(h), bounds(w)
    out = np.empty((c, grid, grid), dtype=fmap.dtype)
    for i in range(grid):
        for j in range(grid):
            out[:, i, j] = fmap[:, by[i]:by[i + 1], bx[j]:bx[j + 1]].mean(axis=(1, 2))
    return out


def box3_oracle(plane: np.ndarray) -> np.ndarray:
    """3x3 mean filter with reflect-101 borders."""
    h, w = plane.shape
    out = np.zeros((h, w), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    acc += plane[fold101(y + dy, h), fold101(x + dx, w)]
            out[y, x] = acc / 9.0
    return out
