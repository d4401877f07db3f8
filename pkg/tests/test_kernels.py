"""Compiled vs fallback kernel equivalence and brute-force oracles."""

import numpy as np
import pytest

from lfp.kernels import backend, edt_sq, erode_binary, fallback


def brute_force_edt_sq(mask):
    """O(N^2) oracle: min squared distance to any nonzero pixel."""
    h, w = mask.shape
    ys, xs = np.nonzero(mask)
    out = np.full((h, w), np.inf)
    if len(ys) == 0:
        return out
    for y in range(h):
        for x in range(w):
            out[y, x] = np.min((ys - y) ** 2 + (xs - x) ** 2).astype(np.float64)
    return out


def brute_force_erode(mask, k):
    """Direct min filter with reflect-101 borders via index folding."""
    h, w = mask.shape
    r = k // 2

    def fold(i, n):
        if n == 1:
            return 0
        period = 2 * n - 2
        i %= period
        return period - i if i >= n else i

    out = np.zeros_like(mask)
    for y in range(h):
        for x in range(w):
            val = 1
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    if not mask[fold(y + dy, h), fold(x + dx, w)]:
                        val = 0
            out[y, x] = val
    return out


def test_edt_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(20):
        mask = (rng.random((17, 23)) < 0.1).astype(np.uint8)
        got = edt_sq(mask)
        want = brute_force_edt_sq(mask)
        np.testing.assert_array_equal(got, want)


def test_edt_empty_mask_is_all_inf():
    out = edt_sq(np.zeros((5, 9), np.uint8))
    assert np.isinf(out).all()


def test_edt_zero_exactly_on_targets():
    rng = np.random.default_rng(1)
    mask = (rng.random((30, 30)) < 0.05).astype(np.uint8)
    mask[4, 7] = 1
    out = edt_sq(mask)
    assert (out[mask == 1] == 0).all()
    assert (out[mask == 0] > 0).all()


def test_erode_matches_brute_force():
    rng = np.random.default_rng(2)
    for k in (1, 3, 5, 9):
        mask = (rng.random((12, 15)) < 0.7).astype(np.uint8)
        np.testing.assert_array_equal(erode_binary(mask, k), brute_force_erode(mask, k))


def test_erode_rejects_even_or_nonpositive_kernels():
    mask = np.ones((4, 4), np.uint8)
    for k in (0, 2, -1, 4):
        with pytest.raises(ValueError):
            erode_binary(mask, k)


def test_erode_kernel_one_is_identity():
    rng = np.random.default_rng(3)
    mask = (rng.random((9, 9)) < 0.5).astype(np.uint8)
    np.testing.assert_array_equal(erode_binary(mask, 1), mask)


def test_erode_pad_wider_than_image():
    mask = np.ones((4, 4), np.uint8)
    mask[0, 0] = 0
    got = erode_binary(mask, 11)  # radius 5 exceeds the 4-px side
    np.testing.assert_array_equal(got, brute_force_erode(mask, 11))


@pytest.mark.skipif(backend() != "native", reason="extension not built")
def test_backends_agree_bitwise():
    rng = np.random.default_rng(4)
    for _ in range(10):
        mask = (rng.random((40, 33)) < 0.08).astype(np.uint8)
        np.testing.assert_array_equal(edt_sq(mask), fallback.edt_sq(mask))
        blob = (rng.random((40, 33)) < 0.6).astype(np.uint8)
        for k in (3, 7):
            np.testing.assert_array_equal(
                erode_binary(blob, k), fallback.erode_binary(blob, k))
