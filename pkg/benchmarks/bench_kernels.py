"""Benchmark the compiled kernels against the pure-NumPy fallback.

The two backends must agree bit-exactly; this script verifies that on
every case while timing them. Run as: python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from lfp.kernels import fallback

try:
    from lfp.kernels import _native
except ImportError:
    _native = None


def best_of(fn, repeats=3):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_case(label, native_fn, fallback_fn):
    t_fb, out_fb = best_of(fallback_fn)
    if _native is None:
        print(f"{label:<34} fallback {t_fb * 1e3:9.2f} ms   (extension not built)")
        return
    t_nat, out_nat = best_of(native_fn)
    assert np.array_equal(out_nat, out_fb), f"{label}: backends disagree"
    print(f"{label:<34} native {t_nat * 1e3:9.2f} ms   fallback {t_fb * 1e3:9.2f} ms"
          f"   speedup {t_fb / t_nat:6.1f}x")


def main():
    rng = np.random.default_rng(0)
    print(f"native extension available: {_native is not None}\n")
    for side in (256, 512, 1024):
        mask = (rng.random((side, side)) < 0.02).astype(np.uint8)
        bench_case(f"edt_sq {side}x{side}",
                   lambda m=mask: _native.edt_sq(m),
                   lambda m=mask: fallback.edt_sq(m))
    for side, k in ((512, 3), (512, 15), (1024, 35)):
        blob = (rng.random((side, side)) < 0.6).astype(np.uint8)
        bench_case(f"erode_binary {side}x{side} k={k}",
                   lambda b=blob, kk=k: _native.erode_binary(b, kk),
                   lambda b=blob, kk=k: fallback.erode_binary(b, kk))


if __name__ == "__main__":
    main()
