"""Benchmark the hot convolution kernels: numba backend vs pure numpy.

Run from the repo root:

    python benchmarks/bench_conv.py

Workload shapes are taken from the actual networks (full preset and toy
preset on training-size patches). Reports forward and both gradient
kernels, plus the max absolute disagreement between backends.
"""

import time

import numpy as np

from dimosr.kernels import numpy_impl

try:
    from dimosr.kernels import numba_impl
except ImportError:
    numba_impl = None

WORKLOADS = [
    # (label, N, C_in, C_out, k, dilation, H, W)
    ("full: branch 1x1 36->9 @128", 1, 36, 9, 1, 1, 128, 128),
    ("full: branch 3x3 d8 9->9 @128", 1, 9, 9, 3, 8, 128, 128),
    ("full: erb 3x3 18->18 @128", 1, 18, 18, 3, 1, 128, 128),
    ("full: fuse 1x1 108->36 @128", 1, 108, 36, 1, 1, 128, 128),
    ("toy: branch 3x3 d4 4->4 @32", 4, 4, 4, 3, 4, 32, 32),
    ("toy: erb 3x3 8->8 @32", 4, 8, 8, 3, 1, 32, 32),
    ("toy: head 3x3 16->12 @32", 4, 16, 12, 3, 1, 32, 32),
]


def _timeit(fn, min_time=0.25):
    fn()  # warmup / jit
    n = 0
    t0 = time.perf_counter()
    while True:
        fn()
        n += 1
        dt = time.perf_counter() - t0
        if dt >= min_time:
            return dt / n


def bench(label, n, ci, co, k, dil, h, w):
    rng = np.random.default_rng(0)
    pad = dil * (k - 1) // 2
    xp = rng.standard_normal((n, ci, h + 2 * pad, w + 2 * pad)).astype(np.float32)
    wt = rng.standard_normal((co, ci, k, k)).astype(np.float32)
    ho = h + 2 * pad - dil * (k - 1)
    gout = rng.standard_normal((n, co, ho, ho)).astype(np.float32)
    macs = n * ci * co * k * k * ho * ho

    impls = [("numpy", numpy_impl)]
    if numba_impl is not None:
        impls.append(("numba", numba_impl))

    rows = {}
    for name, impl in impls:
        fwd = _timeit(lambda: impl.conv2d_forward(xp, wt, dil))
        gin = _timeit(lambda: impl.conv2d_grad_input(gout, wt, xp.shape[2], xp.shape[3], dil))
        gwt = _timeit(lambda: impl.conv2d_grad_weight(gout, xp, k, dil))
        rows[name] = (fwd, gin, gwt)
        print(f"  {name:>5}: fwd {fwd * 1e3:7.2f} ms ({macs / fwd / 1e9:5.2f} GMAC/s)   "
              f"grad_in {gin * 1e3:7.2f} ms   grad_w {gwt * 1e3:7.2f} ms")

    if numba_impl is not None:
        diff = np.max(np.abs(
            numpy_impl.conv2d_forward(xp, wt, dil) - numba_impl.conv2d_forward(xp, wt, dil)
        ))
        speedup = rows["numpy"][0] / rows["numba"][0]
        print(f"  numba fwd speedup {speedup:4.1f}x, max |numpy - numba| = {diff:.2e}")


def main():
    print(f"numba available: {numba_impl is not None}")
    for workload in WORKLOADS:
        print(workload[0])
        bench(*workload)
        print()


if __name__ == "__main__":
    main()
