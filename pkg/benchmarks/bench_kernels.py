"""Compare the numba kernels against the pure-numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``.  The first numba call
compiles (or loads from cache), so it is timed separately and excluded
from the per-call figures.  Both backends are imported from the same
module, so the environment flag does not matter here.
"""
import time
import timeit

import numpy as np

from otng import _kernels
from otng.models import hypercube_graph, path_graph


def _time(fn, number):
    return min(timeit.repeat(fn, number=number, repeat=5)) / number


def bench(name, g, rng, n_seg=32, number=200):
    n, ei, ej, w = g.n, g.ei, g.ej, g.weights
    a = rng.dirichlet(np.ones(n))
    x, y = rng.standard_normal(n), rng.standard_normal(n)
    pbar = rng.dirichlet(np.ones(n), size=n_seg)
    sig = rng.standard_normal((n_seg, n))
    sig -= sig.mean(axis=1, keepdims=True)
    cases = {
        "laplacian": (lambda f: f(n, ei, ej, w, a), _kernels.laplacian_py, _kernels.laplacian_jit),
        "gamma": (lambda f: f(n, ei, ej, w, x, y), _kernels.gamma_py, _kernels.gamma_jit),
        "segment_duals": (lambda f: f(n, ei, ej, w, pbar, sig), _kernels.segment_duals_py,
                          _kernels.segment_duals_jit),
    }
    for kernel, (call, py, jit) in cases.items():
        t0 = time.perf_counter()
        out_jit = call(jit)
        first = time.perf_counter() - t0
        out_py = call(py)
        a_, b_ = (out_jit, out_py) if isinstance(out_py, tuple) else ((out_jit,), (out_py,))
        err = max(float(np.max(np.abs(np.asarray(u) - np.asarray(v)))) for u, v in zip(a_, b_))
        reps = number if kernel != "segment_duals" else max(number // 10, 5)
        t_py = _time(lambda: call(py), reps)
        t_jit = _time(lambda: call(jit), reps)
        print(f"{name:>12} {kernel:>14}  numpy {t_py * 1e6:10.1f} us  numba {t_jit * 1e6:10.1f} us"
              f"  speedup {t_py / t_jit:6.2f}x  first-call {first:6.3f} s  max|diff| {err:.1e}")


def main():
    rng = np.random.default_rng(0)
    print(f"numba available: {_kernels.numba is not None}; active backend: {_kernels.BACKEND}")
    bench("path(3)", path_graph(3), rng)
    bench("cube(4)", hypercube_graph(4), rng)
    bench("cube(7)", hypercube_graph(7), rng, n_seg=8, number=50)


if __name__ == "__main__":
    main()
