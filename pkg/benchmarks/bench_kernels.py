"""Compare the compiled kernels with the NumPy fallback.

Run with ``python3 benchmarks/bench_kernels.py``; prints the median time per
call for each kernel and grid size, and checks that both backends agree.
"""

import argparse
import timeit

import numpy as np

from dampedeuler.kernels import backends


def _cases(n, rng):
    x = np.sort(rng.normal(size=n))
    # a few ties so the run-length path is exercised
    x[n // 3: n // 3 + 4] = x[n // 3]
    w = np.ones(n)
    chi = np.cumsum(rng.uniform(0.5, 1.5, size=n)) / n
    # an inverted configuration that collapses into a handful of clusters
    xm = -np.linspace(-1, 1, n) + 1e-3 * rng.normal(size=n)
    vm = rng.normal(size=n)
    return {
        "sign_sum_sorted": lambda k: k.sign_sum_sorted(x, w),
        "pressure_gradient": lambda k: k.pressure_gradient(chi, 2.0),
        "merge_cascade": lambda k: k.merge_cascade(xm, vm, w, 1e-12),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(u, v) for u, v in zip(a, b))
    return np.allclose(a, b, rtol=1e-12, atol=1e-12)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="256,1024,4096")
    ap.add_argument("--repeat", type=int, default=7)
    args = ap.parse_args(argv)
    impls = backends()
    if "cython" not in impls:
        print("compiled extension not built; only the NumPy fallback is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<20} {'n':>6} " + " ".join(f"{name:>12}" for name in impls) + "   speedup")
    for n in (int(s) for s in args.sizes.split(",")):
        for kernel, call in _cases(n, rng).items():
            times = {}
            for name, mod in impls.items():
                number = 20 if kernel == "merge_cascade" else 200
                t = timeit.repeat(lambda: call(mod), number=number, repeat=args.repeat)
                times[name] = np.median(t) / number
            if len(impls) > 1:
                assert _same(call(impls["python"]), call(impls["cython"])), kernel
            speed = times["python"] / times["cython"] if "cython" in times else 1.0
            cols = " ".join(f"{times[name] * 1e6:>10.1f}us" for name in impls)
            print(f"{kernel:<20} {n:>6} {cols}   {speed:6.1f}x")


if __name__ == "__main__":
    main()
