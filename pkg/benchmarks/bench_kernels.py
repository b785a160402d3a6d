"""Time the compiled kernels against the numpy fallback.

Run from the repository root::

    python benchmarks/bench_kernels.py [--repeat 5]

Both backends are imported directly, so no environment variable is needed.
The last column is the largest absolute difference between the backends;
numpy's vectorized log/cos may differ from libm by an ulp.
"""

import argparse
import sys
import timeit

import numpy as np

from astro_tr import _kernels_py as pure

try:
    from astro_tr import _kernels as compiled
except ImportError:
    compiled = None


def cases(n):
    keys = pure.derive_keys(pure.root_key(7), np.arange(n, dtype=np.uint64))
    times = np.linspace(-3.0, 3.0, 4)
    return {
        "derive_keys": lambda m: m.derive_keys(m.root_key(7), np.arange(n, dtype=np.uint64)),
        "uniforms(8)": lambda m: m.uniforms(keys, 0, 8),
        "normals(8)": lambda m: m.normals(keys, 0, 8),
        "brownian(4 pts)": lambda m: m.brownian(keys, times, 16.0, 30),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", type=int, nargs="+", default=[1, 64, 4096, 65536])
    args = ap.parse_args(argv)
    if compiled is None:
        print("compiled extension not built; only the fallback is available", file=sys.stderr)
        return 1

    print(f"{'kernel':<18}{'n':>8}{'compiled ms':>14}{'numpy ms':>12}{'speedup':>10}{'max |diff|':>12}")
    for n in args.sizes:
        for name, fn in cases(n).items():
            a, b = fn(compiled), fn(pure)
            diff = 0 if a.dtype.kind == "u" and np.array_equal(a, b) else float(np.max(np.abs(a.astype(float) - b.astype(float))))
            number = max(1, 20000 // n)
            tc = min(timeit.repeat(lambda: fn(compiled), number=number, repeat=args.repeat)) / number
            tp = min(timeit.repeat(lambda: fn(pure), number=number, repeat=args.repeat)) / number
            print(f"{name:<18}{n:>8}{tc * 1e3:>14.4f}{tp * 1e3:>12.4f}{tp / tc:>10.2f}{diff:>12.2g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
