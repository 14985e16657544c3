"""Compare the compiled kernels against the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Times ``smoothed_power`` and ``row_norms`` on row sets shaped like the
symmetric-gradient arrays of 2D and 3D grids, then one full general-p
optimizer run under each backend (in subprocesses, since the backend is
chosen at import time).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from kornlab import _kernels_py

try:
    from kornlab import _kernels
except ImportError:
    _kernels = None

OPTIMIZER = (
    "import time; from kornlab import constants, geometry as g; "
    "m = g.rasterize_shape(g.named_shape('square'), 1/16); t = time.perf_counter(); "
    "constants.korn_general_p(m, 1.5, restarts=2); print(time.perf_counter() - t)"
)


def bench(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if _kernels is None:
        sys.exit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'rows':>9}{'cols':>6}{'python ms':>12}{'cython ms':>12}{'speedup':>9}")
    for n, k in ((4_225, 4), (66_049, 4), (35_937, 9)):
        y = rng.standard_normal((n, k))
        w = np.ones(n)
        for name, a, b, fargs in (
            ("power p=1.5", _kernels_py.smoothed_power, _kernels.smoothed_power, (y, w, 1.5, 1e-6)),
            ("power p=1.7", _kernels_py.smoothed_power, _kernels.smoothed_power, (y, w, 1.7, 1e-6)),
            ("row_norms", _kernels_py.row_norms, _kernels.row_norms, (y,)),
        ):
            tp, tc = bench(a, fargs, args.repeat), bench(b, fargs, args.repeat)
            print(f"{name:<16}{n:>9}{k:>6}{tp * 1e3:>12.3f}{tc * 1e3:>12.3f}{tp / tc:>9.2f}")
    times = {}
    for label, flag in (("python", "1"), ("cython", "")):
        env = dict(os.environ, KORNLAB_PURE_PYTHON=flag)
        out = subprocess.run([sys.executable, "-c", OPTIMIZER], env=env, capture_output=True, text=True, check=True)
        times[label] = float(out.stdout)
    print(f"\nkorn_general_p(square, h=1/16, p=1.5): python {times['python']:.2f} s, "
          f"cython {times['cython']:.2f} s, speedup {times['python'] / times['cython']:.2f}")


if __name__ == "__main__":
    main()
