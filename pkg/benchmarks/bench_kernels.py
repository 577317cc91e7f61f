"""Time the numba and numpy kernels side by side, then a full solve per backend.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from decmac import _kernels as k

SOLVE = """
import json, time
from decmac import _kernels, am_solve, FadingDistribution
t0 = time.perf_counter()
res = am_solve([(FadingDistribution.exponential(1.0), 1.0)] * 3)
print(json.dumps({"backend": _kernels.BACKEND, "seconds": time.perf_counter() - t0,
                  "capacity": res.capacity}))
"""


def inputs(n_atoms, n_gains, seed=0):
    rng = np.random.default_rng(seed)
    y = np.sort(rng.exponential(2.0, n_atoms))
    q = rng.random(n_atoms)
    q /= q.sum()
    x = np.sort(rng.exponential(1.0, n_gains))
    t = np.sort(rng.uniform(1e-3, 0.9, n_gains))[::-1].copy()
    p = np.full(n_gains, 1.0 / n_gains)
    return x, t, p, y, q


def bench_kernels(repeat):
    rows = []
    for n_atoms in (200, 512, 2048):
        x, t, p, y, q = inputs(n_atoms, 200)
        for name, args in (("eval_f", (x, y, q)), ("invert_f", (t, y, q)),
                           ("expected_log", (x, p, y, q))):
            fast, slow = getattr(k, f"{name}_numba"), getattr(k, f"{name}_numpy")
            fast(*args)  # compile
            tf = min(timeit.repeat(lambda: fast(*args), number=20, repeat=repeat)) / 20
            ts = min(timeit.repeat(lambda: slow(*args), number=20, repeat=repeat)) / 20
            rows.append((name, n_atoms, tf, ts))
    print(f"{'kernel':<14}{'atoms':>7}{'numba [ms]':>13}{'numpy [ms]':>13}{'speedup':>10}")
    for name, n, tf, ts in rows:
        print(f"{name:<14}{n:>7}{tf * 1e3:>13.4f}{ts * 1e3:>13.4f}{ts / tf:>10.1f}")


def bench_solve():
    print("\nK=3 Rayleigh solve at 0 dB (separate process per backend):")
    for flag in ("0", "1"):
        env = dict(os.environ, DECMAC_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", SOLVE], env=env, check=True,
                             capture_output=True, text=True).stdout
        r = json.loads(out.strip().splitlines()[-1])
        print(f"  {r['backend']:<6} {r['seconds']:8.2f} s   C = {r['capacity']:.12f}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if not k.HAVE_NUMBA:
        sys.exit("numba is not installed")
    bench_kernels(args.repeat)
    bench_solve()


if __name__ == "__main__":
    main()
