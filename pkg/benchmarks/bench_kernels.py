"""Compare the compiled and pure-Python continuum kernels.

    python benchmarks/bench_kernels.py [--points 2000] [--repeat 3]
"""

import argparse
import time

import numpy as np

from freebench import _pykernels, bench, continuum

try:
    from freebench import _ckernels
except ImportError:
    _ckernels = None


def sample(n: int, seed: int):
    rng = np.random.default_rng(seed)
    designs = [d for _, d in bench.table1_designs()]
    picks = [designs[k] for k in rng.integers(0, len(designs), n)]
    cols = [np.array([d.as_array()[j] for d in picks]) for j in range(4)]
    l = cols[1] + rng.uniform(-5, 5, n) * 1e-3
    phi = np.radians(rng.uniform(-120, 120, n))
    P = rng.uniform(0, 72.5e3, n)
    return (*cols, l, phi, P)


def best_time(fn, args, repeat: int) -> tuple[float, tuple]:
    best, out = np.inf, None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--points", type=int, default=2000)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    x, w = continuum.gauss_legendre()
    call = (*sample(args.points, args.seed), 5e5, 1e6, x, w)
    t_py, out_py = best_time(_pykernels.continuum_batch, call, args.repeat)
    print(f"python : {t_py * 1e3:9.2f} ms  ({t_py / args.points * 1e6:.1f} us/point)")
    if _ckernels is None:
        print("cython : not built")
        return 0
    t_c, out_c = best_time(_ckernels.continuum_batch, call, args.repeat)
    print(f"cython : {t_c * 1e3:9.2f} ms  ({t_c / args.points * 1e6:.1f} us/point)")
    ok = out_py[3] == 0
    dev = max(np.max(np.abs(out_c[k][ok] - out_py[k][ok]) / np.maximum(np.abs(out_py[k][ok]), 1e-12))
              for k in range(3))
    print(f"speedup: {t_py / t_c:.1f}x, max rel deviation {dev:.1e}, "
          f"{int(np.count_nonzero(~ok))} points without equilibrium")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
