"""Time block_tridiag_solve: compiled extension against the numpy reference.

    python3 benchmarks/bench_kernels.py [--repeat 20]
"""

import argparse
import timeit

import numpy as np

from parapoisson import kernels


def make_system(batch, n_blocks, m, rng):
    lower = 0.1 * rng.standard_normal((n_blocks, m, m))
    upper = 0.1 * rng.standard_normal((n_blocks, m, m))
    diag = rng.standard_normal((batch, n_blocks, m, m)) + 4 * m * np.eye(m)
    rhs = rng.standard_normal((batch, n_blocks, m)) + 1j * rng.standard_normal((batch, n_blocks, m))
    return lower, diag, upper, rhs


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"dispatch backend: {kernels.BACKEND}")
    print(f"{'batch':>6} {'blocks':>7} {'m':>3} {'numpy ms':>10} {'active ms':>10} {'speedup':>8}")
    # batch = Fourier modes, blocks = interior x nodes, m = rank**2
    for batch, n_blocks, m in [(9, 99, 1), (17, 199, 4), (33, 199, 4), (17, 399, 9)]:
        system = make_system(batch, n_blocks, m, rng)
        ref = min(timeit.repeat(lambda: kernels.reference.block_tridiag_solve(*system),
                                number=1, repeat=args.repeat))
        fast = min(timeit.repeat(lambda: kernels.block_tridiag_solve(*system),
                                 number=1, repeat=args.repeat))
        print(f"{batch:>6} {n_blocks:>7} {m:>3} {1e3 * ref:>10.2f} {1e3 * fast:>10.2f} {ref / fast:>8.2f}")


if __name__ == "__main__":
    main()
