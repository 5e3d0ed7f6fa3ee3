"""Compiled vs numpy kernels on Hausdorff-content workloads.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from spectrolab import _kernels_py
from spectrolab.grid import build_torus
from spectrolab.sets import SetSpec, generate_set

try:
    from spectrolab import _kernels
except ImportError:
    _kernels = None

CASES = [
    ("cantor-dust 1-D N=2187", 1, 1.0, 2187, {"depth": 5}, [0.01, 0.05, 0.25]),
    ("cantor-dust 1-D N=6561", 1, 1.0, 6561, {"depth": 6}, [0.01, 0.05, 0.25]),
    ("cantor-dust 2-D N=81", 2, 1.0, 81, {"depth": 3}, [0.05, 0.1, 0.25]),
]


def bench(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled extension not built; only the numpy backend is available")
    print(f"{'case':28s} {'kernel':13s} {'radius':>7s} {'numpy ms':>10s} {'compiled ms':>12s} {'speedup':>8s}")
    for label, dim, L, N, params, radii in CASES:
        grid = build_torus(dim, L, N)
        obs = generate_set(SetSpec("cantor-dust", params), grid)
        members = obs.nodes
        for r in radii:
            offs = grid.ball_offsets(r)
            for name in ("ball_counts", "greedy_cover"):
                py = getattr(_kernels_py, name)
                t_py = bench(lambda: py(members, grid.shape, offs), args.repeat)
                if _kernels is None:
                    print(f"{label:28s} {name:13s} {r:7.3f} {1e3 * t_py:10.2f} {'-':>12s} {'-':>8s}")
                    continue
                cy = getattr(_kernels, name)
                a, b = py(members, grid.shape, offs), cy(members, grid.shape, offs)
                assert np.array_equal(np.asarray(a), np.asarray(b)), f"{name} backends disagree"
                t_cy = bench(lambda: cy(members, grid.shape, offs), args.repeat)
                print(f"{label:28s} {name:13s} {r:7.3f} {1e3 * t_py:10.2f} {1e3 * t_cy:12.2f} {t_py / t_cy:8.1f}x")


if __name__ == "__main__":
    main()
