"""Time one tree growth in the compiled kernel against the numpy fallback.

    python benchmarks/bench_tree.py [--rows N] [--repeats R]

Both backends are checked to grow the same tree before timings are shown.
"""
import argparse
import time

import numpy as np

from krf import _tree_py, forest
from krf.datagen import TunnelSpec, generate_tunnel
from krf.forest import Hyperparams, bootstrap_sample, tree_stream


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=4800)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)

    tun = generate_tunnel(TunnelSpec(length=1.5 * args.rows / 4, seed=0))
    X, Y = tun.telemetry.X, tun.telemetry.labels
    hp = Hyperparams()
    samples = bootstrap_sample(len(X), tree_stream(0, 0))
    call = (X, Y, samples, hp.max_depth, hp.min_samples_split, hp.min_samples_leaf, hp.m_try, 12345)

    t_py, ref = best_of(lambda: _tree_py.build_tree(*call), args.repeats)
    print(f"rows {len(X)}, features {X.shape[1]}, outputs {Y.shape[1]}, nodes {len(ref[0])}")
    print(f"python   {1e3 * t_py:9.1f} ms / tree")
    if forest.BACKEND != "compiled":
        print("compiled kernel not built; reinstall with Cython available to compare")
        return
    t_c, got = best_of(lambda: forest._tree_ext.build_tree(*call), args.repeats)
    same = all(np.array_equal(a, b) for a, b in zip(ref, got))
    print(f"compiled {1e3 * t_c:9.1f} ms / tree   speedup x{t_py / t_c:.1f}   identical: {same}")


if __name__ == "__main__":
    main()
