#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Shapes mirror training reality: node-rows = batch size x mean subgraph size,
T_h=12 timesteps, C channels split across {1,3} kernel branches.
"""

import argparse
import time

import numpy as np

from flexcast.kernels import available_backends


def timeit(fn, repeats):
    fn()  # warmup
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1000.0


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()

    backends = available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; showing numpy only")
    rng = np.random.default_rng(0)

    rows = []
    for n_nodes, cin, cout in ((1280, 32, 16), (5120, 32, 16), (5120, 64, 32)):
        t = 12
        x = rng.standard_normal((n_nodes, t, cin))
        f = rng.standard_normal((3, cin, cout))
        gy = rng.standard_normal((n_nodes, t, cout))
        for op, call in (
            ("conv_fwd", lambda impl: impl.conv1d_causal_fwd(x, f, 1)),
            ("conv_bwd", lambda impl: impl.conv1d_causal_bwd(x, f, 1, gy)),
        ):
            entry = {"op": f"{op} [{n_nodes}x{t}x{cin}->{cout}]"}
            for name, impl in backends.items():
                entry[name] = timeit(lambda: call(impl), args.repeats)
            rows.append(entry)

    for n_nodes, n_edges, d in ((1280, 5120, 384), (5120, 20480, 384)):
        h = rng.standard_normal((n_nodes, d))
        src = rng.integers(0, n_nodes, n_edges).astype(np.int64)
        dst = rng.integers(0, n_nodes, n_edges).astype(np.int64)
        entry = {"op": f"edge_scatter [{n_edges}e x {d}]"}
        for name, impl in backends.items():
            entry[name] = timeit(lambda: impl.edge_scatter_add(h, src, dst,
                                                               n_nodes),
                                 args.repeats)
        rows.append(entry)

    names = list(backends)
    header = f"{'kernel':40s}" + "".join(f"{n:>12s}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10s}"
    print(header)
    print("-" * len(header))
    for entry in rows:
        line = f"{entry['op']:40s}"
        for n in names:
            line += f"{entry[n]:>10.2f}ms"
        if len(names) == 2:
            line += f"{entry['numpy'] / entry['compiled']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
