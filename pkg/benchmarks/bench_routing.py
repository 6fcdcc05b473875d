"""Compare the numba Dijkstra kernel against the numpy fallback.

Builds random connected road-like graphs (grid plus shortcut edges) in
CSR form, runs both kernels over the same sources, checks that the
distance arrays are bit-identical, and reports timings.

    python3 benchmarks/bench_routing.py [--sizes 400,1600,3600] [--sources 50]
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from motorlance.geo.kernels import NUMBA_ENABLED, dijkstra_numba, dijkstra_numpy


def grid_graph_csr(side: int, rng: np.random.Generator):
    """A side x side grid with bidirectional edges plus ~5% random
    shortcuts; edge times drawn from [10, 100) seconds."""
    n = side * side
    edges = []
    for r in range(side):
        for c in range(side):
            u = r * side + c
            if c + 1 < side:
                edges.append((u, u + 1))
            if r + 1 < side:
                edges.append((u, u + side))
    extra = max(1, len(edges) // 20)
    for _ in range(extra):
        u, v = rng.integers(0, n, size=2)
        if u != v:
            edges.append((int(u), int(v)))

    directed = []
    for u, v in edges:
        w = float(rng.uniform(10.0, 100.0))
        directed.append((u, v, w))
        directed.append((v, u, w))
    directed.sort()

    indptr = np.zeros(n + 1, dtype=np.int64)
    adj_to = np.empty(len(directed), dtype=np.int64)
    edge_time = np.empty(len(directed), dtype=np.float64)
    for i, (u, v, w) in enumerate(directed):
        indptr[u + 1] += 1
        adj_to[i] = v
        edge_time[i] = w
    np.cumsum(indptr, out=indptr)
    return indptr, adj_to, edge_time


def time_kernel(kernel, indptr, adj_to, edge_time, sources) -> tuple:
    start = time.perf_counter()
    dists = [kernel(indptr, adj_to, edge_time, s) for s in sources]
    return time.perf_counter() - start, dists


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="400,1600,3600",
                        help="comma-separated node counts (squares work best)")
    parser.add_argument("--sources", type=int, default=50,
                        help="single-source runs per graph")
    args = parser.parse_args(argv)

    if not NUMBA_ENABLED:
        print("numba unavailable or disabled (MOTORLANCE_NUMBA=0); "
              "nothing to compare", file=sys.stderr)
        return 1

    rng = np.random.default_rng(7)
    sizes = [int(s) for s in args.sizes.split(",")]

    print(f"{'nodes':>7}{'edges':>9}{'numpy s':>10}{'numba s':>10}"
          f"{'speedup':>9}  identical")
    for size in sizes:
        side = max(2, int(round(size ** 0.5)))
        indptr, adj_to, edge_time = grid_graph_csr(side, rng)
        n = indptr.shape[0] - 1
        sources = rng.integers(0, n, size=args.sources)

        # trigger compilation outside the timed region
        dijkstra_numba(indptr, adj_to, edge_time, 0)

        t_np, d_np = time_kernel(dijkstra_numpy, indptr, adj_to, edge_time, sources)
        t_nb, d_nb = time_kernel(dijkstra_numba, indptr, adj_to, edge_time, sources)

        identical = all(
            np.array_equal(a, b, equal_nan=True) for a, b in zip(d_np, d_nb)
        )
        print(f"{n:>7}{len(adj_to):>9}{t_np:>10.3f}{t_nb:>10.3f}"
              f"{t_np / t_nb:>8.1f}x  {identical}")
        if not identical:
            print("MISMATCH: kernels disagree", file=sys.stderr)
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
