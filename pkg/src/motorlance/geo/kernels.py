"""Shortest-path kernels over CSR adjacency arrays.

Two interchangeable implementations of single-source Dijkstra are
provided: a loop kernel compiled with numba's @njit, and a vectorized
numpy fallback. Both produce bit-identical distance arrays (the scan
picks the first minimum, and per-expansion relaxations commute under
min). Selection:

  * env var MOTORLANCE_NUMBA=0|false|no forces the numpy fallback;
  * if numba is missing or fails to import, the fallback is used.

``benchmarks/bench_routing.py`` compares both paths on large graphs.
"""

from __future__ import annotations

import os

import numpy as np


def _env_wants_numba() -> bool:
    return os.environ.get("MOTORLANCE_NUMBA", "1").strip().lower() not in (
        "0",
        "false",
        "no",
        "off",
    )


def dijkstra_numpy(indptr: np.ndarray, adj_to: np.ndarray, edge_time: np.ndarray,
                   src: int) -> np.ndarray:
    """Distances from ``src`` to every node; np.inf where unreachable."""
    n = indptr.shape[0] - 1
    dist = np.full(n, np.inf, dtype=np.float64)
    visited = np.zeros(n, dtype=bool)
    dist[src] = 0.0
    masked = dist.copy()
    for _ in range(n):
        u = int(np.argmin(masked))
        du = masked[u]
        if not np.isfinite(du):
            break
        visited[u] = True
        masked[u] = np.inf
        lo, hi = indptr[u], indptr[u + 1]
        if lo == hi:
            continue
        targets = adj_to[lo:hi]
        candidate = du + edge_time[lo:hi]
        np.minimum.at(dist, targets, candidate)
        live = ~visited[targets]
        masked[targets[live]] = dist[targets[live]]
    return dist


def _dijkstra_loops(indptr, adj_to, edge_time, src):
    n = indptr.shape[0] - 1
    dist = np.full(n, np.inf, dtype=np.float64)
    visited = np.zeros(n, dtype=np.bool_)
    dist[src] = 0.0
    for _ in range(n):
        u = -1
        best = np.inf
        for i in range(n):
            if not visited[i] and dist[i] < best:
                best = dist[i]
                u = i
        if u < 0:
            break
        visited[u] = True
        for slot in range(indptr[u], indptr[u + 1]):
            v = adj_to[slot]
            nd = best + edge_time[slot]
            if nd < dist[v]:
                dist[v] = nd
    return dist


NUMBA_ENABLED = False
dijkstra_numba = None

if _env_wants_numba():
    try:
        from numba import njit

        dijkstra_numba = njit(cache=True)(_dijkstra_loops)
        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - exercised only without numba
        dijkstra_numba = None
        NUMBA_ENABLED = False

dijkstra = dijkstra_numba if NUMBA_ENABLED else dijkstra_numpy
