"""Congestion-aware travel times: great-circle distance, per-edge
effective speeds, and minimal-time routing with deterministic tie-breaks.

Routing freezes the congestion bucket at departure time (static snapshot:
trips are minutes long, buckets are hourly). Among equal-time routes the
lexicographically smallest node-id sequence wins.
"""

from __future__ import annotations

import math

import numpy as np

from motorlance.errors import UnknownEntityError, UnreachableError
from motorlance.geo import kernels
from motorlance.geo.types import (
    SECONDS_PER_DAY,
    CongestionProfile,
    GeoPoint,
    RoadEdge,
    RoadGraph,
    VehicleClass,
)

EARTH_RADIUS_M = 6_371_000.0

# Relative slack when deciding whether a candidate hop still lies on a
# minimal-time path; forward and backward partial sums round differently.
_PATH_TOL = 1e-9


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters on a sphere of radius 6,371,000 m."""
    lat1, lat2 = math.radians(a.lat), math.radians(b.lat)
    dlat = lat2 - lat1
    dlon = math.radians(b.lon) - math.radians(a.lon)
    h = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def effective_speed(
    edge: RoadEdge,
    vehicle: VehicleClass,
    profile: CongestionProfile,
    time_of_day_s: float,
) -> float:
    """Speed in m/s after scaling congestion by the class sensitivity:
    free_flow / (1 + sensitivity * (factor - 1))."""
    f = profile.factor(time_of_day_s, edge.width)
    s = profile.sensitivity(vehicle)
    return edge.free_flow_mps / (1.0 + s * (f - 1.0))


def _bucket(time_of_day_s: float) -> int:
    return int((time_of_day_s % SECONDS_PER_DAY) // 3600) % 24


class RoutingEngine:
    """Caches per-(class, hour) edge weights and Dijkstra distance arrays
    over one immutable graph/profile pair. Safe for concurrent reads."""

    def __init__(self, graph: RoadGraph, profile: CongestionProfile):
        self.graph = graph
        self.profile = profile
        self._factor_table = profile.factor_table()
        self._edge_times: dict = {}
        self._dist_from: dict = {}
        self._dist_to: dict = {}

    def _weights(self, vehicle: VehicleClass, bucket: int):
        key = (vehicle, bucket)
        cached = self._edge_times.get(key)
        if cached is None:
            s = self.profile.sensitivity(vehicle)
            factors = self._factor_table[bucket][self.graph.edge_width]
            mult = 1.0 + s * (factors - 1.0)
            fwd = self.graph.edge_base_time * mult
            cached = (fwd, fwd[self.graph.rev_perm])
            self._edge_times[key] = cached
        return cached

    def _node_index(self, node_id: str) -> int:
        idx = self.graph.index_of.get(node_id)
        if idx is None:
            raise UnknownEntityError(f"unknown graph node {node_id!r}")
        return idx

    def travel_times_from(
        self, node_id: str, vehicle: VehicleClass, depart_tod_s: float
    ) -> np.ndarray:
        """Seconds from ``node_id`` to every node (np.inf if unreachable)."""
        src = self._node_index(node_id)
        bucket = _bucket(depart_tod_s)
        key = (vehicle, bucket, src)
        dist = self._dist_from.get(key)
        if dist is None:
            fwd, _ = self._weights(vehicle, bucket)
            dist = kernels.dijkstra(self.graph.indptr, self.graph.adj_to, fwd, src)
            self._dist_from[key] = dist
        return dist

    def travel_times_to(
        self, node_id: str, vehicle: VehicleClass, depart_tod_s: float
    ) -> np.ndarray:
        """Seconds from every node to ``node_id`` (reverse-graph Dijkstra)."""
        dst = self._node_index(node_id)
        bucket = _bucket(depart_tod_s)
        key = (vehicle, bucket, dst)
        dist = self._dist_to.get(key)
        if dist is None:
            _, rev = self._weights(vehicle, bucket)
            dist = kernels.dijkstra(
                self.graph.rev_indptr, self.graph.rev_adj_to, rev, dst
            )
            self._dist_to[key] = dist
        return dist

    def shortest_travel_time(
        self,
        from_node: str,
        to_node: str,
        vehicle: VehicleClass,
        depart_tod_s: float,
    ) -> tuple[float, list]:
        """Minimal travel time in seconds plus its node-id path.

        Raises UnreachableError when no path exists. Ties between
        equal-time paths resolve to the lexicographically smallest node-id
        sequence (node indices are assigned in sorted-id order, so the
        greedy smallest-index walk below realizes exactly that order).
        """
        src = self._node_index(from_node)
        dst = self._node_index(to_node)
        if src == dst:
            return 0.0, [from_node]
        dist = self.travel_times_from(from_node, vehicle, depart_tod_s)
        total = float(dist[dst])
        if not math.isfinite(total):
            raise UnreachableError(from_node, to_node)
        distback = self.travel_times_to(to_node, vehicle, depart_tod_s)
        bucket = _bucket(depart_tod_s)
        fwd, _ = self._weights(vehicle, bucket)
        graph = self.graph
        limit = total + _PATH_TOL * max(1.0, total)

        path = [src]
        acc = 0.0
        u = src
        for _ in range(graph.n_nodes):
            if u == dst:
                break
            # slots are sorted by target index, so the first qualifying
            # target is the smallest; parallel edges keep the cheapest w
            best_v = -1
            best_w = math.inf
            for slot in range(graph.indptr[u], graph.indptr[u + 1]):
                v = int(graph.adj_to[slot])
                if best_v >= 0 and v > best_v:
                    break
                w = float(fwd[slot])
                if acc + w + float(distback[v]) <= limit and w < best_w:
                    best_v, best_w = v, w
            if best_v < 0:  # numerical dead end; cannot happen on finite totals
                raise UnreachableError(from_node, to_node)
            acc += best_w
            path.append(best_v)
            u = best_v
        return total, [graph.node_order[i] for i in path]
