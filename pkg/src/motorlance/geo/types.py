"""Road network model: geographic points, vehicle classes, the weighted
road graph, and time-of-day congestion profiles.

Graphs are always stored directed. An undirected input is expanded into
two directed edges per input edge at load time. Node indices used by the
routing kernels are assigned in sorted node-id order, so comparing index
sequences is equivalent to comparing node-id sequences lexicographically.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from motorlance.errors import ConfigError, ValidationError

HOURS_PER_DAY = 24
SECONDS_PER_DAY = 86400.0

WIDTH_NARROW = 0
WIDTH_WIDE = 1
_WIDTH_NAMES = {"narrow": WIDTH_NARROW, "wide": WIDTH_WIDE}


@dataclass(frozen=True)
class GeoPoint:
    """WGS84 coordinate, degrees; validated at construction."""

    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValidationError("GeoPoint coordinates must be finite")
        if not -90.0 <= self.lat <= 90.0:
            raise ValidationError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValidationError(f"longitude {self.lon} outside [-180, 180]")


class VehicleClass(str, Enum):
    MOTORCYCLE = "motorcycle"
    MOTORLANCE = "motorlance"
    AMBULANCE = "ambulance"


@dataclass(frozen=True)
class RoadEdge:
    edge_id: str
    from_node: str
    to_node: str
    length_m: float
    free_flow_mps: float
    width: str  # "narrow" | "wide"

    def __post_init__(self):
        if self.length_m <= 0:
            raise ValidationError(f"edge {self.edge_id}: length_m must be > 0")
        if self.free_flow_mps <= 0:
            raise ValidationError(f"edge {self.edge_id}: free_flow_mps must be > 0")
        if self.width not in _WIDTH_NAMES:
            raise ValidationError(f"edge {self.edge_id}: width must be narrow|wide")


@dataclass(frozen=True)
class CongestionProfile:
    """Hourly congestion factors per road width class plus per-vehicle-class
    sensitivity to congestion.

    ``factors[width]`` must hold exactly 24 values, one per hour bucket,
    each >= 1. Sensitivities lie in [0, 1]; 0 means the class ignores
    congestion entirely, 1 means it bears the full factor.
    """

    factors: dict  # width name -> tuple of 24 floats
    class_sensitivity: dict  # VehicleClass -> float

    def __post_init__(self):
        for width in ("narrow", "wide"):
            if width not in self.factors:
                raise ConfigError(f"profile missing hourly factors for {width!r}")
            values = tuple(float(v) for v in self.factors[width])
            if len(values) != HOURS_PER_DAY:
                raise ConfigError(
                    f"profile for {width!r} must carry {HOURS_PER_DAY} hourly factors"
                )
            if any(v < 1.0 for v in values):
                raise ConfigError(f"congestion factors must be >= 1 ({width!r})")
            object.__setattr__(self, "factors", {**self.factors, width: values})
        sens = {}
        for cls in VehicleClass:
            if cls not in self.class_sensitivity and cls.value not in self.class_sensitivity:
                raise ConfigError(f"profile missing sensitivity for {cls.value}")
            raw = self.class_sensitivity.get(cls, self.class_sensitivity.get(cls.value))
            raw = float(raw)
            if not 0.0 <= raw <= 1.0:
                raise ConfigError(f"sensitivity for {cls.value} outside [0, 1]")
            sens[cls] = raw
        object.__setattr__(self, "class_sensitivity", sens)

    def factor(self, time_of_day_s: float, width: str) -> float:
        """Congestion factor for the hourly bucket containing ``time_of_day_s``."""
        if width not in self.factors:
            raise ConfigError(f"unknown width class {width!r}")
        bucket = int(time_of_day_s % SECONDS_PER_DAY // 3600) % HOURS_PER_DAY
        return self.factors[width][bucket]

    def sensitivity(self, vehicle: VehicleClass) -> float:
        return self.class_sensitivity[vehicle]

    def factor_table(self) -> np.ndarray:
        """(24, 2) array indexed by [hour, width_code]."""
        table = np.empty((HOURS_PER_DAY, 2), dtype=np.float64)
        table[:, WIDTH_NARROW] = self.factors["narrow"]
        table[:, WIDTH_WIDE] = self.factors["wide"]
        return table


@dataclass
class RoadGraph:
    """Directed weighted road network with CSR adjacency for the kernels.

    ``node_order`` is the sorted node-id list; ``index_of`` maps id -> index.
    Forward CSR arrays are sorted by (from_idx, to_idx) and the reverse CSR
    by (to_idx, from_idx); ``rev_perm`` maps each reverse slot back to its
    forward slot so per-query edge weights can be permuted cheaply.
    """

    nodes: dict  # node_id -> GeoPoint
    edges: list  # list[RoadEdge], directed
    directed: bool = True

    node_order: list = field(init=False, repr=False)
    index_of: dict = field(init=False, repr=False)
    indptr: np.ndarray = field(init=False, repr=False)
    adj_to: np.ndarray = field(init=False, repr=False)
    edge_base_time: np.ndarray = field(init=False, repr=False)  # length/free_flow per slot
    edge_width: np.ndarray = field(init=False, repr=False)
    slot_edge: list = field(init=False, repr=False)  # slot -> RoadEdge
    rev_indptr: np.ndarray = field(init=False, repr=False)
    rev_adj_to: np.ndarray = field(init=False, repr=False)
    rev_perm: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.nodes:
            raise ValidationError("graph must contain at least one node")
        for edge in self.edges:
            if edge.from_node not in self.nodes or edge.to_node not in self.nodes:
                raise ValidationError(
                    f"edge {edge.edge_id} references unknown node"
                )
        seen = set()
        for edge in self.edges:
            if edge.edge_id in seen:
                raise ValidationError(f"duplicate edge id {edge.edge_id!r}")
            seen.add(edge.edge_id)
        self._build_index()

    def _build_index(self):
        self.node_order = sorted(self.nodes)
        self.index_of = {nid: i for i, nid in enumerate(self.node_order)}
        n = len(self.node_order)
        m = len(self.edges)

        order = sorted(
            range(m),
            key=lambda k: (
                self.index_of[self.edges[k].from_node],
                self.index_of[self.edges[k].to_node],
            ),
        )
        self.adj_to = np.empty(m, dtype=np.int64)
        self.edge_base_time = np.empty(m, dtype=np.float64)
        self.edge_width = np.empty(m, dtype=np.int64)
        self.slot_edge = []
        from_idx = np.empty(m, dtype=np.int64)
        for slot, k in enumerate(order):
            edge = self.edges[k]
            from_idx[slot] = self.index_of[edge.from_node]
            self.adj_to[slot] = self.index_of[edge.to_node]
            self.edge_base_time[slot] = edge.length_m / edge.free_flow_mps
            self.edge_width[slot] = _WIDTH_NAMES[edge.width]
            self.slot_edge.append(edge)
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(self.indptr, from_idx + 1, 1)
        np.cumsum(self.indptr, out=self.indptr)

        rev_order = sorted(range(m), key=lambda s: (self.adj_to[s], from_idx[s]))
        self.rev_perm = np.asarray(rev_order, dtype=np.int64)
        self.rev_adj_to = from_idx[self.rev_perm]
        self.rev_indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(self.rev_indptr, self.adj_to[self.rev_perm] + 1, 1)
        np.cumsum(self.rev_indptr, out=self.rev_indptr)

        self._lat = np.array(
            [self.nodes[nid].lat for nid in self.node_order], dtype=np.float64
        )
        self._lon = np.array(
            [self.nodes[nid].lon for nid in self.node_order], dtype=np.float64
        )

    @property
    def n_nodes(self) -> int:
        return len(self.node_order)

    def has_node(self, node_id: str) -> bool:
        return node_id in self.nodes

    def nearest_node(self, point: GeoPoint) -> str:
        """Snap a point to the nearest graph node by great-circle distance.

        Ties resolve to the lexicographically smallest node id (node_order
        is sorted and argmin returns the first minimum).
        """
        lat1 = math.radians(point.lat)
        lat2 = np.radians(self._lat)
        dlat = lat2 - lat1
        dlon = np.radians(self._lon) - math.radians(point.lon)
        a = np.sin(dlat / 2.0) ** 2 + math.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
        # argmin over the central angle; the monotone transform preserves order
        return self.node_order[int(np.argmin(a))]

    def edge_by_id(self, edge_id: str) -> RoadEdge:
        for edge in self.edges:
            if edge.edge_id == edge_id:
                return edge
        raise ValidationError(f"unknown edge id {edge_id!r}")


def _expand_undirected(edges: list) -> list:
    out = []
    for edge in edges:
        out.append(edge)
        out.append(
            RoadEdge(
                edge_id=edge.edge_id + "~rev",
                from_node=edge.to_node,
                to_node=edge.from_node,
                length_m=edge.length_m,
                free_flow_mps=edge.free_flow_mps,
                width=edge.width,
            )
        )
    return out


def load_graph(doc: dict) -> tuple[RoadGraph, CongestionProfile]:
    """Build a graph and profile from the documented JSON structure.

    Top-level keys: ``nodes`` (id, lat, lon), ``edges`` (id, from, to,
    length_m, free_flow_mps, width), ``profile`` (hourly factors per width
    class plus per-class sensitivities), optional ``directed`` flag
    (default false: each input edge becomes a directed pair).
    """
    try:
        nodes = {}
        for row in doc["nodes"]:
            nid = str(row["id"])
            if nid in nodes:
                raise ConfigError(f"duplicate node id {nid!r}")
            nodes[nid] = GeoPoint(float(row["lat"]), float(row["lon"]))
        edges = [
            RoadEdge(
                edge_id=str(row["id"]),
                from_node=str(row["from"]),
                to_node=str(row["to"]),
                length_m=float(row["length_m"]),
                free_flow_mps=float(row["free_flow_mps"]),
                width=str(row["width"]),
            )
            for row in doc["edges"]
        ]
        directed = bool(doc.get("directed", False))
        if not directed:
            edges = _expand_undirected(edges)
        profile_doc = doc["profile"]
        profile = CongestionProfile(
            factors=profile_doc["hourly_factors"],
            class_sensitivity=profile_doc["class_sensitivity"],
        )
    except KeyError as exc:
        raise ConfigError(f"graph document missing key {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed graph document: {exc}") from exc
    graph = RoadGraph(nodes=nodes, edges=edges, directed=True)
    return graph, profile


def load_graph_file(path: str | Path) -> tuple[RoadGraph, CongestionProfile]:
    with open(path, "r", encoding="utf-8") as fh:
        return load_graph(json.load(fh))
