from motorlance.geo.types import (
    GeoPoint,
    VehicleClass,
    RoadEdge,
    RoadGraph,
    CongestionProfile,
    load_graph,
    load_graph_file,
)
from motorlance.geo.routing import (
    EARTH_RADIUS_M,
    haversine_distance,
    effective_speed,
    RoutingEngine,
)

__all__ = [
    "GeoPoint",
    "VehicleClass",
    "RoadEdge",
    "RoadGraph",
    "CongestionProfile",
    "load_graph",
    "load_graph_file",
    "EARTH_RADIUS_M",
    "haversine_distance",
    "effective_speed",
    "RoutingEngine",
]
