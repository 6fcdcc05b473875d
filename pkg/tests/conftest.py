"""Shared fixtures: a small hand-checkable town graph.

Layout (all edges 300 m, narrow, free flow 10 m/s => 30 s per edge):

    n1 -- n2 -- n3 -- n4 -- n5
                 |
                n6

Congestion: hour 7 carries factor 3 on narrow roads (2 on wide), every
other hour is free-flowing. Sensitivities: motorcycle 0, motorlance 0.5,
ambulance 1. So per edge at hour 7: motorcycle 30 s, motorlance 60 s,
ambulance 90 s; at hour 0 every class does 30 s.
"""

import copy

import pytest

from motorlance.dispatch import DispatchConfig, DispatchService
from motorlance.geo import GeoPoint, RoutingEngine, VehicleClass, load_graph
from motorlance.registry import DriverStatus

PEAK = 7 * 3600.0  # inside the congested bucket

NODE_POINTS = {
    "n1": (14.580, 121.000),
    "n2": (14.580, 121.003),
    "n3": (14.580, 121.006),
    "n4": (14.580, 121.009),
    "n5": (14.580, 121.012),
    "n6": (14.583, 121.006),
}


def town_doc() -> dict:
    narrow = [1.0] * 24
    narrow[7] = 3.0
    wide = [1.0] * 24
    wide[7] = 2.0
    links = [("n1", "n2"), ("n2", "n3"), ("n3", "n4"), ("n4", "n5"), ("n3", "n6")]
    return {
        "nodes": [
            {"id": nid, "lat": lat, "lon": lon}
            for nid, (lat, lon) in NODE_POINTS.items()
        ],
        "edges": [
            {
                "id": f"e{i}",
                "from": a,
                "to": b,
                "length_m": 300.0,
                "free_flow_mps": 10.0,
                "width": "narrow",
            }
            for i, (a, b) in enumerate(links)
        ],
        "profile": {
            "hourly_factors": {"narrow": narrow, "wide": wide},
            "class_sensitivity": {
                "motorcycle": 0.0,
                "motorlance": 0.5,
                "ambulance": 1.0,
            },
        },
    }


def node_point(nid: str) -> GeoPoint:
    lat, lon = NODE_POINTS[nid]
    return GeoPoint(lat, lon)


def make_town_engine() -> RoutingEngine:
    graph, profile = load_graph(copy.deepcopy(town_doc()))
    return RoutingEngine(graph, profile)


def make_service(engine=None, window=15.0, with_actors=True) -> DispatchService:
    """A service over the town with the standard cast registered.

    Drivers d1 (motorlance at n2), d2 (motorlance at n5) and d3
    (motorcycle at n6) all start Available; dispatcher ops1 is on duty;
    the only facility sits at n5.
    """
    service = DispatchService(
        engine or make_town_engine(),
        config=DispatchConfig(confirmation_window=window),
    )
    if not with_actors:
        return service
    t = 0.0
    for did, node, vehicle in [
        ("d1", "n2", VehicleClass.MOTORLANCE),
        ("d2", "n5", VehicleClass.MOTORLANCE),
        ("d3", "n6", VehicleClass.MOTORCYCLE),
    ]:
        service.register_driver(
            did, node_point(node), vehicle, now=t, screened=True, trained=True
        )
        service.set_driver_status(did, DriverStatus.AVAILABLE, now=t)
    service.register_dispatcher("ops1", now=t, screened=True)
    service.set_dispatcher_duty("ops1", True, now=t)
    service.register_facility("hosp", node_point("n5"), now=t, name="Ospital")
    service.register_rider(
        "rx",
        now=t,
        name="R. Cruz",
        medical_history=["asthma"],
        emergency_contacts=[("Ana", "+63 2 8888 0001"), ("Ben", "+63 2 8888 0002")],
        home_region="Mandaluyong",
    )
    return service


@pytest.fixture
def town_engine():
    return make_town_engine()


@pytest.fixture
def service(town_engine):
    return make_service(town_engine)
