"""Random command driver shared by the persistence and acceptance suites.

Every generated command either succeeds or raises a domain error; any
other exception is a bug and propagates. The caller owns the RNG, so a
seed pins the whole command sequence.
"""

import random

from motorlance.dispatch import (
    ASSIGNED_STATES,
    RequestState,
    TERMINAL_STATES,
    check_invariants,
)
from motorlance.errors import MotorlanceError
from motorlance.registry import DriverStatus

NEXT_TRANSITION = {
    RequestState.EN_ROUTE: "arrive_scene",
    RequestState.ON_SCENE: "begin_transport",
    RequestState.TRANSPORTING: "complete",
}


def run_random_commands(service, rng: random.Random, count: int, now: float = 10.0,
                        check_each: bool = True) -> float:
    """Drive ``count`` random commands; returns the final clock value."""
    node_ids = sorted(service.engine.graph.nodes)

    def random_point():
        return service.engine.graph.nodes[rng.choice(node_ids)]

    def any_request(states=None):
        pool = [
            r
            for r in service.state.requests.values()
            if states is None or r.state in states
        ]
        return rng.choice(pool) if pool else None

    def any_driver():
        pool = sorted(service.state.registry.drivers)
        return rng.choice(pool) if pool else None

    ops = [
        "create", "create", "create",
        "confirm", "confirm",
        "reassign",
        "cancel",
        "escalate",
        "expire",
        "progress", "progress", "progress",
        "wrong_progress",
        "toggle_driver",
        "location", "location",
        "facility",
        "duty",
        "register_driver",
        "app_open",
    ]

    extra_driver = 0
    for _ in range(count):
        now += rng.uniform(0.5, 40.0)
        op = rng.choice(ops)
        try:
            if op == "create":
                rider = "rx" if rng.random() < 0.3 else None
                service.create_request(rider, random_point(), "fuzz", now)
            elif op == "confirm":
                r = any_request()
                if r:
                    service.dispatcher_confirm(r.request_id, "ops1", now)
            elif op == "reassign":
                r = any_request({RequestState.DRIVER_PROPOSED})
                d = any_driver()
                if r and d:
                    service.dispatcher_reassign(r.request_id, d, "ops1", now)
            elif op == "cancel":
                r = any_request()
                if r:
                    service.cancel(r.request_id, "rider", now)
            elif op == "escalate":
                r = any_request()
                if r:
                    service.escalate_to_ems(r.request_id, "fuzz", "ops1", now)
            elif op == "expire":
                r = any_request({RequestState.DRIVER_PROPOSED})
                if r:
                    service.on_window_expire(r.request_id, now)
            elif op == "progress":
                r = any_request(set(NEXT_TRANSITION))
                if r:
                    service.progress(
                        r.request_id, NEXT_TRANSITION[r.state], r.assigned_driver, now
                    )
            elif op == "wrong_progress":
                r = any_request(ASSIGNED_STATES | TERMINAL_STATES)
                d = any_driver()
                if r and d:
                    service.progress(
                        r.request_id, rng.choice(list(NEXT_TRANSITION.values())), d, now
                    )
            elif op == "toggle_driver":
                d = any_driver()
                if d:
                    to = rng.choice([DriverStatus.AVAILABLE, DriverStatus.OFFLINE])
                    service.set_driver_status(d, to, now)
            elif op == "location":
                d = any_driver()
                if d:
                    service.update_driver_location(d, random_point(), now)
            elif op == "facility":
                r = any_request()
                if r and service.state.registry.facilities:
                    fid = rng.choice(sorted(service.state.registry.facilities))
                    service.dispatcher_change_facility(r.request_id, fid, "ops1", now)
            elif op == "duty":
                on = rng.random() < 0.8  # mostly keep the desk staffed
                service.set_dispatcher_duty("ops1", on, now)
            elif op == "register_driver":
                extra_driver += 1
                did = f"fz{extra_driver:03d}"
                service.register_driver(
                    did, random_point(), _any_vehicle(rng), now,
                    screened=True, trained=True,
                )
                service.set_driver_status(did, DriverStatus.AVAILABLE, now)
            elif op == "app_open":
                service.on_app_open("rx" if rng.random() < 0.5 else None, now)
        except MotorlanceError:
            pass
        # emulate the background timer some of the time
        if rng.random() < 0.5:
            for rid in service.due_window_expiries(now):
                service.on_window_expire(rid, now)
        if check_each:
            check_invariants(service.state)
    return now


def _any_vehicle(rng):
    from motorlance.geo import VehicleClass

    return rng.choice(list(VehicleClass))
