"""Deterministic discrete-event fleet simulator.

The simulator drives the real ``DispatchService`` on a virtual clock; it
never reimplements dispatch rules. Demand is a homogeneous Poisson
process (a synthetic construct: deployment data gives no arrival rates),
drawn from numpy's PCG64 generator via inverse-CDF sampling so a seed
reproduces bit-identical arrivals on any platform. Pending events are
processed in (timestamp, kind, id) order, kinds compared alphabetically:
``arrival`` < ``expire`` < ``move``.

Without a dispatcher present (the default), every request waits out the
full confirmation window and is auto-dispatched; with one present,
confirmation is immediate (zero reaction time), since no human
reaction-time data exists to sample from.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from motorlance.dispatch import (
    DispatchConfig,
    DispatchService,
    RequestState,
    check_invariants,
)
from motorlance.errors import ConfigError, ValidationError
from motorlance.geo import (
    GeoPoint,
    RoutingEngine,
    VehicleClass,
    load_graph,
    load_graph_file,
)
from motorlance.registry import DriverStatus

DEFAULT_SERVICE_TIME_S = 300.0  # on-scene loading time, configurable per scenario
DEFAULT_WINDOW_S = 15.0


@dataclass(frozen=True)
class DemandModel:
    """Homogeneous Poisson arrivals at ``rate_per_hour``, origins drawn
    from a weighted distribution over graph nodes."""

    rate_per_hour: float
    origin_weights: dict

    def __post_init__(self):
        if not (self.rate_per_hour > 0):
            raise ValidationError("demand.rate_per_hour: must be > 0")
        if not self.origin_weights:
            raise ValidationError("demand.origin_weights: must be non-empty")
        total = 0.0
        for node, w in self.origin_weights.items():
            if w < 0:
                raise ValidationError(
                    f"demand.origin_weights.{node}: weight must be >= 0"
                )
            total += w
        if not (total > 0):
            raise ValidationError("demand.origin_weights: weights must sum > 0")


def generate_demand(seed: int, demand: DemandModel, horizon_s: float) -> list:
    """Ordered [(arrival_s, origin_node), ...] with arrival_s < horizon_s.

    Inter-arrivals are exponential with mean 3600/rate, computed as
    ``-mean * log1p(-u)`` from raw PCG64 uniforms rather than through a
    library distribution call, so the stream is pinned to the generator
    alone and stays stable across library versions.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    names = sorted(demand.origin_weights)
    weights = np.array([demand.origin_weights[n] for n in names], dtype=np.float64)
    cum = np.cumsum(weights)
    cum /= cum[-1]
    mean = 3600.0 / demand.rate_per_hour
    arrivals = []
    t = 0.0
    while True:
        t += -mean * math.log1p(-rng.random())
        if t >= horizon_s:
            return arrivals
        pick = int(np.searchsorted(cum, rng.random(), side="right"))
        arrivals.append((t, names[min(pick, len(names) - 1)]))


@dataclass(frozen=True)
class FleetEntry:
    vehicle: VehicleClass
    count: int
    depot: str


@dataclass(frozen=True)
class ScenarioFacility:
    facility_id: str
    node: str
    name: str = ""


@dataclass
class Scenario:
    name: str
    graph: object
    profile: object
    fleet: list
    facilities: list
    demand: DemandModel
    horizon_s: float
    seed: int
    dispatch: DispatchConfig
    dispatcher_present: bool = False
    start_hour: int = 0
    service_time_s: float = DEFAULT_SERVICE_TIME_S

    def __post_init__(self):
        if not (self.horizon_s > 0):
            raise ConfigError("horizon_s: must be > 0")
        if not self.fleet:
            raise ConfigError("fleet: must be non-empty")
        for i, entry in enumerate(self.fleet):
            if entry.count <= 0:
                raise ConfigError(f"fleet[{i}].count: must be > 0")
            if entry.depot not in self.graph.nodes:
                raise ConfigError(f"fleet[{i}].depot: unknown node {entry.depot!r}")
        for i, fac in enumerate(self.facilities):
            if fac.node not in self.graph.nodes:
                raise ConfigError(f"facilities[{i}].node: unknown node {fac.node!r}")
        for node in self.demand.origin_weights:
            if node not in self.graph.nodes:
                raise ConfigError(
                    f"demand.origin_weights.{node}: unknown node {node!r}"
                )
        if not (0 <= self.start_hour < 24):
            raise ConfigError("start_hour: must lie in [0, 24)")
        if self.service_time_s < 0:
            raise ConfigError("service_time_s: must be >= 0")


def _get(doc: dict, key: str, path: str):
    if key not in doc:
        raise ConfigError(f"{path}.{key}: missing" if path else f"{key}: missing")
    return doc[key]


def scenario_from_doc(doc: dict, base_dir: str | Path | None = None) -> Scenario:
    """Build a Scenario from its JSON document; errors name the offending
    field path. The graph comes from an inline ``graph`` object or a
    ``graph_file`` path resolved relative to the scenario file."""
    try:
        if "graph" in doc:
            graph, profile = load_graph(doc["graph"])
        else:
            rel = Path(str(_get(doc, "graph_file", "")))
            graph_path = rel if rel.is_absolute() else Path(base_dir or ".") / rel
            try:
                graph, profile = load_graph_file(graph_path)
            except OSError as exc:
                raise ConfigError(f"graph_file: cannot read {graph_path}: {exc}") from exc
        fleet = []
        for i, row in enumerate(_get(doc, "fleet", "")):
            try:
                vehicle = VehicleClass(str(_get(row, "vehicle", f"fleet[{i}]")))
            except ValueError as exc:
                raise ConfigError(f"fleet[{i}].vehicle: {exc}") from exc
            fleet.append(
                FleetEntry(
                    vehicle=vehicle,
                    count=int(_get(row, "count", f"fleet[{i}]")),
                    depot=str(_get(row, "depot", f"fleet[{i}]")),
                )
            )
        facilities = [
            ScenarioFacility(
                facility_id=str(_get(row, "id", f"facilities[{i}]")),
                node=str(_get(row, "node", f"facilities[{i}]")),
                name=str(row.get("name", "")),
            )
            for i, row in enumerate(doc.get("facilities", []))
        ]
        demand_doc = _get(doc, "demand", "")
        demand = DemandModel(
            rate_per_hour=float(_get(demand_doc, "rate_per_hour", "demand")),
            origin_weights={
                str(k): float(v)
                for k, v in _get(demand_doc, "origin_weights", "demand").items()
            },
        )
        cfg_doc = doc.get("dispatch_config", {})
        dispatch = DispatchConfig(
            confirmation_window=float(
                cfg_doc.get("confirmation_window_s", DEFAULT_WINDOW_S)
            ),
            notify_contacts=bool(cfg_doc.get("notify_contacts", True)),
            nearest_k_considered=int(cfg_doc.get("nearest_k_considered", 1)),
        )
        return Scenario(
            name=str(doc.get("name", "scenario")),
            graph=graph,
            profile=profile,
            fleet=fleet,
            facilities=facilities,
            demand=demand,
            horizon_s=float(_get(doc, "horizon_s", "")),
            seed=int(doc.get("seed", 0)),
            dispatch=dispatch,
            dispatcher_present=bool(doc.get("dispatcher_present", False)),
            start_hour=int(doc.get("start_hour", 0)),
            service_time_s=float(doc.get("service_time_s", DEFAULT_SERVICE_TIME_S)),
        )
    except (ValidationError, ConfigError):
        raise
    except (TypeError, ValueError, AttributeError) as exc:
        raise ConfigError(f"malformed scenario: {exc}") from exc


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return scenario_from_doc(doc, base_dir=path.parent)


@dataclass
class MetricsReport:
    scenario: str
    seed: int
    horizon_s: float
    arrivals: int
    served: int
    escalations: int
    open_at_horizon: int
    per_class: dict  # vehicle value -> stats dict
    mean_response_s: float | None
    median_response_s: float | None
    p90_response_s: float | None
    reduction_percent: float | None
    samples: dict  # vehicle value -> sorted list of response seconds

    def to_doc(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "horizon_s": self.horizon_s,
            "arrivals": self.arrivals,
            "served": self.served,
            "escalations": self.escalations,
            "open_at_horizon": self.open_at_horizon,
            "per_class": {k: dict(v) for k, v in sorted(self.per_class.items())},
            "mean_response_s": self.mean_response_s,
            "median_response_s": self.median_response_s,
            "p90_response_s": self.p90_response_s,
            "reduction_percent": self.reduction_percent,
            "samples": {k: list(v) for k, v in sorted(self.samples.items())},
        }


@dataclass
class CompareResult:
    motorlance: MetricsReport
    ambulance: MetricsReport
    reduction_percent: float | None

    def to_doc(self) -> dict:
        return {
            "motorlance": self.motorlance.to_doc(),
            "ambulance": self.ambulance.to_doc(),
            "reduction_percent": self.reduction_percent,
        }


def _stats(samples: list) -> tuple:
    if not samples:
        return None, None, None
    arr = np.asarray(samples, dtype=np.float64)
    return (
        float(np.mean(arr)),
        float(np.median(arr)),
        float(np.quantile(arr, 0.9)),
    )


def busy_seconds(events: list, horizon_s: float) -> dict:
    """Per-driver busy time (proposal or assignment through release),
    derived purely from the event log; open intervals close at the
    horizon."""
    busy_since: dict = {}
    totals: dict = {}

    def close(driver_id, ts):
        t0 = busy_since.pop(driver_id, None)
        if t0 is not None:
            totals[driver_id] = totals.get(driver_id, 0.0) + (ts - t0)

    for event in events:
        kind, p, ts = event.kind, event.payload, event.ts
        if kind == "driver_proposed":
            busy_since.setdefault(p["driver_id"], ts)
        elif kind == "reassigned":
            close(p["from_driver"], ts)
            busy_since.setdefault(p["to_driver"], ts)
        elif kind == "completed":
            close(p["driver_id"], ts)
        elif kind in ("escalated", "cancelled") and p.get("released_driver"):
            close(p["released_driver"], ts)
        elif kind == "driver_status_changed" and p["to"] == DriverStatus.OFFLINE.value:
            close(p["driver_id"], ts)
    for driver_id in list(busy_since):
        close(driver_id, horizon_s)
    return totals


def _simulate(scenario: Scenario, seed: int | None = None, check_every_event: bool = False):
    """Run one scenario; returns (MetricsReport, DispatchService)."""
    seed = scenario.seed if seed is None else seed
    engine = RoutingEngine(scenario.graph, scenario.profile)
    service = DispatchService(
        engine,
        config=scenario.dispatch,
        tod_offset_s=scenario.start_hour * 3600.0,
    )
    for fac in scenario.facilities:
        service.register_facility(
            fac.facility_id, scenario.graph.nodes[fac.node], 0.0, name=fac.name
        )
    index = 0
    for entry in scenario.fleet:
        for _ in range(entry.count):
            driver_id = f"v{index:03d}"
            index += 1
            service.register_driver(
                driver_id,
                scenario.graph.nodes[entry.depot],
                entry.vehicle,
                0.0,
                screened=True,
                trained=True,
            )
            service.set_driver_status(driver_id, DriverStatus.AVAILABLE, 0.0)
    if scenario.dispatcher_present:
        service.register_dispatcher("ops_sim", 0.0, screened=True)
        service.set_dispatcher_duty("ops_sim", True, 0.0)

    arrivals = generate_demand(seed, scenario.demand, scenario.horizon_s)
    heap = []
    for k, (t, node) in enumerate(arrivals):
        heapq.heappush(heap, (t, "arrival", f"a{k:06d}", node))

    sample_of: dict = {}
    class_of: dict = {}

    def schedule_drive(request_id: str, now: float):
        eta_s = service.eta(request_id, now)
        heapq.heappush(heap, (now + eta_s, "move", request_id, "arrive"))

    while heap:
        t, kind, ident, data = heapq.heappop(heap)
        if t > scenario.horizon_s:
            break
        if kind == "arrival":
            origin = scenario.graph.nodes[data]
            request = service.create_request(None, origin, "sim", now=t)
            if request.state == RequestState.DRIVER_PROPOSED:
                if scenario.dispatcher_present:
                    service.dispatcher_confirm(request.request_id, "ops_sim", t)
                    schedule_drive(request.request_id, t)
                else:
                    heapq.heappush(
                        heap,
                        (request.window_deadline, "expire", request.request_id, None),
                    )
        elif kind == "expire":
            request = service.on_window_expire(ident, t)
            if request.state == RequestState.EN_ROUTE:
                schedule_drive(ident, t)
        else:  # move
            request = service.state.request(ident)
            if data == "arrive":
                if request.state != RequestState.EN_ROUTE:
                    continue
                service.progress(ident, "arrive_scene", request.assigned_driver, t)
                sample_of[ident] = t - request.created_at
                class_of[ident] = service.state.registry.driver(
                    request.assigned_driver
                ).vehicle
                heapq.heappush(
                    heap, (t + scenario.service_time_s, "move", ident, "transport")
                )
            elif data == "transport":
                if request.state != RequestState.ON_SCENE:
                    continue
                service.progress(ident, "begin_transport", request.assigned_driver, t)
                eta_s = service.eta(ident, t)
                heapq.heappush(heap, (t + eta_s, "move", ident, "complete"))
            else:
                if request.state != RequestState.TRANSPORTING:
                    continue
                service.progress(ident, "complete", request.assigned_driver, t)
        if check_every_event:
            check_invariants(service.state)

    escalations = sum(
        1
        for r in service.state.requests.values()
        if r.state == RequestState.ESCALATED_TO_EMS
    )
    served = len(sample_of)
    open_at_horizon = len(service.state.requests) - served - escalations

    by_class: dict = {}
    for rid, sample in sample_of.items():
        by_class.setdefault(class_of[rid].value, []).append(sample)
    busy = busy_seconds(service.log.events, scenario.horizon_s)
    fleet_counts: dict = {}
    fleet_busy: dict = {}
    for driver in service.state.registry.drivers.values():
        cls = driver.vehicle.value
        fleet_counts[cls] = fleet_counts.get(cls, 0) + 1
        fleet_busy[cls] = fleet_busy.get(cls, 0.0) + busy.get(driver.driver_id, 0.0)
    per_class = {}
    for cls in sorted(set(by_class) | set(fleet_counts)):
        samples = sorted(by_class.get(cls, []))
        mean, median, p90 = _stats(samples)
        capacity = fleet_counts.get(cls, 0) * scenario.horizon_s
        per_class[cls] = {
            "count": len(samples),
            "mean_s": mean,
            "median_s": median,
            "p90_s": p90,
            "utilization": (fleet_busy.get(cls, 0.0) / capacity) if capacity else None,
        }
    all_samples = sorted(sample_of.values())
    mean, median, p90 = _stats(all_samples)
    m_mean = per_class.get(VehicleClass.MOTORLANCE.value, {}).get("mean_s")
    a_mean = per_class.get(VehicleClass.AMBULANCE.value, {}).get("mean_s")
    reduction = None
    if m_mean is not None and a_mean is not None and a_mean > 0:
        reduction = 100.0 * (1.0 - m_mean / a_mean)
    report = MetricsReport(
        scenario=scenario.name,
        seed=seed,
        horizon_s=scenario.horizon_s,
        arrivals=len(arrivals),
        served=served,
        escalations=escalations,
        open_at_horizon=open_at_horizon,
        per_class=per_class,
        mean_response_s=mean,
        median_response_s=median,
        p90_response_s=p90,
        reduction_percent=reduction,
        samples={cls: sorted(v) for cls, v in by_class.items()},
    )
    return report, service


def run(scenario: Scenario, seed: int | None = None) -> MetricsReport:
    report, _ = _simulate(scenario, seed=seed)
    return report


def _with_fleet_class(scenario: Scenario, vehicle: VehicleClass) -> Scenario:
    fleet = [replace(entry, vehicle=vehicle) for entry in scenario.fleet]
    return replace(scenario, fleet=fleet)


def compare_modes(scenario: Scenario, seed: int | None = None) -> CompareResult:
    """Run the identical demand realization with the whole fleet as
    motorlances, then as ambulances, and compare mean response times."""
    report_m = run(_with_fleet_class(scenario, VehicleClass.MOTORLANCE), seed=seed)
    report_a = run(_with_fleet_class(scenario, VehicleClass.AMBULANCE), seed=seed)
    reduction = None
    if (
        report_m.mean_response_s is not None
        and report_a.mean_response_s is not None
        and report_a.mean_response_s > 0
    ):
        reduction = 100.0 * (1.0 - report_m.mean_response_s / report_a.mean_response_s)
    return CompareResult(
        motorlance=report_m, ambulance=report_a, reduction_percent=reduction
    )
