"""Request lifecycle: creation, dispatcher alerting, nearest-driver
proposal, the human confirmation window with automatic dispatch on
expiry, facility assignment and override, escalation to traditional EMS,
trip progression, and ETA computation.

All mutations flow through ``DispatchService``. A command validates
against current state, then emits events; ``_apply`` is the only code
that mutates state, and replaying the log through ``_apply`` rebuilds the
exact live state (event sourcing). Commands take an explicit ``now`` so
both the real-clock gateway and the virtual-clock simulator drive the
same machine. The caller guarantees serialization (one logical writer).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from motorlance.errors import (
    ConflictError,
    DriverUnavailable,
    IllegalTransition,
    NoAvailableDriver,
    NoFacility,
    ScreeningIncomplete,
    UnknownEntityError,
    UnknownFacility,
    ValidationError,
    WindowExpired,
    WrongDriver,
    WrongState,
)
from motorlance.events import EventLog, Event
from motorlance.geo import GeoPoint, RoutingEngine, VehicleClass
from motorlance.geo.types import SECONDS_PER_DAY
from motorlance.registry import (
    BUSY_STATUSES,
    Driver,
    DriverStatus,
    Dispatcher,
    Facility,
    Registry,
    RiderProfile,
)


class RequestState(str, Enum):
    CREATED = "created"
    DRIVER_PROPOSED = "driver_proposed"
    CONFIRMED = "confirmed"
    EN_ROUTE = "en_route"
    ON_SCENE = "on_scene"
    TRANSPORTING = "transporting"
    COMPLETED = "completed"
    ESCALATED_TO_EMS = "escalated_to_ems"
    CANCELLED = "cancelled"


TERMINAL_STATES = frozenset(
    {RequestState.COMPLETED, RequestState.ESCALATED_TO_EMS, RequestState.CANCELLED}
)
ASSIGNED_STATES = frozenset(
    {
        RequestState.CONFIRMED,
        RequestState.EN_ROUTE,
        RequestState.ON_SCENE,
        RequestState.TRANSPORTING,
    }
)

PROGRESS_TRANSITIONS = {
    "arrive_scene": (RequestState.EN_ROUTE, RequestState.ON_SCENE),
    "begin_transport": (RequestState.ON_SCENE, RequestState.TRANSPORTING),
    "complete": (RequestState.TRANSPORTING, RequestState.COMPLETED),
}

_DRIVER_STATUS_FOR = {
    RequestState.EN_ROUTE: DriverStatus.EN_ROUTE,
    RequestState.ON_SCENE: DriverStatus.ON_SCENE,
    RequestState.TRANSPORTING: DriverStatus.TRANSPORTING,
}


@dataclass
class DispatchConfig:
    confirmation_window: float = 15.0
    notify_contacts: bool = True
    nearest_k_considered: int = 1

    def __post_init__(self):
        if self.confirmation_window <= 0:
            raise ValidationError("confirmation_window must be > 0")
        if self.nearest_k_considered < 1:
            raise ValidationError("nearest_k_considered must be >= 1")


@dataclass
class Request:
    request_id: str
    rider: str | None  # None marks an anonymous caller
    origin: GeoPoint
    origin_node: str
    details: str
    created_at: float
    state: RequestState = RequestState.CREATED
    proposed_driver: str | None = None
    assigned_driver: str | None = None
    facility: str | None = None
    facility_choice_required: bool = False
    window_deadline: float | None = None
    dispatcher: str | None = None
    auto_dispatched: bool = False
    escalation_reason: str | None = None
    call_open: bool = False
    timestamps: dict = field(default_factory=dict)

    def to_doc(self) -> dict:
        return {
            "request_id": self.request_id,
            "rider": self.rider,
            "lat": self.origin.lat,
            "lon": self.origin.lon,
            "origin_node": self.origin_node,
            "details": self.details,
            "created_at": self.created_at,
            "state": self.state.value,
            "proposed_driver": self.proposed_driver,
            "assigned_driver": self.assigned_driver,
            "facility": self.facility,
            "facility_choice_required": self.facility_choice_required,
            "window_deadline": self.window_deadline,
            "dispatcher": self.dispatcher,
            "auto_dispatched": self.auto_dispatched,
            "escalation_reason": self.escalation_reason,
            "call_open": self.call_open,
            "timestamps": dict(self.timestamps),
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "Request":
        return cls(
            request_id=doc["request_id"],
            rider=doc.get("rider"),
            origin=GeoPoint(doc["lat"], doc["lon"]),
            origin_node=doc["origin_node"],
            details=doc.get("details", ""),
            created_at=float(doc["created_at"]),
            state=RequestState(doc["state"]),
            proposed_driver=doc.get("proposed_driver"),
            assigned_driver=doc.get("assigned_driver"),
            facility=doc.get("facility"),
            facility_choice_required=bool(doc.get("facility_choice_required", False)),
            window_deadline=doc.get("window_deadline"),
            dispatcher=doc.get("dispatcher"),
            auto_dispatched=bool(doc.get("auto_dispatched", False)),
            escalation_reason=doc.get("escalation_reason"),
            call_open=bool(doc.get("call_open", False)),
            timestamps=dict(doc.get("timestamps", {})),
        )


class CoreState:
    """Everything the event log determines: actors plus requests."""

    def __init__(self):
        self.registry = Registry()
        self.requests: dict = {}
        self.request_counter = 0

    def request(self, request_id: str) -> Request:
        try:
            return self.requests[request_id]
        except KeyError:
            raise UnknownEntityError(f"unknown request {request_id!r}") from None

    def to_doc(self) -> dict:
        return {
            "registry": self.registry.to_doc(),
            "requests": {k: v.to_doc() for k, v in sorted(self.requests.items())},
            "request_counter": self.request_counter,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "CoreState":
        state = cls()
        state.registry = Registry.from_doc(doc["registry"])
        state.requests = {k: Request.from_doc(v) for k, v in doc["requests"].items()}
        state.request_counter = int(doc["request_counter"])
        return state


class DispatchService:
    """Single-writer command processor over one scenario graph."""

    def __init__(
        self,
        engine: RoutingEngine,
        config: DispatchConfig | None = None,
        log: EventLog | None = None,
        tod_offset_s: float = 0.0,
    ):
        self.engine = engine
        self.config = config or DispatchConfig()
        self.log = log or EventLog()
        self.state = CoreState()
        self.tod_offset_s = tod_offset_s

    # -- clock helpers -------------------------------------------------------

    def time_of_day(self, now: float) -> float:
        return (now + self.tod_offset_s) % SECONDS_PER_DAY

    # -- event plumbing -------------------------------------------------------

    def _emit(self, kind: str, payload: dict, now: float) -> Event:
        # apply before committing so subscribers (snapshots, streams)
        # always observe the event together with its state effect
        event = Event(seq=self.log.next_seq(), ts=now, kind=kind, payload=payload)
        self._apply(event)
        self.log.commit(event)
        return event

    def _apply(self, event: Event) -> None:
        handler = getattr(self, "_apply_" + event.kind, None)
        if handler is not None:
            handler(event.payload, event.ts)

    @classmethod
    def replay(
        cls,
        engine: RoutingEngine,
        config: DispatchConfig | None = None,
        events: list | None = None,
        snapshot_doc: dict | None = None,
        snapshot_seq: int = 0,
        tod_offset_s: float = 0.0,
    ) -> "DispatchService":
        """Rebuild a service from a snapshot and/or an event tail."""
        service = cls(engine, config=config, log=EventLog(), tod_offset_s=tod_offset_s)
        if snapshot_doc is not None:
            service.state = CoreState.from_doc(snapshot_doc)
        for event in events or []:
            service._apply(event)
        service.log = EventLog(list(events or []), seq0=snapshot_seq)
        return service

    # -- registry commands -----------------------------------------------------

    def register_rider(
        self,
        rider_id: str,
        now: float,
        name: str | None = None,
        medical_history: list | None = None,
        emergency_contacts: list | None = None,
        home_region: str | None = None,
    ) -> RiderProfile:
        self.state.registry.check_new_id("riders", rider_id)
        registered = any(
            x for x in (name, medical_history, emergency_contacts, home_region)
        )
        profile = RiderProfile(
            rider_id=rider_id,
            registered=registered,
            name=name,
            medical_history=list(medical_history or []),
            emergency_contacts=[tuple(c) for c in (emergency_contacts or [])],
            home_region=home_region,
        )
        self._emit("rider_registered", profile.to_doc(), now)
        return self.state.registry.rider(rider_id)

    def _apply_rider_registered(self, payload, ts):
        profile = RiderProfile.from_doc(payload)
        self.state.registry.riders[profile.rider_id] = profile

    def register_driver(
        self,
        driver_id: str,
        location: GeoPoint,
        vehicle: VehicleClass,
        now: float,
        screened: bool = False,
        trained: bool = False,
    ) -> Driver:
        self.state.registry.check_new_id("drivers", driver_id)
        node = self.engine.graph.nearest_node(location)
        driver = Driver(
            driver_id=driver_id,
            location=location,
            node=node,
            vehicle=vehicle,
            screened=screened,
            trained=trained,
        )
        self._emit("driver_registered", driver.to_doc(), now)
        return self.state.registry.driver(driver_id)

    def _apply_driver_registered(self, payload, ts):
        driver = Driver.from_doc(payload)
        self.state.registry.drivers[driver.driver_id] = driver

    def register_dispatcher(
        self, dispatcher_id: str, now: float, screened: bool = False
    ) -> Dispatcher:
        self.state.registry.check_new_id("dispatchers", dispatcher_id)
        dispatcher = Dispatcher(dispatcher_id=dispatcher_id, screened=screened)
        self._emit("dispatcher_registered", dispatcher.to_doc(), now)
        return self.state.registry.dispatcher(dispatcher_id)

    def _apply_dispatcher_registered(self, payload, ts):
        dispatcher = Dispatcher.from_doc(payload)
        self.state.registry.dispatchers[dispatcher.dispatcher_id] = dispatcher

    def register_facility(
        self, facility_id: str, location: GeoPoint, now: float, name: str = ""
    ) -> Facility:
        self.state.registry.check_new_id("facilities", facility_id)
        node = self.engine.graph.nearest_node(location)
        facility = Facility(
            facility_id=facility_id, location=location, node=node, name=name
        )
        self._emit("facility_registered", facility.to_doc(), now)
        return self.state.registry.facility(facility_id)

    def _apply_facility_registered(self, payload, ts):
        facility = Facility.from_doc(payload)
        self.state.registry.facilities[facility.facility_id] = facility

    def set_dispatcher_duty(
        self, dispatcher_id: str, on_duty: bool, now: float
    ) -> Dispatcher:
        dispatcher = self.state.registry.dispatcher(dispatcher_id)
        if on_duty and not dispatcher.screened:
            raise ScreeningIncomplete(
                f"dispatcher {dispatcher_id} cannot go on duty before screening"
            )
        if dispatcher.on_duty != on_duty:
            self._emit(
                "dispatcher_duty_changed",
                {"dispatcher_id": dispatcher_id, "on_duty": on_duty},
                now,
            )
        return self.state.registry.dispatcher(dispatcher_id)

    def _apply_dispatcher_duty_changed(self, payload, ts):
        self.state.registry.dispatchers[payload["dispatcher_id"]].on_duty = payload[
            "on_duty"
        ]

    def set_driver_status(
        self, driver_id: str, new_status: DriverStatus, now: float
    ) -> Driver:
        driver = self.state.registry.driver(driver_id)
        self.state.registry.check_driver_self_transition(driver, new_status)
        if new_status == driver.status:
            return driver
        abandoned = (
            driver.active_request
            if driver.status == DriverStatus.PROPOSED
            else None
        )
        self._emit(
            "driver_status_changed",
            {
                "driver_id": driver_id,
                "from": driver.status.value,
                "to": new_status.value,
            },
            now,
        )
        if abandoned is not None:
            self._repropose_after_abandon(abandoned, now)
        return self.state.registry.driver(driver_id)

    def _apply_driver_status_changed(self, payload, ts):
        driver = self.state.registry.drivers[payload["driver_id"]]
        driver.status = DriverStatus(payload["to"])
        if driver.status in (DriverStatus.OFFLINE, DriverStatus.AVAILABLE):
            driver.active_request = None

    def _repropose_after_abandon(self, request_id: str, now: float) -> None:
        """Proposed driver went offline mid-window: pick the next nearest
        available driver and restart the window, or escalate."""
        request = self.state.request(request_id)
        if request.state != RequestState.DRIVER_PROPOSED:
            return
        try:
            driver_id, eta_s = self.select_nearest_driver(request.origin_node, now)
        except NoAvailableDriver:
            self._terminate(request, "escalated", "no_driver", "system", now)
            return
        self._emit(
            "driver_proposed",
            {
                "request_id": request_id,
                "driver_id": driver_id,
                "eta_s": eta_s,
                "window_deadline": now + self.config.confirmation_window,
            },
            now,
        )

    def update_driver_location(
        self, driver_id: str, location: GeoPoint, now: float
    ) -> Driver:
        driver = self.state.registry.driver(driver_id)
        node = self.engine.graph.nearest_node(location)
        self._emit(
            "location_update",
            {
                "driver_id": driver_id,
                "lat": location.lat,
                "lon": location.lon,
                "node": node,
            },
            now,
        )
        if driver.active_request:
            request = self.state.requests.get(driver.active_request)
            if request is not None and request.state in (
                RequestState.CONFIRMED,
                RequestState.EN_ROUTE,
                RequestState.TRANSPORTING,
            ):
                eta_s, target = self._eta_for(request, now)
                self._emit(
                    "eta_update",
                    {
                        "request_id": request.request_id,
                        "eta_s": eta_s,
                        "target_node": target,
                    },
                    now,
                )
        return self.state.registry.driver(driver_id)

    def _apply_location_update(self, payload, ts):
        driver = self.state.registry.drivers[payload["driver_id"]]
        driver.location = GeoPoint(payload["lat"], payload["lon"])
        driver.node = payload["node"]

    # -- rider commands ---------------------------------------------------------

    def on_app_open(self, rider_id: str | None, now: float) -> Event:
        """Initial alert toward on-duty dispatchers; logged even when no
        dispatcher is on duty."""
        return self._emit("app_open_alert", {"rider": rider_id}, now)

    def create_request(
        self,
        rider_id: str | None,
        origin: GeoPoint,
        details: str,
        now: float,
    ) -> Request:
        if rider_id is not None:
            rider = self.state.registry.rider(rider_id)
        else:
            rider = None
        request_id = f"r{self.state.request_counter + 1:06d}"
        if request_id in self.state.requests:
            raise ConflictError(f"request id {request_id} collision")
        node = self.engine.graph.nearest_node(origin)
        self._emit(
            "request_created",
            {
                "request_id": request_id,
                "rider": rider_id,
                "lat": origin.lat,
                "lon": origin.lon,
                "origin_node": node,
                "details": details,
                "created_at": now,
                "window_deadline": now + self.config.confirmation_window,
            },
            now,
        )
        self._emit("call_session_opened", {"request_id": request_id}, now)
        if rider is not None and rider.registered and self.config.notify_contacts:
            for contact_name, phone in rider.emergency_contacts:
                self._emit(
                    "contact_notified",
                    {
                        "request_id": request_id,
                        "rider": rider_id,
                        "contact_name": contact_name,
                        "phone": phone,
                    },
                    now,
                )
        self._assign_facility(request_id, now)
        try:
            driver_id, eta_s = self.select_nearest_driver(node, now)
        except NoAvailableDriver:
            request = self.state.request(request_id)
            self._terminate(request, "escalated", "no_driver", "system", now)
            return self.state.request(request_id)
        self._emit(
            "driver_proposed",
            {
                "request_id": request_id,
                "driver_id": driver_id,
                "eta_s": eta_s,
                "window_deadline": now + self.config.confirmation_window,
            },
            now,
        )
        return self.state.request(request_id)

    def _apply_request_created(self, payload, ts):
        request = Request(
            request_id=payload["request_id"],
            rider=payload.get("rider"),
            origin=GeoPoint(payload["lat"], payload["lon"]),
            origin_node=payload["origin_node"],
            details=payload.get("details", ""),
            created_at=payload["created_at"],
            window_deadline=payload["window_deadline"],
        )
        request.timestamps["created"] = ts
        self.state.requests[request.request_id] = request
        self.state.request_counter += 1

    def _apply_call_session_opened(self, payload, ts):
        self.state.requests[payload["request_id"]].call_open = True

    def _apply_call_session_closed(self, payload, ts):
        self.state.requests[payload["request_id"]].call_open = False

    def _apply_contact_notified(self, payload, ts):
        pass

    def _apply_app_open_alert(self, payload, ts):
        pass

    def _apply_eta_update(self, payload, ts):
        pass

    # -- driver selection & facility assignment ---------------------------------

    def select_nearest_driver(self, origin_node: str, now: float) -> tuple:
        """Available driver minimizing predicted travel time to the origin;
        ties break to the smallest driver_id. Raises NoAvailableDriver when
        none exists (drivers that cannot reach the origin are ineligible)."""
        tod = self.time_of_day(now)
        best = None
        for driver in self.state.registry.available_drivers():
            times = self.engine.travel_times_to(origin_node, driver.vehicle, tod)
            t = float(times[self.engine.graph.index_of[driver.node]])
            if math.isfinite(t) and (best is None or t < best[1]):
                best = (driver.driver_id, t)
        if best is None:
            raise NoAvailableDriver("no available driver can reach the origin")
        return best

    def rank_available_drivers(self, origin_node: str, now: float, limit: int | None = None) -> list:
        """All available drivers ranked by predicted travel time (id-tiebreak)."""
        tod = self.time_of_day(now)
        ranked = []
        for driver in self.state.registry.available_drivers():
            times = self.engine.travel_times_to(origin_node, driver.vehicle, tod)
            t = float(times[self.engine.graph.index_of[driver.node]])
            if math.isfinite(t):
                ranked.append((t, driver.driver_id))
        ranked.sort()
        picked = ranked[: (limit or len(ranked))]
        return [(driver_id, t) for t, driver_id in picked]

    def _assign_facility(self, request_id: str, now: float) -> None:
        request = self.state.request(request_id)
        facilities = self.state.registry.facilities
        if not facilities:
            self._emit("facility_choice_required", {"request_id": request_id}, now)
            return
        tod = self.time_of_day(now)
        times = self.engine.travel_times_from(
            request.origin_node, VehicleClass.MOTORLANCE, tod
        )
        best = None
        for facility_id in sorted(facilities):
            idx = self.engine.graph.index_of[facilities[facility_id].node]
            t = float(times[idx])
            if math.isfinite(t) and (best is None or t < best[1]):
                best = (facility_id, t)
        if best is None:
            self._emit("facility_choice_required", {"request_id": request_id}, now)
            return
        self._emit(
            "facility_assigned",
            {"request_id": request_id, "facility_id": best[0], "auto": True},
            now,
        )

    def _apply_facility_assigned(self, payload, ts):
        request = self.state.requests[payload["request_id"]]
        request.facility = payload["facility_id"]
        request.facility_choice_required = False

    def _apply_facility_choice_required(self, payload, ts):
        self.state.requests[payload["request_id"]].facility_choice_required = True

    def _apply_driver_proposed(self, payload, ts):
        request = self.state.requests[payload["request_id"]]
        request.state = RequestState.DRIVER_PROPOSED
        request.proposed_driver = payload["driver_id"]
        request.window_deadline = payload["window_deadline"]
        request.timestamps["proposed"] = ts
        driver = self.state.registry.drivers[payload["driver_id"]]
        driver.status = DriverStatus.PROPOSED
        driver.active_request = request.request_id

    # -- confirmation window -----------------------------------------------------

    def dispatcher_confirm(
        self, request_id: str, dispatcher_id: str, now: float
    ) -> Request:
        request = self.state.request(request_id)
        dispatcher = self.state.registry.dispatcher(dispatcher_id)
        if not dispatcher.on_duty:
            raise ValidationError(f"dispatcher {dispatcher_id} is not on duty")
        if request.state != RequestState.DRIVER_PROPOSED:
            if request.auto_dispatched and request.state in ASSIGNED_STATES:
                raise WindowExpired(
                    f"request {request_id} was auto-dispatched at window expiry"
                )
            raise WrongState(
                f"request {request_id} is {request.state.value}, not awaiting confirmation"
            )
        if now > request.window_deadline:
            # the timer outran the dispatcher; fire it, then report expiry
            self._confirm(request, by="auto", now=now)
            raise WindowExpired(
                f"request {request_id} confirmation window expired at "
                f"{request.window_deadline}"
            )
        self._confirm(request, by=dispatcher_id, now=now)
        return self.state.request(request_id)

    def on_window_expire(self, request_id: str, now: float) -> Request:
        """Auto-dispatch at deadline; a no-op if the request already moved
        on or the deadline has not arrived (idempotent timer)."""
        request = self.state.request(request_id)
        if (
            request.state == RequestState.DRIVER_PROPOSED
            and now >= request.window_deadline
        ):
            self._confirm(request, by="auto", now=now)
        return self.state.request(request_id)

    def _confirm(self, request: Request, by: str, now: float) -> None:
        self._emit(
            "confirmed",
            {
                "request_id": request.request_id,
                "driver_id": request.proposed_driver,
                "by": by,
            },
            now,
        )
        self._close_call(request, now)
        self._emit(
            "state_changed",
            {
                "request_id": request.request_id,
                "from": RequestState.CONFIRMED.value,
                "to": RequestState.EN_ROUTE.value,
                "driver_id": request.assigned_driver,
            },
            now,
        )

    def _apply_confirmed(self, payload, ts):
        request = self.state.requests[payload["request_id"]]
        request.state = RequestState.CONFIRMED
        request.assigned_driver = payload["driver_id"]
        request.auto_dispatched = payload["by"] == "auto"
        request.dispatcher = None if payload["by"] == "auto" else payload["by"]
        request.timestamps["confirmed"] = ts
        driver = self.state.registry.drivers[payload["driver_id"]]
        driver.status = DriverStatus.ASSIGNED
        driver.active_request = request.request_id

    def _close_call(self, request: Request, now: float) -> None:
        if request.call_open:
            self._emit(
                "call_session_closed", {"request_id": request.request_id}, now
            )

    def dispatcher_reassign(
        self, request_id: str, new_driver_id: str, dispatcher_id: str, now: float
    ) -> Request:
        request = self.state.request(request_id)
        dispatcher = self.state.registry.dispatcher(dispatcher_id)
        if not dispatcher.on_duty:
            raise ValidationError(f"dispatcher {dispatcher_id} is not on duty")
        if request.state != RequestState.DRIVER_PROPOSED:
            raise WrongState(
                f"request {request_id} is {request.state.value}; reassignment "
                "is only possible during the confirmation window"
            )
        new_driver = self.state.registry.driver(new_driver_id)
        if new_driver.status != DriverStatus.AVAILABLE:
            raise DriverUnavailable(
                f"driver {new_driver_id} is {new_driver.status.value}"
            )
        self._emit(
            "reassigned",
            {
                "request_id": request_id,
                "from_driver": request.proposed_driver,
                "to_driver": new_driver_id,
                "by": dispatcher_id,
            },
            now,
        )
        self._close_call(request, now)
        self._emit(
            "state_changed",
            {
                "request_id": request_id,
                "from": RequestState.CONFIRMED.value,
                "to": RequestState.EN_ROUTE.value,
                "driver_id": new_driver_id,
            },
            now,
        )
        return self.state.request(request_id)

    def _apply_reassigned(self, payload, ts):
        request = self.state.requests[payload["request_id"]]
        old = self.state.registry.drivers[payload["from_driver"]]
        old.status = DriverStatus.AVAILABLE
        old.active_request = None
        request.proposed_driver = payload["to_driver"]
        request.assigned_driver = payload["to_driver"]
        request.state = RequestState.CONFIRMED
        request.dispatcher = payload["by"]
        request.auto_dispatched = False
        request.timestamps["confirmed"] = ts
        new = self.state.registry.drivers[payload["to_driver"]]
        new.status = DriverStatus.ASSIGNED
        new.active_request = request.request_id

    def _apply_state_changed(self, payload, ts):
        request = self.state.requests[payload["request_id"]]
        new_state = RequestState(payload["to"])
        request.state = new_state
        request.timestamps[new_state.value] = ts
        driver = self.state.registry.drivers[payload["driver_id"]]
        driver.status = _DRIVER_STATUS_FOR[new_state]
        if "driver_lat" in payload:
            driver.location = GeoPoint(payload["driver_lat"], payload["driver_lon"])
            driver.node = payload["driver_node"]

    # -- facility override ---------------------------------------------------------

    def dispatcher_change_facility(
        self, request_id: str, facility_id: str, dispatcher_id: str, now: float
    ) -> Request:
        request = self.state.request(request_id)
        self.state.registry.dispatcher(dispatcher_id)
        if request.state in TERMINAL_STATES:
            raise WrongState(f"request {request_id} is terminal")
        if facility_id not in self.state.registry.facilities:
            raise UnknownFacility(f"unknown facility {facility_id!r}")
        self._emit(
            "facility_changed",
            {
                "request_id": request_id,
                "facility_id": facility_id,
                "by": dispatcher_id,
                "driver_notified": request.assigned_driver is not None,
            },
            now,
        )
        return self.state.request(request_id)

    def _apply_facility_changed(self, payload, ts):
        request = self.state.requests[payload["request_id"]]
        request.facility = payload["facility_id"]
        request.facility_choice_required = False

    # -- terminal transitions ---------------------------------------------------------

    def escalate_to_ems(
        self, request_id: str, reason: str, actor: str, now: float
    ) -> Request:
        request = self.state.request(request_id)
        if request.state in TERMINAL_STATES:
            raise WrongState(f"request {request_id} already terminal")
        self._terminate(request, "escalated", reason, actor, now)
        return self.state.request(request_id)

    def cancel(self, request_id: str, actor: str, now: float) -> Request:
        request = self.state.request(request_id)
        if request.state in TERMINAL_STATES:
            raise WrongState(f"request {request_id} already terminal")
        self._terminate(request, "cancelled", None, actor, now)
        return self.state.request(request_id)

    def _terminate(
        self, request: Request, kind: str, reason: str | None, actor: str, now: float
    ) -> None:
        held = request.assigned_driver or request.proposed_driver
        if held is not None:
            # a proposed driver who went offline no longer holds the request
            if self.state.registry.drivers[held].active_request != request.request_id:
                held = None
        payload = {
            "request_id": request.request_id,
            "by": actor,
            "released_driver": held,
        }
        if kind == "escalated":
            payload["reason"] = reason
        self._close_call(request, now)
        self._emit(kind, payload, now)

    def _release_driver(self, driver_id: str | None):
        if driver_id is None:
            return
        driver = self.state.registry.drivers[driver_id]
        driver.status = DriverStatus.AVAILABLE
        driver.active_request = None

    def _apply_escalated(self, payload, ts):
        request = self.state.requests[payload["request_id"]]
        request.state = RequestState.ESCALATED_TO_EMS
        request.escalation_reason = payload.get("reason")
        request.timestamps["escalated"] = ts
        self._release_driver(payload.get("released_driver"))

    def _apply_cancelled(self, payload, ts):
        request = self.state.requests[payload["request_id"]]
        request.state = RequestState.CANCELLED
        request.timestamps["cancelled"] = ts
        self._release_driver(payload.get("released_driver"))

    # -- trip progression ---------------------------------------------------------

    def progress(
        self, request_id: str, transition: str, driver_id: str, now: float
    ) -> Request:
        request = self.state.request(request_id)
        if transition not in PROGRESS_TRANSITIONS:
            raise ValidationError(f"unknown transition {transition!r}")
        if request.assigned_driver != driver_id:
            raise WrongDriver(
                f"driver {driver_id} is not assigned to request {request_id}"
            )
        src, dst = PROGRESS_TRANSITIONS[transition]
        if request.state != src:
            raise IllegalTransition(
                f"{transition} requires state {src.value}, request is "
                f"{request.state.value}"
            )
        driver = self.state.registry.driver(driver_id)
        if dst == RequestState.COMPLETED:
            if request.facility is None:
                raise NoFacility(f"request {request_id} has no facility set")
            facility = self.state.registry.facility(request.facility)
            self._emit(
                "completed",
                {
                    "request_id": request_id,
                    "driver_id": driver_id,
                    "driver_lat": facility.location.lat,
                    "driver_lon": facility.location.lon,
                    "driver_node": facility.node,
                },
                now,
            )
        else:
            if dst == RequestState.TRANSPORTING and request.facility is None:
                raise NoFacility(
                    f"request {request_id} needs a facility before transport"
                )
            payload = {
                "request_id": request_id,
                "from": src.value,
                "to": dst.value,
                "driver_id": driver_id,
            }
            if dst == RequestState.ON_SCENE:
                payload.update(
                    driver_lat=request.origin.lat,
                    driver_lon=request.origin.lon,
                    driver_node=request.origin_node,
                )
            self._emit("state_changed", payload, now)
        return self.state.request(request_id)

    def _apply_completed(self, payload, ts):
        request = self.state.requests[payload["request_id"]]
        request.state = RequestState.COMPLETED
        request.timestamps["completed"] = ts
        driver = self.state.registry.drivers[payload["driver_id"]]
        driver.status = DriverStatus.AVAILABLE
        driver.active_request = None
        driver.location = GeoPoint(payload["driver_lat"], payload["driver_lon"])
        driver.node = payload["driver_node"]

    # -- reads ---------------------------------------------------------

    def eta(self, request_id: str, now: float) -> float:
        """Seconds until the assigned driver reaches the current target:
        the scene before pickup, the facility while transporting."""
        request = self.state.request(request_id)
        eta_s, _ = self._eta_for(request, now)
        return eta_s

    def _eta_for(self, request: Request, now: float) -> tuple:
        if request.state in (RequestState.CONFIRMED, RequestState.EN_ROUTE):
            target = request.origin_node
        elif request.state == RequestState.TRANSPORTING:
            if request.facility is None:
                raise NoFacility(f"request {request.request_id} has no facility")
            target = self.state.registry.facility(request.facility).node
        else:
            raise WrongState(
                f"no ETA in state {request.state.value} for {request.request_id}"
            )
        driver = self.state.registry.driver(request.assigned_driver)
        seconds, _ = self.engine.shortest_travel_time(
            driver.node, target, driver.vehicle, self.time_of_day(now)
        )
        return seconds, target

    def due_window_expiries(self, now: float) -> list:
        """Request ids whose confirmation window has elapsed, in
        (deadline, id) order; drive these through on_window_expire."""
        due = [
            (r.window_deadline, r.request_id)
            for r in self.state.requests.values()
            if r.state == RequestState.DRIVER_PROPOSED and r.window_deadline <= now
        ]
        return [rid for _, rid in sorted(due)]


def check_invariants(state: CoreState) -> None:
    """Assert the cross-cutting safety conditions; raises AssertionError."""
    holders: dict = {}
    for driver in state.registry.drivers.values():
        busy = driver.status in BUSY_STATUSES
        assert busy == (driver.active_request is not None), (
            f"driver {driver.driver_id}: status {driver.status.value} vs "
            f"active_request {driver.active_request!r}"
        )
        if driver.status == DriverStatus.AVAILABLE:
            assert driver.screened and driver.trained, (
                f"driver {driver.driver_id} available but not screened/trained"
            )
        if driver.active_request is not None:
            assert driver.active_request not in holders, (
                f"request {driver.active_request} held by two drivers"
            )
            holders[driver.active_request] = driver.driver_id
    for request in state.requests.values():
        if request.state in ASSIGNED_STATES:
            assert request.assigned_driver is not None, (
                f"request {request.request_id} in {request.state.value} without driver"
            )
            assert holders.get(request.request_id) == request.assigned_driver, (
                f"request {request.request_id} not held by its assigned driver"
            )
            assert request.facility is not None or request.facility_choice_required, (
                f"request {request.request_id} has neither facility nor choice flag"
            )
        if request.state == RequestState.DRIVER_PROPOSED:
            assert holders.get(request.request_id) == request.proposed_driver
        if request.state in TERMINAL_STATES:
            assert request.request_id not in holders, (
                f"terminal request {request.request_id} still holds a driver"
            )
    for rider in state.registry.riders.values():
        if not rider.registered:
            assert not rider.medical_history and not rider.emergency_contacts
