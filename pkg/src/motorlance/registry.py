"""Actors of the dispatch system: riders, drivers, dispatchers, and
medical facilities, plus the screening/duty gates they must satisfy.

Driver status mirrors the request lifecycle. The only transitions a
driver may request directly are Offline<->Available (Available gated on
screening and training) and abandoning a proposal (Proposed->Offline);
every other change is issued by the dispatch core as part of a request
transition.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from motorlance.errors import (
    ConflictError,
    IllegalTransition,
    ScreeningIncomplete,
    UnknownEntityError,
    ValidationError,
)
from motorlance.geo import GeoPoint, VehicleClass

_PHONE_RE = re.compile(r"^\+?[0-9][0-9 \-]*$")


class DriverStatus(str, Enum):
    OFFLINE = "offline"
    AVAILABLE = "available"
    PROPOSED = "proposed"
    ASSIGNED = "assigned"
    EN_ROUTE = "en_route"
    ON_SCENE = "on_scene"
    TRANSPORTING = "transporting"


#: statuses during which the driver must hold an active request
BUSY_STATUSES = frozenset(
    {
        DriverStatus.PROPOSED,
        DriverStatus.ASSIGNED,
        DriverStatus.EN_ROUTE,
        DriverStatus.ON_SCENE,
        DriverStatus.TRANSPORTING,
    }
)

#: transitions a driver may request directly (everything else is
#: request-driven and issued only by the dispatch core)
SELF_SERVICE_TRANSITIONS = frozenset(
    {
        (DriverStatus.OFFLINE, DriverStatus.AVAILABLE),
        (DriverStatus.AVAILABLE, DriverStatus.OFFLINE),
        (DriverStatus.PROPOSED, DriverStatus.OFFLINE),
    }
)


@dataclass
class RiderProfile:
    rider_id: str
    registered: bool = False
    name: str | None = None
    medical_history: list = field(default_factory=list)
    emergency_contacts: list = field(default_factory=list)  # (name, phone) pairs
    home_region: str | None = None

    def __post_init__(self):
        if not self.registered and (self.medical_history or self.emergency_contacts):
            raise ValidationError(
                "unregistered rider cannot carry medical history or contacts"
            )
        for item in self.emergency_contacts:
            if len(item) != 2:
                raise ValidationError("emergency contact must be a (name, phone) pair")
            _, phone = item
            if not phone or not _PHONE_RE.match(str(phone)):
                raise ValidationError(f"invalid contact phone {phone!r}")

    def to_doc(self) -> dict:
        return {
            "rider_id": self.rider_id,
            "registered": self.registered,
            "name": self.name,
            "medical_history": list(self.medical_history),
            "emergency_contacts": [list(c) for c in self.emergency_contacts],
            "home_region": self.home_region,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "RiderProfile":
        return cls(
            rider_id=doc["rider_id"],
            registered=bool(doc.get("registered", False)),
            name=doc.get("name"),
            medical_history=list(doc.get("medical_history", [])),
            emergency_contacts=[tuple(c) for c in doc.get("emergency_contacts", [])],
            home_region=doc.get("home_region"),
        )


@dataclass
class Driver:
    driver_id: str
    location: GeoPoint
    node: str
    vehicle: VehicleClass
    screened: bool = False
    trained: bool = False
    status: DriverStatus = DriverStatus.OFFLINE
    active_request: str | None = None

    def to_doc(self) -> dict:
        return {
            "driver_id": self.driver_id,
            "lat": self.location.lat,
            "lon": self.location.lon,
            "node": self.node,
            "vehicle": self.vehicle.value,
            "screened": self.screened,
            "trained": self.trained,
            "status": self.status.value,
            "active_request": self.active_request,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "Driver":
        return cls(
            driver_id=doc["driver_id"],
            location=GeoPoint(doc["lat"], doc["lon"]),
            node=doc["node"],
            vehicle=VehicleClass(doc["vehicle"]),
            screened=bool(doc["screened"]),
            trained=bool(doc["trained"]),
            status=DriverStatus(doc["status"]),
            active_request=doc.get("active_request"),
        )


@dataclass
class Dispatcher:
    dispatcher_id: str
    screened: bool = False
    on_duty: bool = False

    def __post_init__(self):
        if self.on_duty and not self.screened:
            raise ValidationError("dispatcher cannot be on duty before screening")

    def to_doc(self) -> dict:
        return {
            "dispatcher_id": self.dispatcher_id,
            "screened": self.screened,
            "on_duty": self.on_duty,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "Dispatcher":
        return cls(
            dispatcher_id=doc["dispatcher_id"],
            screened=bool(doc["screened"]),
            on_duty=bool(doc["on_duty"]),
        )


@dataclass
class Facility:
    facility_id: str
    location: GeoPoint
    node: str
    name: str = ""

    def to_doc(self) -> dict:
        return {
            "facility_id": self.facility_id,
            "lat": self.location.lat,
            "lon": self.location.lon,
            "node": self.node,
            "name": self.name,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "Facility":
        return cls(
            facility_id=doc["facility_id"],
            location=GeoPoint(doc["lat"], doc["lon"]),
            node=doc["node"],
            name=doc.get("name", ""),
        )


class Registry:
    """Mutable store of actors. Mutations are only performed from the
    dispatch core's event-application path (single-writer contract)."""

    def __init__(self):
        self.riders: dict = {}
        self.drivers: dict = {}
        self.dispatchers: dict = {}
        self.facilities: dict = {}

    # -- lookups ------------------------------------------------------------

    def rider(self, rider_id: str) -> RiderProfile:
        try:
            return self.riders[rider_id]
        except KeyError:
            raise UnknownEntityError(f"unknown rider {rider_id!r}") from None

    def driver(self, driver_id: str) -> Driver:
        try:
            return self.drivers[driver_id]
        except KeyError:
            raise UnknownEntityError(f"unknown driver {driver_id!r}") from None

    def dispatcher(self, dispatcher_id: str) -> Dispatcher:
        try:
            return self.dispatchers[dispatcher_id]
        except KeyError:
            raise UnknownEntityError(f"unknown dispatcher {dispatcher_id!r}") from None

    def facility(self, facility_id: str) -> Facility:
        try:
            return self.facilities[facility_id]
        except KeyError:
            raise UnknownEntityError(f"unknown facility {facility_id!r}") from None

    def available_drivers(self) -> list:
        return sorted(
            (d for d in self.drivers.values() if d.status == DriverStatus.AVAILABLE),
            key=lambda d: d.driver_id,
        )

    def on_duty_dispatchers(self) -> list:
        return sorted(
            (d for d in self.dispatchers.values() if d.on_duty),
            key=lambda d: d.dispatcher_id,
        )

    # -- validation helpers (raise, never mutate) ---------------------------

    def check_new_id(self, kind: str, entity_id: str):
        store = getattr(self, kind)
        if entity_id in store:
            raise ConflictError(f"{kind[:-1]} id {entity_id!r} already registered")

    def check_driver_self_transition(self, driver: Driver, new_status: DriverStatus):
        if new_status == driver.status:
            return
        if (driver.status, new_status) not in SELF_SERVICE_TRANSITIONS:
            raise IllegalTransition(
                f"driver {driver.driver_id}: {driver.status.value} -> "
                f"{new_status.value} is not self-service"
            )
        if new_status == DriverStatus.AVAILABLE and not (
            driver.screened and driver.trained
        ):
            raise ScreeningIncomplete(
                f"driver {driver.driver_id} has not completed screening/training"
            )

    # -- serialization -------------------------------------------------------

    def to_doc(self) -> dict:
        return {
            "riders": {k: v.to_doc() for k, v in sorted(self.riders.items())},
            "drivers": {k: v.to_doc() for k, v in sorted(self.drivers.items())},
            "dispatchers": {
                k: v.to_doc() for k, v in sorted(self.dispatchers.items())
            },
            "facilities": {k: v.to_doc() for k, v in sorted(self.facilities.items())},
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "Registry":
        reg = cls()
        reg.riders = {k: RiderProfile.from_doc(v) for k, v in doc["riders"].items()}
        reg.drivers = {k: Driver.from_doc(v) for k, v in doc["drivers"].items()}
        reg.dispatchers = {
            k: Dispatcher.from_doc(v) for k, v in doc["dispatchers"].items()
        }
        reg.facilities = {k: Facility.from_doc(v) for k, v in doc["facilities"].items()}
        return reg
