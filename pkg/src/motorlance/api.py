"""HTTP and WebSocket boundary over the dispatch core.

Every mutation funnels through one lock, so commands serialize exactly as
they would on the core's own command loop, and stream subscribers see
events in committed order. Reads serve the current snapshot under the
same lock.

Authentication is deliberately thin: three static role tokens (rider,
driver, dispatcher) from the gateway config. Riders may stay anonymous.
Full message schemas live in docs/protocol.md.
"""

from __future__ import annotations

import asyncio
import json
import threading
import time
from contextlib import asynccontextmanager
from dataclasses import dataclass, replace
from datetime import datetime, timezone

from fastapi import FastAPI, Request as HttpRequest, WebSocket, WebSocketDisconnect
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .dispatch import DispatchService
from .errors import MotorlanceError, ValidationError
from .events import Event, EventLog
from .geo import GeoPoint, RoutingEngine
from .registry import DriverStatus

_STATUS_BY_CODE = {
    "validation_error": 400,
    "config_error": 400,
    "parse_error": 400,
    "forbidden": 403,
    "unknown_entity": 404,
    "unknown_facility": 404,
    "persistence_error": 500,
}
# Everything else (wrong_state, window_expired, conflict, ...) is a 409:
# the request was well-formed but the world has moved on.
_DEFAULT_STATUS = 409

ESCALATION_ADVICE = (
    "No motorlance is available. Please call your local emergency services."
)


class Forbidden(MotorlanceError):
    """Token's role does not permit this endpoint."""

    code = "forbidden"


@dataclass(frozen=True)
class GatewayConfig:
    """Static tokens and listen address; everything overridable via
    MOTORLANCE_* environment variables when loaded from file."""

    rider_token: str = "rider-token"
    driver_token: str = "driver-token"
    dispatcher_token: str = "dispatcher-token"
    host: str = "127.0.0.1"
    port: int = 8000
    allow_anonymous_rider: bool = True
    expiry_poll_s: float | None = None  # None: expire lazily on API traffic

    def role_of(self, token: str | None) -> str:
        if token is None:
            return "anonymous"
        for role in ("rider", "driver", "dispatcher"):
            if token == getattr(self, f"{role}_token"):
                return role
        raise Forbidden("unrecognized token")


def gateway_config_from_doc(doc: dict, env: dict | None = None) -> GatewayConfig:
    import os

    env = os.environ if env is None else env
    cfg = GatewayConfig(
        rider_token=doc.get("tokens", {}).get("rider", "rider-token"),
        driver_token=doc.get("tokens", {}).get("driver", "driver-token"),
        dispatcher_token=doc.get("tokens", {}).get("dispatcher", "dispatcher-token"),
        host=doc.get("listen", {}).get("host", "127.0.0.1"),
        port=int(doc.get("listen", {}).get("port", 8000)),
    )
    overrides = {}
    for field_name, var in (
        ("rider_token", "MOTORLANCE_RIDER_TOKEN"),
        ("driver_token", "MOTORLANCE_DRIVER_TOKEN"),
        ("dispatcher_token", "MOTORLANCE_DISPATCHER_TOKEN"),
        ("host", "MOTORLANCE_HOST"),
    ):
        if env.get(var):
            overrides[field_name] = env[var]
    if env.get("MOTORLANCE_PORT"):
        overrides["port"] = int(env["MOTORLANCE_PORT"])
    return replace(cfg, **overrides) if overrides else cfg


def iso_utc(ts: float) -> str:
    stamp = datetime.fromtimestamp(ts, tz=timezone.utc)
    return stamp.isoformat(timespec="milliseconds").replace("+00:00", "Z")


class Gateway:
    """Shared state behind the app: the core service, a command lock,
    and an injectable clock (epoch seconds) so tests control time."""

    def __init__(self, service: DispatchService, config: GatewayConfig | None = None,
                 clock=time.time):
        self.service = service
        self.config = config or GatewayConfig()
        self.clock = clock
        self.lock = threading.RLock()
        self._stop = threading.Event()
        self._expiry_thread: threading.Thread | None = None

    def now(self) -> float:
        return float(self.clock())

    def run_due_expiries(self, now: float) -> None:
        for request_id in self.service.due_window_expiries(now):
            self.service.on_window_expire(request_id, now)

    # Called around every endpoint so confirmation windows fire on the
    # next piece of traffic even without the background poller.
    def command(self, fn):
        with self.lock:
            now = self.now()
            self.run_due_expiries(now)
            return fn(now)

    def start_expiry_poller(self) -> None:
        if not self.config.expiry_poll_s or self._expiry_thread:
            return

        def loop():
            while not self._stop.wait(self.config.expiry_poll_s):
                with self.lock:
                    self.run_due_expiries(self.now())

        self._expiry_thread = threading.Thread(target=loop, daemon=True)
        self._expiry_thread.start()

    def stop_expiry_poller(self) -> None:
        self._stop.set()
        if self._expiry_thread:
            self._expiry_thread.join(timeout=2.0)
            self._expiry_thread = None

    def state_snapshot(self) -> dict:
        with self.lock:
            now = self.now()
            self.run_due_expiries(now)
            state = self.service.state
            return {
                "seq": self.service.log.last_seq,
                "server_time": iso_utc(now),
                "requests": {k: v.to_doc() for k, v in sorted(state.requests.items())},
                **state.registry.to_doc(),
            }


def _bearer_token(request: HttpRequest) -> str | None:
    header = request.headers.get("authorization")
    if not header:
        return None
    scheme, _, token = header.partition(" ")
    if scheme.lower() != "bearer" or not token:
        raise Forbidden("authorization header must be 'Bearer <token>'")
    return token.strip()


def _field(body: dict, name: str, kind=str, required=True, default=None):
    if name not in body or body[name] is None:
        if required:
            raise ValidationError(f"missing field {name!r}")
        return default
    value = body[name]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"field {name!r} must be a number")
        return float(value)
    if not isinstance(value, kind):
        raise ValidationError(f"field {name!r} must be {kind.__name__}")
    return value


def create_app(gateway: Gateway) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app):
        gateway.start_expiry_poller()
        yield
        gateway.stop_expiry_poller()

    app = FastAPI(title="motorlance", lifespan=lifespan)
    app.state.gateway = gateway
    service = gateway.service
    config = gateway.config

    @app.exception_handler(MotorlanceError)
    async def on_domain_error(_req, err: MotorlanceError):
        status = _STATUS_BY_CODE.get(err.code, _DEFAULT_STATUS)
        return JSONResponse(
            status_code=status,
            content={"error": {"code": err.code, "message": str(err)}},
        )

    @app.exception_handler(RequestValidationError)
    async def on_shape_error(_req, err: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"error": {"code": "validation_error", "message": str(err)}},
        )

    def role_of(request: HttpRequest) -> str:
        return config.role_of(_bearer_token(request))

    def require(request: HttpRequest, *roles: str) -> str:
        role = role_of(request)
        if role not in roles:
            raise Forbidden(f"endpoint requires role in {sorted(roles)}, token is {role}")
        return role

    def envelope(extra: dict, now: float) -> dict:
        return {"seq": service.log.last_seq, "server_time": iso_utc(now), **extra}

    # -- rider side ---------------------------------------------------------

    @app.post("/v1/app-open")
    def app_open(body: dict, request: HttpRequest):
        require(request, "anonymous", "rider")

        def op(now):
            event = service.on_app_open(_field(body, "rider_id", required=False), now)
            return envelope({"ok": True, "alert_seq": event.seq}, now)

        return gateway.command(op)

    @app.post("/v1/requests", status_code=201)
    def create_request(body: dict, request: HttpRequest):
        require(request, "anonymous", "rider")
        origin = GeoPoint(_field(body, "lat", float), _field(body, "lon", float))
        rider_id = _field(body, "rider_id", required=False)
        details = _field(body, "details", required=False, default="")

        def op(now):
            created = service.create_request(rider_id, origin, details, now)
            doc = envelope({"request": created.to_doc()}, now)
            if created.state.value == "escalated_to_ems":
                doc["advice"] = ESCALATION_ADVICE
            return doc

        return gateway.command(op)

    @app.get("/v1/requests/{request_id}")
    def get_request(request_id: str, request: HttpRequest):
        role_of(request)

        def op(now):
            return envelope({"request": service.state.request(request_id).to_doc()}, now)

        return gateway.command(op)

    @app.get("/v1/requests/{request_id}/eta")
    def get_eta(request_id: str, request: HttpRequest):
        role_of(request)

        def op(now):
            eta_s = service.eta(request_id, now)
            return envelope({"request_id": request_id, "eta_s": eta_s}, now)

        return gateway.command(op)

    @app.post("/v1/requests/{request_id}/cancel")
    def cancel(request_id: str, body: dict, request: HttpRequest):
        role = require(request, "anonymous", "rider", "dispatcher")
        actor = _field(body, "actor", required=False, default=role)

        def op(now):
            return envelope(
                {"request": service.cancel(request_id, actor, now).to_doc()}, now
            )

        return gateway.command(op)

    # -- dispatcher side ---------------------------------------------------------

    @app.post("/v1/requests/{request_id}/confirm")
    def confirm(request_id: str, body: dict, request: HttpRequest):
        require(request, "dispatcher")
        dispatcher_id = _field(body, "dispatcher_id")

        def op(now):
            confirmed = service.dispatcher_confirm(request_id, dispatcher_id, now)
            return envelope({"request": confirmed.to_doc()}, now)

        return gateway.command(op)

    @app.post("/v1/requests/{request_id}/reassign")
    def reassign(request_id: str, body: dict, request: HttpRequest):
        require(request, "dispatcher")
        dispatcher_id = _field(body, "dispatcher_id")
        driver_id = _field(body, "driver_id")

        def op(now):
            moved = service.dispatcher_reassign(request_id, driver_id, dispatcher_id, now)
            return envelope({"request": moved.to_doc()}, now)

        return gateway.command(op)

    @app.post("/v1/requests/{request_id}/facility")
    def change_facility(request_id: str, body: dict, request: HttpRequest):
        require(request, "dispatcher")
        dispatcher_id = _field(body, "dispatcher_id")
        facility_id = _field(body, "facility_id")

        def op(now):
            changed = service.dispatcher_change_facility(
                request_id, facility_id, dispatcher_id, now
            )
            return envelope({"request": changed.to_doc()}, now)

        return gateway.command(op)

    @app.post("/v1/requests/{request_id}/escalate")
    def escalate(request_id: str, body: dict, request: HttpRequest):
        require(request, "dispatcher")
        actor = _field(body, "dispatcher_id", required=False, default="dispatcher")
        reason = _field(body, "reason", required=False, default="dispatcher_decision")

        def op(now):
            doc = service.escalate_to_ems(request_id, reason, actor, now).to_doc()
            return envelope({"request": doc, "advice": ESCALATION_ADVICE}, now)

        return gateway.command(op)

    @app.get("/v1/state")
    def state_snapshot(request: HttpRequest):
        require(request, "dispatcher")
        return gateway.state_snapshot()

    # -- driver side ---------------------------------------------------------

    @app.post("/v1/requests/{request_id}/progress")
    def progress(request_id: str, body: dict, request: HttpRequest):
        require(request, "driver")
        driver_id = _field(body, "driver_id")
        transition = _field(body, "transition")

        def op(now):
            moved = service.progress(request_id, transition, driver_id, now)
            return envelope({"request": moved.to_doc()}, now)

        return gateway.command(op)

    @app.post("/v1/drivers/{driver_id}/location")
    def driver_location(driver_id: str, body: dict, request: HttpRequest):
        require(request, "driver")
        point = GeoPoint(_field(body, "lat", float), _field(body, "lon", float))

        def op(now):
            driver = service.update_driver_location(driver_id, point, now)
            return envelope({"driver": driver.to_doc()}, now)

        return gateway.command(op)

    @app.post("/v1/drivers/{driver_id}/status")
    def driver_status(driver_id: str, body: dict, request: HttpRequest):
        require(request, "driver")
        raw = _field(body, "status")
        try:
            status = DriverStatus(raw)
        except ValueError:
            raise ValidationError(f"unknown driver status {raw!r}") from None

        def op(now):
            driver = service.set_driver_status(driver_id, status, now)
            return envelope({"driver": driver.to_doc()}, now)

        return gateway.command(op)

    # -- event stream ---------------------------------------------------------

    @app.websocket("/v1/stream")
    async def stream(ws: WebSocket):
        try:
            role = config.role_of(ws.query_params.get("token"))
        except Forbidden:
            await ws.close(code=4403)
            return
        try:
            since = int(ws.query_params.get("since", "0"))
        except ValueError:
            await ws.close(code=4400)
            return
        request_filter = ws.query_params.get("request_id")

        def wanted(event: Event) -> bool:
            if request_filter is None:
                return True
            return event.payload.get("request_id") == request_filter

        await ws.accept()
        loop = asyncio.get_running_loop()
        queue: asyncio.Queue = asyncio.Queue()

        def relay(event: Event) -> None:
            try:
                loop.call_soon_threadsafe(queue.put_nowait, event)
            except RuntimeError:
                pass  # loop already closed; unsubscribe happens in finally

        # Snapshot the backlog and subscribe in one locked section so no
        # event can fall between replay and live delivery.
        with gateway.lock:
            now = gateway.now()
            gateway.run_due_expiries(now)
            backlog = service.log.since(since)
            service.log.subscribe(relay)
        try:
            await ws.send_json(
                {"kind": "hello", "role": role, "resume_from": since,
                 "seq": service.log.last_seq, "server_time": iso_utc(now)}
            )
            sent = since
            for event in backlog:
                if wanted(event):
                    await ws.send_json(_frame(event))
                sent = max(sent, event.seq)

            recv_task = asyncio.create_task(ws.receive_text())
            queue_task = asyncio.create_task(queue.get())
            try:
                while True:
                    done, _ = await asyncio.wait(
                        {recv_task, queue_task},
                        return_when=asyncio.FIRST_COMPLETED,
                    )
                    if queue_task in done:
                        event = queue_task.result()
                        # events already in the backlog replay are skipped
                        if event.seq > sent:
                            sent = event.seq
                            if wanted(event):
                                await ws.send_json(_frame(event))
                        queue_task = asyncio.create_task(queue.get())
                    if recv_task in done:
                        text = recv_task.result()  # raises on disconnect
                        await _handle_client_frame(ws, gateway, text)
                        recv_task = asyncio.create_task(ws.receive_text())
            finally:
                recv_task.cancel()
                queue_task.cancel()
        except WebSocketDisconnect:
            pass
        finally:
            with gateway.lock:
                service.log.unsubscribe(relay)

    return app


def _frame(event: Event) -> dict:
    return {
        "seq": event.seq,
        "kind": event.kind,
        "payload": event.payload,
        "ts": event.ts,
        "server_time": iso_utc(event.ts),
    }


async def _handle_client_frame(ws: WebSocket, gateway: Gateway, text: str) -> None:
    try:
        frame = json.loads(text)
        action = frame.get("action")
    except (ValueError, AttributeError):
        return
    if action == "ping":
        await ws.send_json({"kind": "pong", "server_time": iso_utc(gateway.now())})
    # acks and unknown actions are accepted silently


# -- bootstrap ---------------------------------------------------------


def service_for_scenario(scenario, log: EventLog | None = None) -> DispatchService:
    """A live service with the scenario's fleet, facilities, and one
    on-duty dispatcher ("ops") registered at t=0."""
    engine = RoutingEngine(scenario.graph, scenario.profile)
    service = DispatchService(
        engine,
        scenario.dispatch,
        log or EventLog(),
        tod_offset_s=scenario.start_hour * 3600.0,
    )
    for facility in scenario.facilities:
        service.register_facility(
            facility.facility_id, scenario.graph.nodes[facility.node], 0.0,
            name=facility.name,
        )
    index = 0
    for entry in scenario.fleet:
        for _ in range(entry.count):
            driver_id = f"v{index:03d}"
            index += 1
            service.register_driver(
                driver_id, scenario.graph.nodes[entry.depot], entry.vehicle, 0.0,
                screened=True, trained=True,
            )
            service.set_driver_status(driver_id, DriverStatus.AVAILABLE, 0.0)
    service.register_dispatcher("ops", 0.0, screened=True)
    service.set_dispatcher_duty("ops", True, 0.0)
    return service
