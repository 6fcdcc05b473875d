import re

import pytest
from starlette.testclient import TestClient
from starlette.websockets import WebSocketDisconnect

from motorlance.api import Gateway, GatewayConfig, create_app, service_for_scenario
from motorlance.registry import DriverStatus

from conftest import make_service, node_point

RIDER = {"Authorization": "Bearer rider-token"}
DRIVER = {"Authorization": "Bearer driver-token"}
DISPATCHER = {"Authorization": "Bearer dispatcher-token"}

ISO_Z = re.compile(r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}\.\d{3}Z$")


class Clock:
    def __init__(self, t=100.0):
        self.t = t

    def __call__(self):
        return self.t

    def advance(self, dt):
        self.t += dt


@pytest.fixture
def world():
    service = make_service()
    clock = Clock()
    gateway = Gateway(service, GatewayConfig(), clock=clock)
    with TestClient(create_app(gateway)) as client:
        yield client, clock, service


def origin(node="n1"):
    point = node_point(node)
    return {"lat": point.lat, "lon": point.lon}


def create(client, node="n1", headers=None, **extra):
    body = {**origin(node), **extra}
    resp = client.post("/v1/requests", json=body, headers=headers or {})
    assert resp.status_code == 201, resp.text
    return resp.json()


class TestAuth:
    def test_state_requires_dispatcher_token(self, world):
        client, _, _ = world
        resp = client.get("/v1/state")
        assert resp.status_code == 403
        assert resp.json()["error"]["code"] == "forbidden"

    def test_driver_token_cannot_confirm(self, world):
        client, _, _ = world
        rid = create(client)["request"]["request_id"]
        resp = client.post(
            f"/v1/requests/{rid}/confirm",
            json={"dispatcher_id": "ops1"},
            headers=DRIVER,
        )
        assert resp.status_code == 403
        assert resp.json()["error"]["code"] == "forbidden"

    def test_unknown_token_rejected(self, world):
        client, _, _ = world
        resp = client.get("/v1/state", headers={"Authorization": "Bearer nope"})
        assert resp.status_code == 403

    def test_malformed_auth_header_rejected(self, world):
        client, _, _ = world
        resp = client.get("/v1/state", headers={"Authorization": "dispatcher-token"})
        assert resp.status_code == 403

    def test_anonymous_rider_can_create(self, world):
        client, _, _ = world
        doc = create(client)
        assert doc["request"]["rider"] is None

    def test_rider_token_cannot_read_state(self, world):
        client, _, _ = world
        assert client.get("/v1/state", headers=RIDER).status_code == 403


class TestRequestLifecycle:
    def test_create_returns_proposal(self, world):
        client, _, service = world
        doc = create(client, details="chest pain", headers=RIDER)
        req = doc["request"]
        assert req["state"] == "driver_proposed"
        assert req["proposed_driver"] == "d1"
        assert req["window_deadline"] == 115.0
        assert req["details"] == "chest pain"
        assert req["facility"] == "hosp"
        assert doc["seq"] == service.log.last_seq
        assert ISO_Z.match(doc["server_time"])

    def test_get_request_roundtrip(self, world):
        client, _, service = world
        rid = create(client)["request"]["request_id"]
        resp = client.get(f"/v1/requests/{rid}")
        assert resp.status_code == 200
        assert resp.json()["request"] == service.state.request(rid).to_doc()

    def test_unknown_request_404(self, world):
        client, _, _ = world
        resp = client.get("/v1/requests/r999999")
        assert resp.status_code == 404
        assert resp.json()["error"]["code"] == "unknown_entity"

    def test_full_trip_over_http(self, world):
        client, _, service = world
        rid = create(client, headers=RIDER)["request"]["request_id"]

        confirmed = client.post(
            f"/v1/requests/{rid}/confirm",
            json={"dispatcher_id": "ops1"},
            headers=DISPATCHER,
        )
        assert confirmed.status_code == 200
        assert confirmed.json()["request"]["state"] == "en_route"
        assert confirmed.json()["request"]["dispatcher"] == "ops1"

        eta = client.get(f"/v1/requests/{rid}/eta")
        assert eta.status_code == 200
        assert eta.json()["eta_s"] == 30.0

        for transition, state in [
            ("arrive_scene", "on_scene"),
            ("begin_transport", "transporting"),
            ("complete", "completed"),
        ]:
            resp = client.post(
                f"/v1/requests/{rid}/progress",
                json={"driver_id": "d1", "transition": transition},
                headers=DRIVER,
            )
            assert resp.status_code == 200, resp.text
            assert resp.json()["request"]["state"] == state

        driver = service.state.registry.driver("d1")
        assert driver.status == DriverStatus.AVAILABLE
        assert driver.node == "n5"

    def test_transport_eta_targets_facility(self, world):
        client, _, _ = world
        rid = create(client)["request"]["request_id"]
        client.post(f"/v1/requests/{rid}/confirm", json={"dispatcher_id": "ops1"},
                    headers=DISPATCHER)
        client.post(f"/v1/requests/{rid}/progress",
                    json={"driver_id": "d1", "transition": "arrive_scene"},
                    headers=DRIVER)
        client.post(f"/v1/requests/{rid}/progress",
                    json={"driver_id": "d1", "transition": "begin_transport"},
                    headers=DRIVER)
        eta = client.get(f"/v1/requests/{rid}/eta")
        assert eta.json()["eta_s"] == 120.0

    def test_cancel(self, world):
        client, _, _ = world
        rid = create(client)["request"]["request_id"]
        resp = client.post(f"/v1/requests/{rid}/cancel", json={}, headers=RIDER)
        assert resp.status_code == 200
        assert resp.json()["request"]["state"] == "cancelled"

    def test_cancel_terminal_conflict(self, world):
        client, _, _ = world
        rid = create(client)["request"]["request_id"]
        client.post(f"/v1/requests/{rid}/cancel", json={}, headers=RIDER)
        resp = client.post(f"/v1/requests/{rid}/cancel", json={}, headers=RIDER)
        assert resp.status_code == 409
        assert resp.json()["error"]["code"] == "wrong_state"

    def test_escalate(self, world):
        client, _, _ = world
        rid = create(client)["request"]["request_id"]
        resp = client.post(
            f"/v1/requests/{rid}/escalate",
            json={"dispatcher_id": "ops1", "reason": "needs ICU transport"},
            headers=DISPATCHER,
        )
        assert resp.status_code == 200
        assert resp.json()["request"]["state"] == "escalated_to_ems"
        assert "local emergency services" in resp.json()["advice"]

    def test_create_with_no_fleet_escalates_with_advice(self, world):
        client, _, _ = world
        for did in ("d1", "d2", "d3"):
            client.post(f"/v1/drivers/{did}/status", json={"status": "offline"},
                        headers=DRIVER)
        doc = create(client)
        assert doc["request"]["state"] == "escalated_to_ems"
        assert doc["request"]["escalation_reason"] == "no_driver"
        assert "advice" in doc

    def test_wrong_driver_progress_conflict(self, world):
        client, _, _ = world
        rid = create(client)["request"]["request_id"]
        client.post(f"/v1/requests/{rid}/confirm", json={"dispatcher_id": "ops1"},
                    headers=DISPATCHER)
        resp = client.post(
            f"/v1/requests/{rid}/progress",
            json={"driver_id": "d2", "transition": "arrive_scene"},
            headers=DRIVER,
        )
        assert resp.status_code == 409
        assert resp.json()["error"]["code"] == "wrong_driver"


class TestWindow:
    def test_expiry_applies_on_next_read(self, world):
        client, clock, _ = world
        rid = create(client)["request"]["request_id"]
        clock.advance(20.0)
        req = client.get(f"/v1/requests/{rid}").json()["request"]
        assert req["state"] == "en_route"
        assert req["auto_dispatched"] is True
        assert req["dispatcher"] is None

    def test_late_confirm_conflicts_with_window_expired(self, world):
        client, clock, _ = world
        rid = create(client)["request"]["request_id"]
        clock.advance(20.0)
        resp = client.post(
            f"/v1/requests/{rid}/confirm",
            json={"dispatcher_id": "ops1"},
            headers=DISPATCHER,
        )
        assert resp.status_code == 409
        assert resp.json()["error"]["code"] == "window_expired"

    def test_reassign_during_window(self, world):
        client, _, _ = world
        rid = create(client)["request"]["request_id"]
        resp = client.post(
            f"/v1/requests/{rid}/reassign",
            json={"dispatcher_id": "ops1", "driver_id": "d2"},
            headers=DISPATCHER,
        )
        assert resp.status_code == 200
        req = resp.json()["request"]
        assert req["assigned_driver"] == "d2"
        assert req["state"] == "en_route"

    def test_reassign_to_offline_driver_conflicts(self, world):
        client, _, _ = world
        client.post("/v1/drivers/d2/status", json={"status": "offline"}, headers=DRIVER)
        rid = create(client)["request"]["request_id"]
        resp = client.post(
            f"/v1/requests/{rid}/reassign",
            json={"dispatcher_id": "ops1", "driver_id": "d2"},
            headers=DISPATCHER,
        )
        assert resp.status_code == 409
        assert resp.json()["error"]["code"] == "driver_unavailable"

    def test_reassign_after_window_conflicts(self, world):
        client, clock, _ = world
        rid = create(client)["request"]["request_id"]
        clock.advance(20.0)
        resp = client.post(
            f"/v1/requests/{rid}/reassign",
            json={"dispatcher_id": "ops1", "driver_id": "d2"},
            headers=DISPATCHER,
        )
        assert resp.status_code == 409
        assert resp.json()["error"]["code"] == "wrong_state"


class TestValidation:
    def test_bad_latitude(self, world):
        client, _, _ = world
        resp = client.post("/v1/requests", json={"lat": 200.0, "lon": 121.0})
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "validation_error"

    def test_missing_lon(self, world):
        client, _, _ = world
        resp = client.post("/v1/requests", json={"lat": 14.58})
        assert resp.status_code == 400

    def test_non_object_body(self, world):
        client, _, _ = world
        resp = client.post("/v1/requests", json=["not", "a", "dict"])
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "validation_error"

    def test_unknown_rider_404(self, world):
        client, _, _ = world
        resp = client.post("/v1/requests", json={**origin(), "rider_id": "ghost"})
        assert resp.status_code == 404

    def test_unknown_progress_transition(self, world):
        client, _, _ = world
        rid = create(client)["request"]["request_id"]
        resp = client.post(
            f"/v1/requests/{rid}/progress",
            json={"driver_id": "d1", "transition": "teleport"},
            headers=DRIVER,
        )
        assert resp.status_code == 400

    def test_unknown_driver_status(self, world):
        client, _, _ = world
        resp = client.post("/v1/drivers/d1/status", json={"status": "napping"},
                           headers=DRIVER)
        assert resp.status_code == 400

    def test_unknown_facility_404(self, world):
        client, _, _ = world
        rid = create(client)["request"]["request_id"]
        resp = client.post(
            f"/v1/requests/{rid}/facility",
            json={"dispatcher_id": "ops1", "facility_id": "nowhere"},
            headers=DISPATCHER,
        )
        assert resp.status_code == 404
        assert resp.json()["error"]["code"] == "unknown_facility"


class TestDriverEndpoints:
    def test_location_update_emits_eta(self, world):
        client, _, service = world
        rid = create(client)["request"]["request_id"]
        client.post(f"/v1/requests/{rid}/confirm", json={"dispatcher_id": "ops1"},
                    headers=DISPATCHER)
        before = service.log.last_seq
        point = node_point("n3")
        resp = client.post("/v1/drivers/d1/location",
                           json={"lat": point.lat, "lon": point.lon}, headers=DRIVER)
        assert resp.status_code == 200
        assert resp.json()["driver"]["node"] == "n3"
        kinds = [e.kind for e in service.log.since(before)]
        assert kinds == ["location_update", "eta_update"]

    def test_status_round_trip(self, world):
        client, _, _ = world
        down = client.post("/v1/drivers/d1/status", json={"status": "offline"},
                           headers=DRIVER)
        assert down.json()["driver"]["status"] == "offline"
        up = client.post("/v1/drivers/d1/status", json={"status": "available"},
                         headers=DRIVER)
        assert up.json()["driver"]["status"] == "available"

    def test_non_self_service_transition_rejected(self, world):
        client, _, _ = world
        resp = client.post("/v1/drivers/d1/status", json={"status": "assigned"},
                           headers=DRIVER)
        assert resp.status_code == 409
        assert resp.json()["error"]["code"] == "illegal_transition"

    def test_app_open_logged(self, world):
        client, _, service = world
        resp = client.post("/v1/app-open", json={"rider_id": "rx"}, headers=RIDER)
        assert resp.status_code == 200
        assert service.log.events[-1].kind == "app_open_alert"
        assert resp.json()["alert_seq"] == service.log.last_seq


class TestStateSnapshot:
    def test_snapshot_matches_core(self, world):
        client, _, service = world
        rid = create(client, headers=RIDER, rider_id="rx")["request"]["request_id"]
        snap = client.get("/v1/state", headers=DISPATCHER).json()
        assert snap["seq"] == service.log.last_seq
        assert snap["requests"][rid] == service.state.request(rid).to_doc()
        assert snap["drivers"] == service.state.registry.to_doc()["drivers"]
        assert set(snap) == {"seq", "server_time", "requests", "riders", "drivers",
                             "dispatchers", "facilities"}

    def test_snapshot_applies_due_expiries(self, world):
        client, clock, _ = world
        rid = create(client)["request"]["request_id"]
        clock.advance(30.0)
        snap = client.get("/v1/state", headers=DISPATCHER).json()
        assert snap["requests"][rid]["state"] == "en_route"
        assert snap["requests"][rid]["auto_dispatched"] is True


def stream_frames(ws, count):
    return [ws.receive_json() for _ in range(count)]


class TestStream:
    def test_backlog_replay_in_log_order(self, world):
        client, _, service = world
        create(client, headers=RIDER, rider_id="rx")
        with client.websocket_connect("/v1/stream?token=dispatcher-token") as ws:
            hello = ws.receive_json()
            assert hello["kind"] == "hello"
            assert hello["seq"] == service.log.last_seq
            frames = stream_frames(ws, service.log.last_seq)
            assert [f["seq"] for f in frames] == [e.seq for e in service.log.events]
            assert [f["kind"] for f in frames] == [e.kind for e in service.log.events]
            assert all(ISO_Z.match(f["server_time"]) for f in frames)

    def test_live_events_follow_backlog(self, world):
        client, _, service = world
        with client.websocket_connect("/v1/stream?token=dispatcher-token") as ws:
            ws.receive_json()  # hello
            stream_frames(ws, service.log.last_seq)  # drain backlog
            create(client)
            live = stream_frames(ws, 4)
            assert [f["kind"] for f in live] == [
                "request_created", "call_session_opened",
                "facility_assigned", "driver_proposed",
            ]
            assert live[0]["payload"]["window_deadline"] == 115.0

    def test_resume_replays_gap_without_duplicates(self, world):
        client, _, service = world
        create(client)
        with client.websocket_connect("/v1/stream?token=dispatcher-token") as ws:
            ws.receive_json()
            seen = stream_frames(ws, service.log.last_seq)
        cursor = seen[-1]["seq"]
        rid = seen[-1]["payload"]["request_id"]
        client.post(f"/v1/requests/{rid}/confirm", json={"dispatcher_id": "ops1"},
                    headers=DISPATCHER)
        with client.websocket_connect(
            f"/v1/stream?token=dispatcher-token&since={cursor}"
        ) as ws:
            hello = ws.receive_json()
            assert hello["resume_from"] == cursor
            tail = stream_frames(ws, service.log.last_seq - cursor)
            assert [f["seq"] for f in tail] == list(
                range(cursor + 1, service.log.last_seq + 1)
            )
            assert [f["kind"] for f in tail] == [
                "confirmed", "call_session_closed", "state_changed",
            ]

    def test_request_filter_scopes_stream(self, world):
        client, _, service = world
        first = create(client)["request"]["request_id"]
        create(client)
        with client.websocket_connect(
            f"/v1/stream?token=rider-token&request_id={first}"
        ) as ws:
            ws.receive_json()
            expected = [e for e in service.log.events
                        if e.payload.get("request_id") == first]
            frames = stream_frames(ws, len(expected))
            assert [f["seq"] for f in frames] == [e.seq for e in expected]

    def test_rider_sees_eta_updates_live(self, world):
        client, _, service = world
        rid = create(client)["request"]["request_id"]
        client.post(f"/v1/requests/{rid}/confirm", json={"dispatcher_id": "ops1"},
                    headers=DISPATCHER)
        with client.websocket_connect(
            f"/v1/stream?token=rider-token&request_id={rid}&since={service.log.last_seq}"
        ) as ws:
            ws.receive_json()
            point = node_point("n3")
            client.post("/v1/drivers/d1/location",
                        json={"lat": point.lat, "lon": point.lon}, headers=DRIVER)
            frame = ws.receive_json()
            assert frame["kind"] == "eta_update"
            assert frame["payload"]["eta_s"] == 60.0

    def test_ping_pong(self, world):
        client, _, service = world
        with client.websocket_connect(
            f"/v1/stream?token=rider-token&since={service.log.last_seq}"
        ) as ws:
            ws.receive_json()
            ws.send_json({"action": "ping"})
            assert ws.receive_json()["kind"] == "pong"

    def test_bad_token_closes_stream(self, world):
        client, _, _ = world
        with pytest.raises(WebSocketDisconnect):
            with client.websocket_connect("/v1/stream?token=wrong") as ws:
                ws.receive_json()

    def test_connect_fires_due_expiries(self, world):
        client, clock, service = world
        create(client)
        clock.advance(30.0)
        with client.websocket_connect(
            "/v1/stream?token=dispatcher-token"
        ) as ws:
            ws.receive_json()
            frames = stream_frames(ws, service.log.last_seq)
            confirm = next(f for f in frames if f["kind"] == "confirmed")
            assert confirm["payload"]["by"] == "auto"


class TestEventAppendPerMutation:
    def test_every_2xx_mutation_appends_events(self, world):
        client, _, service = world
        before = service.log.last_seq
        doc = create(client)
        rid = doc["request"]["request_id"]
        assert service.log.last_seq > before
        assert doc["seq"] == service.log.last_seq

        steps = [
            ("post", f"/v1/requests/{rid}/confirm", {"dispatcher_id": "ops1"}, DISPATCHER),
            ("post", f"/v1/requests/{rid}/progress",
             {"driver_id": "d1", "transition": "arrive_scene"}, DRIVER),
        ]
        for _, path, body, headers in steps:
            before = service.log.last_seq
            resp = client.post(path, json=body, headers=headers)
            assert resp.status_code == 200
            assert service.log.last_seq > before
            assert resp.json()["seq"] == service.log.last_seq

    def test_rejected_mutation_appends_nothing(self, world):
        client, _, service = world
        rid = create(client)["request"]["request_id"]
        before = service.log.last_seq
        resp = client.post(
            f"/v1/requests/{rid}/progress",
            json={"driver_id": "d1", "transition": "arrive_scene"},
            headers=DRIVER,
        )
        assert resp.status_code == 409  # still in the confirmation window
        assert service.log.last_seq == before


class TestScenarioBootstrap:
    def test_service_for_scenario(self):
        from motorlance.bundled import bundled_path
        from motorlance.sim import load_scenario

        scenario = load_scenario(bundled_path("scenarios", "mandaluyong.json"))
        service = service_for_scenario(scenario)
        registry = service.state.registry
        assert len(registry.drivers) == 2
        assert all(d.status == DriverStatus.AVAILABLE for d in registry.drivers.values())
        assert set(registry.facilities) == {"brgy_clinic", "city_hospital"}
        assert registry.dispatcher("ops").on_duty

        gateway = Gateway(service, GatewayConfig(), clock=Clock(0.0))
        with TestClient(create_app(gateway)) as client:
            node = scenario.graph.nodes["s1"]
            resp = client.post("/v1/requests", json={"lat": node.lat, "lon": node.lon})
            assert resp.status_code == 201
            assert resp.json()["request"]["state"] == "driver_proposed"
