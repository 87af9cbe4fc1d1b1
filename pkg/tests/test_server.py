import json
import threading

import pytest
import requests

from parkvision.parkcore import RateSchedule
from parkvision.server import make_server
from parkvision.store import Gateway


@pytest.fixture()
def api(tmp_path):
    gateway = Gateway(tmp_path / "data", RateSchedule.from_config({}), fsync=False)
    httpd = make_server(gateway, port=0)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{httpd.server_address[1]}"
    yield base
    httpd.shutdown()
    gateway.close()


def register(base, plate="OD02AB1234", user="u1"):
    return requests.post(f"{base}/v1/registrations",
                         json={"plate": plate, "user_id": user,
                               "phone": "+919900112233"})


class TestServer:
    def test_health(self, api):
        r = requests.get(f"{api}/v1/health")
        assert r.status_code == 200
        assert r.json()["status"] == "ok"
        assert r.headers["Access-Control-Allow-Origin"] == "*"

    def test_full_cycle(self, api):
        assert register(api).status_code == 201
        r = requests.post(f"{api}/v1/events",
                          json={"type": "entry", "plate": "OD02AB1234",
                                "ts": 100, "idempotency_key": "e1"})
        assert r.status_code == 200
        session_id = r.json()["session_id"]

        r = requests.get(f"{api}/v1/sessions?state=active")
        assert [s["session_id"] for s in r.json()["sessions"]] == [session_id]

        r = requests.post(f"{api}/v1/events",
                          json={"type": "exit", "plate": "OD02AB1234",
                                "ts": 100 + 95 * 60, "idempotency_key": "x1"})
        assert r.status_code == 200
        assert r.json()["fee"] == 4000
        assert r.json()["duration_min"] == 95

        r = requests.get(f"{api}/v1/users/u1/trips")
        trips = r.json()["trips"]
        assert len(trips) == 1
        assert trips[0]["fee"] == 4000

        r = requests.get(f"{api}/v1/users/u1/notifications?since=0")
        notes = r.json()["notifications"]
        assert [n["kind"] for n in notes] == ["entry", "exit"]

    def test_idempotent_event_replay(self, api):
        register(api)
        body = {"type": "entry", "plate": "OD02AB1234", "ts": 5,
                "idempotency_key": "k"}
        first = requests.post(f"{api}/v1/events", json=body)
        second = requests.post(f"{api}/v1/events", json=body)
        assert first.status_code == second.status_code == 200
        assert first.json() == second.json()

    def test_exit_before_entry_409(self, api):
        register(api)
        r = requests.post(f"{api}/v1/events",
                          json={"type": "exit", "plate": "OD02AB1234",
                                "ts": 4, "idempotency_key": "z"})
        assert r.status_code == 409
        assert r.json()["error"] == "exit_without_entry"

    def test_unregistered_404(self, api):
        r = requests.post(f"{api}/v1/events",
                          json={"type": "entry", "plate": "ZZ99ZZ9999",
                                "ts": 4, "idempotency_key": "u"})
        assert r.status_code == 404
        assert r.json()["error"] == "unregistered_plate"

    def test_duplicate_registration_409(self, api):
        register(api)
        assert register(api, user="other").status_code == 409

    def test_wallet_topup_and_fetch(self, api):
        register(api)
        r = requests.post(f"{api}/v1/users/u1/wallet/topup", json={"amount": 5000})
        assert r.status_code == 201
        assert r.json()["balance"] == 5000
        r = requests.get(f"{api}/v1/users/u1/wallet")
        assert r.json()["balance"] == 5000
        assert len(r.json()["transactions"]) == 1

    def test_topup_nonpositive_400(self, api):
        register(api)
        r = requests.post(f"{api}/v1/users/u1/wallet/topup", json={"amount": 0})
        assert r.status_code == 400

    def test_unknown_user_404(self, api):
        assert requests.get(f"{api}/v1/users/nobody/wallet").status_code == 404
        assert requests.get(f"{api}/v1/users/nobody/trips").status_code == 404
        assert requests.get(f"{api}/v1/users/nobody/notifications").status_code == 404

    def test_notifications_since_cursor(self, api):
        register(api)
        requests.post(f"{api}/v1/events", json={"type": "entry", "plate": "OD02AB1234",
                                                "ts": 10, "idempotency_key": "a"})
        requests.post(f"{api}/v1/events", json={"type": "exit", "plate": "OD02AB1234",
                                                "ts": 100, "idempotency_key": "b"})
        all_notes = requests.get(f"{api}/v1/users/u1/notifications?since=0").json()["notifications"]
        assert len(all_notes) == 2
        tail = requests.get(
            f"{api}/v1/users/u1/notifications?since={all_notes[0]['seq']}").json()["notifications"]
        assert tail == all_notes[1:]
        none = requests.get(
            f"{api}/v1/users/u1/notifications?since={all_notes[-1]['seq']}").json()["notifications"]
        assert none == []

    def test_review_flow_over_http(self, api):
        register(api, plate="OD02AD1234", user="u1")
        register(api, plate="OQ02AD1234", user="u2")
        r = requests.post(f"{api}/v1/events",
                          json={"type": "entry", "plate": "OO02AD1234",
                                "ts": 9, "idempotency_key": "amb"})
        assert r.status_code == 202
        review_id = r.json()["review_id"]
        r = requests.get(f"{api}/v1/reviews?state=pending")
        assert len(r.json()["reviews"]) == 1
        r = requests.post(f"{api}/v1/reviews/{review_id}/resolve",
                          json={"action": "approve", "plate": "OD02AD1234"})
        assert r.status_code == 200
        assert r.json()["state"] == "active"
        assert requests.get(f"{api}/v1/reviews").json()["reviews"] == []

    def test_malformed_body_400(self, api):
        r = requests.post(f"{api}/v1/events", data=b"{not json",
                          headers={"Content-Type": "application/json"})
        assert r.status_code == 400
        r = requests.post(f"{api}/v1/events", json=["array"])
        assert r.status_code == 400

    def test_unknown_route_404(self, api):
        assert requests.get(f"{api}/v1/nope").status_code == 404

    def test_config_exposes_schedule(self, api):
        r = requests.get(f"{api}/v1/config")
        assert r.status_code == 200
        assert r.json()["schedule"]["base_price"] == 2000

    def test_options_preflight(self, api):
        r = requests.options(f"{api}/v1/events")
        assert r.status_code == 204
        assert "POST" in r.headers["Access-Control-Allow-Methods"]
