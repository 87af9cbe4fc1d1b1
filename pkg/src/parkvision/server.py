"""HTTP/1.1 + JSON surface over the gateway (stdlib http.server).

The wire contract is frozen in docs/wire.md; the browser console and any
edge-node client speak exactly these routes.
"""

from __future__ import annotations

import json
import logging
import re
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .store import Gateway

logger = logging.getLogger(__name__)

MAX_BODY = 1 << 20


class BindFailure(Exception):
    pass


_ROUTES = []


def _route(method: str, pattern: str):
    regex = re.compile(f"^{pattern}$")

    def wrap(fn):
        _ROUTES.append((method, regex, fn))
        return fn
    return wrap


@_route("GET", r"/v1/health")
def _health(gw: Gateway, m, q, body):
    return gw.health()


@_route("POST", r"/v1/events")
def _events(gw: Gateway, m, q, body):
    return gw.submit_event(body)


@_route("POST", r"/v1/registrations")
def _register(gw: Gateway, m, q, body):
    return gw.register(body, default_ts=time.time())


@_route("GET", r"/v1/sessions")
def _sessions(gw: Gateway, m, q, body):
    if q.get("state", "active") != "active":
        return 400, {"error": "malformed_query", "detail": "only state=active is supported"}
    return gw.active_sessions()


@_route("GET", r"/v1/users/(?P<user_id>[^/]+)/wallet")
def _wallet(gw: Gateway, m, q, body):
    return gw.wallet(m.group("user_id"))


@_route("POST", r"/v1/users/(?P<user_id>[^/]+)/wallet/topup")
def _topup(gw: Gateway, m, q, body):
    return gw.topup(m.group("user_id"), body, default_ts=time.time())


@_route("GET", r"/v1/users/(?P<user_id>[^/]+)/trips")
def _trips(gw: Gateway, m, q, body):
    return gw.trips(m.group("user_id"))


@_route("GET", r"/v1/users/(?P<user_id>[^/]+)/notifications")
def _notifications(gw: Gateway, m, q, body):
    try:
        since = int(q.get("since", "0"))
    except ValueError:
        return 400, {"error": "malformed_query", "detail": "since must be an integer"}
    return gw.notifications(m.group("user_id"), since)


@_route("GET", r"/v1/reviews")
def _reviews(gw: Gateway, m, q, body):
    if q.get("state", "pending") != "pending":
        return 400, {"error": "malformed_query", "detail": "only state=pending is supported"}
    return gw.reviews()


@_route("POST", r"/v1/reviews/(?P<review_id>[^/]+)/resolve")
def _resolve(gw: Gateway, m, q, body):
    return gw.resolve_review(m.group("review_id"), body, default_ts=time.time())


@_route("GET", r"/v1/config")
def _config(gw: Gateway, m, q, body):
    return gw.config_view()


def _parse_query(raw: str) -> dict[str, str]:
    out = {}
    for part in raw.split("&"):
        if "=" in part:
            k, _, v = part.partition("=")
            out[k] = v
    return out


class ApiHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # route access logs through logging
        logger.debug("%s %s", self.address_string(), fmt % args)

    def _dispatch(self, method: str):
        path, _, query = self.path.partition("?")
        q = _parse_query(query)
        body = None
        if method == "POST":
            try:
                length = int(self.headers.get("Content-Length", "0"))
                if length > MAX_BODY:
                    return self._send(413, {"error": "body_too_large"})
                raw = self.rfile.read(length)
                body = json.loads(raw.decode("utf-8")) if raw else {}
            except (ValueError, UnicodeDecodeError):
                return self._send(400, {"error": "malformed_body", "detail": "body must be JSON"})
            if not isinstance(body, dict):
                return self._send(400, {"error": "malformed_body", "detail": "body must be a JSON object"})
        for m, regex, fn in _ROUTES:
            if m != method:
                continue
            match = regex.match(path)
            if match:
                try:
                    status, payload = fn(self.server.gateway, match, q, body)
                except Exception:
                    logger.exception("handler failed for %s %s", method, path)
                    return self._send(500, {"error": "internal"})
                return self._send(status, payload)
        self._send(404, {"error": "no_such_route", "detail": path})

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_OPTIONS(self):
        self.send_response(204)
        self._cors()
        self.send_header("Content-Length", "0")
        self.end_headers()

    def _cors(self):
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def _send(self, status: int, payload: dict):
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self._cors()
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


class ApiServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, gateway: Gateway):
        try:
            super().__init__(address, ApiHandler)
        except OSError as exc:
            raise BindFailure(f"cannot bind {address[0]}:{address[1]}: {exc}") from exc
        self.gateway = gateway


def make_server(gateway: Gateway, host: str = "127.0.0.1", port: int = 0) -> ApiServer:
    """Bound but not yet serving; port 0 picks a free one."""
    return ApiServer((host, port), gateway)
