"""Append-only event log and the gateway that replays it.

Every accepted mutation becomes one JSON line (seq, ts, kind, payload,
idempotency_key); rejected requests append nothing. Startup replays the log
through the same dispatch that serves live traffic, so a restarted node is
field-for-field identical to one that never stopped.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

from . import parkcore
from .parkcore import ParkingService, RateSchedule
from .plates import valid_plate_text

EVENT_KINDS = ("entry", "exit", "registration", "topup")

LOG_FILENAME = "events.jsonl"


class StoreError(Exception):
    pass


class CorruptLog(StoreError):
    """The log cannot be replayed past last_valid_seq."""

    def __init__(self, reason: str, last_valid_seq: int, line_no: int):
        super().__init__(f"{reason} (line {line_no}, last valid seq {last_valid_seq})")
        self.last_valid_seq = last_valid_seq
        self.line_no = line_no


@dataclass(frozen=True)
class EventRecord:
    seq: int
    ts: float
    kind: str
    payload: dict
    idempotency_key: Optional[str] = None


def read_log(path: str | Path) -> list[EventRecord]:
    """Parse and validate the whole log; any malformed tail is fatal."""
    records: list[EventRecord] = []
    last_seq = 0
    path = Path(path)
    if not path.exists():
        return records
    with open(path, "rb") as fh:
        for line_no, raw in enumerate(fh, start=1):
            try:
                obj = json.loads(raw.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError):
                raise CorruptLog("unparseable log line", last_seq, line_no) from None
            if not isinstance(obj, dict):
                raise CorruptLog("log line is not an object", last_seq, line_no)
            missing = {"seq", "ts", "kind", "payload"} - obj.keys()
            if missing:
                raise CorruptLog(f"log line missing {sorted(missing)}", last_seq, line_no)
            if obj["kind"] not in EVENT_KINDS:
                raise CorruptLog(f"unknown event kind {obj['kind']!r}", last_seq, line_no)
            if obj["seq"] != last_seq + 1:
                raise CorruptLog(f"seq {obj['seq']} after {last_seq}", last_seq, line_no)
            records.append(EventRecord(seq=obj["seq"], ts=obj["ts"], kind=obj["kind"],
                                       payload=obj["payload"],
                                       idempotency_key=obj.get("idempotency_key")))
            last_seq = obj["seq"]
    return records


class EventLog:
    """Appender that assigns dense seq numbers and flushes before acking."""

    def __init__(self, path: str | Path, last_seq: int = 0, fsync: bool = True):
        self.path = Path(path)
        self.last_seq = last_seq
        self.fsync = fsync
        self._fh = open(self.path, "ab")

    def append(self, ts: float, kind: str, payload: dict,
               idempotency_key: Optional[str]) -> EventRecord:
        record = EventRecord(seq=self.last_seq + 1, ts=ts, kind=kind,
                             payload=payload, idempotency_key=idempotency_key)
        self._fh.write((json.dumps(asdict(record)) + "\n").encode("utf-8"))
        self._fh.flush()
        if self.fsync:
            os.fsync(self._fh.fileno())
        self.last_seq = record.seq
        return record

    def close(self):
        self._fh.close()


_ERROR_STATUS = {
    parkcore.InvalidPlate: (400, "invalid_plate"),
    parkcore.InvalidPhone: (400, "invalid_phone"),
    parkcore.NonPositiveAmount: (400, "non_positive_amount"),
    parkcore.InvalidReviewAction: (400, "invalid_review_action"),
    parkcore.UnknownUser: (404, "unknown_user"),
    parkcore.UnknownReview: (404, "unknown_review"),
    parkcore.DuplicatePlate: (409, "duplicate_plate"),
    parkcore.DuplicateEntry: (409, "duplicate_entry"),
    parkcore.ExitWithoutEntry: (409, "exit_without_entry"),
    parkcore.StaleTimestamp: (409, "stale_timestamp"),
    parkcore.ReviewNotPending: (409, "review_not_pending"),
}


def _error_response(exc: parkcore.ParkcoreError) -> tuple[int, dict]:
    for klass, (status, code) in _ERROR_STATUS.items():
        if isinstance(exc, klass):
            return status, {"error": code, "detail": str(exc)}
    return 500, {"error": "internal", "detail": str(exc)}


def _transaction_dict(txn: parkcore.Transaction) -> dict:
    return {"seq": txn.seq, "kind": txn.kind, "amount": txn.amount,
            "ts": txn.ts, "ref": txn.ref}


def _trip_dict(trip: parkcore.TripRecord) -> dict:
    return {"session_id": trip.session_id, "plate": trip.plate,
            "user_id": trip.user_id, "entry_ts": trip.entry_ts,
            "exit_ts": trip.exit_ts, "duration_min": trip.duration_min,
            "fee": trip.fee}


def _session_dict(session: parkcore.ParkingSession) -> dict:
    return {"session_id": session.session_id, "plate": session.plate,
            "entry_ts": session.entry_ts, "exit_ts": session.exit_ts,
            "state": session.state}


def _review_dict(review: parkcore.ReviewItem) -> dict:
    return {"review_id": review.review_id, "event_type": review.event_type,
            "reading_text": review.reading_text,
            "candidates": list(review.candidates), "ts": review.ts,
            "status": review.status, "resolved_plate": review.resolved_plate}


def _notification_dict(note: parkcore.Notification) -> dict:
    return {"seq": note.seq, "user_id": note.user_id, "kind": note.kind,
            "body": dict(note.body), "created_at": note.created_at}


class Gateway:
    """Event-sourced facade over ParkingService.

    All mutations run under one writer lock: dedupe by idempotency key,
    apply to the in-memory service, append to the log, then acknowledge.
    Responses are pure functions of the outcome, so a replayed node answers
    re-delivered keys with the original body.
    """

    def __init__(self, data_dir: str | Path, schedule: RateSchedule, fsync: bool = True):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.schedule = schedule
        self.service = ParkingService(schedule)
        self.lock = threading.Lock()
        log_path = self.data_dir / LOG_FILENAME
        records = read_log(log_path)
        for record in records:
            self._apply(record.kind, record.payload, record.idempotency_key)
        self.log = EventLog(log_path, last_seq=records[-1].seq if records else 0,
                            fsync=fsync)

    def close(self):
        self.log.close()

    # -- mutations ----------------------------------------------------------

    def submit_event(self, body: dict) -> tuple[int, dict]:
        """POST /v1/events: an edge node reports a recognized plate."""
        etype = body.get("type")
        plate = body.get("plate")
        ts = body.get("ts")
        key = body.get("idempotency_key")
        if etype not in ("entry", "exit") or not isinstance(plate, str) \
                or not isinstance(ts, (int, float)) or not isinstance(key, str):
            return 400, {"error": "malformed_body",
                         "detail": "need type entry|exit, plate, numeric ts, idempotency_key"}
        payload = {"plate": plate, "ts": ts}
        if "confidence" in body:
            payload["confidence"] = body["confidence"]
        return self._mutate(etype, ts, payload, key)

    def register(self, body: dict, default_ts: float) -> tuple[int, dict]:
        plate = body.get("plate")
        user_id = body.get("user_id")
        phone = body.get("phone")
        if not all(isinstance(v, str) for v in (plate, user_id, phone)):
            return 400, {"error": "malformed_body", "detail": "need plate, user_id, phone"}
        ts = body.get("ts", default_ts)
        payload = {"plate": plate, "user_id": user_id, "phone": phone, "ts": ts}
        return self._mutate("registration", ts, payload, body.get("idempotency_key"))

    def topup(self, user_id: str, body: dict, default_ts: float) -> tuple[int, dict]:
        amount = body.get("amount")
        if not isinstance(amount, int) or isinstance(amount, bool):
            return 400, {"error": "malformed_body", "detail": "amount must be an integer"}
        ts = body.get("ts", default_ts)
        payload = {"user_id": user_id, "amount": amount, "ts": ts}
        return self._mutate("topup", ts, payload, body.get("idempotency_key"))

    def resolve_review(self, review_id: str, body: dict, default_ts: float) -> tuple[int, dict]:
        action = body.get("action")
        if action not in ("approve", "reject"):
            return 400, {"error": "malformed_body", "detail": "action must be approve or reject"}
        with self.lock:
            review = self.service.reviews.get(review_id)
            if review is None:
                return 404, {"error": "unknown_review", "detail": review_id}
            ts = body.get("ts", default_ts)
            payload = {"review_id": review_id, "action": action, "ts": ts}
            if action == "approve":
                payload["plate"] = body.get("plate")
            # review resolutions are logged under the kind of the event they
            # settle, so the log's kind vocabulary stays entry/exit/…
            return self._mutate_locked(review.event_type, ts, payload,
                                       body.get("idempotency_key"))

    def _mutate(self, kind: str, ts: float, payload: dict,
                key: Optional[str]) -> tuple[int, dict]:
        with self.lock:
            return self._mutate_locked(kind, ts, payload, key)

    def _mutate_locked(self, kind: str, ts: float, payload: dict,
                       key: Optional[str]) -> tuple[int, dict]:
        cached = self.service.cached_outcome(key)
        if cached is not None:
            return self._respond(kind, payload, cached)
        try:
            outcome = self._apply(kind, payload, key)
        except parkcore.ParkcoreError as exc:
            return _error_response(exc)
        status, response = self._respond(kind, payload, outcome)
        if 200 <= status < 300:
            self.log.append(ts, kind, payload, key)
        return status, response

    def _apply(self, kind: str, payload: dict, key: Optional[str]):
        """The one state-transition dispatch, shared by live traffic and
        log replay."""
        svc = self.service
        if kind == "registration":
            return svc.register(payload["plate"], payload["user_id"], payload["phone"],
                                payload["ts"], idempotency_key=key)
        if kind == "topup":
            return svc.topup(payload["user_id"], payload["amount"], payload["ts"],
                             idempotency_key=key)
        if kind in ("entry", "exit"):
            if "review_id" in payload:
                return svc.resolve_review(payload["review_id"], payload["action"],
                                          payload["ts"], plate=payload.get("plate"),
                                          idempotency_key=key)
            if kind == "entry":
                return svc.handle_entry(payload["plate"], payload["ts"], idempotency_key=key)
            return svc.handle_exit(payload["plate"], payload["ts"], idempotency_key=key)
        raise StoreError(f"unknown event kind {kind!r}")

    def _respond(self, kind: str, payload: dict, outcome) -> tuple[int, dict]:
        if isinstance(outcome, parkcore.RegistrationRecord):
            return 201, {"plate": outcome.plate, "user_id": outcome.user_id,
                         "phone": outcome.phone, "created_at": outcome.created_at}
        if isinstance(outcome, parkcore.Transaction):
            wallet = self.service.wallets[payload["user_id"]]
            return 201, {"transaction": _transaction_dict(outcome),
                         "balance": wallet.balance}
        if isinstance(outcome, parkcore.EntryOutcome):
            if outcome.status == "unregistered_plate":
                status = 400 if not valid_plate_text(payload.get("plate", "")) else 404
                return status, {"error": "unregistered_plate"}
            if outcome.status == "manual_review":
                return 202, {"status": "manual_review", "review_id": outcome.review_id}
            return 200, {"session_id": outcome.session_id, "state": "active",
                         "plate": outcome.plate}
        if isinstance(outcome, parkcore.ExitOutcome):
            if outcome.status == "unregistered_plate":
                status = 400 if not valid_plate_text(payload.get("plate", "")) else 404
                return status, {"error": "unregistered_plate"}
            if outcome.status == "manual_review":
                return 202, {"status": "manual_review", "review_id": outcome.review_id}
            return 200, {"session_id": outcome.session_id, "state": "closed",
                         "plate": outcome.plate, "fee": outcome.trip.fee,
                         "duration_min": outcome.trip.duration_min}
        if isinstance(outcome, dict):  # review rejection
            return 200, dict(outcome)
        raise StoreError(f"no response mapping for {type(outcome).__name__}")

    # -- reads ----------------------------------------------------------------

    def health(self) -> tuple[int, dict]:
        with self.lock:
            return 200, {"status": "ok", "events": self.log.last_seq}

    def active_sessions(self) -> tuple[int, dict]:
        with self.lock:
            return 200, {"sessions": [_session_dict(s) for s in self.service.active_sessions()]}

    def wallet(self, user_id: str) -> tuple[int, dict]:
        with self.lock:
            try:
                wallet = self.service.wallet(user_id)
            except parkcore.UnknownUser as exc:
                return _error_response(exc)
            return 200, {"user_id": user_id, "balance": wallet.balance,
                         "delinquent": wallet.delinquent,
                         "transactions": [_transaction_dict(t) for t in wallet.transactions]}

    def trips(self, user_id: str) -> tuple[int, dict]:
        with self.lock:
            try:
                trips = self.service.trips_for(user_id)
            except parkcore.UnknownUser as exc:
                return _error_response(exc)
            return 200, {"user_id": user_id, "trips": [_trip_dict(t) for t in trips]}

    def notifications(self, user_id: str, since: int) -> tuple[int, dict]:
        with self.lock:
            try:
                notes = self.service.notifications_for(user_id, since)
            except parkcore.UnknownUser as exc:
                return _error_response(exc)
            return 200, {"user_id": user_id,
                         "notifications": [_notification_dict(n) for n in notes]}

    def reviews(self) -> tuple[int, dict]:
        with self.lock:
            return 200, {"reviews": [_review_dict(r) for r in self.service.pending_reviews()]}

    def config_view(self) -> tuple[int, dict]:
        return 200, {"schedule": {
            "grace_min": self.schedule.grace_min,
            "base_min": self.schedule.base_min,
            "base_price": self.schedule.base_price,
            "block_min": self.schedule.block_min,
            "block_price": self.schedule.block_price,
        }}
