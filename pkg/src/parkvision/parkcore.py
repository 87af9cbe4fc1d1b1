"""Parking domain logic: registry, sessions, billing, wallet and trips.

`ParkingService` is a deterministic in-memory state machine. Every mutation
is driven by a plain event (registration, topup, entry, exit, review
resolution), timestamps come from the caller, and re-delivered events are
answered from an idempotency cache without touching state — which makes the
whole service replayable from an event log.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

from .glyphs import CONFUSION_GROUP
from .plates import valid_phone, valid_plate_text

logger = logging.getLogger(__name__)

FUZZY_MATCH_MAX_COST = 1.0
CONFUSION_SUB_COST = 0.5

DEFAULT_SCHEDULE_CONFIG = {
    "grace_min": 10,
    "base_min": 60,
    "base_price": 2000,
    "block_min": 30,
    "block_price": 1000,
}


class ParkcoreError(Exception):
    pass


class InvalidPlate(ParkcoreError):
    pass


class InvalidPhone(ParkcoreError):
    pass


class DuplicatePlate(ParkcoreError):
    pass


class UnknownUser(ParkcoreError):
    pass


class NonPositiveAmount(ParkcoreError):
    pass


class DuplicateEntry(ParkcoreError):
    pass


class ExitWithoutEntry(ParkcoreError):
    pass


class StaleTimestamp(ParkcoreError):
    """Event timestamps must be non-decreasing per plate."""


class UnknownReview(ParkcoreError):
    pass


class ReviewNotPending(ParkcoreError):
    pass


class InvalidReviewAction(ParkcoreError):
    pass


@dataclass(frozen=True)
class RateSchedule:
    grace_min: int
    base_min: int
    base_price: int
    block_min: int
    block_price: int

    def __post_init__(self):
        for name in ("grace_min", "base_min", "base_price", "block_min", "block_price"):
            v = getattr(self, name)
            if not isinstance(v, int):
                raise ValueError(f"{name} must be an integer amount")
        if self.grace_min < 0 or self.base_price < 0 or self.block_price < 0:
            raise ValueError("prices and grace must be >= 0")
        if self.base_min <= self.grace_min:
            raise ValueError("base_min must exceed grace_min")
        if self.block_min < 1:
            raise ValueError("block_min must be >= 1")

    @classmethod
    def from_config(cls, cfg: dict) -> "RateSchedule":
        merged = {**DEFAULT_SCHEDULE_CONFIG, **cfg}
        return cls(**{k: int(merged[k]) for k in DEFAULT_SCHEDULE_CONFIG})


def compute_fee(duration_min: int, schedule: RateSchedule) -> int:
    """Tiered fee in minor units: free through grace, flat through base,
    then whole blocks."""
    if duration_min < 0:
        raise ValueError("duration must be >= 0")
    if duration_min <= schedule.grace_min:
        return 0
    if duration_min <= schedule.base_min:
        return schedule.base_price
    blocks = -(-(duration_min - schedule.base_min) // schedule.block_min)  # ceil
    return schedule.base_price + blocks * schedule.block_price


@dataclass(frozen=True)
class RegistrationRecord:
    plate: str
    user_id: str
    phone: str
    created_at: float


@dataclass
class ParkingSession:
    session_id: str
    plate: str
    entry_ts: float
    exit_ts: Optional[float] = None

    @property
    def state(self) -> str:
        return "closed" if self.exit_ts is not None else "active"


@dataclass(frozen=True)
class Transaction:
    seq: int
    kind: str  # topup | charge
    amount: int
    ts: float
    ref: Optional[str] = None  # session id for charges

    def __post_init__(self):
        if self.amount <= 0:
            raise NonPositiveAmount("transaction amounts are strictly positive")
        if self.kind == "charge" and not self.ref:
            raise ValueError("charges must reference a session")


@dataclass
class WalletAccount:
    user_id: str
    transactions: list[Transaction] = field(default_factory=list)

    @property
    def balance(self) -> int:
        return sum(t.amount if t.kind == "topup" else -t.amount for t in self.transactions)

    @property
    def delinquent(self) -> bool:
        return self.balance < 0


@dataclass(frozen=True)
class TripRecord:
    session_id: str
    plate: str
    user_id: str
    entry_ts: float
    exit_ts: float
    duration_min: int
    fee: int


@dataclass(frozen=True)
class MatchResult:
    outcome: str  # exact | fuzzy | no_match | ambiguous
    matched_plate: Optional[str] = None
    cost: Optional[float] = None
    candidates: tuple[str, ...] = ()


@dataclass(frozen=True)
class Notification:
    seq: int
    user_id: str
    kind: str  # entry | exit
    body: dict
    created_at: float


@dataclass
class ReviewItem:
    review_id: str
    event_type: str  # entry | exit
    reading_text: str
    candidates: tuple[str, ...]
    ts: float
    status: str = "pending"  # pending | approved | rejected
    resolved_plate: Optional[str] = None


@dataclass(frozen=True)
class EntryOutcome:
    status: str  # accepted | unregistered_plate | manual_review
    plate: Optional[str] = None
    session_id: Optional[str] = None
    review_id: Optional[str] = None
    notification_seq: Optional[int] = None


@dataclass(frozen=True)
class ExitOutcome:
    status: str  # accepted | unregistered_plate | manual_review
    plate: Optional[str] = None
    session_id: Optional[str] = None
    review_id: Optional[str] = None
    trip: Optional[TripRecord] = None
    transaction: Optional[Transaction] = None
    notification_seq: Optional[int] = None


def _substitution_cost(a: str, b: str) -> float:
    if a == b:
        return 0.0
    if b in CONFUSION_GROUP.get(a, frozenset()):
        return CONFUSION_SUB_COST
    return 1.0


def weighted_edit_distance(read: str, plate: str) -> float:
    """Levenshtein with lookalike substitutions at half cost."""
    n, m = len(read), len(plate)
    prev = [float(j) for j in range(m + 1)]
    for i in range(1, n + 1):
        cur = [float(i)] + [0.0] * m
        for j in range(1, m + 1):
            cur[j] = min(
                prev[j] + 1.0,
                cur[j - 1] + 1.0,
                prev[j - 1] + _substitution_cost(read[i - 1], plate[j - 1]),
            )
        prev = cur
    return prev[m]


def match_plate(reading_text: str, registry) -> MatchResult:
    """Match a read against registered plates.

    Exact equality wins immediately; otherwise the unique registered plate
    with minimal weighted edit distance <= 1.0 is a fuzzy match, equal
    minima are ambiguous, and anything costlier is no match.
    """
    plates = list(registry)
    if reading_text in plates:
        return MatchResult(outcome="exact", matched_plate=reading_text, cost=0.0)
    scored = [(weighted_edit_distance(reading_text, p), p) for p in plates]
    if not scored:
        return MatchResult(outcome="no_match")
    best = min(c for c, _ in scored)
    if best > FUZZY_MATCH_MAX_COST:
        return MatchResult(outcome="no_match")
    winners = tuple(sorted(p for c, p in scored if c == best))
    if len(winners) > 1:
        return MatchResult(outcome="ambiguous", cost=best, candidates=winners)
    return MatchResult(outcome="fuzzy", matched_plate=winners[0], cost=best,
                       candidates=winners)


def duration_minutes(entry_ts: float, exit_ts: float) -> int:
    """Whole minutes between two timestamps, rounded up."""
    seconds = exit_ts - entry_ts
    if seconds < 0:
        raise ValueError("exit before entry")
    if float(seconds).is_integer():
        return -(-int(seconds) // 60)  # exact ceil for whole seconds
    return math.ceil(seconds / 60.0)


class ParkingService:
    """Single-writer parking state machine.

    All mutating calls accept an optional idempotency key; a re-delivered
    key returns the original outcome unchanged. Callers (the gateway)
    serialize mutations; reads are safe on any consistent snapshot.
    """

    def __init__(self, schedule: RateSchedule):
        self.schedule = schedule
        self.registry: dict[str, RegistrationRecord] = {}
        self.sessions: dict[str, ParkingSession] = {}
        self.active_by_plate: dict[str, str] = {}
        self.wallets: dict[str, WalletAccount] = {}
        self.trips: list[TripRecord] = []
        self.notifications: list[Notification] = []
        self.reviews: dict[str, ReviewItem] = {}
        self._idem: dict[str, object] = {}
        self._last_plate_ts: dict[str, float] = {}
        self._session_counter = 0
        self._notification_counter = 0
        self._review_counter = 0

    # -- registration / wallet ------------------------------------------------

    def register(self, plate: str, user_id: str, phone: str, ts: float,
                 idempotency_key: Optional[str] = None) -> RegistrationRecord:
        cached = self._cached(idempotency_key)
        if cached is not None:
            return cached
        if not valid_plate_text(plate):
            raise InvalidPlate(f"{plate!r} fails the plate grammar")
        if not valid_phone(phone):
            raise InvalidPhone(f"{phone!r} is not an E.164-shaped number")
        if plate in self.registry:
            raise DuplicatePlate(plate)
        record = RegistrationRecord(plate=plate, user_id=user_id, phone=phone, created_at=ts)
        self.registry[plate] = record
        self.wallets.setdefault(user_id, WalletAccount(user_id=user_id))
        return self._remember(idempotency_key, record)

    def topup(self, user_id: str, amount: int, ts: float,
              idempotency_key: Optional[str] = None) -> Transaction:
        cached = self._cached(idempotency_key)
        if cached is not None:
            return cached
        if user_id not in self.wallets:
            raise UnknownUser(user_id)
        if not isinstance(amount, int) or amount <= 0:
            raise NonPositiveAmount("top-up amount must be a positive integer")
        wallet = self.wallets[user_id]
        txn = Transaction(seq=len(wallet.transactions) + 1, kind="topup", amount=amount, ts=ts)
        wallet.transactions.append(txn)
        return self._remember(idempotency_key, txn)

    # -- entry / exit ----------------------------------------------------------

    def handle_entry(self, reading_text: str, ts: float,
                     idempotency_key: Optional[str] = None) -> EntryOutcome:
        cached = self._cached(idempotency_key)
        if cached is not None:
            return cached
        match = match_plate(reading_text, self.registry)
        if match.outcome == "no_match":
            # rejected requests are not cached: they append no event, so a
            # replayed log must re-derive them identically
            logger.warning("entry denied, unregistered plate read %r at %s", reading_text, ts)
            return EntryOutcome(status="unregistered_plate")
        if match.outcome == "ambiguous":
            review = self._queue_review("entry", reading_text, match.candidates, ts)
            return self._remember(idempotency_key, EntryOutcome(
                status="manual_review", review_id=review.review_id))
        return self._remember(idempotency_key, self._open_session(match.matched_plate, ts))

    def handle_exit(self, reading_text: str, ts: float,
                    idempotency_key: Optional[str] = None) -> ExitOutcome:
        cached = self._cached(idempotency_key)
        if cached is not None:
            return cached
        match = match_plate(reading_text, self.registry)
        if match.outcome == "no_match":
            logger.warning("exit denied, unregistered plate read %r at %s", reading_text, ts)
            return ExitOutcome(status="unregistered_plate")
        if match.outcome == "ambiguous":
            review = self._queue_review("exit", reading_text, match.candidates, ts)
            return self._remember(idempotency_key, ExitOutcome(
                status="manual_review", review_id=review.review_id))
        return self._remember(idempotency_key, self._close_session(match.matched_plate, ts))

    def resolve_review(self, review_id: str, action: str, ts: float,
                       plate: Optional[str] = None,
                       idempotency_key: Optional[str] = None):
        cached = self._cached(idempotency_key)
        if cached is not None:
            return cached
        review = self.reviews.get(review_id)
        if review is None:
            raise UnknownReview(review_id)
        if review.status != "pending":
            raise ReviewNotPending(f"{review_id} already {review.status}")
        if action == "reject":
            review.status = "rejected"
            return self._remember(idempotency_key, {"review_id": review_id, "status": "rejected"})
        if action != "approve":
            raise InvalidReviewAction(action)
        if plate is None or plate not in review.candidates:
            raise InvalidReviewAction(f"approve needs one of the candidate plates {review.candidates}")
        if review.event_type == "entry":
            outcome = self._open_session(plate, review.ts)
        else:
            outcome = self._close_session(plate, review.ts)
        review.status = "approved"
        review.resolved_plate = plate
        return self._remember(idempotency_key, outcome)

    # -- queries ---------------------------------------------------------------

    def active_sessions(self) -> list[ParkingSession]:
        return [self.sessions[sid] for sid in sorted(self.active_by_plate.values())]

    def wallet(self, user_id: str) -> WalletAccount:
        if user_id not in self.wallets:
            raise UnknownUser(user_id)
        return self.wallets[user_id]

    def trips_for(self, user_id: str) -> list[TripRecord]:
        """The user's closed trips, newest exit first."""
        if user_id not in self.wallets:
            raise UnknownUser(user_id)
        mine = [t for t in self.trips if t.user_id == user_id]
        mine.sort(key=lambda t: (t.exit_ts, t.session_id), reverse=True)
        return mine

    def notifications_for(self, user_id: str, since: int = 0) -> list[Notification]:
        if user_id not in self.wallets:
            raise UnknownUser(user_id)
        return [n for n in self.notifications if n.user_id == user_id and n.seq > since]

    def pending_reviews(self) -> list[ReviewItem]:
        return [r for r in sorted(self.reviews.values(), key=lambda r: r.review_id)
                if r.status == "pending"]

    def snapshot(self) -> dict:
        """Plain-data view of all externally visible state, for equality
        checks between a live service and a replayed one."""
        return {
            "registry": {p: vars(r).copy() for p, r in sorted(self.registry.items())},
            "sessions": {s: {"session_id": v.session_id, "plate": v.plate,
                             "entry_ts": v.entry_ts, "exit_ts": v.exit_ts,
                             "state": v.state}
                         for s, v in sorted(self.sessions.items())},
            "wallets": {u: [vars(t).copy() for t in w.transactions]
                        for u, w in sorted(self.wallets.items())},
            "trips": [vars(t).copy() for t in self.trips],
            "notifications": [{"seq": n.seq, "user_id": n.user_id, "kind": n.kind,
                               "body": dict(n.body), "created_at": n.created_at}
                              for n in self.notifications],
            "reviews": {r: vars(v).copy() for r, v in sorted(self.reviews.items())},
        }

    # -- internals ---------------------------------------------------------

    def cached_outcome(self, key: Optional[str]):
        """Original outcome for an already-seen idempotency key, else None."""
        if key is not None and key in self._idem:
            return self._idem[key]
        return None

    def _cached(self, key: Optional[str]):
        return self.cached_outcome(key)

    def _remember(self, key: Optional[str], outcome):
        if key is not None:
            self._idem[key] = outcome
        return outcome

    def _check_plate_clock(self, plate: str, ts: float) -> None:
        last = self._last_plate_ts.get(plate)
        if last is not None and ts < last:
            raise StaleTimestamp(f"event at {ts} precedes {last} for plate {plate}")

    def _open_session(self, plate: str, ts: float) -> EntryOutcome:
        self._check_plate_clock(plate, ts)
        if plate in self.active_by_plate:
            raise DuplicateEntry(f"plate {plate} already has an active session")
        self._session_counter += 1
        session = ParkingSession(session_id=f"s-{self._session_counter:06d}",
                                 plate=plate, entry_ts=ts)
        self.sessions[session.session_id] = session
        self.active_by_plate[plate] = session.session_id
        self._last_plate_ts[plate] = ts
        user_id = self.registry[plate].user_id
        note = self._notify(user_id, "entry", ts, {
            "plate": plate, "session_id": session.session_id, "entry_ts": ts,
        })
        return EntryOutcome(status="accepted", plate=plate,
                            session_id=session.session_id, notification_seq=note.seq)

    def _close_session(self, plate: str, ts: float) -> ExitOutcome:
        self._check_plate_clock(plate, ts)
        session_id = self.active_by_plate.get(plate)
        if session_id is None:
            raise ExitWithoutEntry(f"no active session for plate {plate}")
        session = self.sessions[session_id]
        if ts < session.entry_ts:
            raise StaleTimestamp("exit before entry")
        session.exit_ts = ts
        del self.active_by_plate[plate]
        self._last_plate_ts[plate] = ts

        minutes = duration_minutes(session.entry_ts, ts)
        fee = compute_fee(minutes, self.schedule)
        user_id = self.registry[plate].user_id
        wallet = self.wallets[user_id]
        txn = None
        if fee > 0:
            txn = Transaction(seq=len(wallet.transactions) + 1, kind="charge",
                              amount=fee, ts=ts, ref=session_id)
            wallet.transactions.append(txn)
            if wallet.delinquent:
                logger.warning("wallet %s delinquent after charge for %s", user_id, session_id)
        trip = TripRecord(session_id=session_id, plate=plate, user_id=user_id,
                          entry_ts=session.entry_ts, exit_ts=ts,
                          duration_min=minutes, fee=fee)
        self.trips.append(trip)
        note = self._notify(user_id, "exit", ts, {
            "plate": plate, "session_id": session_id, "entry_ts": session.entry_ts,
            "exit_ts": ts, "duration_min": minutes, "fee": fee,
        })
        return ExitOutcome(status="accepted", plate=plate, session_id=session_id,
                           trip=trip, transaction=txn, notification_seq=note.seq)

    def _queue_review(self, event_type: str, reading_text: str,
                      candidates: tuple[str, ...], ts: float) -> ReviewItem:
        self._review_counter += 1
        review = ReviewItem(review_id=f"r-{self._review_counter:06d}",
                            event_type=event_type, reading_text=reading_text,
                            candidates=candidates, ts=ts)
        self.reviews[review.review_id] = review
        return review

    def _notify(self, user_id: str, kind: str, ts: float, body: dict) -> Notification:
        self._notification_counter += 1
        note = Notification(seq=self._notification_counter, user_id=user_id,
                            kind=kind, body=body, created_at=ts)
        self.notifications.append(note)
        return note
