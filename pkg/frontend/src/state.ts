import type {
  NotificationView,
  RateSchedule,
  ReviewItem,
  SessionView,
  TripRecord,
  WalletView,
} from "./types.js";

/** Cursor-based notification feed: items arrive via `since` polling and are
 * kept unique and ordered by seq, so nothing ever renders twice. */
export class NotificationFeed {
  items: NotificationView[] = [];
  cursor = 0;

  ingest(batch: NotificationView[]): void {
    for (const note of batch) {
      if (note.seq > this.cursor) {
        this.items.push(note);
        this.cursor = note.seq;
      }
    }
  }

  reset(): void {
    this.items = [];
    this.cursor = 0;
  }
}

export interface ActiveSessionView {
  plate: string;
  sessionId: string;
  entryTs: number;
}

/** The user's open session, derived from their own notification stream:
 * the latest entry whose session has no matching exit. */
export function deriveActiveSession(notes: NotificationView[]): ActiveSessionView | null {
  const open = new Map<string, ActiveSessionView>();
  for (const note of notes) {
    if (note.kind === "entry") {
      open.set(note.body.session_id, {
        plate: note.body.plate,
        sessionId: note.body.session_id,
        entryTs: note.body.entry_ts,
      });
    } else {
      open.delete(note.body.session_id);
    }
  }
  let latest: ActiveSessionView | null = null;
  for (const view of open.values()) {
    if (latest === null || view.entryTs >= latest.entryTs) {
      latest = view;
    }
  }
  return latest;
}

export type Tab = "home" | "wallet" | "trips" | "operator";

export interface ViewModel {
  userId: string;
  tab: Tab;
  connection: "ok" | "lost";
  schedule: RateSchedule | null;
  wallet: WalletView | null;
  trips: TripRecord[];
  feed: NotificationFeed;
  activeSessions: SessionView[];
  reviews: ReviewItem[];
  topupError: string | null;
  lastActionError: string | null;
}

export function emptyViewModel(): ViewModel {
  return {
    userId: "",
    tab: "home",
    connection: "ok",
    schedule: null,
    wallet: null,
    trips: [],
    feed: new NotificationFeed(),
    activeSessions: [],
    reviews: [],
    topupError: null,
    lastActionError: null,
  };
}

/** Client-side guard for the top-up form; a request is only made for a
 * positive integer amount of minor units. */
export function validateTopupAmount(raw: string): { amount?: number; error?: string } {
  const trimmed = raw.trim();
  if (!/^-?\d+$/.test(trimmed)) {
    return { error: "enter a whole amount in minor units" };
  }
  const amount = Number(trimmed);
  if (amount <= 0) {
    return { error: "amount must be positive" };
  }
  return { amount };
}
