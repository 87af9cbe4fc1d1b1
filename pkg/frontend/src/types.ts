// Mirror of the gateway wire contract (docs/wire.md). Timestamps are unix
// seconds, money is integer minor units.

export interface RateSchedule {
  grace_min: number;
  base_min: number;
  base_price: number;
  block_min: number;
  block_price: number;
}

export interface Transaction {
  seq: number;
  kind: "topup" | "charge";
  amount: number;
  ts: number;
  ref: string | null;
}

export interface WalletView {
  user_id: string;
  balance: number;
  delinquent: boolean;
  transactions: Transaction[];
}

export interface TripRecord {
  session_id: string;
  plate: string;
  user_id: string;
  entry_ts: number;
  exit_ts: number;
  duration_min: number;
  fee: number;
}

export interface SessionView {
  session_id: string;
  plate: string;
  entry_ts: number;
  exit_ts: number | null;
  state: "active" | "closed";
}

export interface NotificationView {
  seq: number;
  user_id: string;
  kind: "entry" | "exit";
  body: {
    plate: string;
    session_id: string;
    entry_ts: number;
    exit_ts?: number;
    duration_min?: number;
    fee?: number;
  };
  created_at: number;
}

export interface ReviewItem {
  review_id: string;
  event_type: "entry" | "exit";
  reading_text: string;
  candidates: string[];
  ts: number;
  status: "pending" | "approved" | "rejected";
  resolved_plate: string | null;
}

export interface ApiErrorBody {
  error: string;
  detail?: string;
}
