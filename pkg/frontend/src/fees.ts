import type { RateSchedule, TripRecord } from "./types.js";

/** Client-side mirror of the server's tiered fee rule, used only to
 * cross-check the fee the server reports — never to replace it. */
export function computeFee(durationMin: number, s: RateSchedule): number {
  if (durationMin <= s.grace_min) return 0;
  if (durationMin <= s.base_min) return s.base_price;
  const blocks = Math.ceil((durationMin - s.base_min) / s.block_min);
  return s.base_price + blocks * s.block_price;
}

export function durationMinutes(entryTs: number, exitTs: number): number {
  return Math.ceil(Math.max(0, exitTs - entryTs) / 60);
}

export interface FeeBreakdown {
  durationMin: number;
  baseFee: number;
  blocks: number;
  blockFee: number;
  clientTotal: number;
  serverTotal: number;
  reconciled: boolean;
}

/** Recompute a trip's fee from the published schedule and compare with the
 * server's figure; callers must surface a mismatch, not hide it. */
export function reconcileTripFee(trip: TripRecord, s: RateSchedule): FeeBreakdown {
  const d = trip.duration_min;
  const baseFee = d <= s.grace_min ? 0 : s.base_price;
  const blocks = d > s.base_min ? Math.ceil((d - s.base_min) / s.block_min) : 0;
  const blockFee = blocks * s.block_price;
  const clientTotal = computeFee(d, s);
  return {
    durationMin: d,
    baseFee,
    blocks,
    blockFee,
    clientTotal,
    serverTotal: trip.fee,
    reconciled: clientTotal === trip.fee,
  };
}

export function formatMoney(minorUnits: number): string {
  const sign = minorUnits < 0 ? "-" : "";
  const abs = Math.abs(minorUnits);
  return `${sign}${Math.floor(abs / 100)}.${String(abs % 100).padStart(2, "0")}`;
}

/** Running duration as h:mm:ss (or m:ss under an hour). */
export function formatElapsed(seconds: number): string {
  const s = Math.max(0, Math.floor(seconds));
  const hours = Math.floor(s / 3600);
  const minutes = Math.floor((s % 3600) / 60);
  const secs = s % 60;
  const mm = String(minutes).padStart(2, "0");
  const ss = String(secs).padStart(2, "0");
  return hours > 0 ? `${hours}:${mm}:${ss}` : `${minutes}:${ss}`;
}

export function formatClock(ts: number): string {
  return new Date(ts * 1000).toISOString().replace("T", " ").slice(0, 19);
}
